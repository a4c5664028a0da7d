#include "curricubench/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace curricubench::data {

namespace {

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

const char* label_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::Negative: return "negative";
    case ClassLabel::Typical: return "typical";
    case ClassLabel::Indeterminate: return "indeterminate";
    case ClassLabel::Atypical: return "atypical";
  }
  return "?";
}

ClassLabel parse_label(const std::string& text) {
  const std::string t = to_lower(strip(text));
  if (t == "negative") return ClassLabel::Negative;
  if (t == "typical") return ClassLabel::Typical;
  if (t == "indeterminate") return ClassLabel::Indeterminate;
  if (t == "atypical") return ClassLabel::Atypical;
  throw_error(Errc::Label, "unknown class label '" + text + "'");
}

std::vector<ClassLabel> active_classes(ClassMode mode) {
  if (mode == ClassMode::TwoClass)
    return {ClassLabel::Negative, ClassLabel::Typical};
  return {ClassLabel::Negative, ClassLabel::Typical, ClassLabel::Indeterminate,
          ClassLabel::Atypical};
}

std::vector<ClassLabel> Dataset::labels() const {
  std::vector<ClassLabel> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    require(s.label.has_value(), Errc::Label, "sample " + s.id + " has no label");
    out.push_back(*s.label);
  }
  return out;
}

double ClassWeights::at(ClassLabel c) const {
  const auto it = weights.find(c);
  require(it != weights.end(), Errc::Weight,
          std::string("no weight for class ") + label_name(c));
  return it->second;
}

Dataset load_dataset(const DatasetSpec& spec) {
  require(spec.side >= 16, Errc::Validation, "dataset side must be >= 16");
  const std::filesystem::path csv = spec.source / "labels.csv";
  std::ifstream in(csv);
  require(in.good(), Errc::Format, "missing labels.csv in " + spec.source.string());

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::Format,
          "empty labels.csv in " + spec.source.string());
  require(to_lower(strip(line)) == "filename,label", Errc::Format,
          "labels.csv header must be `filename,label`");

  const auto active = active_classes(spec.class_mode);
  Dataset out;
  while (std::getline(in, line)) {
    const std::string row = strip(line);
    if (row.empty()) continue;
    const std::size_t comma = row.find(',');
    require(comma != std::string::npos, Errc::Format,
            "malformed labels.csv row '" + row + "'");
    const std::string filename = strip(row.substr(0, comma));
    const ClassLabel label = parse_label(row.substr(comma + 1));
    if (std::find(active.begin(), active.end(), label) == active.end()) continue;

    const std::filesystem::path file = spec.source / filename;
    const std::string ext = to_lower(file.extension().string());
    require(ext == ".pgm", Errc::Io,
            "cannot read image " + file.string() + " (only PGM P5 is supported)");
    ImageSample sample;
    sample.id = file.stem().string();
    sample.pixels = resize_bilinear(load_pgm(file), spec.side, spec.side);
    sample.label = label;
    out.samples.push_back(std::move(sample));
  }
  return out;
}

std::pair<Dataset, Dataset> make_split(const Dataset& dataset, double fraction,
                                       std::uint64_t seed) {
  require(!dataset.empty(), Errc::Empty, "cannot split an empty dataset");
  require(fraction > 0.0 && fraction < 1.0, Errc::Validation,
          "split fraction must be in (0,1)");

  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    require(s.label.has_value(), Errc::Label, "unlabeled sample " + s.id);
    by_class[*s.label].push_back(i);
  }
  for (const auto& [label, idx] : by_class)
    require(idx.size() >= 2, Errc::Stratify,
            std::string("class ") + label_name(label) + " has fewer than 2 samples");

  const Rng root(seed);
  std::vector<std::size_t> train_idx, val_idx;
  for (auto& [label, idx] : by_class) {
    Rng rng = root.fork(std::string("data.split.") + label_name(label));
    rng.shuffle(idx.begin(), idx.end());
    const auto n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k)
      (k < n_train ? train_idx : val_idx).push_back(idx[k]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  Dataset train, val;
  for (const std::size_t i : train_idx) train.samples.push_back(dataset.samples[i]);
  for (const std::size_t i : val_idx) val.samples.push_back(dataset.samples[i]);
  return {std::move(train), std::move(val)};
}

ClassWeights compute_class_weights(const std::vector<ClassLabel>& labels, ClassMode mode) {
  const auto active = active_classes(mode);
  std::map<ClassLabel, std::size_t> counts;
  std::size_t total = 0;
  for (const ClassLabel l : labels) {
    if (std::find(active.begin(), active.end(), l) == active.end()) continue;
    ++counts[l];
    ++total;
  }
  std::vector<double> inv;
  for (const ClassLabel c : active) {
    require(counts.count(c) != 0 && counts[c] > 0, Errc::Weight,
            std::string("active class ") + label_name(c) + " absent from labels");
    inv.push_back(static_cast<double>(total) / static_cast<double>(counts[c]));
  }
  const double mean = std::accumulate(inv.begin(), inv.end(), 0.0) /
                      static_cast<double>(inv.size());
  ClassWeights out;
  for (std::size_t k = 0; k < active.size(); ++k) out.weights[active[k]] = inv[k] / mean;
  return out;
}

// ---------------------------------------------------------------------------
// Phantom generator
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kTagOffset = 2;  // corner tag occupies [2,8) x [2,8)
constexpr std::size_t kTagSide = 6;

struct Ellipse {
  double cr, cc, ra, rb;
  bool contains(double r, double c) const {
    const double dr = (r - cr) / ra;
    const double dc = (c - cc) / rb;
    return dr * dr + dc * dc <= 1.0;
  }
};

struct Anatomy {
  Ellipse torso;
  Ellipse lungs[2];
};

Anatomy draw_anatomy(std::size_t side, Rng& rng) {
  const double s = static_cast<double>(side);
  const auto jit = [&](double frac) { return rng.uniform(-frac, frac) * s; };
  Anatomy a;
  a.torso = {0.52 * s + jit(0.01), 0.50 * s + jit(0.01), 0.44 * s, 0.40 * s};
  a.lungs[0] = {0.48 * s + jit(0.02), 0.32 * s + jit(0.02), 0.28 * s + jit(0.02),
                0.14 * s + jit(0.02)};
  a.lungs[1] = {0.48 * s + jit(0.02), 0.68 * s + jit(0.02), 0.28 * s + jit(0.02),
                0.14 * s + jit(0.02)};
  return a;
}

// Adds one Gaussian opacity whose support is clipped to the mask, so no
// label-dependent pixel can leak outside the lung fields.
void add_lung_blob(std::vector<double>& canvas, const BitGrid& mask, std::size_t side,
                   Rng& rng) {
  const double s = static_cast<double>(side);
  double br = 0.0, bc = 0.0;
  bool placed = false;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    br = rng.uniform(0.0, s);
    bc = rng.uniform(0.0, s);
    const auto ir = static_cast<std::size_t>(br);
    const auto ic = static_cast<std::size_t>(bc);
    if (ir < side && ic < side && mask.at(ir, ic)) {
      placed = true;
      break;
    }
  }
  require(placed, Errc::Generation, "blob placement failed after 1000 attempts");
  const double amp = rng.uniform(65.0, 95.0);
  const double sigma = (s / 14.0) * rng.uniform(0.8, 1.2);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      if (!mask.at(r, c)) continue;
      const double dr = static_cast<double>(r) - br;
      const double dc = static_cast<double>(c) - bc;
      canvas[r * side + c] += amp * std::exp(-(dr * dr + dc * dc) * inv2s2);
    }
  }
}

void stamp_tag(std::vector<double>& canvas, std::size_t side, double value) {
  for (std::size_t r = kTagOffset; r < kTagOffset + kTagSide; ++r)
    for (std::size_t c = kTagOffset; c < kTagOffset + kTagSide; ++c)
      canvas[r * side + c] = value;
}

void validate(const PhantomConfig& cfg) {
  require(cfg.n_samples >= 40, Errc::Validation, "phantom needs n_samples >= 40");
  require(cfg.side >= 40, Errc::Validation,
          "phantom side must be >= 40 to keep the corner tag clear of the lungs");
  require(cfg.noise_sigma >= 0.0, Errc::Validation, "noise_sigma must be >= 0");
}

}  // namespace

ImageSample render_phantom_sample(const PhantomConfig& cfg, std::size_t index,
                                  ClassLabel label, BitGrid* mask_out) {
  validate(cfg);
  const std::size_t side = cfg.side;
  const Rng root(cfg.seed);
  // Independent streams: anatomy and noise never depend on the label, so two
  // renders of the same index differ only where the label may show.
  Rng anatomy_rng = root.fork("phantom.anatomy", index);
  Rng blob_rng = root.fork("phantom.blobs", index);
  Rng noise_rng = root.fork("phantom.noise", index);

  const Anatomy anatomy = draw_anatomy(side, anatomy_rng);
  BitGrid mask(side, side);
  std::vector<double> canvas(side * side, 30.0);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double fr = static_cast<double>(r);
      const double fc = static_cast<double>(c);
      if (anatomy.torso.contains(fr, fc)) canvas[r * side + c] = 90.0;
      if (anatomy.lungs[0].contains(fr, fc) || anatomy.lungs[1].contains(fr, fc)) {
        canvas[r * side + c] = 150.0;
        mask.at(r, c) = 1;
      }
    }
  }

  const bool tag_mode =
      cfg.mode == PhantomMode::SignalOutLung || cfg.mode == PhantomMode::Mixed;
  const bool blob_signal =
      cfg.mode == PhantomMode::SignalInLung || cfg.mode == PhantomMode::Mixed;

  if (tag_mode) {
    // Label-independent lung content, drawn from the anatomy stream: half the
    // samples carry blobs regardless of label.
    if (anatomy_rng.bernoulli(0.5)) {
      const std::size_t n_blobs = 2 + anatomy_rng.uniform_int(2);
      for (std::size_t b = 0; b < n_blobs; ++b)
        add_lung_blob(canvas, mask, side, anatomy_rng);
    }
  }
  if (blob_signal && label == ClassLabel::Typical) {
    const std::size_t n_blobs = 2 + blob_rng.uniform_int(2);
    for (std::size_t b = 0; b < n_blobs; ++b) add_lung_blob(canvas, mask, side, blob_rng);
  }

  if (cfg.noise_sigma > 0.0) {
    for (double& v : canvas) v += cfg.noise_sigma * noise_rng.normal();
  }
  if (tag_mode) stamp_tag(canvas, side, label == ClassLabel::Typical ? 235.0 : 25.0);

  ImageSample sample;
  {
    std::ostringstream id;
    id << "phantom_" << index;
    sample.id = id.str();
  }
  sample.label = label;
  sample.pixels = ImageU8(side, side);
  for (std::size_t i = 0; i < canvas.size(); ++i)
    sample.pixels.pixels[i] =
        static_cast<std::uint8_t>(std::lround(std::clamp(canvas[i], 0.0, 255.0)));
  if (mask_out) *mask_out = std::move(mask);
  return sample;
}

PhantomData gen_phantom(const PhantomConfig& cfg) {
  validate(cfg);
  PhantomData out;
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const ClassLabel label = (i % 2 == 0) ? ClassLabel::Negative : ClassLabel::Typical;
    BitGrid mask;
    ImageSample sample = render_phantom_sample(cfg, i, label, &mask);
    out.masks.emplace(sample.id, std::move(mask));
    out.dataset.samples.push_back(std::move(sample));
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const std::map<std::string, BitGrid>* masks) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv", std::ios::trunc);
  require(csv.good(), Errc::Io, "cannot write labels.csv in " + dir.string());
  csv << "filename,label\n";
  for (const auto& s : dataset.samples) {
    require(s.label.has_value(), Errc::Label, "sample " + s.id + " has no label");
    const std::string filename = s.id + ".pgm";
    save_pgm(s.pixels, dir / filename);
    csv << filename << "," << label_name(*s.label) << "\n";
  }
  if (masks) {
    std::filesystem::create_directories(dir / "masks");
    for (const auto& [id, mask] : *masks) save_mask_pgm(mask, dir / "masks" / (id + ".pgm"));
  }
}

}  // namespace curricubench::data
