#include "curricubench/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <queue>

#include "curricubench/augment.hpp"
#include "curricubench/backbone.hpp"
#include "curricubench/classify.hpp"

namespace curricubench::attention {

Tensor compute_cam_raw(const Checkpoint& model, const ImageU8& image,
                       const CamOptions& opts) {
  Tensor batch({1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    batch[i] = static_cast<float>(image.pixels[i]) / 255.0f;

  const auto features = nn::forward_features(model, batch);
  const Tensor& maps = features[0].maps;            // [1,K,h,w]
  const Tensor& embedding = features[0].embedding;  // [1,K]
  const Tensor& head_w = model.get("head.cls.weight");
  const Tensor& head_b = model.get("head.cls.bias");
  const std::size_t k = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  const std::size_t classes = head_w.dim(0);
  require(head_w.dim(1) == k, Errc::Shape, "classifier head does not match features");

  // Predicted class from the GAP embedding, ties toward the smaller index.
  std::size_t pred = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes; ++c) {
    double logit = head_b[c];
    for (std::size_t j = 0; j < k; ++j)
      logit += static_cast<double>(head_w.at2(c, j)) * embedding[j];
    if (logit > best) {
      best = logit;
      pred = c;
    }
  }

  Tensor raw({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < k; ++j)
        acc += static_cast<double>(head_w.at2(pred, j)) * maps[(j * h + r) * w + c];
      require(std::isfinite(acc), Errc::Numeric, "non-finite CAM value");
      raw.at2(r, c) = static_cast<float>(acc);
    }
  if (opts.clamp_negative)
    for (auto& v : raw.data) v = std::max(v, 0.0f);
  return raw;
}

AttentionMap compute_cam(const Checkpoint& model, const ImageU8& image,
                         const CamOptions& opts) {
  return imgf::resize_bilinear(compute_cam_raw(model, image, opts), image.height,
                               image.width);
}

BitGrid postprocess_mask(const BitGrid& raw, const PostprocessOptions& opts) {
  const std::size_t h = raw.height, w = raw.width;
  const double min_area = opts.min_area_fraction * static_cast<double>(h * w);

  // 8-connected component labeling by BFS.
  std::vector<int> label(h * w, -1);
  std::vector<std::size_t> area;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!raw.bits[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(area.size());
    std::size_t count = 0;
    std::queue<std::size_t> frontier;
    frontier.push(start);
    label[start] = id;
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop();
      ++count;
      const std::ptrdiff_t pr = static_cast<std::ptrdiff_t>(p / w);
      const std::ptrdiff_t pc = static_cast<std::ptrdiff_t>(p % w);
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr)
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const std::ptrdiff_t nr = pr + dr, nc = pc + dc;
          if (nr < 0 || nc < 0 || nr >= static_cast<std::ptrdiff_t>(h) ||
              nc >= static_cast<std::ptrdiff_t>(w))
            continue;
          const std::size_t np = static_cast<std::size_t>(nr) * w +
                                 static_cast<std::size_t>(nc);
          if (raw.bits[np] && label[np] < 0) {
            label[np] = id;
            frontier.push(np);
          }
        }
    }
    area.push_back(count);
  }

  // Keep the up-to-2 largest components above the area threshold.
  std::vector<int> order(area.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (area[a] != area[b]) return area[a] > area[b];
    return a < b;
  });
  std::vector<bool> keep(area.size(), false);
  std::size_t kept = 0;
  for (const int id : order) {
    if (kept == 2) break;
    if (static_cast<double>(area[static_cast<std::size_t>(id)]) >= min_area) {
      keep[static_cast<std::size_t>(id)] = true;
      ++kept;
    }
  }
  require(kept > 0, Errc::EmptyMask, "no connected component passes the area threshold");

  BitGrid filtered(h, w);
  for (std::size_t i = 0; i < h * w; ++i)
    filtered.bits[i] = label[i] >= 0 && keep[static_cast<std::size_t>(label[i])] ? 1 : 0;
  if (opts.closing_radius == 0) return filtered;

  // Binary closing with a disc element, computed on a canvas padded by the
  // radius. The padding realizes the plane operator exactly, which is what
  // makes the closing (and therefore the whole post-processing) idempotent.
  const auto r = static_cast<std::ptrdiff_t>(opts.closing_radius);
  std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> disc;
  for (std::ptrdiff_t dr = -r; dr <= r; ++dr)
    for (std::ptrdiff_t dc = -r; dc <= r; ++dc)
      if (dr * dr + dc * dc <= r * r) disc.emplace_back(dr, dc);

  const std::size_t ph = h + 2 * opts.closing_radius;
  const std::size_t pw = w + 2 * opts.closing_radius;
  BitGrid dilated(ph, pw);
  for (std::size_t rr = 0; rr < h; ++rr)
    for (std::size_t cc = 0; cc < w; ++cc) {
      if (!filtered.at(rr, cc)) continue;
      for (const auto& [dr, dc] : disc)
        dilated.at(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(rr) + r + dr),
                   static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cc) + r + dc)) = 1;
    }
  BitGrid closed(h, w);
  for (std::size_t rr = 0; rr < h; ++rr)
    for (std::size_t cc = 0; cc < w; ++cc) {
      bool all = true;
      for (const auto& [dr, dc] : disc) {
        const auto nr = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(rr) + r + dr);
        const auto nc = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cc) + r + dc);
        if (!dilated.at(nr, nc)) {
          all = false;
          break;
        }
      }
      closed.at(rr, cc) = all ? 1 : 0;
    }
  return closed;
}

double ail(const AttentionMap& attention, const BitGrid& mask) {
  require(attention.rank() == 2, Errc::Shape, "attention map must be [H,W]");
  require(attention.dim(0) == mask.height && attention.dim(1) == mask.width, Errc::Shape,
          "attention map and mask shapes must match");
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < attention.numel(); ++i) {
    const double a = attention[i];
    total += a;
    if (mask.bits[i]) inside += a;
  }
  require(total != 0.0, Errc::ZeroAttention, "attention map sums to zero");
  return inside / total;
}

MeanAilResult mean_ail(const Checkpoint& model, const data::Dataset& dataset,
                       const std::map<std::string, BitGrid>& masks,
                       const CamOptions& opts) {
  MeanAilResult out;
  std::vector<double> values;
  for (const auto& sample : dataset.samples) {
    const auto it = masks.find(sample.id);
    if (it == masks.end()) {
      ++out.skipped;
      continue;
    }
    const AttentionMap cam = compute_cam(model, sample.pixels, opts);
    try {
      const double score = ail(cam, it->second);
      out.per_image.emplace(sample.id, score);
      values.push_back(score);
    } catch (const Error& err) {
      if (err.code() != Errc::ZeroAttention) throw;
      ++out.excluded;
    }
  }
  require(!values.empty(), Errc::Empty, "no image produced a valid AIL score");

  // Pairwise summation keeps the mean independent of evaluation order.
  std::vector<double> acc = values;
  while (acc.size() > 1) {
    std::vector<double> next;
    for (std::size_t i = 0; i + 1 < acc.size(); i += 2) next.push_back(acc[i] + acc[i + 1]);
    if (acc.size() % 2) next.push_back(acc.back());
    acc = std::move(next);
  }
  out.mean = acc[0] / static_cast<double>(values.size());
  return out;
}

ImageU8 inverse_segment(const ImageU8& image, const BitGrid& mask) {
  require(image.height == mask.height && image.width == mask.width, Errc::Shape,
          "image and mask shapes must match");
  ImageU8 out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    if (mask.bits[i]) out.pixels[i] = 0;
  return out;
}

ImageU8 apply_mask(const ImageU8& image, const BitGrid& mask) {
  require(image.height == mask.height && image.width == mask.width, Errc::Shape,
          "image and mask shapes must match");
  ImageU8 out = image;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    if (!mask.bits[i]) out.pixels[i] = 0;
  return out;
}

void save_f32g(const Tensor& grid, const std::filesystem::path& file) {
  require(grid.rank() == 2, Errc::Shape, "F32G stores [H,W] grids");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write " + file.string());
  out.write("F32G", 4);
  const auto rows = static_cast<std::uint32_t>(grid.dim(0));
  const auto cols = static_cast<std::uint32_t>(grid.dim(1));
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(grid.ptr()),
            static_cast<std::streamsize>(grid.numel() * sizeof(float)));
  require(out.good(), Errc::Io, "short write to " + file.string());
}

Tensor load_f32g(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(in.good(), Errc::Io, "cannot open " + file.string());
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "F32G", 4) == 0, Errc::Format,
          "not an F32G file: " + file.string());
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  require(in.good() && rows > 0 && cols > 0, Errc::Format,
          "bad F32G header in " + file.string());
  Tensor grid({rows, cols});
  in.read(reinterpret_cast<char*>(grid.ptr()),
          static_cast<std::streamsize>(grid.numel() * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(grid.numel() * sizeof(float)),
          Errc::Format, "truncated F32G payload in " + file.string());
  return grid;
}

void save_grid_csv(const Tensor& grid, const std::filesystem::path& file) {
  require(grid.rank() == 2, Errc::Shape, "CSV export stores [H,W] grids");
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write " + file.string());
  out << std::setprecision(9);
  for (std::size_t r = 0; r < grid.dim(0); ++r) {
    for (std::size_t c = 0; c < grid.dim(1); ++c) out << (c ? "," : "") << grid.at2(r, c);
    out << "\n";
  }
}

void write_ail_csv(const std::filesystem::path& file, const MeanAilResult& result,
                   const data::Dataset& dataset,
                   const std::map<std::string, BitGrid>& masks) {
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write " + file.string());
  out << "id,ail,excluded_reason\n";
  for (const auto& sample : dataset.samples) {
    const auto it = result.per_image.find(sample.id);
    if (it != result.per_image.end()) {
      out << sample.id << "," << it->second << ",\n";
    } else if (masks.count(sample.id) == 0) {
      out << sample.id << ",,no_mask\n";
    } else {
      out << sample.id << ",,zero_attention\n";
    }
  }
}

}  // namespace curricubench::attention
