#include "curricubench/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace curricubench::cli {

namespace {

struct LoadedData {
  data::Dataset dataset;
  std::map<std::string, BitGrid> masks;
};

LoadedData load_manifest_data(const ExperimentManifest& m) {
  LoadedData out;
  if (m.dataset.kind == "phantom") {
    data::PhantomData phantom = data::gen_phantom(m.dataset.phantom);
    out.dataset = std::move(phantom.dataset);
    out.masks = std::move(phantom.masks);
    return out;
  }
  data::DatasetSpec spec;
  spec.source = m.dataset.path;
  spec.side = m.dataset.side;
  spec.split_fraction = m.dataset.split_fraction;
  spec.class_mode = m.dataset.class_mode;
  out.dataset = data::load_dataset(spec);
  if (!m.dataset.masks_path.empty()) {
    for (const auto& sample : out.dataset.samples) {
      const auto file = m.dataset.masks_path / (sample.id + ".pgm");
      if (!std::filesystem::exists(file)) continue;
      BitGrid mask = load_mask_pgm(file);
      if (mask.height != sample.pixels.height || mask.width != sample.pixels.width) {
        ImageU8 as_img(mask.height, mask.width);
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
          as_img.pixels[i] = mask.bits[i] ? 255 : 0;
        const ImageU8 resized =
            resize_bilinear(as_img, sample.pixels.height, sample.pixels.width);
        mask = BitGrid(resized.height, resized.width);
        for (std::size_t i = 0; i < resized.pixels.size(); ++i)
          mask.bits[i] = resized.pixels[i] >= 128 ? 1 : 0;
      }
      if (m.attention.postprocess_masks)
        mask = attention::postprocess_mask(mask, m.attention.postprocess);
      out.masks.emplace(sample.id, std::move(mask));
    }
  }
  return out;
}

curriculum::StepEnv make_step_env(const ExperimentManifest& m, const data::Dataset& train,
                                  const data::Dataset& val) {
  curriculum::StepEnv env;
  env.train = &train;
  env.val = &val;
  env.class_mode = m.dataset.class_mode;
  env.backbone = m.backbone;
  env.relloc = m.relloc;
  env.moco = m.moco;
  env.swav = m.swav;
  env.jobs = m.jobs;
  return env;
}

curriculum::CurriculumSpec make_curriculum_spec(const ExperimentManifest& m) {
  curriculum::CurriculumSpec spec;
  for (const auto& task : m.pretrain) spec.steps.push_back(m.steps.at(task));
  spec.downstream = m.steps.at("classification");
  spec.init = m.init;
  spec.init_path = m.init_path;
  spec.init_seed = Rng(m.global_seed).fork("backbone.init").next_u64();
  return spec;
}

}  // namespace

bool manifest_is_curriculum(const ExperimentManifest& m) {
  if (m.pretrain.size() <= 1) return true;  // vacuous ordering
  if (m.single_task_acc.empty()) return false;
  for (const auto& task : m.pretrain)
    if (m.single_task_acc.count(task) == 0) return false;
  return curriculum::is_curriculum_order(m.pretrain, m.single_task_acc);
}

std::string join_sequence(const std::vector<std::string>& sequence) {
  std::string out;
  for (std::size_t i = 0; i < sequence.size(); ++i) out += (i ? "+" : "") + sequence[i];
  return out;
}

std::vector<std::string> split_sequence(const std::string& joined) {
  std::vector<std::string> out;
  std::istringstream in(joined);
  std::string tok;
  while (std::getline(in, tok, '+'))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void append_results_row(const std::filesystem::path& results_csv, const ResultsRow& row) {
  const bool fresh = !std::filesystem::exists(results_csv);
  if (results_csv.has_parent_path())
    std::filesystem::create_directories(results_csv.parent_path());
  std::ofstream out(results_csv, std::ios::app);
  require(out.good(), Errc::Io, "cannot append to " + results_csv.string());
  if (fresh)
    out << "run_id,pretrain_sequence,is_curriculum,val_balanced_acc,mean_ail,wall_clock_s\n";
  out << row.run_id << "," << join_sequence(row.pretrain_sequence) << ","
      << (row.is_curriculum ? "true" : "false") << "," << row.val_balanced_acc << ","
      << row.mean_ail << "," << row.wall_clock_s << "\n";
}

std::vector<ResultsRow> read_results_csv(const std::filesystem::path& results_csv,
                                         std::size_t* malformed) {
  std::ifstream in(results_csv);
  require(in.good(), Errc::Io, "cannot open " + results_csv.string());
  std::vector<ResultsRow> rows;
  std::size_t bad = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;  // header
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) fields.push_back(tok);
    if (fields.size() != 6) {
      ++bad;
      continue;
    }
    try {
      ResultsRow row;
      row.run_id = fields[0];
      row.pretrain_sequence = split_sequence(fields[1]);
      row.is_curriculum = fields[2] == "true";
      row.val_balanced_acc = std::stod(fields[3]);
      row.mean_ail = std::stod(fields[4]);
      row.wall_clock_s = std::stod(fields[5]);
      rows.push_back(std::move(row));
    } catch (const std::exception&) {
      ++bad;
    }
  }
  if (malformed) *malformed = bad;
  return rows;
}

ResultsRow run_experiment(const ExperimentManifest& manifest) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedData loaded = load_manifest_data(manifest);
  const std::uint64_t split_seed = Rng(manifest.global_seed).fork("data.split").next_u64();
  const auto [train, val] =
      data::make_split(loaded.dataset, manifest.dataset.split_fraction, split_seed);

  const std::filesystem::path run_dir = manifest.output_dir / manifest.name;
  std::filesystem::create_directories(run_dir);

  const curriculum::StepEnv env = make_step_env(manifest, train, val);
  const curriculum::CurriculumSpec spec = make_curriculum_spec(manifest);
  const curriculum::CurriculumResult result = curriculum::run_curriculum(spec, env, run_dir);

  require(!loaded.masks.empty(), Errc::Mask,
          "AIL needs lung masks (phantom data or a dataset masks directory)");
  const attention::MeanAilResult ail_result = attention::mean_ail(
      result.checkpoints.back(), val, loaded.masks, manifest.attention.cam);
  attention::write_ail_csv(run_dir / "ail.csv", ail_result, val, loaded.masks);

  ResultsRow row;
  row.run_id = manifest.name;
  row.pretrain_sequence = manifest.pretrain;
  row.is_curriculum = manifest_is_curriculum(manifest);
  row.val_balanced_acc = 100.0 * result.val_balanced_accuracy;
  row.mean_ail = 100.0 * ail_result.mean;
  row.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  append_results_row(manifest.output_dir / "results.csv", row);
  return row;
}

ConfoundResult run_confound(const ExperimentManifest& manifest) {
  const LoadedData loaded = load_manifest_data(manifest);
  for (const auto& sample : loaded.dataset.samples)
    require(loaded.masks.count(sample.id) != 0, Errc::Mask,
            "confound run needs a mask for every sample; missing " + sample.id);

  const auto derive = [&](bool lung_only) {
    data::Dataset out;
    for (const auto& sample : loaded.dataset.samples) {
      data::ImageSample copy = sample;
      const BitGrid& mask = loaded.masks.at(sample.id);
      copy.pixels = lung_only ? attention::apply_mask(sample.pixels, mask)
                              : attention::inverse_segment(sample.pixels, mask);
      out.samples.push_back(std::move(copy));
    }
    return out;
  };

  const std::uint64_t split_seed = Rng(manifest.global_seed).fork("data.split").next_u64();
  const auto run_variant = [&](const data::Dataset& dataset, const std::string& suffix) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto [train, val] =
        data::make_split(dataset, manifest.dataset.split_fraction, split_seed);
    const std::filesystem::path run_dir = manifest.output_dir / (manifest.name + suffix);
    std::filesystem::create_directories(run_dir);

    const curriculum::StepEnv env = make_step_env(manifest, train, val);
    curriculum::CurriculumSpec spec = make_curriculum_spec(manifest);
    spec.steps.clear();  // Scratch baseline protocol: downstream only
    const curriculum::CurriculumResult result =
        curriculum::run_curriculum(spec, env, run_dir);

    const attention::MeanAilResult ail_result = attention::mean_ail(
        result.checkpoints.back(), val, loaded.masks, manifest.attention.cam);
    attention::write_ail_csv(run_dir / "ail.csv", ail_result, val, loaded.masks);

    ResultsRow row;
    row.run_id = manifest.name + suffix;
    row.pretrain_sequence = {};
    row.is_curriculum = true;
    row.val_balanced_acc = 100.0 * result.val_balanced_accuracy;
    row.mean_ail = 100.0 * ail_result.mean;
    row.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_results_row(manifest.output_dir / "results.csv", row);
    return row;
  };

  ConfoundResult out;
  out.masked = run_variant(derive(true), "-lungonly");
  out.inverse = run_variant(derive(false), "-inverse");
  return out;
}

}  // namespace curricubench::cli
