#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "curricubench/experiment.hpp"

namespace cb = curricubench;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int exit_code_for(const cb::Error& err) {
  switch (err.code()) {
    case cb::Errc::Validation:
    case cb::Errc::Format:
    case cb::Errc::Label:
    case cb::Errc::Task:
    case cb::Errc::Key:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

void print_row(const cb::cli::ResultsRow& row) {
  std::cout << row.run_id << ": sequence=["
            << cb::cli::join_sequence(row.pretrain_sequence)
            << "] val_balanced_acc=" << row.val_balanced_acc
            << "% mean_ail=" << row.mean_ail << "% ("
            << row.wall_clock_s << "s)\n";
}

std::map<std::string, double> load_single_task_table(const std::filesystem::path& file) {
  std::map<std::string, double> out;
  if (file.empty()) return out;
  std::ifstream in(file);
  cb::require(in.good(), cb::Errc::Io, "cannot open " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    cb::require(comma != std::string::npos, cb::Errc::Format,
                "single-task table rows must be `task,acc`");
    const std::string task = line.substr(0, comma);
    if (task == "task") continue;  // header
    out[task] = std::stod(line.substr(comma + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curricubench: curricular SSL pretraining with attention audits"};
  app.require_subcommand(1);

  // gen-phantom
  auto* gen = app.add_subcommand("gen-phantom", "Generate a synthetic lung-phantom dataset");
  std::string gen_out = "phantom";
  std::string gen_mode = "signal_in_lung";
  std::size_t gen_n = 400, gen_side = 64;
  double gen_noise = 6.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--mode", gen_mode, "signal_in_lung | signal_out_lung | mixed");
  gen->add_option("--n", gen_n, "Number of samples (>= 40)");
  gen->add_option("--side", gen_side, "Image side in pixels (>= 40)");
  gen->add_option("--noise", gen_noise, "Gaussian pixel noise sigma");
  gen->add_option("--seed", gen_seed, "Generator seed");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment manifest");
  std::string run_manifest;
  std::size_t run_jobs = 0;
  std::string run_profile;
  run->add_option("--manifest", run_manifest, "Manifest file")->required();
  run->add_option("--jobs", run_jobs, "Parallel LR-search candidates");
  run->add_option("--profile", run_profile, "Override manifest profile (desk | paper)");

  // confound
  auto* confound = app.add_subcommand(
      "confound", "Train lung-only and inverse-segmented baselines from a manifest");
  std::string confound_manifest;
  confound->add_option("--manifest", confound_manifest, "Manifest file")->required();

  // ail
  auto* ail_cmd = app.add_subcommand("ail", "Mean AIL of a model over a dataset");
  std::string ail_model, ail_data, ail_masks, ail_out, ail_cam_dir, ail_format = "f32g";
  std::size_t ail_side = 64;
  bool ail_no_clamp = false, ail_postprocess = false;
  ail_cmd->add_option("--model", ail_model, "Checkpoint directory")->required();
  ail_cmd->add_option("--data", ail_data, "Dataset directory (labels.csv + PGMs)")->required();
  ail_cmd->add_option("--masks", ail_masks, "Mask directory (PGM {0,255})")->required();
  ail_cmd->add_option("--side", ail_side, "Resize side");
  ail_cmd->add_option("--out", ail_out, "Per-image AIL CSV path");
  ail_cmd->add_option("--cam-dir", ail_cam_dir, "Dump per-image CAMs into this directory");
  ail_cmd->add_option("--format", ail_format, "CAM dump format: f32g | csv");
  ail_cmd->add_flag("--no-cam-clamp", ail_no_clamp, "Keep negative CAM values");
  ail_cmd->add_flag("--postprocess-masks", ail_postprocess,
                    "Component-filter and close the masks before scoring");

  // report
  auto* report = app.add_subcommand("report", "Render results.csv into tables and plots");
  std::string report_results, report_single, report_out = "report";
  bool report_svg = false;
  report->add_option("--results", report_results, "results.csv path")->required();
  report->add_option("--single-task", report_single, "CSV `task,acc` for curriculum marks");
  report->add_option("--out", report_out, "Output directory");
  report->add_flag("--svg", report_svg, "Also write scatter.svg");

  // lr-search
  auto* search = app.add_subcommand("lr-search", "Standalone LR search for one step");
  std::string search_manifest, search_task = "classification";
  search->add_option("--manifest", search_manifest, "Manifest file")->required();
  search->add_option("--task", search_task, "Step to search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      cb::data::PhantomConfig cfg;
      cfg.n_samples = gen_n;
      cfg.side = gen_side;
      cfg.noise_sigma = gen_noise;
      cfg.seed = gen_seed;
      if (gen_mode == "signal_in_lung") cfg.mode = cb::data::PhantomMode::SignalInLung;
      else if (gen_mode == "signal_out_lung") cfg.mode = cb::data::PhantomMode::SignalOutLung;
      else if (gen_mode == "mixed") cfg.mode = cb::data::PhantomMode::Mixed;
      else cb::throw_error(cb::Errc::Validation, "unknown phantom mode " + gen_mode);
      const cb::data::PhantomData phantom = cb::data::gen_phantom(cfg);
      cb::data::save_dataset(phantom.dataset, gen_out, &phantom.masks);
      std::cout << "wrote " << phantom.dataset.size() << " samples to " << gen_out << "\n";
    } else if (run->parsed()) {
      auto sections = cb::cli::load_manifest(run_manifest);
      if (!run_profile.empty()) sections[""]["profile"] = run_profile;
      auto manifest = cb::cli::resolve_manifest(sections);
      if (run_jobs > 0) manifest.jobs = run_jobs;
      print_row(cb::cli::run_experiment(manifest));
    } else if (confound->parsed()) {
      const auto manifest = cb::cli::load_experiment_manifest(confound_manifest);
      const auto result = cb::cli::run_confound(manifest);
      print_row(result.masked);
      print_row(result.inverse);
    } else if (ail_cmd->parsed()) {
      const cb::Checkpoint model = cb::load_checkpoint(ail_model);
      cb::data::DatasetSpec spec;
      spec.source = ail_data;
      spec.side = ail_side;
      const cb::data::Dataset dataset = cb::data::load_dataset(spec);
      std::map<std::string, cb::BitGrid> masks;
      for (const auto& sample : dataset.samples) {
        const auto file = std::filesystem::path(ail_masks) / (sample.id + ".pgm");
        if (!std::filesystem::exists(file)) continue;
        cb::BitGrid mask = cb::load_mask_pgm(file);
        if (ail_postprocess) mask = cb::attention::postprocess_mask(mask);
        masks.emplace(sample.id, std::move(mask));
      }
      cb::attention::CamOptions cam;
      cam.clamp_negative = !ail_no_clamp;
      const auto result = cb::attention::mean_ail(model, dataset, masks, cam);
      if (!ail_cam_dir.empty()) {
        std::filesystem::create_directories(ail_cam_dir);
        for (const auto& sample : dataset.samples) {
          if (masks.count(sample.id) == 0) continue;
          const auto cam_map = cb::attention::compute_cam(model, sample.pixels, cam);
          const auto base = std::filesystem::path(ail_cam_dir) / sample.id;
          if (ail_format == "csv")
            cb::attention::save_grid_csv(cam_map, base.string() + ".csv");
          else
            cb::attention::save_f32g(cam_map, base.string() + ".f32g");
        }
      }
      if (!ail_out.empty()) cb::attention::write_ail_csv(ail_out, result, dataset, masks);
      std::cout << "mean_ail=" << 100.0 * result.mean << "% over "
                << result.per_image.size() << " images (excluded=" << result.excluded
                << ", skipped=" << result.skipped << ")\n";
    } else if (report->parsed()) {
      const auto table = load_single_task_table(report_single);
      cb::cli::ReportOptions opts;
      opts.svg = report_svg;
      const auto outcome = cb::cli::emit_report(report_results, table, report_out, opts);
      std::cout << "wrote " << outcome.table_md.string() << " and "
                << outcome.scatter_csv.string() << "\n";
      if (outcome.malformed_rows > 0) {
        std::cerr << "skipped " << outcome.malformed_rows << " malformed rows\n";
        return kExitRuntime;
      }
    } else if (search->parsed()) {
      const auto manifest = cb::cli::load_experiment_manifest(search_manifest);
      cb::require(manifest.steps.count(search_task) != 0 || search_task == "classification",
                  cb::Errc::Task, "manifest has no step for task " + search_task);
      // Assemble data exactly as `run` would, then search the single step.
      cb::data::Dataset dataset;
      std::map<std::string, cb::BitGrid> masks;
      if (manifest.dataset.kind == "phantom") {
        auto phantom = cb::data::gen_phantom(manifest.dataset.phantom);
        dataset = std::move(phantom.dataset);
      } else {
        cb::data::DatasetSpec spec;
        spec.source = manifest.dataset.path;
        spec.side = manifest.dataset.side;
        spec.class_mode = manifest.dataset.class_mode;
        dataset = cb::data::load_dataset(spec);
      }
      const std::uint64_t split_seed =
          cb::Rng(manifest.global_seed).fork("data.split").next_u64();
      const auto [train, val] =
          cb::data::make_split(dataset, manifest.dataset.split_fraction, split_seed);
      cb::curriculum::StepEnv env;
      env.train = &train;
      env.val = &val;
      env.class_mode = manifest.dataset.class_mode;
      env.backbone = manifest.backbone;
      env.relloc = manifest.relloc;
      env.moco = manifest.moco;
      env.swav = manifest.swav;
      env.jobs = manifest.jobs;
      const auto step = manifest.steps.count(search_task)
                            ? manifest.steps.at(search_task)
                            : cb::cli::profile_step_defaults(search_task, manifest.profile);
      const cb::Checkpoint scratch = cb::nn::init_backbone(
          env.backbone, cb::Rng(manifest.global_seed).fork("backbone.init").next_u64());
      cb::nn::HeadSpec head;
      head.task = step.task;
      head.num_classes = cb::data::active_classes(env.class_mode).size();
      head.proj_dim = step.task == "swav" ? env.swav.proj_dim : env.moco.proj_dim;
      head.prototypes = env.swav.prototypes;
      head.seed = step.seed;
      const auto init = cb::nn::transfer_weights(scratch, head);
      const auto result = cb::curriculum::lr_search(step, init, env);
      for (std::size_t i = 0; i < result.candidates.size(); ++i)
        std::cout << "lr=" << result.candidates[i] << " score=" << result.scores[i]
                  << "\n";
      std::cout << "chosen_lr=" << result.chosen_lr << " criterion="
                << (result.criterion == cb::curriculum::SearchCriterion::MinLoss
                        ? "min_loss"
                        : "max_performance")
                << "\n";
    }
  } catch (const cb::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
