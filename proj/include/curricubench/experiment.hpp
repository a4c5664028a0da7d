#ifndef CURRICUBENCH_EXPERIMENT_HPP_
#define CURRICUBENCH_EXPERIMENT_HPP_

#include "curricubench/manifest.hpp"

namespace curricubench::cli {

struct ResultsRow {
  std::string run_id;
  std::vector<std::string> pretrain_sequence;
  bool is_curriculum = false;
  double val_balanced_acc = 0.0;  // percent
  double mean_ail = 0.0;          // percent
  double wall_clock_s = 0.0;
};

std::string join_sequence(const std::vector<std::string>& sequence);
std::vector<std::string> split_sequence(const std::string& joined);

// Appends to <dir>/results.csv, creating it (with header) when absent.
// Existing rows are never rewritten.
void append_results_row(const std::filesystem::path& results_csv, const ResultsRow& row);
std::vector<ResultsRow> read_results_csv(const std::filesystem::path& results_csv,
                                         std::size_t* malformed = nullptr);

// Curriculum flag for a manifest's pretraining sequence: vacuously true for
// length <= 1, resolved via is_curriculum_order when [single_task_acc]
// covers the sequence, false otherwise.
bool manifest_is_curriculum(const ExperimentManifest& manifest);

// gen/load -> split -> run_curriculum -> mean AIL; persists checkpoints,
// step logs, per-image AIL, and the results row under output_dir.
ResultsRow run_experiment(const ExperimentManifest& manifest);

struct ConfoundResult {
  ResultsRow masked;   // trained on lung-only images
  ResultsRow inverse;  // trained on inversely-segmented images
};

// Trains the downstream protocol twice: once on lung-only images and once on
// inversely-segmented images. Requires masks for every sample.
ConfoundResult run_confound(const ExperimentManifest& manifest);

struct ReportOptions {
  bool svg = false;
};

struct ReportOutcome {
  std::filesystem::path table_md;
  std::filesystem::path scatter_csv;
  std::filesystem::path scatter_svg;  // empty unless requested
  std::size_t malformed_rows = 0;
};

// Results table in markdown (blocks by sequence length, per-block maxima
// in bold, curriculum column from is_curriculum_order) plus scatter data and
// an optional SVG with baseline reference lines.
ReportOutcome emit_report(const std::filesystem::path& results_csv,
                          const std::map<std::string, double>& single_task_acc,
                          const std::filesystem::path& out_dir,
                          const ReportOptions& opts = {});

// Short labels used in scatter plots: moco -> M, swav -> S, relloc -> RL,
// rotation -> RP; empty sequence -> Scratch.
std::string sequence_label(const std::vector<std::string>& sequence);

}  // namespace curricubench::cli

#endif  // CURRICUBENCH_EXPERIMENT_HPP_
