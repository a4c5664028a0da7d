#ifndef CURRICUBENCH_MANIFEST_HPP_
#define CURRICUBENCH_MANIFEST_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "curricubench/attention.hpp"
#include "curricubench/curriculum.hpp"

namespace curricubench::cli {

// Flat sectioned key=value text. `#` starts a comment; keys before any
// section header belong to the root section "".
using ManifestSections = std::map<std::string, std::map<std::string, std::string>>;

ManifestSections parse_manifest_text(const std::string& text);
ManifestSections load_manifest(const std::filesystem::path& file);

struct DatasetSection {
  std::string kind = "phantom";  // phantom | directory
  data::PhantomConfig phantom;
  std::filesystem::path path;        // directory kind
  std::filesystem::path masks_path;  // optional masks directory
  std::size_t side = 64;
  double split_fraction = 0.8;
  data::ClassMode class_mode = data::ClassMode::TwoClass;
};

struct AttentionSection {
  attention::CamOptions cam;
  attention::PostprocessOptions postprocess;
  bool postprocess_masks = false;  // applied to directory masks only
};

// Fully-resolved experiment description: manifest text + profile defaults +
// per-step overrides.
struct ExperimentManifest {
  std::string name;
  std::string profile = "desk";  // desk | paper
  std::uint64_t global_seed = 0;
  std::filesystem::path output_dir;
  DatasetSection dataset;
  nn::BackboneConfig backbone;
  AttentionSection attention;
  std::vector<std::string> pretrain;  // ordered task ids
  curriculum::CurriculumSpec::Init init = curriculum::CurriculumSpec::Init::Scratch;
  std::filesystem::path init_path;
  ssl::RelLocParams relloc;
  ssl::MocoConfig moco;
  ssl::SwavConfig swav;
  std::map<std::string, curriculum::StepSpec> steps;  // by task, incl. classification
  std::map<std::string, double> single_task_acc;      // optional, percent
  std::size_t jobs = 1;
};

// Parses and resolves a manifest; profile defaults fill whatever [step.*]
// does not override. CURRICUBENCH_SEED in the environment overrides
// global_seed.
ExperimentManifest resolve_manifest(const ManifestSections& sections);
ExperimentManifest load_experiment_manifest(const std::filesystem::path& file);

// Per-task training defaults under the given profile.
curriculum::StepSpec profile_step_defaults(const std::string& task, const std::string& profile);

}  // namespace curricubench::cli

#endif  // CURRICUBENCH_MANIFEST_HPP_
