#ifndef CURRICUBENCH_CURRICULUM_HPP_
#define CURRICUBENCH_CURRICULUM_HPP_

#include <functional>
#include <map>
#include <optional>

#include "curricubench/classify.hpp"
#include "curricubench/ssl.hpp"

namespace curricubench::curriculum {

enum class SearchCriterion { MaxTaskPerformance, MinLoss };

struct StepSpec {
  std::string task = "classification";  // rotation | relloc | moco | swav | classification
  std::size_t batch_size = 16;
  std::vector<double> lr_candidates = {0.01, 0.025, 0.05, 0.1, 0.25};
  std::size_t search_epochs = 3;
  std::size_t full_epochs = 10;
  nn::OptimConfig::Kind optimizer = nn::OptimConfig::Kind::Sgd;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  double trust_coeff = 0.001;
  std::uint64_t seed = 0;
  // Default criterion: task performance where one exists (classification,
  // rotation, relloc), loss otherwise (moco, swav).
  std::optional<SearchCriterion> criterion;
};

struct CurriculumSpec {
  std::vector<StepSpec> steps;  // N pretraining steps, in order
  StepSpec downstream;          // final classification step
  enum class Init { Scratch, ExternalCheckpoint } init = Init::Scratch;
  std::filesystem::path init_path;
  std::uint64_t init_seed = 0;  // Scratch initializer stream
};

struct LrSearchResult {
  std::vector<double> candidates;
  std::vector<double> scores;  // accuracy or loss per candidate; NaN = excluded
  double chosen_lr = 0.0;
  SearchCriterion criterion = SearchCriterion::MinLoss;
};

struct StepLog {
  std::vector<double> losses;   // per epoch
  std::vector<double> metrics;  // per epoch; NaN where the task has none
  double chosen_lr = 0.0;
  LrSearchResult search;
};

// Data and hyperparameter context shared by every step of a run.
struct StepEnv {
  const data::Dataset* train = nullptr;
  const data::Dataset* val = nullptr;
  data::ClassMode class_mode = data::ClassMode::TwoClass;
  nn::BackboneConfig backbone;
  ssl::RelLocParams relloc;
  ssl::MocoConfig moco;
  ssl::SwavConfig swav;
  ssl::AugmentConfig augment;
  std::size_t jobs = 1;  // parallel LR-search candidates
};

std::unique_ptr<TaskRunner> make_task_runner(const StepSpec& step, const Checkpoint& init,
                                             const StepEnv& env);

SearchCriterion default_criterion(const std::string& task);

// v' = momentum*v + g + wd*p; p' = p - lr*v' -- re-exported spec surface
// (see nn::sgd_update / nn::lars_update for the per-tensor rules).

// Selection rule used by lr_search: ascending scan with strict improvement
// (ties therefore resolve to the smallest LR); non-finite scores are
// excluded; SearchError when nothing remains.
std::size_t select_candidate(const std::vector<double>& scores, SearchCriterion criterion);

// Trains a fresh copy from `init` per candidate for search_epochs; scores by
// the step's criterion; non-finite candidates are excluded; ties take the
// smallest LR. SearchError when every candidate is excluded.
LrSearchResult lr_search(const StepSpec& step, const Checkpoint& init, const StepEnv& env);

// lr_search, then full_epochs of training at the chosen LR restarted from
// `init` (search probes are discarded).
std::pair<Checkpoint, StepLog> run_step(const StepSpec& step, const Checkpoint& init,
                                        const StepEnv& env);

struct CurriculumResult {
  std::vector<Checkpoint> checkpoints;  // one per step, downstream last
  std::vector<StepLog> logs;
  classify::MetricsReport val_report;
  double val_balanced_accuracy = 0.0;
};

// Folds run_step over the pretraining steps and the downstream step,
// transferring backbone weights at every handoff. When `output_dir` is
// non-empty, each completed step is persisted immediately, so a failing
// step leaves the finished prefix on disk.
CurriculumResult run_curriculum(const CurriculumSpec& spec, const StepEnv& env,
                                const std::filesystem::path& output_dir = {});

// True iff single-task downstream accuracies strictly increase along the
// sequence. Sequences of length <= 1 are vacuously ordered.
bool is_curriculum_order(const std::vector<std::string>& sequence,
                         const std::map<std::string, double>& single_task_acc);

}  // namespace curricubench::curriculum

#endif  // CURRICUBENCH_CURRICULUM_HPP_
