#include "curricubench/curriculum.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

namespace curricubench::curriculum {

namespace {

void validate_step(const StepSpec& step) {
  require(!step.lr_candidates.empty(), Errc::Validation, "lr_candidates must be non-empty");
  require(std::is_sorted(step.lr_candidates.begin(), step.lr_candidates.end()),
          Errc::Validation, "lr_candidates must be sorted ascending");
  for (const double lr : step.lr_candidates)
    require(lr >= 0.01 && lr <= 0.25, Errc::Validation,
            "lr candidates must lie in [0.01, 0.25]");
  require(step.search_epochs >= 1, Errc::Validation, "search_epochs must be >= 1");
}

nn::OptimConfig optim_config(const StepSpec& step, double lr) {
  nn::OptimConfig cfg;
  cfg.kind = step.optimizer;
  cfg.lr = lr;
  cfg.momentum = step.sgd_momentum;
  cfg.weight_decay = step.weight_decay;
  cfg.trust_coeff = step.trust_coeff;
  return cfg;
}

// Runs one candidate from scratch and returns its score (NaN = diverged).
double score_candidate(const StepSpec& step, const Checkpoint& init, const StepEnv& env,
                       double lr, SearchCriterion criterion) {
  try {
    auto runner = make_task_runner(step, init, env);
    nn::Optimizer opt(optim_config(step, lr));
    double last_loss = std::nan("");
    for (std::size_t e = 0; e < step.search_epochs; ++e) {
      last_loss = runner->train_epoch(e, opt);
      if (!std::isfinite(last_loss)) return std::nan("");
    }
    if (criterion == SearchCriterion::MinLoss) return last_loss;
    return runner->eval_metric();
  } catch (const Error& err) {
    if (err.code() == Errc::Numeric) return std::nan("");  // diverged candidate
    throw;
  }
}

}  // namespace

SearchCriterion default_criterion(const std::string& task) {
  if (task == "moco" || task == "swav") return SearchCriterion::MinLoss;
  return SearchCriterion::MaxTaskPerformance;
}

std::unique_ptr<TaskRunner> make_task_runner(const StepSpec& step, const Checkpoint& init,
                                             const StepEnv& env) {
  require(env.train != nullptr, Errc::Validation, "step environment has no training data");
  if (step.task == "classification") {
    classify::FinetuneEnv fenv;
    fenv.train = env.train;
    fenv.val = env.val;
    fenv.class_mode = env.class_mode;
    fenv.backbone = env.backbone;
    fenv.batch_size = step.batch_size;
    fenv.seed = step.seed;
    return classify::make_classification_runner(init, fenv);
  }
  ssl::SslRunnerEnv senv;
  senv.train = env.train;
  senv.backbone = env.backbone;
  senv.batch_size = step.batch_size;
  senv.seed = step.seed;
  senv.relloc = env.relloc;
  senv.moco = env.moco;
  senv.swav = env.swav;
  senv.augment = env.augment;
  return ssl::make_ssl_runner(step.task, init, senv);
}

LrSearchResult lr_search(const StepSpec& step, const Checkpoint& init, const StepEnv& env) {
  validate_step(step);
  LrSearchResult out;
  out.candidates = step.lr_candidates;
  out.criterion = step.criterion.value_or(default_criterion(step.task));
  out.scores.assign(out.candidates.size(), std::nan(""));

  const std::size_t jobs = std::max<std::size_t>(1, env.jobs);
  if (jobs == 1 || out.candidates.size() == 1) {
    for (std::size_t i = 0; i < out.candidates.size(); ++i)
      out.scores[i] = score_candidate(step, init, env, out.candidates[i], out.criterion);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(out.candidates.size());
    const auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= out.candidates.size()) return;
        try {
          out.scores[i] =
              score_candidate(step, init, env, out.candidates[i], out.criterion);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, out.candidates.size()); ++t)
      pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  out.chosen_lr = out.candidates[select_candidate(out.scores, out.criterion)];
  return out;
}

std::size_t select_candidate(const std::vector<double>& scores, SearchCriterion criterion) {
  std::size_t best = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (best == scores.size()) {
      best = i;
      continue;
    }
    const bool better = criterion == SearchCriterion::MinLoss ? scores[i] < scores[best]
                                                              : scores[i] > scores[best];
    if (better) best = i;
  }
  require(best < scores.size(), Errc::Search,
          "every LR candidate produced a non-finite score");
  return best;
}

std::pair<Checkpoint, StepLog> run_step(const StepSpec& step, const Checkpoint& init,
                                        const StepEnv& env) {
  StepLog log;
  log.search = lr_search(step, init, env);
  log.chosen_lr = log.search.chosen_lr;

  // Full training restarts from the incoming checkpoint; search probes are
  // discarded.
  auto runner = make_task_runner(step, init, env);
  nn::Optimizer opt(optim_config(step, log.chosen_lr));
  for (std::size_t e = 0; e < step.full_epochs; ++e) {
    log.losses.push_back(runner->train_epoch(e, opt));
    log.metrics.push_back(runner->eval_metric());
  }
  Checkpoint out = runner->to_checkpoint();
  out.meta["task"] = step.task;
  out.meta["chosen_lr"] = std::to_string(log.chosen_lr);
  out.meta["seed"] = std::to_string(step.seed);
  return {std::move(out), std::move(log)};
}

namespace {

void write_step_log(const std::filesystem::path& file, const StepLog& log) {
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write " + file.string());
  out << "epoch,loss,metric\n";
  for (std::size_t e = 0; e < log.losses.size(); ++e)
    out << e << "," << log.losses[e] << "," << log.metrics[e] << "\n";
}

nn::HeadSpec head_spec_for(const StepSpec& step, const StepEnv& env) {
  nn::HeadSpec head;
  head.task = step.task;
  head.num_classes = data::active_classes(env.class_mode).size();
  head.proj_dim = step.task == "swav" ? env.swav.proj_dim : env.moco.proj_dim;
  head.prototypes = env.swav.prototypes;
  head.seed = step.seed;
  return head;
}

}  // namespace

CurriculumResult run_curriculum(const CurriculumSpec& spec, const StepEnv& env,
                                const std::filesystem::path& output_dir) {
  require(spec.downstream.task == "classification", Errc::Validation,
          "the last curriculum step must be classification");

  Checkpoint current;
  if (spec.init == CurriculumSpec::Init::Scratch) {
    current = nn::init_backbone(env.backbone, spec.init_seed);
  } else {
    current = load_checkpoint(spec.init_path);
  }

  CurriculumResult result;
  const auto persist = [&](const Checkpoint& ckpt, const StepLog& log, std::size_t index,
                           const std::string& task) {
    if (output_dir.empty()) return;
    const auto dir = output_dir / ("step_" + std::to_string(index) + "_" + task);
    save_checkpoint(ckpt, dir);
    write_step_log(dir / "log.csv", log);
  };

  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    const StepSpec& step = spec.steps[i];
    require(step.task != "classification", Errc::Validation,
            "classification may only appear as the downstream step");
    const Checkpoint step_init = nn::transfer_weights(current, head_spec_for(step, env));
    auto [ckpt, log] = run_step(step, step_init, env);
    ckpt.meta["step_index"] = std::to_string(i);
    persist(ckpt, log, i, step.task);
    result.logs.push_back(std::move(log));
    current = std::move(ckpt);
    result.checkpoints.push_back(current);
  }

  const Checkpoint cls_init =
      nn::transfer_weights(current, head_spec_for(spec.downstream, env));
  auto [final_ckpt, final_log] = run_step(spec.downstream, cls_init, env);
  final_ckpt.meta["step_index"] = std::to_string(spec.steps.size());
  persist(final_ckpt, final_log, spec.steps.size(), "classification");
  result.logs.push_back(std::move(final_log));
  result.checkpoints.push_back(final_ckpt);

  require(env.val != nullptr && !env.val->empty(), Errc::Empty,
          "curriculum needs a validation split");
  result.val_report = classify::evaluate(final_ckpt, *env.val, env.class_mode);
  result.val_balanced_accuracy = result.val_report.balanced_accuracy;
  return result;
}

bool is_curriculum_order(const std::vector<std::string>& sequence,
                         const std::map<std::string, double>& single_task_acc) {
  for (const auto& task : sequence)
    require(single_task_acc.count(task) != 0, Errc::Key,
            "no single-task accuracy for '" + task + "'");
  for (std::size_t i = 1; i < sequence.size(); ++i)
    if (!(single_task_acc.at(sequence[i - 1]) < single_task_acc.at(sequence[i])))
      return false;
  return true;
}

}  // namespace curricubench::curriculum
