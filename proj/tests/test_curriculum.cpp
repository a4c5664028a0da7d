#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "curricubench/curriculum.hpp"
#include "testers.hpp"

using namespace curricubench;

namespace {

const std::map<std::string, double> kReferenceAcc = {
    {"relloc", 83.62}, {"moco", 83.89}, {"swav", 83.97}, {"rotation", 84.72}};

struct Fixture {
  data::PhantomData phantom;
  data::Dataset train, val;
  curriculum::StepEnv env;
  nn::BackboneConfig backbone;

  Fixture() {
    data::PhantomConfig cfg;
    cfg.n_samples = 40;
    cfg.side = 40;
    cfg.seed = 77;
    cfg.noise_sigma = 5.0;
    cfg.mode = data::PhantomMode::SignalOutLung;
    phantom = data::gen_phantom(cfg);
    std::tie(train, val) = data::make_split(phantom.dataset, 0.8, 1);

    backbone.stage_widths = {8, 16};
    env.train = &train;
    env.val = &val;
    env.backbone = backbone;
    env.moco.queue_capacity = 8;
    env.moco.proj_dim = 8;
    env.swav.proj_dim = 8;
    env.swav.prototypes = 6;
  }

  Checkpoint scratch_with_head(const std::string& task, std::uint64_t seed) const {
    nn::HeadSpec head;
    head.task = task;
    head.num_classes = 2;
    head.proj_dim = 8;
    head.prototypes = 6;
    head.seed = seed;
    return nn::transfer_weights(nn::init_backbone(backbone, 3), head);
  }
};

}  // namespace

TEST_CASE("sgd_update arithmetic") {
  Tensor p({1}), g({1}), v({1});
  p[0] = 1.0f;
  g[0] = 1.0f;
  nn::sgd_update(p, g, v, 0.1, 0.9, 0.0);
  CHECK(p[0] == doctest::Approx(0.9f));
  CHECK(v[0] == doctest::Approx(1.0f));

  // Second step with zero gradient: v' = 0.9, p' = 0.9 - 0.09 = 0.81.
  g[0] = 0.0f;
  nn::sgd_update(p, g, v, 0.1, 0.9, 0.0);
  CHECK(v[0] == doctest::Approx(0.9f));
  CHECK(p[0] == doctest::Approx(0.81f));

  SUBCASE("lr = 0 is a fixed point") {
    Tensor p2({3}), g2({3}), v2({3});
    p2.fill(2.5f);
    g2.fill(1.0f);
    nn::sgd_update(p2, g2, v2, 0.0, 0.9, 1e-4);
    for (const float x : p2.data) CHECK(x == 2.5f);
  }
  SUBCASE("momentum decays geometrically with g = 0, wd = 0") {
    Tensor p3({1}), g3({1}), v3({1});
    v3[0] = 1.0f;
    for (int k = 1; k <= 5; ++k) {
      nn::sgd_update(p3, g3, v3, 0.0, 0.5, 0.0);
      CHECK(v3[0] == doctest::Approx(std::pow(0.5, k)).epsilon(1e-6));
    }
  }
}

TEST_CASE("lars_update: guard case, norm ratio, gradient-scale homogeneity") {
  SUBCASE("|p| = 0 reduces to plain SGD") {
    Tensor p({2}), g({2}), v({2});
    g[0] = 1.0f;
    Tensor ps({2}), vs({2});
    Tensor gs = g;
    nn::lars_update(p, g, v, 0.1, 0.001, 0.9, 0.0);
    nn::sgd_update(ps, gs, vs, 0.1, 0.9, 0.0);
    CHECK(p.data == ps.data);
  }
  SUBCASE("|p|=2, |g|=1, wd=0, trust=0.001 -> local_lr = 0.002") {
    Tensor p({2}), g({2}), v({2});
    p[0] = 2.0f;
    g[0] = 1.0f;
    nn::lars_update(p, g, v, 1.0, 0.001, 0.9, 0.0);
    CHECK(p[0] == doctest::Approx(2.0 - 0.002).epsilon(1e-6));
  }
  SUBCASE("scaling g by 10 leaves the update magnitude unchanged") {
    Tensor p1({3}), g1({3}), v1({3});
    Tensor p2({3}), g2({3}), v2({3});
    p1[0] = 1.0f;
    p1[1] = -2.0f;
    p1[2] = 0.5f;
    p2 = p1;
    g1[0] = 0.3f;
    g1[1] = 0.4f;
    g1[2] = -0.1f;
    for (std::size_t i = 0; i < 3; ++i) g2[i] = 10.0f * g1[i];
    nn::lars_update(p1, g1, v1, 0.1, 0.01, 0.9, 0.0);
    nn::lars_update(p2, g2, v2, 0.1, 0.01, 0.9, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-6));
  }
}

TEST_CASE("select_candidate implements argmax with smallest-LR tie-break") {
  using curriculum::SearchCriterion;
  // candidates [0.01, 0.05, 0.25], accuracy scores -> 0.05 wins
  CHECK(curriculum::select_candidate({0.60, 0.70, 0.65},
                                     SearchCriterion::MaxTaskPerformance) == 1);
  // tie -> smallest LR
  CHECK(curriculum::select_candidate({0.70, 0.70, 0.65},
                                     SearchCriterion::MaxTaskPerformance) == 0);
  // diverged candidate excluded
  const double nan = std::nan("");
  CHECK(curriculum::select_candidate({nan, 0.70, 0.65},
                                     SearchCriterion::MaxTaskPerformance) == 1);
  CHECK(curriculum::select_candidate({nan, 0.70, 0.65}, SearchCriterion::MinLoss) == 2);
  try {
    curriculum::select_candidate({nan, nan}, SearchCriterion::MinLoss);
    FAIL("expected SearchError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Search);
  }
}

TEST_CASE("is_curriculum_order against the reference single-task accuracies") {
  CHECK(curriculum::is_curriculum_order({"moco", "swav", "rotation"}, kReferenceAcc));
  CHECK(!curriculum::is_curriculum_order({"moco", "relloc"}, kReferenceAcc));
  CHECK(curriculum::is_curriculum_order({"rotation"}, kReferenceAcc));  // vacuous
  CHECK(curriculum::is_curriculum_order({}, kReferenceAcc));
  try {
    curriculum::is_curriculum_order({"dino"}, kReferenceAcc);
    FAIL("expected KeyError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Key);
  }
}

TEST_CASE("lr_search validates the candidate list") {
  const Fixture fx;
  curriculum::StepSpec step;
  step.task = "classification";
  step.lr_candidates = {0.1, 0.05};  // unsorted
  const Checkpoint init = fx.scratch_with_head("classification", 1);
  CHECK_THROWS_AS(curriculum::lr_search(step, init, fx.env), Error);
  step.lr_candidates = {0.3};  // outside the allowed [0.01, 0.25] range
  CHECK_THROWS_AS(curriculum::lr_search(step, init, fx.env), Error);
  step.lr_candidates = {0.05};
  step.search_epochs = 0;
  CHECK_THROWS_AS(curriculum::lr_search(step, init, fx.env), Error);
}

TEST_CASE("lr_search runs candidates and picks a member of the list") {
  const Fixture fx;
  curriculum::StepSpec step;
  step.task = "classification";
  step.batch_size = 16;
  step.lr_candidates = {0.01, 0.1};
  step.search_epochs = 1;
  step.seed = 5;
  const Checkpoint init = fx.scratch_with_head("classification", 1);
  const auto result = curriculum::lr_search(step, init, fx.env);
  REQUIRE(result.scores.size() == 2);
  CHECK((result.chosen_lr == 0.01 || result.chosen_lr == 0.1));
  CHECK(result.criterion == curriculum::SearchCriterion::MaxTaskPerformance);
  for (const double s : result.scores) CHECK(std::isfinite(s));

  const auto again = curriculum::lr_search(step, init, fx.env);
  CHECK(again.chosen_lr == result.chosen_lr);
  CHECK(again.scores == result.scores);

  SUBCASE("parallel candidate evaluation matches the serial result") {
    curriculum::StepEnv par = fx.env;
    par.jobs = 2;
    const auto parallel = curriculum::lr_search(step, init, par);
    CHECK(parallel.scores == result.scores);
    CHECK(parallel.chosen_lr == result.chosen_lr);
  }
}

TEST_CASE("run_step: log length, meta, determinism") {
  const Fixture fx;
  curriculum::StepSpec step;
  step.task = "rotation";
  step.batch_size = 8;
  step.lr_candidates = {0.05};
  step.search_epochs = 1;
  step.full_epochs = 2;
  step.seed = 9;
  const Checkpoint init = fx.scratch_with_head("rotation", 9);
  const auto [ckpt, log] = curriculum::run_step(step, init, fx.env);
  CHECK(log.losses.size() == 2);
  CHECK(log.metrics.size() == 2);
  CHECK(ckpt.meta.at("task") == "rotation");
  CHECK(std::stod(ckpt.meta.at("chosen_lr")) == 0.05);
  for (const double l : log.losses) CHECK(std::isfinite(l));

  const auto [ckpt2, log2] = curriculum::run_step(step, init, fx.env);
  for (const auto& [name, tensor] : ckpt.tensors)
    CHECK(std::memcmp(ckpt2.get(name).ptr(), tensor.ptr(),
                      tensor.numel() * sizeof(float)) == 0);
  CHECK(log2.losses == log.losses);
}

TEST_CASE("moco and swav steps train with finite losses and keep their contracts") {
  const Fixture fx;
  SUBCASE("moco") {
    curriculum::StepSpec step;
    step.task = "moco";
    step.batch_size = 4;
    step.lr_candidates = {0.05};
    step.search_epochs = 1;
    step.full_epochs = 2;
    step.seed = 11;
    const Checkpoint init = fx.scratch_with_head("moco", 11);
    const auto [ckpt, log] = curriculum::run_step(step, init, fx.env);
    for (const double l : log.losses) {
      CHECK(std::isfinite(l));
      CHECK(l >= 0.0);
    }
    REQUIRE(ckpt.has("head.moco.queue"));
    const Tensor& queue = ckpt.get("head.moco.queue");
    CHECK(queue.dim(0) == fx.env.moco.queue_capacity);
    for (std::size_t r = 0; r < queue.dim(0); ++r) {
      double norm = 0;
      for (std::size_t j = 0; j < queue.dim(1); ++j)
        norm += static_cast<double>(queue.at2(r, j)) * queue.at2(r, j);
      CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-5);
    }
    CHECK(ckpt.has("moco_key.backbone.stem.conv.weight"));
  }
  SUBCASE("swav") {
    curriculum::StepSpec step;
    step.task = "swav";
    step.batch_size = 4;
    step.lr_candidates = {0.05};
    step.search_epochs = 1;
    step.full_epochs = 2;
    step.optimizer = nn::OptimConfig::Kind::Lars;
    step.seed = 13;
    step.criterion = curriculum::SearchCriterion::MinLoss;
    const Checkpoint init = fx.scratch_with_head("swav", 13);
    const auto [ckpt, log] = curriculum::run_step(step, init, fx.env);
    for (const double l : log.losses) {
      CHECK(std::isfinite(l));
      CHECK(l >= 0.0);
    }
    const Tensor& protos = ckpt.get("head.swav.prototypes");
    for (std::size_t r = 0; r < protos.dim(0); ++r) {
      double norm = 0;
      for (std::size_t j = 0; j < protos.dim(1); ++j)
        norm += static_cast<double>(protos.at2(r, j)) * protos.at2(r, j);
      CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("run_curriculum: structure, transfer chain, reproducibility") {
  const Fixture fx;
  curriculum::CurriculumSpec spec;
  curriculum::StepSpec rotation;
  rotation.task = "rotation";
  rotation.batch_size = 8;
  rotation.lr_candidates = {0.05};
  rotation.search_epochs = 1;
  rotation.full_epochs = 1;
  rotation.seed = 21;
  spec.steps.push_back(rotation);
  spec.downstream.task = "classification";
  spec.downstream.batch_size = 16;
  spec.downstream.lr_candidates = {0.05};
  spec.downstream.search_epochs = 1;
  spec.downstream.full_epochs = 0;  // keep the transferred backbone untouched
  spec.downstream.seed = 22;
  spec.init_seed = 23;

  const auto result = curriculum::run_curriculum(spec, fx.env);
  REQUIRE(result.checkpoints.size() == 2);
  CHECK(result.logs.size() == 2);
  CHECK(result.checkpoints[0].meta.at("task") == "rotation");
  CHECK(result.checkpoints[1].meta.at("task") == "classification");
  CHECK(result.val_balanced_accuracy >= 0.0);
  CHECK(result.val_balanced_accuracy <= 1.0);

  // With zero downstream epochs the final backbone equals the handoff.
  for (const auto& [name, tensor] : result.checkpoints[0].tensors) {
    if (name.rfind("backbone.", 0) != 0) continue;
    CHECK(std::memcmp(result.checkpoints[1].get(name).ptr(), tensor.ptr(),
                      tensor.numel() * sizeof(float)) == 0);
  }

  const auto replay = curriculum::run_curriculum(spec, fx.env);
  for (const auto& [name, tensor] : result.checkpoints[1].tensors)
    CHECK(std::memcmp(replay.checkpoints[1].get(name).ptr(), tensor.ptr(),
                      tensor.numel() * sizeof(float)) == 0);
  CHECK(replay.val_balanced_accuracy == result.val_balanced_accuracy);

  SUBCASE("empty pretraining list trains the downstream step from init") {
    curriculum::CurriculumSpec scratch = spec;
    scratch.steps.clear();
    scratch.downstream.full_epochs = 1;
    const auto base = curriculum::run_curriculum(scratch, fx.env);
    CHECK(base.checkpoints.size() == 1);
    CHECK(base.checkpoints[0].meta.at("task") == "classification");
  }
  SUBCASE("persisted prefix lands on disk") {
    const auto dir = testing::temp_dir("curriculum");
    curriculum::run_curriculum(spec, fx.env, dir);
    CHECK(std::filesystem::exists(dir / "step_0_rotation" / "manifest.tsv"));
    CHECK(std::filesystem::exists(dir / "step_0_rotation" / "log.csv"));
    CHECK(std::filesystem::exists(dir / "step_1_classification" / "manifest.tsv"));
  }
}
