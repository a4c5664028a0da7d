#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "curricubench/backbone.hpp"
#include "testers.hpp"

using namespace curricubench;
namespace fs = std::filesystem;

namespace {

nn::BackboneConfig toy_config() {
  nn::BackboneConfig cfg;
  cfg.in_channels = 2;
  cfg.stage_widths = {4};
  cfg.blocks_per_stage = 1;
  return cfg;
}

}  // namespace

TEST_CASE("init_backbone is deterministic and seed-sensitive") {
  const nn::BackboneConfig cfg;
  const Checkpoint a = nn::init_backbone(cfg, 5);
  const Checkpoint b = nn::init_backbone(cfg, 5);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (const auto& [name, tensor] : a.tensors) CHECK(b.get(name).data == tensor.data);

  const Checkpoint c = nn::init_backbone(cfg, 6);
  bool any_diff = false;
  for (const auto& [name, tensor] : a.tensors)
    if (c.get(name).data != tensor.data) any_diff = true;
  CHECK(any_diff);

  // Batch-norm init: scale 1, shift 0, running stats (0, 1).
  for (const auto& [name, tensor] : a.tensors) {
    if (name.ends_with(".beta") || name.ends_with(".running_mean"))
      for (const float v : tensor.data) CHECK(v == 0.0f);
    if (name.ends_with(".gamma") || name.ends_with(".running_var"))
      for (const float v : tensor.data) CHECK(v == 1.0f);
  }
}

TEST_CASE("forward_features: stride arithmetic and GAP consistency") {
  const nn::BackboneConfig cfg;  // three stride-2 stages
  const Checkpoint ckpt = nn::init_backbone(cfg, 1);
  Rng rng(3);
  Tensor batch({2, 1, 64, 64});
  for (auto& v : batch.data) v = static_cast<float>(rng.uniform());
  const auto features = nn::forward_features(ckpt, batch);
  REQUIRE(features.size() == 2);
  CHECK(features[0].maps.dim(2) == 8);
  CHECK(features[0].maps.dim(3) == 8);
  CHECK(features[0].embedding.dim(1) == 64);

  for (const auto& f : features) {
    const std::size_t k = f.maps.dim(1), hw = f.maps.dim(2) * f.maps.dim(3);
    for (std::size_t c = 0; c < k; ++c) {
      double mean = 0;
      for (std::size_t i = 0; i < hw; ++i) mean += f.maps[c * hw + i];
      mean /= static_cast<double>(hw);
      CHECK(std::abs(mean - f.embedding[c]) <= 1e-6);
    }
  }
}

TEST_CASE("forward_features: zero conv weights give the zero embedding") {
  const nn::BackboneConfig cfg;
  Checkpoint ckpt = nn::init_backbone(cfg, 1);
  for (auto& [name, tensor] : ckpt.tensors)
    if (name.ends_with("conv.weight") || name.ends_with("conv1.weight") ||
        name.ends_with("conv2.weight"))
      tensor.zero();
  Tensor batch({1, 1, 32, 32});
  const auto features = nn::forward_features(ckpt, batch);
  for (const float v : features[0].embedding.data) CHECK(v == 0.0f);
}

TEST_CASE("forward is stateless per sample in inference mode") {
  const nn::BackboneConfig cfg;
  const Checkpoint ckpt = nn::init_backbone(cfg, 2);
  Rng rng(4);
  Tensor one({1, 1, 32, 32});
  for (auto& v : one.data) v = static_cast<float>(rng.uniform());
  Tensor dup({2, 1, 32, 32});
  std::copy_n(one.ptr(), one.numel(), dup.ptr());
  std::copy_n(one.ptr(), one.numel(), dup.ptr() + one.numel());
  const auto features = nn::forward_features(ckpt, dup);
  CHECK(features[0].embedding.data == features[1].embedding.data);
  CHECK(features[0].maps.data == features[1].maps.data);
}

TEST_CASE("backbone input validation") {
  const nn::BackboneConfig cfg;
  const Checkpoint ckpt = nn::init_backbone(cfg, 2);
  Tensor bad({1, 3, 32, 32});
  CHECK_THROWS_AS(nn::forward_features(ckpt, bad), Error);
  Tensor not_divisible({1, 1, 30, 30});
  CHECK_THROWS_AS(nn::forward_features(ckpt, not_divisible), Error);
}

TEST_CASE("checkpoint round-trip is bit-exact over random shapes") {
  Rng rng(7);
  const fs::path dir = testing::temp_dir("ckpt");
  Checkpoint ckpt;
  for (int t = 0; t < 12; ++t) {
    std::vector<std::size_t> shape;
    const std::size_t rank = 1 + rng.uniform_int(4);
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(1 + rng.uniform_int(6));
    ckpt.tensors["tensor_" + std::to_string(t)] =
        testing::random_tensor<float>(shape, rng, 3.0);
  }
  ckpt.meta["task"] = "unit-test";
  ckpt.meta["note"] = "round trip";
  save_checkpoint(ckpt, dir);
  const Checkpoint loaded = load_checkpoint(dir);
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    CHECK(loaded.get(name).shape == tensor.shape);
    CHECK(std::memcmp(loaded.get(name).ptr(), tensor.ptr(),
                      tensor.numel() * sizeof(float)) == 0);
  }
  CHECK(loaded.meta.at("task") == "unit-test");
}

TEST_CASE("checkpoint corruption is detected") {
  Rng rng(8);
  const fs::path dir = testing::temp_dir("ckpt_bad");
  Checkpoint ckpt;
  ckpt.tensors["w"] = testing::random_tensor<float>({4, 4}, rng);
  save_checkpoint(ckpt, dir);

  SUBCASE("tampered tensor byte fails the checksum") {
    std::fstream f(dir / "w.f32", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    char byte;
    f.seekg(5);
    f.get(byte);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(5);
    f.put(byte);
    f.close();
    try {
      load_checkpoint(dir);
      FAIL("expected CorruptCheckpointError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::CorruptCheckpoint);
    }
  }
  SUBCASE("manifest listing a missing file") {
    fs::remove(dir / "w.f32");
    try {
      load_checkpoint(dir);
      FAIL("expected CorruptCheckpointError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::CorruptCheckpoint);
    }
  }
  SUBCASE("truncated tensor file") {
    fs::resize_file(dir / "w.f32", 8);
    CHECK_THROWS_AS(load_checkpoint(dir), Error);
  }
}

TEST_CASE("transfer_weights copies the backbone and re-seeds heads") {
  const nn::BackboneConfig cfg;
  const Checkpoint src = nn::init_backbone(cfg, 3);

  nn::HeadSpec head;
  head.task = "classification";
  head.num_classes = 2;
  head.seed = 10;
  const Checkpoint dst = nn::transfer_weights(src, head);

  for (const auto& [name, tensor] : src.tensors) {
    if (name.rfind("backbone.", 0) != 0) continue;
    CHECK(std::memcmp(dst.get(name).ptr(), tensor.ptr(),
                      tensor.numel() * sizeof(float)) == 0);
  }
  CHECK(!src.has("head.cls.weight"));
  CHECK(dst.has("head.cls.weight"));
  CHECK(dst.has("head.cls.bias"));
  CHECK(dst.get("head.cls.weight").shape ==
        std::vector<std::size_t>{2, cfg.embedding_dim()});

  const Checkpoint other = nn::transfer_weights(src, {.task = "classification",
                                                      .num_classes = 2,
                                                      .proj_dim = 32,
                                                      .prototypes = 32,
                                                      .seed = 11});
  CHECK(other.get("head.cls.weight").data != dst.get("head.cls.weight").data);
  CHECK(other.get("backbone.stem.conv.weight").data ==
        dst.get("backbone.stem.conv.weight").data);

  SUBCASE("missing backbone tensor") {
    Checkpoint broken = src;
    broken.tensors.erase("backbone.stem.conv.weight");
    try {
      nn::transfer_weights(broken, head);
      FAIL("expected TransferError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Transfer);
    }
  }
  SUBCASE("swav head gets unit-norm prototypes") {
    const Checkpoint swav = nn::transfer_weights(
        src, {.task = "swav", .num_classes = 2, .proj_dim = 8, .prototypes = 6, .seed = 1});
    const Tensor& protos = swav.get("head.swav.prototypes");
    REQUIRE(protos.shape == std::vector<std::size_t>{6, 8});
    for (std::size_t r = 0; r < 6; ++r) {
      double norm = 0;
      for (std::size_t j = 0; j < 8; ++j)
        norm += static_cast<double>(protos.at2(r, j)) * protos.at2(r, j);
      CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("backbone gradient w.r.t. input matches finite differences") {
  // Scalar loss: weighted sum of the embedding. The finite-difference oracle
  // always runs in f64 (same parameter values, cast up exactly); the f32
  // analytic path must agree within 1e-3, the f64 path within 1e-5.
  const auto check_mode = [](nn::Mode mode, bool f32, double tol) {
    const nn::BackboneConfig cfg = toy_config();
    nn::BackboneNet<double> oracle(cfg);
    oracle.init_params(17);
    Rng rng(23);
    TensorF64 x64 = testing::random_tensor<double>({2, 2, 8, 8}, rng, 0.5);
    TensorF64 mix = testing::random_tensor<double>({2, cfg.embedding_dim()}, rng, 1.0);

    TensorF64 analytic;
    if (f32) {
      nn::BackboneNet<float> net(cfg);
      // Same parameter values: copy the f64 tensors down to f32 and back up
      // so both nets evaluate the identical (f32-representable) weights.
      auto p64 = oracle.named_params();
      auto p32 = net.named_params();
      for (std::size_t t = 0; t < p64.size(); ++t) {
        *p32[t].value = p64[t].value->cast<float>();
        *p64[t].value = p32[t].value->cast<double>();
      }
      Tensor x32 = x64.cast<float>();
      x64 = x32.cast<double>();
      net.forward(x32, mode);
      net.zero_grad();
      analytic = net.backward({}, mix.cast<float>()).cast<double>();
    } else {
      oracle.forward(x64, mode);
      oracle.zero_grad();
      analytic = oracle.backward({}, mix);
    }
    const auto loss = [&]() {
      const auto features = oracle.forward(x64, mode);
      double acc = 0;
      for (std::size_t i = 0; i < features.embedding.numel(); ++i)
        acc += mix[i] * features.embedding[i];
      return acc;
    };
    const TensorF64 numeric = testing::finite_difference<double>(loss, x64, 1e-5);
    CHECK(testing::max_rel_error(analytic, numeric, 1e-8) <= tol);
  };
  SUBCASE("f32 eval mode") { check_mode(nn::Mode::Eval, true, 1e-3); }
  SUBCASE("f32 train mode") { check_mode(nn::Mode::Train, true, 1e-3); }
  SUBCASE("f64 eval mode") { check_mode(nn::Mode::Eval, false, 1e-5); }
  SUBCASE("f64 train mode") { check_mode(nn::Mode::Train, false, 1e-5); }
}

TEST_CASE("backbone parameter gradients match finite differences (f64)") {
  const nn::BackboneConfig cfg = toy_config();
  nn::BackboneNet<double> net(cfg);
  net.init_params(29);
  Rng rng(31);
  TensorF64 x = testing::random_tensor<double>({2, 2, 8, 8}, rng, 0.5);
  TensorF64 mix = testing::random_tensor<double>({2, cfg.embedding_dim()}, rng);

  const auto loss = [&]() {
    const auto features = net.forward(x, nn::Mode::Train);
    double acc = 0;
    for (std::size_t i = 0; i < features.embedding.numel(); ++i)
      acc += mix[i] * features.embedding[i];
    return acc;
  };
  loss();
  net.zero_grad();
  net.backward({}, mix);
  for (auto& p : net.named_params()) {
    if (p.is_buffer) continue;
    const TensorF64 numeric = testing::finite_difference<double>(loss, *p.value, 1e-5);
    CHECK_MESSAGE(testing::max_rel_error(*p.grad, numeric, 1e-10) <= 1e-5, p.name);
  }
}

TEST_CASE("ema_update equals the closed form") {
  const nn::BackboneConfig cfg = toy_config();
  nn::BackboneNet<float> a(cfg), b(cfg);
  a.init_params(1);
  b.init_params(2);
  nn::BackboneNet<float> a_before(cfg);
  a_before.init_params(1);

  const double m = 0.9;
  nn::ema_update(a.named_params(), b.named_params(), m);
  const auto pa = a.named_params();
  const auto pb = b.named_params();
  const auto p0 = a_before.named_params();
  for (std::size_t t = 0; t < pa.size(); ++t)
    for (std::size_t i = 0; i < pa[t].value->numel(); ++i) {
      const float expected =
          static_cast<float>(m * (*p0[t].value)[i] + (1.0 - m) * (*pb[t].value)[i]);
      CHECK((*pa[t].value)[i] == expected);
    }
}
