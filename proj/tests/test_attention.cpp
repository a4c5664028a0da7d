#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "curricubench/attention.hpp"
#include "curricubench/backbone.hpp"
#include "curricubench/augment.hpp"
#include "testers.hpp"

using namespace curricubench;
namespace fs = std::filesystem;

#ifndef CURRICUBENCH_GOLDEN_DIR
#define CURRICUBENCH_GOLDEN_DIR "tests/golden"
#endif

namespace {

const fs::path kGolden = CURRICUBENCH_GOLDEN_DIR;

Checkpoint toy_model(std::size_t classes = 2, std::uint64_t seed = 3) {
  nn::BackboneConfig cfg;
  cfg.stage_widths = {4};
  nn::HeadSpec head;
  head.task = "classification";
  head.num_classes = classes;
  head.seed = seed;
  return nn::transfer_weights(nn::init_backbone(cfg, seed), head);
}

ImageU8 random_image(std::size_t side, Rng& rng) {
  ImageU8 img(side, side);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

Tensor make_map(std::vector<std::size_t> shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values));
}

BitGrid make_mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits) {
  BitGrid m(h, w);
  m.bits = std::move(bits);
  return m;
}

}  // namespace

TEST_CASE("ail worked examples") {
  const Tensor uniform = make_map({2, 2}, {1.0f, 1.0f, 1.0f, 1.0f});
  CHECK(attention::ail(uniform, make_mask(2, 2, {1, 0, 0, 0})) == doctest::Approx(0.25));
  CHECK(attention::ail(uniform, make_mask(2, 2, {1, 1, 1, 1})) == doctest::Approx(1.0));

  const Tensor a = make_map({2, 2}, {0.5f, 0.5f, 1.0f, 0.0f});
  CHECK(attention::ail(a, make_mask(2, 2, {1, 1, 0, 0})) == doctest::Approx(0.5));

  const Tensor zero = make_map({2, 2}, {0, 0, 0, 0});
  try {
    attention::ail(zero, make_mask(2, 2, {1, 0, 0, 0}));
    FAIL("expected ZeroAttentionError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ZeroAttention);
  }

  const Tensor mismatched = make_map({2, 3}, std::vector<float>(6, 1.0f));
  CHECK_THROWS_AS(attention::ail(mismatched, make_mask(2, 2, {1, 0, 0, 0})), Error);
}

TEST_CASE("ail algebra: scale invariance, bounds, monotonicity, additivity") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 2 + rng.uniform_int(10), w = 2 + rng.uniform_int(10);
    Tensor a({h, w});
    for (auto& v : a.data) v = static_cast<float>(rng.uniform());
    BitGrid m1(h, w), m2(h, w), super(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
      m1.bits[i] = rng.bernoulli(0.4);
      m2.bits[i] = m1.bits[i] ? 0 : rng.bernoulli(0.3);  // disjoint from m1
      super.bits[i] = m1.bits[i] | rng.bernoulli(0.2);   // superset of m1
    }
    const double base = attention::ail(a, m1);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    // Power-of-two scaling is exact in floating point.
    Tensor doubled = a;
    for (auto& v : doubled.data) v *= 4.0f;
    CHECK(attention::ail(doubled, m1) == base);

    CHECK(attention::ail(a, super) >= base);

    BitGrid both(h, w);
    for (std::size_t i = 0; i < h * w; ++i) both.bits[i] = m1.bits[i] | m2.bits[i];
    const double sum = attention::ail(a, m1) + attention::ail(a, m2);
    CHECK(std::abs(attention::ail(a, both) - sum) <= 1e-12);
  }
}

TEST_CASE("compute_cam: identity weighting, clamping, upsample geometry") {
  Checkpoint model = toy_model();
  Rng rng(7);
  const ImageU8 image = random_image(16, rng);

  // Single-class head selecting feature map 0: CAM == upsample(f_0).
  Checkpoint one_class = model;
  one_class.tensors["head.cls.weight"] = make_map({1, 4}, {1, 0, 0, 0});
  one_class.tensors["head.cls.bias"] = Tensor({1});
  Tensor batch({1, 1, 16, 16});
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    batch[i] = image.pixels[i] / 255.0f;
  const auto features = nn::forward_features(one_class, batch);
  const std::size_t fh = features[0].maps.dim(2), fw = features[0].maps.dim(3);
  Tensor f0({fh, fw});
  std::copy_n(features[0].maps.ptr(), fh * fw, f0.ptr());

  const Tensor raw = attention::compute_cam_raw(one_class, image);
  REQUIRE(raw.shape == f0.shape);
  for (std::size_t i = 0; i < raw.numel(); ++i)
    CHECK(raw[i] == doctest::Approx(std::max(f0[i], 0.0f)).epsilon(1e-6));

  const Tensor cam = attention::compute_cam(one_class, image);
  CHECK(cam.dim(0) == 16);
  CHECK(cam.dim(1) == 16);
  const Tensor upsampled = imgf::resize_bilinear(raw, 16, 16);
  for (std::size_t i = 0; i < cam.numel(); ++i) CHECK(cam[i] == upsampled[i]);

  // All-negative head weights for the predicted class: clamped to zero.
  Checkpoint negative = model;
  negative.tensors["head.cls.weight"] = make_map({1, 4}, {-1, -2, -0.5, -3});
  negative.tensors["head.cls.bias"] = Tensor({1});
  const Tensor clamped = attention::compute_cam(negative, image);
  for (const float v : clamped.data) CHECK(v == 0.0f);
  attention::CamOptions keep;
  keep.clamp_negative = false;
  const Tensor unclamped = attention::compute_cam(negative, image, keep);
  bool any_negative = false;
  for (const float v : unclamped.data) any_negative |= v < 0.0f;
  CHECK(any_negative);
}

TEST_CASE("compute_cam upsamples 8x8 features to the 64x64 image") {
  nn::BackboneConfig cfg;  // three stride-2 stages
  nn::HeadSpec head;
  head.task = "classification";
  head.num_classes = 2;
  head.seed = 5;
  const Checkpoint model = nn::transfer_weights(nn::init_backbone(cfg, 5), head);
  Rng rng(9);
  const ImageU8 image = random_image(64, rng);
  CHECK(attention::compute_cam_raw(model, image).shape ==
        std::vector<std::size_t>{8, 8});
  const Tensor cam = attention::compute_cam(model, image);
  CHECK(cam.shape == std::vector<std::size_t>{64, 64});
}

TEST_CASE("postprocess_mask matches the stored goldens bit-exactly") {
  struct Case {
    const char* input;
    const char* expected;
    attention::PostprocessOptions opts;
  };
  const Case cases[] = {
      {"mask_components_in.pgm", "mask_components_expected.pgm", {0.02, 0}},
      {"mask_hole_in.pgm", "mask_hole_expected.pgm", {0.01, 1}},
      {"mask_keep2_in.pgm", "mask_keep2_expected.pgm", {0.01, 0}},
      {"mask_idem_in.pgm", "mask_idem_expected.pgm", {0.02, 2}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.input);
    const BitGrid input = load_mask_pgm(kGolden / c.input);
    const BitGrid expected = load_mask_pgm(kGolden / c.expected);
    const BitGrid got = attention::postprocess_mask(input, c.opts);
    CHECK(got == expected);
    // Idempotence: a second application is the identity.
    CHECK(attention::postprocess_mask(got, c.opts) == got);
  }
}

TEST_CASE("postprocess_mask error path and phantom idempotence") {
  BitGrid speck(16, 16);
  speck.at(3, 3) = 1;
  attention::PostprocessOptions opts;
  opts.min_area_fraction = 0.05;
  try {
    attention::postprocess_mask(speck, opts);
    FAIL("expected EmptyMaskError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyMask);
  }

  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 2;
  const auto phantom = data::gen_phantom(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const BitGrid& mask = phantom.masks.at(phantom.dataset.samples[i].id);
    const BitGrid once = attention::postprocess_mask(mask);
    CHECK(attention::postprocess_mask(once) == once);
    // Ground-truth phantom masks are two clean ellipses: the filter keeps
    // them whole.
    CHECK(once.area() >= mask.area());
  }
}

TEST_CASE("inverse_segment and apply_mask") {
  Rng rng(11);
  const ImageU8 image = random_image(12, rng);
  BitGrid all(12, 12, 1), none(12, 12, 0);
  const ImageU8 removed = attention::inverse_segment(image, all);
  for (const auto p : removed.pixels) CHECK(p == 0);
  CHECK(attention::inverse_segment(image, none) == image);

  BitGrid half(12, 12, 0);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 6; ++c) half.at(r, c) = 1;
  const ImageU8 inv = attention::inverse_segment(image, half);
  const ImageU8 kept = attention::apply_mask(image, half);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 12; ++c) {
      CHECK(inv.at(r, c) == (half.at(r, c) ? 0 : image.at(r, c)));
      CHECK(kept.at(r, c) == (half.at(r, c) ? image.at(r, c) : 0));
    }

  BitGrid wrong(4, 4, 1);
  CHECK_THROWS_AS(attention::inverse_segment(image, wrong), Error);
}

TEST_CASE("phantom corner tag survives inverse segmentation") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 31;
  cfg.mode = data::PhantomMode::SignalOutLung;
  const auto phantom = data::gen_phantom(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& sample = phantom.dataset.samples[i];
    const ImageU8 inv =
        attention::inverse_segment(sample.pixels, phantom.masks.at(sample.id));
    for (std::size_t r = 2; r < 8; ++r)
      for (std::size_t c = 2; c < 8; ++c) CHECK(inv.at(r, c) == sample.pixels.at(r, c));
  }
}

TEST_CASE("mean_ail aggregates per-image scores and counts skips/exclusions") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 13;
  auto phantom = data::gen_phantom(cfg);
  phantom.dataset.samples.resize(6);

  nn::BackboneConfig bb;
  bb.stage_widths = {4, 8};
  nn::HeadSpec head;
  head.task = "classification";
  head.num_classes = 2;
  head.seed = 21;
  const Checkpoint model = nn::transfer_weights(nn::init_backbone(bb, 21), head);

  auto masks = phantom.masks;
  masks.erase(phantom.dataset.samples[5].id);  // one image without a mask
  const auto result = attention::mean_ail(model, phantom.dataset, masks);
  CHECK(result.skipped == 1);
  CHECK(result.per_image.size() + result.excluded == 5);
  double sum = 0;
  for (const auto& [id, v] : result.per_image) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    sum += v;
  }
  CHECK(result.mean ==
        doctest::Approx(sum / static_cast<double>(result.per_image.size())).epsilon(1e-12));

  // Full masks make every score exactly 1.
  std::map<std::string, BitGrid> full;
  for (const auto& sample : phantom.dataset.samples)
    full.emplace(sample.id, BitGrid(48, 48, 1));
  CHECK(attention::mean_ail(model, phantom.dataset, full).mean == 1.0);

  // A zero head produces zero CAMs everywhere: all images excluded -> Empty.
  Checkpoint zero = model;
  zero.tensors["head.cls.weight"].zero();
  zero.tensors["head.cls.bias"].zero();
  CHECK_THROWS_AS(attention::mean_ail(zero, phantom.dataset, masks), Error);

  const auto csv = testing::temp_dir("ail") / "ail.csv";
  attention::write_ail_csv(csv, result, phantom.dataset, masks);
  CHECK(fs::exists(csv));
}

TEST_CASE("f32g round-trip and csv export") {
  Rng rng(15);
  const Tensor grid = testing::random_tensor<float>({5, 9}, rng, 2.0);
  const fs::path dir = testing::temp_dir("f32g");
  attention::save_f32g(grid, dir / "cam.f32g");
  const Tensor loaded = attention::load_f32g(dir / "cam.f32g");
  CHECK(loaded.shape == grid.shape);
  CHECK(std::memcmp(loaded.ptr(), grid.ptr(), grid.numel() * sizeof(float)) == 0);

  attention::save_grid_csv(grid, dir / "cam.csv");
  CHECK(fs::exists(dir / "cam.csv"));

  std::ofstream bad(dir / "bad.f32g", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(attention::load_f32g(dir / "bad.f32g"), Error);
}
