#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "curricubench/data.hpp"
#include "testers.hpp"

using namespace curricubench;
namespace fs = std::filesystem;

namespace {

ImageU8 random_image(std::size_t h, std::size_t w, Rng& rng) {
  ImageU8 img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

data::Dataset toy_dataset(std::size_t n_per_class, std::size_t side = 16) {
  data::Dataset ds;
  Rng rng(11);
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    data::ImageSample s;
    s.id = "s" + std::to_string(i);
    s.pixels = random_image(side, side, rng);
    s.label = i % 2 == 0 ? data::ClassLabel::Negative : data::ClassLabel::Typical;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("pgm round-trip is bit-exact") {
  const fs::path dir = testing::temp_dir("pgm");
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.uniform_int(40);
    const std::size_t w = 1 + rng.uniform_int(40);
    const ImageU8 img = random_image(h, w, rng);
    const fs::path file = dir / ("t" + std::to_string(trial) + ".pgm");
    save_pgm(img, file);
    CHECK(load_pgm(file) == img);
  }
  // save(load(file)) reproduces the canonical byte stream.
  const ImageU8 img = random_image(9, 13, rng);
  save_pgm(img, dir / "a.pgm");
  save_pgm(load_pgm(dir / "a.pgm"), dir / "b.pgm");
  std::ifstream a(dir / "a.pgm", std::ios::binary), b(dir / "b.pgm", std::ios::binary);
  const std::string ab((std::istreambuf_iterator<char>(a)), {});
  const std::string bb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ab == bb);
}

TEST_CASE("mask pgm enforces {0,255}") {
  const fs::path dir = testing::temp_dir("maskpgm");
  BitGrid mask(5, 7);
  mask.at(2, 3) = 1;
  mask.at(0, 0) = 1;
  save_mask_pgm(mask, dir / "m.pgm");
  CHECK(load_mask_pgm(dir / "m.pgm") == mask);

  ImageU8 bad(4, 4, 0);
  bad.at(1, 1) = 7;
  save_pgm(bad, dir / "bad.pgm");
  CHECK_THROWS_AS(load_mask_pgm(dir / "bad.pgm"), Error);
}

TEST_CASE("load_dataset filters, resizes, and parses case-insensitively") {
  const fs::path dir = testing::temp_dir("load");
  Rng rng(5);
  save_pgm(random_image(128, 96, rng), dir / "img1.pgm");
  save_pgm(random_image(32, 32, rng), dir / "img2.pgm");
  save_pgm(random_image(32, 32, rng), dir / "img7.pgm");
  {
    std::ofstream csv(dir / "labels.csv");
    csv << "filename,label\n";
    csv << "img1.pgm,negative\n";
    csv << "img2.pgm,atypical\n";
    csv << "img7.pgm,TYPICAL\n";
  }
  data::DatasetSpec spec;
  spec.source = dir;
  spec.side = 64;
  spec.class_mode = data::ClassMode::TwoClass;
  const data::Dataset ds = data::load_dataset(spec);
  REQUIRE(ds.size() == 2);  // atypical dropped in two-class mode
  CHECK(ds.samples[0].pixels.height == 64);
  CHECK(ds.samples[0].pixels.width == 64);
  CHECK(*ds.samples[1].label == data::ClassLabel::Typical);

  SUBCASE("missing labels.csv is a format error") {
    data::DatasetSpec missing = spec;
    missing.source = testing::temp_dir("empty");
    CHECK_THROWS_AS(data::load_dataset(missing), Error);
  }
  SUBCASE("unknown label string") {
    std::ofstream csv(dir / "labels.csv", std::ios::trunc);
    csv << "filename,label\nimg1.pgm,negativeish\n";
    csv.close();
    try {
      data::load_dataset(spec);
      FAIL("expected LabelError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Label);
    }
  }
  SUBCASE("unreadable image names the file") {
    std::ofstream csv(dir / "labels.csv", std::ios::trunc);
    csv << "filename,label\nghost.pgm,negative\n";
    csv.close();
    try {
      data::load_dataset(spec);
      FAIL("expected IoError");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Io);
      CHECK(std::string(e.what()).find("ghost.pgm") != std::string::npos);
    }
  }
}

TEST_CASE("make_split is stratified, deterministic, and a partition") {
  const data::Dataset ds = toy_dataset(50);
  const auto [train, val] = data::make_split(ds, 0.8, 42);
  CHECK(train.size() == 80);
  CHECK(val.size() == 20);

  std::size_t train_neg = 0, val_neg = 0;
  for (const auto& s : train.samples) train_neg += *s.label == data::ClassLabel::Negative;
  for (const auto& s : val.samples) val_neg += *s.label == data::ClassLabel::Negative;
  CHECK(train_neg == 40);
  CHECK(val_neg == 10);

  // Partition: disjoint ids, union covers the dataset.
  std::set<std::string> ids;
  for (const auto& s : train.samples) ids.insert(s.id);
  for (const auto& s : val.samples) CHECK(ids.insert(s.id).second);
  CHECK(ids.size() == ds.size());

  const auto [train2, val2] = data::make_split(ds, 0.8, 42);
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK(train.samples[i].id == train2.samples[i].id);
  for (std::size_t i = 0; i < val.size(); ++i)
    CHECK(val.samples[i].id == val2.samples[i].id);

  const auto [train3, _] = data::make_split(ds, 0.8, 43);
  bool any_diff = train3.size() != train.size();
  for (std::size_t i = 0; !any_diff && i < train.size(); ++i)
    any_diff = train.samples[i].id != train3.samples[i].id;
  CHECK(any_diff);
}

TEST_CASE("make_split stratification stays within +-1 per class") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    data::Dataset ds;
    const std::size_t n_neg = 3 + rng.uniform_int(40);
    const std::size_t n_typ = 3 + rng.uniform_int(40);
    for (std::size_t i = 0; i < n_neg + n_typ; ++i) {
      data::ImageSample s;
      s.id = "x" + std::to_string(i);
      s.pixels = ImageU8(16, 16, 0);
      s.label = i < n_neg ? data::ClassLabel::Negative : data::ClassLabel::Typical;
      ds.samples.push_back(std::move(s));
    }
    const double f = 0.7;
    const auto [train, val] = data::make_split(ds, f, trial);
    std::size_t got_neg = 0;
    for (const auto& s : train.samples) got_neg += *s.label == data::ClassLabel::Negative;
    CHECK(std::abs(static_cast<double>(got_neg) - f * static_cast<double>(n_neg)) <= 1.0);
    CHECK(train.size() + val.size() == ds.size());
  }
}

TEST_CASE("make_split precondition: every class needs >= 2 samples") {
  data::Dataset ten_of_one;
  for (std::size_t i = 0; i < 10; ++i) {
    data::ImageSample s;
    s.id = "a" + std::to_string(i);
    s.pixels = ImageU8(16, 16, 0);
    s.label = data::ClassLabel::Negative;
    ten_of_one.samples.push_back(std::move(s));
  }
  CHECK_NOTHROW(data::make_split(ten_of_one, 0.8, 1));

  data::Dataset lone = ten_of_one;
  data::ImageSample s;
  s.id = "lone";
  s.pixels = ImageU8(16, 16, 0);
  s.label = data::ClassLabel::Typical;
  lone.samples.push_back(std::move(s));
  try {
    data::make_split(lone, 0.8, 1);
    FAIL("expected StratifyError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Stratify);
  }
}

TEST_CASE("class weights follow inverse ratios in four-class mode") {
  std::vector<data::ClassLabel> labels;
  const auto add = [&](data::ClassLabel c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) labels.push_back(c);
  };
  add(data::ClassLabel::Negative, 28);
  add(data::ClassLabel::Typical, 47);
  add(data::ClassLabel::Indeterminate, 17);
  add(data::ClassLabel::Atypical, 8);
  const auto w = data::compute_class_weights(labels, data::ClassMode::FourClass);
  CHECK(w.at(data::ClassLabel::Negative) == doctest::Approx(0.593).epsilon(1e-3));
  CHECK(w.at(data::ClassLabel::Typical) == doctest::Approx(0.353).epsilon(2e-3));
  CHECK(w.at(data::ClassLabel::Indeterminate) == doctest::Approx(0.977).epsilon(1e-3));
  CHECK(w.at(data::ClassLabel::Atypical) == doctest::Approx(2.076).epsilon(1e-3));

  double sum = 0;
  for (const auto& [c, v] : w.weights) sum += v;
  CHECK(sum == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("class weights: two-class ratios and uniform case") {
  std::vector<data::ClassLabel> labels(28, data::ClassLabel::Negative);
  labels.insert(labels.end(), 47, data::ClassLabel::Typical);
  const auto w = data::compute_class_weights(labels, data::ClassMode::TwoClass);
  CHECK(w.at(data::ClassLabel::Negative) == doctest::Approx(1.2533).epsilon(1e-4));
  CHECK(w.at(data::ClassLabel::Typical) == doctest::Approx(0.7467).epsilon(1e-4));

  std::vector<data::ClassLabel> uniform(10, data::ClassLabel::Negative);
  uniform.insert(uniform.end(), 10, data::ClassLabel::Typical);
  const auto wu = data::compute_class_weights(uniform, data::ClassMode::TwoClass);
  CHECK(wu.at(data::ClassLabel::Negative) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(wu.at(data::ClassLabel::Typical) == doctest::Approx(1.0).epsilon(1e-12));

  // Absent active class.
  std::vector<data::ClassLabel> only_neg(5, data::ClassLabel::Negative);
  try {
    data::compute_class_weights(only_neg, data::ClassMode::TwoClass);
    FAIL("expected WeightError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Weight);
  }
}

TEST_CASE("phantom generation is deterministic and mask-consistent") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 7;
  cfg.mode = data::PhantomMode::SignalInLung;
  const auto a = data::gen_phantom(cfg);
  const auto b = data::gen_phantom(cfg);
  REQUIRE(a.dataset.size() == 40);
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    CHECK(a.dataset.samples[i].pixels == b.dataset.samples[i].pixels);
    CHECK(a.masks.at(a.dataset.samples[i].id) == b.masks.at(b.dataset.samples[i].id));
  }
  // Alternating balanced labels.
  CHECK(*a.dataset.samples[0].label == data::ClassLabel::Negative);
  CHECK(*a.dataset.samples[1].label == data::ClassLabel::Typical);
}

TEST_CASE("phantom SignalInLung: label signal lives strictly inside the mask") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 123;
  cfg.mode = data::PhantomMode::SignalInLung;
  for (std::size_t i = 0; i < 6; ++i) {
    BitGrid mask;
    const auto neg = data::render_phantom_sample(cfg, i, data::ClassLabel::Negative, &mask);
    const auto typ = data::render_phantom_sample(cfg, i, data::ClassLabel::Typical);
    std::size_t diffs_outside = 0, diffs_inside = 0;
    for (std::size_t p = 0; p < mask.bits.size(); ++p) {
      if (neg.pixels.pixels[p] == typ.pixels.pixels[p]) continue;
      (mask.bits[p] ? diffs_inside : diffs_outside) += 1;
    }
    CHECK(diffs_outside == 0);
    CHECK(diffs_inside > 0);  // blobs actually planted
  }
}

TEST_CASE("phantom SignalOutLung: in-lung content is label-independent") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 9;
  cfg.mode = data::PhantomMode::SignalOutLung;
  for (std::size_t i = 0; i < 6; ++i) {
    BitGrid mask;
    const auto neg = data::render_phantom_sample(cfg, i, data::ClassLabel::Negative, &mask);
    const auto typ = data::render_phantom_sample(cfg, i, data::ClassLabel::Typical);
    for (std::size_t r = 0; r < cfg.side; ++r)
      for (std::size_t c = 0; c < cfg.side; ++c) {
        const bool in_tag = r >= 2 && r < 8 && c >= 2 && c < 8;
        if (in_tag) {
          CHECK(mask.at(r, c) == 0);  // tag wholly outside the mask
        } else {
          CHECK(neg.pixels.at(r, c) == typ.pixels.at(r, c));
        }
      }
    // The tag itself must discriminate.
    CHECK(typ.pixels.at(4, 4) > neg.pixels.at(4, 4));
  }
}

TEST_CASE("phantom config validation") {
  data::PhantomConfig cfg;
  cfg.n_samples = 39;
  CHECK_THROWS_AS(data::gen_phantom(cfg), Error);
  cfg.n_samples = 40;
  cfg.side = 32;
  CHECK_THROWS_AS(data::gen_phantom(cfg), Error);
}

TEST_CASE("save_dataset round-trips through load_dataset") {
  data::PhantomConfig cfg;
  cfg.n_samples = 40;
  cfg.side = 48;
  cfg.seed = 21;
  const auto phantom = data::gen_phantom(cfg);
  const fs::path dir = testing::temp_dir("roundtrip");
  data::save_dataset(phantom.dataset, dir, &phantom.masks);

  data::DatasetSpec spec;
  spec.source = dir;
  spec.side = 48;
  const data::Dataset loaded = data::load_dataset(spec);
  REQUIRE(loaded.size() == phantom.dataset.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.samples[i].pixels == phantom.dataset.samples[i].pixels);
    CHECK(*loaded.samples[i].label == *phantom.dataset.samples[i].label);
  }
  const BitGrid mask =
      load_mask_pgm(dir / "masks" / (phantom.dataset.samples[0].id + ".pgm"));
  CHECK(mask == phantom.masks.at(phantom.dataset.samples[0].id));
}

TEST_CASE("rotate90 index map") {
  ImageU8 img(4, 4, 0);
  img.at(0, 0) = 200;
  const ImageU8 once = rotate90(img, 1);
  CHECK(once.at(3, 0) == 200);  // (0,0) -> (S-1, 0) under one CCW turn

  Rng rng(2);
  const ImageU8 probe = random_image(8, 8, rng);
  CHECK(rotate90(probe, 0) == probe);
  CHECK(rotate90(rotate90(probe, 2), 2) == probe);
  CHECK(rotate90(rotate90(rotate90(rotate90(probe, 1), 1), 1), 1) == probe);
}
