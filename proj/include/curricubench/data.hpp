#ifndef CURRICUBENCH_DATA_HPP_
#define CURRICUBENCH_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curricubench/image.hpp"
#include "curricubench/rng.hpp"

namespace curricubench::data {

enum class ClassLabel : int { Negative = 0, Typical = 1, Indeterminate = 2, Atypical = 3 };
enum class ClassMode { FourClass, TwoClass };

const char* label_name(ClassLabel label);
ClassLabel parse_label(const std::string& text);  // case-insensitive
std::vector<ClassLabel> active_classes(ClassMode mode);

struct ImageSample {
  std::string id;
  ImageU8 pixels;
  std::optional<ClassLabel> label;
};

struct Dataset {
  std::vector<ImageSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<ClassLabel> labels() const;
};

struct DatasetSpec {
  std::filesystem::path source;
  std::size_t side = 64;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  ClassMode class_mode = ClassMode::TwoClass;
};

// Mean-normalized inverse-ratio class weights (mean over active classes = 1).
struct ClassWeights {
  std::map<ClassLabel, double> weights;
  double at(ClassLabel c) const;
};

enum class PhantomMode { SignalInLung, SignalOutLung, Mixed };

struct PhantomConfig {
  std::size_t n_samples = 400;
  std::size_t side = 64;
  PhantomMode mode = PhantomMode::SignalInLung;
  double noise_sigma = 6.0;
  std::uint64_t seed = 0;
};

struct PhantomData {
  Dataset dataset;
  std::map<std::string, BitGrid> masks;  // keyed by sample id
};

// Reads PGM images listed in <source>/labels.csv (header `filename,label`),
// resizes to side x side, and in TwoClass mode drops samples outside
// {Negative, Typical}.
Dataset load_dataset(const DatasetSpec& spec);

// Stratified split: per class, round(fraction * n_c) samples go to train.
// Deterministic given seed. Every class present must have >= 2 samples.
std::pair<Dataset, Dataset> make_split(const Dataset& dataset, double fraction,
                                       std::uint64_t seed);

// w_c proportional to 1/ratio_c, normalized so the mean over active classes
// is exactly 1. Every active class must appear in `labels`.
ClassWeights compute_class_weights(const std::vector<ClassLabel>& labels, ClassMode mode);

// Synthetic lung phantom: two elliptic "lung" fields on a darker torso, with
// a ground-truth mask per image. SignalInLung plants label-dependent blob
// opacities strictly inside the mask; SignalOutLung makes the label readable
// only from a 6x6 corner tag wholly outside the mask; Mixed does both.
PhantomData gen_phantom(const PhantomConfig& config);

// Renders sample `index` of the phantom stream with an explicit label. All
// label-independent content (torso, lungs, noise) comes from a stream keyed
// by (seed, index) only, so two renders of the same index with different
// labels differ exactly where the label is allowed to show.
ImageSample render_phantom_sample(const PhantomConfig& config, std::size_t index,
                                  ClassLabel label, BitGrid* mask_out = nullptr);

// Writes dataset images + labels.csv (+ masks/ when given) in the on-disk
// layout load_dataset reads back.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                  const std::map<std::string, BitGrid>* masks = nullptr);

}  // namespace curricubench::data

#endif  // CURRICUBENCH_DATA_HPP_
