#ifndef CURRICUBENCH_CLASSIFY_HPP_
#define CURRICUBENCH_CLASSIFY_HPP_

#include <map>
#include <memory>

#include "curricubench/backbone.hpp"
#include "curricubench/data.hpp"
#include "curricubench/losses.hpp"
#include "curricubench/trainer.hpp"

namespace curricubench::classify {

// Active-class index mapping: classes are indexed by their order in
// data::active_classes(mode).
std::size_t class_index(data::ClassLabel label, data::ClassMode mode);
data::ClassLabel class_at(std::size_t index, data::ClassMode mode);

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  explicit ConfusionMatrix(std::size_t c) : num_classes(c), counts(c * c, 0) {}
  void add(std::size_t true_class, std::size_t pred_class) {
    counts[true_class * num_classes + pred_class] += 1;
  }
  std::size_t at(std::size_t r, std::size_t c) const { return counts[r * num_classes + c]; }
  std::size_t support(std::size_t r) const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < num_classes; ++c) s += at(r, c);
    return s;
  }
};

struct MetricsReport {
  double balanced_accuracy = 0.0;
  std::map<data::ClassLabel, double> per_class_recall;
  std::map<data::ClassLabel, std::size_t> support;
};

// Mean of per-class recalls over classes with support > 0.
double balanced_accuracy(const std::vector<std::size_t>& preds,
                         const std::vector<std::size_t>& labels);

// loss = (1/B) * sum_i w_{y_i} * (-log softmax(logits_i)[y_i]).
// `class_weights` is indexed by class.
nn::LossGrad<float> weighted_ce(const Tensor& logits, const std::vector<std::size_t>& labels,
                                const std::vector<double>& class_weights);

std::vector<double> weights_vector(const data::ClassWeights& weights, data::ClassMode mode);

// Backbone + single linear head over the GAP embedding (the head weights
// double as the CAM weights).
struct ClassifierNet {
  nn::BackboneNet<float> backbone;
  nn::Linear<float> head;

  ClassifierNet(const nn::BackboneConfig& cfg, std::size_t num_classes)
      : backbone(cfg), head(cfg.embedding_dim(), num_classes) {}

  Tensor forward(const Tensor& batch, nn::Mode mode) {
    return head.forward(backbone.forward(batch, mode).embedding);
  }
  void backward(const Tensor& dlogits) { backbone.backward({}, head.backward(dlogits)); }
  std::vector<nn::NamedParam<float>> named_params() {
    auto out = backbone.named_params();
    nn::linear_params(out, "head.cls", head);
    return out;
  }
};

struct FinetuneEnv {
  const data::Dataset* train = nullptr;
  const data::Dataset* val = nullptr;
  data::ClassMode class_mode = data::ClassMode::TwoClass;
  nn::BackboneConfig backbone;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

std::unique_ptr<TaskRunner> make_classification_runner(const Checkpoint& init,
                                                       const FinetuneEnv& env);

struct FinetuneResult {
  Checkpoint model;  // backbone + head.cls
  MetricsReport train_report;
  MetricsReport val_report;
  std::vector<double> epoch_losses;
  std::vector<double> epoch_val_metrics;
};

// End-to-end fine-tuning with weighted cross-entropy at a fixed LR.
FinetuneResult finetune(const Checkpoint& init, const FinetuneEnv& env,
                        const nn::OptimConfig& optim, std::size_t epochs);

struct Predictions {
  std::vector<std::size_t> labels;  // argmax, ties toward the smaller index
  Tensor logits;                    // [N, C]
};

Predictions predict(const Checkpoint& model, const Tensor& images);

// Batched evaluation of a model checkpoint over a dataset.
MetricsReport evaluate(const Checkpoint& model, const data::Dataset& dataset,
                       data::ClassMode mode, std::size_t batch_size = 64);

void write_predictions_csv(const std::filesystem::path& file, const data::Dataset& dataset,
                           const Predictions& preds, data::ClassMode mode);

}  // namespace curricubench::classify

#endif  // CURRICUBENCH_CLASSIFY_HPP_
