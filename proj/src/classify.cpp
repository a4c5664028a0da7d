#include "curricubench/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace curricubench::classify {

namespace {

Tensor dataset_batch(const data::Dataset& ds, const std::vector<std::size_t>& idx) {
  require(!idx.empty(), Errc::Empty, "empty batch");
  const std::size_t h = ds.samples[idx[0]].pixels.height;
  const std::size_t w = ds.samples[idx[0]].pixels.width;
  Tensor out({idx.size(), 1, h, w});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const ImageU8& img = ds.samples[idx[b]].pixels;
    require(img.height == h && img.width == w, Errc::Shape,
            "dataset images must share one shape");
    float* dst = out.ptr() + b * h * w;
    for (std::size_t i = 0; i < h * w; ++i)
      dst[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c)
      if (logits.at2(i, c) > logits.at2(i, arg)) arg = c;  // ties keep the smaller index
    out[i] = arg;
  }
  return out;
}

MetricsReport report_from(const std::vector<std::size_t>& preds,
                          const std::vector<std::size_t>& labels, data::ClassMode mode) {
  MetricsReport rep;
  const auto active = data::active_classes(mode);
  ConfusionMatrix cm(active.size());
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(labels[i], preds[i]);
  double total = 0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < active.size(); ++c) {
    const std::size_t sup = cm.support(c);
    rep.support[active[c]] = sup;
    if (sup == 0) continue;
    const double recall = static_cast<double>(cm.at(c, c)) / static_cast<double>(sup);
    rep.per_class_recall[active[c]] = recall;
    total += recall;
    ++evaluated;
  }
  require(evaluated > 0, Errc::Empty, "no class has support");
  rep.balanced_accuracy = total / static_cast<double>(evaluated);
  return rep;
}

}  // namespace

std::size_t class_index(data::ClassLabel label, data::ClassMode mode) {
  const auto active = data::active_classes(mode);
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i] == label) return i;
  throw_error(Errc::Label, std::string("label ") + data::label_name(label) +
                               " is not active in this class mode");
}

data::ClassLabel class_at(std::size_t index, data::ClassMode mode) {
  const auto active = data::active_classes(mode);
  require(index < active.size(), Errc::Label, "class index out of range");
  return active[index];
}

double balanced_accuracy(const std::vector<std::size_t>& preds,
                         const std::vector<std::size_t>& labels) {
  require(!preds.empty(), Errc::Empty, "balanced_accuracy over empty predictions");
  require(preds.size() == labels.size(), Errc::Shape,
          "prediction/label count mismatch");
  std::map<std::size_t, std::size_t> support, correct;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++support[labels[i]];
    if (preds[i] == labels[i]) ++correct[labels[i]];
  }
  double total = 0;
  for (const auto& [cls, sup] : support)
    total += static_cast<double>(correct[cls]) / static_cast<double>(sup);
  return total / static_cast<double>(support.size());
}

nn::LossGrad<float> weighted_ce(const Tensor& logits, const std::vector<std::size_t>& labels,
                                const std::vector<double>& class_weights) {
  require(logits.rank() == 2, Errc::Shape, "weighted_ce logits must be [B,C]");
  std::vector<double> sample_weights(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < class_weights.size(), Errc::Shape,
            "label out of range of class weights");
    sample_weights[i] = class_weights[labels[i]];
  }
  return nn::cross_entropy(logits, labels, sample_weights);
}

std::vector<double> weights_vector(const data::ClassWeights& weights, data::ClassMode mode) {
  std::vector<double> out;
  for (const auto c : data::active_classes(mode)) out.push_back(weights.at(c));
  return out;
}

namespace {

class ClassificationRunner final : public TaskRunner {
 public:
  ClassificationRunner(const Checkpoint& init, const FinetuneEnv& env)
      : env_(env), net_(env.backbone, data::active_classes(env.class_mode).size()),
        root_(env.seed) {
    require(env.train && !env.train->empty(), Errc::Empty, "no training data");
    std::set<data::ClassLabel> distinct;
    for (const auto& s : env.train->samples) distinct.insert(*s.label);
    require(distinct.size() >= 2, Errc::DegenerateData,
            "training data contains a single class");
    auto params = net_.named_params();
    nn::load_named(params, init);
    weights_ = weights_vector(
        data::compute_class_weights(env.train->labels(), env.class_mode), env.class_mode);
  }

  double train_epoch(std::size_t epoch, nn::Optimizer& opt) override {
    const std::size_t n = env_.train->size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root_.fork("shuffle", epoch);
    shuffle_rng.shuffle(order.begin(), order.end());

    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += env_.batch_size) {
      const std::size_t end = std::min(n, start + env_.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<std::size_t> labels;
      for (const std::size_t i : idx)
        labels.push_back(class_index(*env_.train->samples[i].label, env_.class_mode));

      net_.backbone.zero_grad();
      net_.head.grad_weight.zero();
      net_.head.grad_bias.zero();
      const Tensor logits = net_.forward(dataset_batch(*env_.train, idx), nn::Mode::Train);
      const auto lg = weighted_ce(logits, labels, weights_);
      require(std::isfinite(lg.loss), Errc::Numeric, "training loss diverged");
      net_.backward(lg.grad);
      auto params = net_.named_params();
      opt.step(params);
      total += lg.loss;
      ++batches;
    }
    return total / static_cast<double>(batches);
  }

  double eval_metric() override {
    const data::Dataset* ds = env_.val && !env_.val->empty() ? env_.val : env_.train;
    std::vector<std::size_t> preds, labels;
    for (std::size_t start = 0; start < ds->size(); start += env_.batch_size) {
      const std::size_t end = std::min(ds->size(), start + env_.batch_size);
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      const Tensor logits = net_.forward(dataset_batch(*ds, idx), nn::Mode::Eval);
      const auto batch_preds = argmax_rows(logits);
      preds.insert(preds.end(), batch_preds.begin(), batch_preds.end());
      for (const std::size_t i : idx)
        labels.push_back(class_index(*ds->samples[i].label, env_.class_mode));
    }
    return balanced_accuracy(preds, labels);
  }

  Checkpoint to_checkpoint() const override {
    Checkpoint out;
    auto* self = const_cast<ClassificationRunner*>(this);
    nn::store_named(self->net_.named_params(), out);
    nn::config_to_meta(env_.backbone, out);
    out.meta["task"] = "classification";
    return out;
  }

  MetricsReport report(const data::Dataset& ds) {
    std::vector<std::size_t> preds, labels;
    for (std::size_t start = 0; start < ds.size(); start += env_.batch_size) {
      const std::size_t end = std::min(ds.size(), start + env_.batch_size);
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      const Tensor logits = net_.forward(dataset_batch(ds, idx), nn::Mode::Eval);
      const auto batch_preds = argmax_rows(logits);
      preds.insert(preds.end(), batch_preds.begin(), batch_preds.end());
      for (const std::size_t i : idx)
        labels.push_back(class_index(*ds.samples[i].label, env_.class_mode));
    }
    return report_from(preds, labels, env_.class_mode);
  }

 private:
  FinetuneEnv env_;
  ClassifierNet net_;
  Rng root_;
  std::vector<double> weights_;
};

}  // namespace

std::unique_ptr<TaskRunner> make_classification_runner(const Checkpoint& init,
                                                       const FinetuneEnv& env) {
  return std::make_unique<ClassificationRunner>(init, env);
}

FinetuneResult finetune(const Checkpoint& init, const FinetuneEnv& env,
                        const nn::OptimConfig& optim, std::size_t epochs) {
  ClassificationRunner runner(init, env);
  nn::Optimizer opt(optim);
  FinetuneResult out;
  for (std::size_t e = 0; e < epochs; ++e) {
    out.epoch_losses.push_back(runner.train_epoch(e, opt));
    out.epoch_val_metrics.push_back(runner.eval_metric());
  }
  out.train_report = runner.report(*env.train);
  out.val_report = env.val && !env.val->empty() ? runner.report(*env.val) : out.train_report;
  out.model = runner.to_checkpoint();
  return out;
}

Predictions predict(const Checkpoint& model, const Tensor& images) {
  const nn::BackboneConfig cfg = nn::config_from_meta(model);
  const Tensor& head_w = model.get("head.cls.weight");
  ClassifierNet net(cfg, head_w.dim(0));
  auto params = net.named_params();
  nn::load_named(params, model);
  Predictions out;
  out.logits = net.forward(images, nn::Mode::Eval);
  out.labels = argmax_rows(out.logits);
  return out;
}

MetricsReport evaluate(const Checkpoint& model, const data::Dataset& dataset,
                       data::ClassMode mode, std::size_t batch_size) {
  require(!dataset.empty(), Errc::Empty, "cannot evaluate on an empty dataset");
  std::vector<std::size_t> preds, labels;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Predictions p = predict(model, dataset_batch(dataset, idx));
    preds.insert(preds.end(), p.labels.begin(), p.labels.end());
    for (const std::size_t i : idx)
      labels.push_back(class_index(*dataset.samples[i].label, mode));
  }
  return report_from(preds, labels, mode);
}

void write_predictions_csv(const std::filesystem::path& file, const data::Dataset& dataset,
                           const Predictions& preds, data::ClassMode mode) {
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write " + file.string());
  const std::size_t c = preds.logits.dim(1);
  out << "id,true_label,pred_label";
  for (std::size_t j = 0; j < c; ++j) out << ",logit_" << j;
  out << "\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.samples[i].id << ","
        << data::label_name(*dataset.samples[i].label) << ","
        << data::label_name(class_at(preds.labels[i], mode));
    for (std::size_t j = 0; j < c; ++j) out << "," << preds.logits.at2(i, j);
    out << "\n";
  }
}

}  // namespace curricubench::classify
