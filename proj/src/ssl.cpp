#include "curricubench/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace curricubench::ssl {

namespace {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng rng, std::size_t min_batch = 1) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < min_batch) break;
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<const ImageU8*> gather(const data::Dataset& ds,
                                   const std::vector<std::size_t>& idx) {
  std::vector<const ImageU8*> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(&ds.samples[i].pixels);
  return out;
}

void normalize_rows_f32(Tensor& m) {
  const std::size_t b = m.dim(0), d = m.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    float* row = m.ptr() + i * d;
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(row[j]) * row[j];
    const double inv = 1.0 / std::sqrt(std::max(s, 1e-30));
    for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(row[j] * inv);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Batch builders
// ---------------------------------------------------------------------------

RotationBatch make_rotation_batch(const std::vector<const ImageU8*>& images, Rng& rng) {
  require(!images.empty(), Errc::Empty, "rotation batch needs >= 1 image");
  const std::size_t side = images[0]->height;
  RotationBatch out;
  out.images = Tensor({images.size(), 1, side, side});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const ImageU8& img = *images[b];
    require(img.height == img.width, Errc::Shape, "rotation task needs square images");
    require(img.height == side, Errc::Shape, "rotation batch images must share one side");
    const auto k = static_cast<std::uint8_t>(rng.uniform_int(4));
    const ImageU8 rotated = rotate90(img, k);
    out.targets.push_back(k);
    float* dst = out.images.ptr() + b * side * side;
    for (std::size_t i = 0; i < side * side; ++i)
      dst[i] = static_cast<float>(rotated.pixels[i]) / 255.0f;
  }
  return out;
}

RelLocGeometry relloc_geometry(std::size_t side, std::size_t gap) {
  require(side / 3 > gap && side / 3 - gap >= 8, Errc::Shape,
          "image too small for relative-location patches");
  RelLocGeometry g;
  g.patch = side / 3 - gap;
  g.step = g.patch + gap;
  const std::size_t extent = 3 * g.patch + 2 * gap;
  g.origin = (side - extent) / 2;
  return g;
}

std::uint8_t relloc_target(std::size_t cell_r, std::size_t cell_c) {
  require(cell_r < 3 && cell_c < 3 && !(cell_r == 1 && cell_c == 1), Errc::Validation,
          "neighbor cell must be one of the 8 non-center cells");
  const std::size_t flat = cell_r * 3 + cell_c;
  return static_cast<std::uint8_t>(flat < 4 ? flat : flat - 1);
}

std::pair<std::size_t, std::size_t> relloc_cell(std::uint8_t target) {
  require(target < 8, Errc::Validation, "relloc target out of range");
  const std::size_t flat = target < 4 ? target : target + std::size_t{1};
  return {flat / 3, flat % 3};
}

RelLocBatch make_relloc_batch(const std::vector<const ImageU8*>& images,
                              const RelLocParams& params, Rng& rng) {
  require(!images.empty(), Errc::Empty, "relloc batch needs >= 1 image");
  const std::size_t side = images[0]->height;
  const RelLocGeometry geo = relloc_geometry(side, params.gap);
  RelLocBatch out;
  out.center_patches = Tensor({images.size(), 1, geo.patch, geo.patch});
  out.neighbor_patches = Tensor({images.size(), 1, geo.patch, geo.patch});

  const auto extract = [&](const ImageU8& img, std::size_t top, std::size_t left,
                           float* dst) {
    for (std::size_t r = 0; r < geo.patch; ++r)
      for (std::size_t c = 0; c < geo.patch; ++c)
        dst[r * geo.patch + c] = static_cast<float>(img.at(top + r, left + c)) / 255.0f;
  };

  for (std::size_t b = 0; b < images.size(); ++b) {
    const ImageU8& img = *images[b];
    require(img.height == side && img.width == side, Errc::Shape,
            "relloc batch images must be square and share one side");
    const auto target = static_cast<std::uint8_t>(rng.uniform_int(8));
    const auto [cell_r, cell_c] = relloc_cell(target);

    const std::size_t center_top = geo.origin + geo.step;
    extract(img, center_top, center_top,
            out.center_patches.ptr() + b * geo.patch * geo.patch);

    const auto jit = [&]() -> std::ptrdiff_t {
      if (params.jitter == 0) return 0;
      return static_cast<std::ptrdiff_t>(rng.uniform_int(2 * params.jitter + 1)) -
             static_cast<std::ptrdiff_t>(params.jitter);
    };
    const auto place = [&](std::size_t cell) {
      const auto base = static_cast<std::ptrdiff_t>(geo.origin + cell * geo.step) + jit();
      return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
          base, 0, static_cast<std::ptrdiff_t>(side - geo.patch)));
    };
    const std::size_t top = place(cell_r);
    const std::size_t left = place(cell_c);
    extract(img, top, left, out.neighbor_patches.ptr() + b * geo.patch * geo.patch);
    out.targets.push_back(target);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MoCo queue
// ---------------------------------------------------------------------------

KeyQueue::KeyQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), buf_(capacity * dim, 0.0f) {
  require(capacity >= 1 && dim >= 1, Errc::Validation, "queue needs capacity, dim >= 1");
}

void KeyQueue::push(const Tensor& keys) {
  require(keys.rank() == 2 && keys.dim(1) == dim_, Errc::Shape,
          "queue keys must be [N," + std::to_string(dim_) + "]");
  for (std::size_t i = 0; i < keys.dim(0); ++i) {
    const float* row = keys.ptr() + i * dim_;
    double norm = 0;
    for (std::size_t j = 0; j < dim_; ++j) norm += static_cast<double>(row[j]) * row[j];
    require(std::abs(std::sqrt(norm) - 1.0) <= 1e-5, Errc::State,
            "queued keys must be unit-norm");
    const std::size_t slot = (head_ + size_) % capacity_;
    std::copy_n(row, dim_, buf_.data() + slot * dim_);
    if (size_ < capacity_) {
      ++size_;
    } else {
      head_ = (head_ + 1) % capacity_;  // oldest evicted
    }
  }
}

Tensor KeyQueue::negatives() const {
  require(size_ > 0, Errc::State, "negative queue is empty");
  Tensor out({size_, dim_});
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    std::copy_n(buf_.data() + slot * dim_, dim_, out.ptr() + i * dim_);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

namespace {

class RotationRunner final : public TaskRunner {
 public:
  RotationRunner(const Checkpoint& init, const SslRunnerEnv& env)
      : env_(env), net_(env.backbone), head_(env.backbone.embedding_dim(), 4),
        root_(env.seed) {
    auto params = named();
    nn::load_named(params, init);
  }

  double train_epoch(std::size_t epoch, nn::Optimizer& opt) override {
    Rng label_rng = root_.fork("rotation.labels", epoch);
    double total = 0;
    std::size_t batches = 0;
    for (const auto& idx :
         shuffled_batches(env_.train->size(), env_.batch_size, root_.fork("shuffle", epoch))) {
      RotationBatch batch = make_rotation_batch(gather(*env_.train, idx), label_rng);
      net_.zero_grad();
      head_.grad_weight.zero();
      head_.grad_bias.zero();
      const auto features = net_.forward(batch.images, nn::Mode::Train);
      const Tensor logits = head_.forward(features.embedding);
      const auto lg = nn::cross_entropy(
          logits, std::vector<std::size_t>(batch.targets.begin(), batch.targets.end()));
      net_.backward({}, head_.backward(lg.grad));
      auto params = named();
      opt.step(params);
      total += lg.loss;
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : std::nan("");
  }

  double eval_metric() override {
    Rng label_rng = root_.fork("rotation.eval");
    std::size_t correct = 0, seen = 0;
    for (const auto& idx : shuffled_batches(env_.train->size(), env_.batch_size,
                                            root_.fork("rotation.eval.order"))) {
      RotationBatch batch = make_rotation_batch(gather(*env_.train, idx), label_rng);
      const auto features = net_.forward(batch.images, nn::Mode::Eval);
      const Tensor logits = head_.forward(features.embedding);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < 4; ++c)
          if (logits.at2(b, c) > logits.at2(b, arg)) arg = c;
        correct += arg == batch.targets[b];
        ++seen;
      }
    }
    return seen ? static_cast<double>(correct) / static_cast<double>(seen) : std::nan("");
  }

  Checkpoint to_checkpoint() const override {
    Checkpoint out;
    auto* self = const_cast<RotationRunner*>(this);
    nn::store_named(self->named(), out);
    nn::config_to_meta(env_.backbone, out);
    out.meta["task"] = "rotation";
    return out;
  }

 private:
  std::vector<nn::NamedParam<float>> named() {
    auto out = net_.named_params();
    nn::linear_params(out, "head.rotation", head_);
    return out;
  }

  SslRunnerEnv env_;
  nn::BackboneNet<float> net_;
  nn::Linear<float> head_;
  Rng root_;
};

class RelLocRunner final : public TaskRunner {
 public:
  RelLocRunner(const Checkpoint& init, const SslRunnerEnv& env)
      : env_(env), net_(env.backbone), head_(2 * env.backbone.embedding_dim(), 8),
        root_(env.seed) {
    auto params = named();
    nn::load_named(params, init);
  }

  double train_epoch(std::size_t epoch, nn::Optimizer& opt) override {
    Rng batch_rng = root_.fork("relloc.sampling", epoch);
    double total = 0;
    std::size_t batches = 0;
    for (const auto& idx :
         shuffled_batches(env_.train->size(), env_.batch_size, root_.fork("shuffle", epoch))) {
      RelLocBatch batch = make_relloc_batch(gather(*env_.train, idx), env_.relloc, batch_rng);
      net_.zero_grad();
      head_.grad_weight.zero();
      head_.grad_bias.zero();
      total += step(batch, &opt);
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : std::nan("");
  }

  double eval_metric() override {
    Rng batch_rng = root_.fork("relloc.eval");
    std::size_t correct = 0, seen = 0;
    for (const auto& idx : shuffled_batches(env_.train->size(), env_.batch_size,
                                            root_.fork("relloc.eval.order"))) {
      RelLocBatch batch = make_relloc_batch(gather(*env_.train, idx), env_.relloc, batch_rng);
      const Tensor logits = forward_pairs(batch, nn::Mode::Eval);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < 8; ++c)
          if (logits.at2(b, c) > logits.at2(b, arg)) arg = c;
        correct += arg == batch.targets[b];
        ++seen;
      }
    }
    return seen ? static_cast<double>(correct) / static_cast<double>(seen) : std::nan("");
  }

  Checkpoint to_checkpoint() const override {
    Checkpoint out;
    auto* self = const_cast<RelLocRunner*>(this);
    nn::store_named(self->named(), out);
    nn::config_to_meta(env_.backbone, out);
    out.meta["task"] = "relloc";
    return out;
  }

 private:
  // Center and neighbor patches go through the backbone as one concatenated
  // batch; their embeddings are paired for the 8-way head.
  Tensor forward_pairs(const RelLocBatch& batch, nn::Mode mode) {
    const std::size_t b = batch.targets.size();
    const std::size_t p = batch.center_patches.dim(2);
    Tensor joint({2 * b, 1, p, p});
    std::copy_n(batch.center_patches.ptr(), b * p * p, joint.ptr());
    std::copy_n(batch.neighbor_patches.ptr(), b * p * p, joint.ptr() + b * p * p);
    const auto features = net_.forward(joint, mode);
    const std::size_t d = features.embedding.dim(1);
    Tensor pairs({b, 2 * d});
    for (std::size_t i = 0; i < b; ++i) {
      std::copy_n(features.embedding.ptr() + i * d, d, pairs.ptr() + i * 2 * d);
      std::copy_n(features.embedding.ptr() + (b + i) * d, d, pairs.ptr() + i * 2 * d + d);
    }
    return head_.forward(pairs);
  }

  double step(const RelLocBatch& batch, nn::Optimizer* opt) {
    const std::size_t b = batch.targets.size();
    const Tensor logits = forward_pairs(batch, nn::Mode::Train);
    const auto lg = nn::cross_entropy(
        logits, std::vector<std::size_t>(batch.targets.begin(), batch.targets.end()));
    const Tensor dpairs = head_.backward(lg.grad);
    const std::size_t d = dpairs.dim(1) / 2;
    Tensor demb({2 * b, d});
    for (std::size_t i = 0; i < b; ++i) {
      std::copy_n(dpairs.ptr() + i * 2 * d, d, demb.ptr() + i * d);
      std::copy_n(dpairs.ptr() + i * 2 * d + d, d, demb.ptr() + (b + i) * d);
    }
    net_.backward({}, demb);
    auto params = named();
    opt->step(params);
    return lg.loss;
  }

  std::vector<nn::NamedParam<float>> named() {
    auto out = net_.named_params();
    nn::linear_params(out, "head.relloc", head_);
    return out;
  }

  SslRunnerEnv env_;
  nn::BackboneNet<float> net_;
  nn::Linear<float> head_;
  Rng root_;
};

class MocoRunner final : public TaskRunner {
 public:
  MocoRunner(const Checkpoint& init, const SslRunnerEnv& env)
      : env_(env), query_(env.backbone, env.moco.proj_dim),
        key_(env.backbone, env.moco.proj_dim),
        queue_(env.moco.queue_capacity, env.moco.proj_dim), root_(env.seed) {
    nn::load_named(query_.named_params(), init);
    if (init.has("moco_key.backbone.stem.conv.weight")) {
      auto key_params = key_.named_params();
      for (auto& p : key_params) {
        const Tensor& src = init.get("moco_key." + p.name);
        require(src.shape == p.value->shape, Errc::Shape, "key encoder shape mismatch");
        *p.value = src;
      }
    } else {
      // Key encoder starts as an exact copy of the query encoder.
      copy_params(key_.named_params(), query_.named_params());
    }
    if (init.has("head.moco.queue")) queue_.push(init.get("head.moco.queue"));
  }

  double train_epoch(std::size_t epoch, nn::Optimizer& opt) override {
    Rng aug_rng = root_.fork("moco.aug", epoch);
    double total = 0;
    std::size_t stepped = 0;
    for (const auto& idx :
         shuffled_batches(env_.train->size(), env_.batch_size, root_.fork("shuffle", epoch))) {
      Tensor keys = encode_keys(idx, aug_rng);
      if (!queue_.full()) {
        queue_.push(keys);  // warm-up: enqueue only, no loss
        continue;
      }
      const Tensor view_q = make_views(idx, aug_rng);
      query_.backbone.zero_grad();
      zero_head_grads();
      const Tensor q = query_.forward(view_q, nn::Mode::Train);
      const auto lg = nn::info_nce(q, keys, queue_.negatives(), env_.moco.temperature);
      query_.backward(lg.grad);
      auto params = query_.named_params();
      opt.step(params);
      // Momentum update runs after the gradient step, then the new keys
      // enter the queue.
      nn::ema_update(key_.named_params(), query_.named_params(),
                     env_.moco.encoder_momentum);
      queue_.push(keys);
      total += lg.loss;
      ++stepped;
    }
    return stepped ? total / static_cast<double>(stepped) : std::nan("");
  }

  Checkpoint to_checkpoint() const override {
    Checkpoint out;
    auto* self = const_cast<MocoRunner*>(this);
    nn::store_named(self->query_.named_params(), out);
    for (auto& p : self->key_.named_params()) out.tensors["moco_key." + p.name] = *p.value;
    if (self->queue_.size() > 0) out.tensors["head.moco.queue"] = self->queue_.negatives();
    nn::config_to_meta(env_.backbone, out);
    out.meta["task"] = "moco";
    return out;
  }

 private:
  static void copy_params(const std::vector<nn::NamedParam<float>>& dst,
                          const std::vector<nn::NamedParam<float>>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i].value;
  }

  void zero_head_grads() {
    query_.fc1.grad_weight.zero();
    query_.fc1.grad_bias.zero();
    query_.fc2.grad_weight.zero();
    query_.fc2.grad_bias.zero();
  }

  Tensor make_views(const std::vector<std::size_t>& idx, Rng& rng) {
    Augmenter aug(env_.augment);
    std::vector<Tensor> views;
    views.reserve(idx.size());
    for (const std::size_t i : idx)
      views.push_back(aug.apply(imgf::to_float(env_.train->samples[i].pixels), rng));
    return imgf::make_batch(views);
  }

  Tensor encode_keys(const std::vector<std::size_t>& idx, Rng& rng) {
    const Tensor view_k = make_views(idx, rng);
    Tensor k = key_.forward(view_k, nn::Mode::Eval);
    normalize_rows_f32(k);
    return k;
  }

  SslRunnerEnv env_;
  ProjectionNet query_, key_;
  KeyQueue queue_;
  Rng root_;
};

}  // namespace

nn::SwavLossGrad<float> swav_view_loss(const Tensor& z_a, const Tensor& z_b,
                                       const Tensor& prototypes, const SwavConfig& cfg) {
  require(z_a.dim(0) >= 2, Errc::DegenerateBatch,
          "swav equipartition needs batch size >= 2");
  const std::size_t b = z_a.dim(0);
  Tensor zn_a = z_a, zn_b = z_b;
  normalize_rows_f32(zn_a);
  normalize_rows_f32(zn_b);
  const auto scores = [&](const Tensor& zn) {
    Tensor s({b, prototypes.dim(0)});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t m = 0; m < prototypes.dim(0); ++m) {
        double dot = 0;
        for (std::size_t j = 0; j < zn.dim(1); ++j)
          dot += static_cast<double>(zn.at2(i, j)) * prototypes.at2(m, j);
        s.at2(i, m) = static_cast<float>(dot);
      }
    return s;
  };
  // Gradient-blocked equipartition targets, scaled to row-stochastic form.
  Tensor q_a = nn::sinkhorn(scores(zn_a), cfg.epsilon, cfg.sinkhorn_iters);
  Tensor q_b = nn::sinkhorn(scores(zn_b), cfg.epsilon, cfg.sinkhorn_iters);
  for (auto& v : q_a.data) v *= static_cast<float>(b);
  for (auto& v : q_b.data) v *= static_cast<float>(b);
  // Swapped prediction: z_a is scored against the other view's assignment.
  return nn::swav_swapped_loss(z_a, z_b, prototypes, q_b, q_a, cfg.temperature);
}

namespace {

class SwavRunner final : public TaskRunner {
 public:
  SwavRunner(const Checkpoint& init, const SslRunnerEnv& env)
      : env_(env), net_(env.backbone, env.swav.proj_dim),
        prototypes_({env.swav.prototypes, env.swav.proj_dim}),
        grad_prototypes_({env.swav.prototypes, env.swav.proj_dim}), root_(env.seed) {
    auto params = named();
    nn::load_named(params, init);
  }

  double train_epoch(std::size_t epoch, nn::Optimizer& opt) override {
    Rng aug_rng = root_.fork("swav.aug", epoch);
    double total = 0;
    std::size_t stepped = 0;
    // Singleton tails are dropped: equipartition is undefined at B=1.
    for (const auto& idx : shuffled_batches(env_.train->size(), env_.batch_size,
                                            root_.fork("shuffle", epoch), 2)) {
      const std::size_t b = idx.size();
      Augmenter aug(env_.augment);
      std::vector<Tensor> views;
      views.reserve(2 * b);
      for (const std::size_t i : idx)
        views.push_back(aug.apply(imgf::to_float(env_.train->samples[i].pixels), aug_rng));
      for (const std::size_t i : idx)
        views.push_back(aug.apply(imgf::to_float(env_.train->samples[i].pixels), aug_rng));

      net_.backbone.zero_grad();
      net_.fc1.grad_weight.zero();
      net_.fc1.grad_bias.zero();
      net_.fc2.grad_weight.zero();
      net_.fc2.grad_bias.zero();
      grad_prototypes_.zero();

      const Tensor z = net_.forward(imgf::make_batch(views), nn::Mode::Train);
      const std::size_t p = z.dim(1);
      Tensor z_a({b, p}), z_b({b, p});
      std::copy_n(z.ptr(), b * p, z_a.ptr());
      std::copy_n(z.ptr() + b * p, b * p, z_b.ptr());

      const auto lg = swav_view_loss(z_a, z_b, prototypes_, env_.swav);
      Tensor dz({2 * b, p});
      std::copy_n(lg.grad_a.ptr(), b * p, dz.ptr());
      std::copy_n(lg.grad_b.ptr(), b * p, dz.ptr() + b * p);
      net_.backward(dz);
      for (std::size_t i = 0; i < grad_prototypes_.numel(); ++i)
        grad_prototypes_[i] += lg.grad_prototypes[i];

      auto params = named();
      opt.step(params);
      renormalize_prototypes();
      total += lg.loss;
      ++stepped;
    }
    return stepped ? total / static_cast<double>(stepped) : std::nan("");
  }

  Checkpoint to_checkpoint() const override {
    Checkpoint out;
    auto* self = const_cast<SwavRunner*>(this);
    nn::store_named(self->named(), out);
    nn::config_to_meta(env_.backbone, out);
    out.meta["task"] = "swav";
    return out;
  }

 private:
  std::vector<nn::NamedParam<float>> named() {
    auto out = net_.named_params();
    out.push_back({"head.swav.prototypes", &prototypes_, &grad_prototypes_, false});
    return out;
  }

  void renormalize_prototypes() {
    normalize_rows_f32(prototypes_);
  }

  SslRunnerEnv env_;
  ProjectionNet net_;
  Tensor prototypes_, grad_prototypes_;
  Rng root_;
};

}  // namespace

std::unique_ptr<TaskRunner> make_rotation_runner(const Checkpoint& init,
                                                 const SslRunnerEnv& env) {
  return std::make_unique<RotationRunner>(init, env);
}
std::unique_ptr<TaskRunner> make_relloc_runner(const Checkpoint& init,
                                               const SslRunnerEnv& env) {
  return std::make_unique<RelLocRunner>(init, env);
}
std::unique_ptr<TaskRunner> make_moco_runner(const Checkpoint& init,
                                             const SslRunnerEnv& env) {
  return std::make_unique<MocoRunner>(init, env);
}
std::unique_ptr<TaskRunner> make_swav_runner(const Checkpoint& init,
                                             const SslRunnerEnv& env) {
  return std::make_unique<SwavRunner>(init, env);
}

std::unique_ptr<TaskRunner> make_ssl_runner(const std::string& task, const Checkpoint& init,
                                            const SslRunnerEnv& env) {
  if (task == "rotation") return make_rotation_runner(init, env);
  if (task == "relloc") return make_relloc_runner(init, env);
  if (task == "moco") return make_moco_runner(init, env);
  if (task == "swav") return make_swav_runner(init, env);
  throw_error(Errc::Task, "unknown SSL task '" + task + "'");
}

}  // namespace curricubench::ssl
