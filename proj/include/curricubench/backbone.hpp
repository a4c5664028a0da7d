#ifndef CURRICUBENCH_BACKBONE_HPP_
#define CURRICUBENCH_BACKBONE_HPP_

#include <memory>
#include <string>
#include <vector>

#include "curricubench/checkpoint.hpp"
#include "curricubench/layers.hpp"

namespace curricubench::nn {

struct BackboneConfig {
  std::size_t in_channels = 1;
  std::vector<std::size_t> stage_widths = {16, 32, 64};
  std::size_t blocks_per_stage = 1;

  std::size_t embedding_dim() const { return stage_widths.back(); }
  // Stem is stride 1; each stage downsamples once.
  std::size_t total_stride() const { return std::size_t{1} << stage_widths.size(); }
};

template <typename T>
struct FeatureBundleT {
  TensorT<T> maps;       // [N, K, h, w], last conv stage after ReLU
  TensorT<T> embedding;  // [N, K], spatial mean of maps
};
using FeatureBundle = FeatureBundleT<float>;

// Residual block: conv3x3(s)-bn-relu-conv3x3(1)-bn, projection shortcut
// (1x1 conv + bn) whenever stride or width changes, relu after the sum.
template <typename T>
struct ResBlock {
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  ReLU<T> relu1, relu2;
  bool has_proj = false;
  Conv2d<T> proj_conv;
  BatchNorm2d<T> proj_bn;

  ResBlock(std::size_t in_ch, std::size_t out_ch, std::size_t stride)
      : conv1(in_ch, out_ch, 3, stride), conv2(out_ch, out_ch, 3, 1),
        bn1(out_ch), bn2(out_ch) {
    has_proj = stride != 1 || in_ch != out_ch;
    if (has_proj) {
      proj_conv = Conv2d<T>(in_ch, out_ch, 1, stride);
      proj_bn = BatchNorm2d<T>(out_ch);
    }
  }

  TensorT<T> forward(const TensorT<T>& x, Mode mode) {
    TensorT<T> main = relu1.forward(bn1.forward(conv1.forward(x), mode));
    main = bn2.forward(conv2.forward(main), mode);
    TensorT<T> skip = has_proj ? proj_bn.forward(proj_conv.forward(x), mode) : x;
    for (std::size_t i = 0; i < main.numel(); ++i) main[i] += skip[i];
    return relu2.forward(main);
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const TensorT<T> gsum = relu2.backward(gy);
    TensorT<T> gx = conv1.backward(bn1.backward(relu1.backward(
        conv2.backward(bn2.backward(gsum)))));
    if (has_proj) {
      const TensorT<T> gskip = proj_conv.backward(proj_bn.backward(gsum));
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gskip[i];
    } else {
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gsum[i];
    }
    return gx;
  }
};

// Small residual convolutional encoder: stem conv + one downsampling stage
// per entry of stage_widths, global average pooling on top.
template <typename T>
class BackboneNet {
 public:
  explicit BackboneNet(const BackboneConfig& cfg)
      : cfg_(cfg), stem_conv_(cfg.in_channels, cfg.stage_widths.at(0), 3, 1),
        stem_bn_(cfg.stage_widths.at(0)) {
    require(!cfg.stage_widths.empty(), Errc::Validation, "backbone needs >= 1 stage");
    require(cfg.blocks_per_stage >= 1, Errc::Validation, "blocks_per_stage >= 1");
    std::size_t in_ch = cfg.stage_widths[0];
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
      const std::size_t out_ch = cfg.stage_widths[s];
      for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
        const std::size_t stride = b == 0 ? 2 : 1;
        blocks_.emplace_back(std::make_unique<ResBlock<T>>(in_ch, out_ch, stride));
        block_names_.push_back("backbone.s" + std::to_string(s) + ".b" + std::to_string(b));
        in_ch = out_ch;
      }
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  // Deterministic fan-in-scaled init; every tensor draws from its own named
  // stream so the result does not depend on traversal order.
  void init_params(std::uint64_t seed) {
    const Rng root(seed);
    for (auto& p : named_params()) {
      if (p.is_buffer) continue;
      init_one(p, root);
    }
  }

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> out;
    add_conv(out, "backbone.stem.conv", stem_conv_);
    add_bn(out, "backbone.stem.bn", stem_bn_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      ResBlock<T>& blk = *blocks_[i];
      const std::string& base = block_names_[i];
      add_conv(out, base + ".conv1", blk.conv1);
      add_bn(out, base + ".bn1", blk.bn1);
      add_conv(out, base + ".conv2", blk.conv2);
      add_bn(out, base + ".bn2", blk.bn2);
      if (blk.has_proj) {
        add_conv(out, base + ".proj.conv", blk.proj_conv);
        add_bn(out, base + ".proj.bn", blk.proj_bn);
      }
    }
    return out;
  }

  // Accepts any spatial size >= 1 per stage (stride-2 convs round up);
  // the checkpoint-level forward_features additionally requires the side to
  // be divisible by the total stride.
  FeatureBundleT<T> forward(const TensorT<T>& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == cfg_.in_channels, Errc::Shape,
            "backbone input must be [N,C,H,W] with C=" +
                std::to_string(cfg_.in_channels) + ", got " + shape_str(x));
    TensorT<T> h = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x), mode));
    for (auto& blk : blocks_) h = blk->forward(h, mode);
    FeatureBundleT<T> out;
    out.embedding = gap_.forward(h);
    out.maps = std::move(h);
    return out;
  }

  // g_maps and/or g_emb may be empty tensors (treated as zero).
  TensorT<T> backward(const TensorT<T>& g_maps, const TensorT<T>& g_emb) {
    const std::size_t n = last_n(), c = cfg_.embedding_dim();
    TensorT<T> g;
    if (g_emb.numel() > 0) {
      g = gap_.backward(g_emb, n, c);
      if (g_maps.numel() > 0)
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += g_maps[i];
    } else {
      require(g_maps.numel() > 0, Errc::Shape, "backbone backward needs a gradient");
      g = g_maps;
    }
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
    return stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(g)));
  }

  void zero_grad() {
    for (auto& p : named_params())
      if (p.grad) p.grad->zero();
  }

 private:
  std::size_t last_n() const { return stem_conv_.cached_x.dim(0); }

  static void add_conv(std::vector<NamedParam<T>>& out, const std::string& base,
                       Conv2d<T>& conv) {
    out.push_back({base + ".weight", &conv.weight, &conv.grad_weight, false});
  }
  static void add_bn(std::vector<NamedParam<T>>& out, const std::string& base,
                     BatchNorm2d<T>& bn) {
    out.push_back({base + ".gamma", &bn.gamma, &bn.grad_gamma, false});
    out.push_back({base + ".beta", &bn.beta, &bn.grad_beta, false});
    out.push_back({base + ".running_mean", &bn.running_mean, nullptr, true});
    out.push_back({base + ".running_var", &bn.running_var, nullptr, true});
  }

  static void init_one(NamedParam<T>& p, const Rng& root) {
    // gamma / beta keep their construction values (1, 0); conv weights get
    // He-scaled normals from a stream named after the tensor.
    if (p.name.ends_with(".gamma") || p.name.ends_with(".beta")) return;
    Rng rng = root.fork("init." + p.name);
    const auto& shape = p.value->shape;
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : p.value->data) w = static_cast<T>(rng.normal() * std);
  }

  BackboneConfig cfg_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  ReLU<T> stem_relu_;
  std::vector<std::unique_ptr<ResBlock<T>>> blocks_;
  std::vector<std::string> block_names_;
  GlobalAvgPool<T> gap_;
};

// --- Checkpoint-level operations (spec surface) ---

BackboneConfig config_from_meta(const Checkpoint& ckpt);
void config_to_meta(const BackboneConfig& cfg, Checkpoint& ckpt);

// Fresh backbone checkpoint ("Scratch" initializer).
Checkpoint init_backbone(const BackboneConfig& cfg, std::uint64_t seed);

// Inference-mode features for a [N,1,H,W] batch in [0,1].
std::vector<FeatureBundle> forward_features(const Checkpoint& ckpt, const Tensor& batch);

// Task head shapes initialized by transfer_weights.
struct HeadSpec {
  std::string task;           // rotation | relloc | moco | swav | classification
  std::size_t num_classes = 2;  // classification head width
  std::size_t proj_dim = 32;    // contrastive projection width
  std::size_t prototypes = 32;  // swav prototype count
  std::uint64_t seed = 0;
};

// Copies backbone tensors (and batch-norm buffers) verbatim; initializes the
// task head tensors from the step seed. `src` is not modified.
Checkpoint transfer_weights(const Checkpoint& src, const HeadSpec& head);

void load_into(BackboneNet<float>& net, const Checkpoint& ckpt);
void store_from(BackboneNet<float>& net, Checkpoint& ckpt);

// Generic named-parameter <-> checkpoint plumbing shared by the task nets.
void load_named(const std::vector<NamedParam<float>>& params, const Checkpoint& ckpt);
void store_named(const std::vector<NamedParam<float>>& params, Checkpoint& ckpt);

inline void linear_params(std::vector<NamedParam<float>>& out, const std::string& base,
                          Linear<float>& lin) {
  out.push_back({base + ".weight", &lin.weight, &lin.grad_weight, false});
  out.push_back({base + ".bias", &lin.bias, &lin.grad_bias, false});
}

// theta_dst <- m * theta_dst + (1-m) * theta_src, tensor-wise, buffers
// included. Both lists must come from structurally identical nets.
void ema_update(const std::vector<NamedParam<float>>& dst,
                const std::vector<NamedParam<float>>& src, double m);

}  // namespace curricubench::nn

#endif  // CURRICUBENCH_BACKBONE_HPP_
