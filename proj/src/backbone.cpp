#include "curricubench/backbone.hpp"

#include <sstream>

namespace curricubench::nn {

namespace {

std::vector<std::size_t> parse_widths(const std::string& csv) {
  std::vector<std::size_t> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

void init_linear_named(Checkpoint& ckpt, const Rng& root, const std::string& base,
                       std::size_t in_dim, std::size_t out_dim) {
  Tensor w({out_dim, in_dim});
  Rng rng = root.fork("init." + base + ".weight");
  const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (auto& v : w.data) v = static_cast<float>(rng.normal() * std);
  ckpt.tensors[base + ".weight"] = std::move(w);
  ckpt.tensors[base + ".bias"] = Tensor({out_dim});
}

}  // namespace

BackboneConfig config_from_meta(const Checkpoint& ckpt) {
  BackboneConfig cfg;
  const auto widths = ckpt.meta.find("config.stage_widths");
  require(widths != ckpt.meta.end(), Errc::CorruptCheckpoint,
          "checkpoint meta lacks config.stage_widths");
  cfg.stage_widths = parse_widths(widths->second);
  if (const auto it = ckpt.meta.find("config.in_channels"); it != ckpt.meta.end())
    cfg.in_channels = std::stoull(it->second);
  if (const auto it = ckpt.meta.find("config.blocks_per_stage"); it != ckpt.meta.end())
    cfg.blocks_per_stage = std::stoull(it->second);
  return cfg;
}

void config_to_meta(const BackboneConfig& cfg, Checkpoint& ckpt) {
  std::string widths;
  for (std::size_t i = 0; i < cfg.stage_widths.size(); ++i)
    widths += (i ? "," : "") + std::to_string(cfg.stage_widths[i]);
  ckpt.meta["config.stage_widths"] = widths;
  ckpt.meta["config.in_channels"] = std::to_string(cfg.in_channels);
  ckpt.meta["config.blocks_per_stage"] = std::to_string(cfg.blocks_per_stage);
}

Checkpoint init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  BackboneNet<float> net(cfg);
  net.init_params(seed);
  Checkpoint ckpt;
  store_from(net, ckpt);
  config_to_meta(cfg, ckpt);
  ckpt.meta["seed"] = std::to_string(seed);
  ckpt.meta["task"] = "init";
  return ckpt;
}

void load_named(const std::vector<NamedParam<float>>& params, const Checkpoint& ckpt) {
  for (const auto& p : params) {
    const Tensor& src = ckpt.get(p.name);
    require(src.shape == p.value->shape, Errc::Shape,
            "checkpoint tensor " + p.name + " has shape " + shape_str(src) +
                ", expected " + shape_str(*p.value));
    *p.value = src;
  }
}

void store_named(const std::vector<NamedParam<float>>& params, Checkpoint& ckpt) {
  for (const auto& p : params) ckpt.tensors[p.name] = *p.value;
}

void ema_update(const std::vector<NamedParam<float>>& dst,
                const std::vector<NamedParam<float>>& src, double m) {
  require(dst.size() == src.size(), Errc::Shape, "ema_update net structure mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Tensor& d = *dst[i].value;
    const Tensor& s = *src[i].value;
    require(d.same_shape(s), Errc::Shape, "ema_update tensor shape mismatch");
    for (std::size_t j = 0; j < d.numel(); ++j)
      d[j] = static_cast<float>(m * d[j] + (1.0 - m) * s[j]);
  }
}

void load_into(BackboneNet<float>& net, const Checkpoint& ckpt) {
  load_named(net.named_params(), ckpt);
}

void store_from(BackboneNet<float>& net, Checkpoint& ckpt) {
  store_named(net.named_params(), ckpt);
}

std::vector<FeatureBundle> forward_features(const Checkpoint& ckpt, const Tensor& batch) {
  const BackboneConfig cfg = config_from_meta(ckpt);
  require(batch.rank() == 4 && batch.dim(2) % cfg.total_stride() == 0 &&
              batch.dim(3) % cfg.total_stride() == 0,
          Errc::Shape, "spatial side must be divisible by total stride " +
                           std::to_string(cfg.total_stride()));
  BackboneNet<float> net(cfg);
  load_into(net, ckpt);
  const FeatureBundle all = net.forward(batch, Mode::Eval);
  for (const float v : all.maps.data)
    require(std::isfinite(v), Errc::Numeric, "non-finite feature map value");

  const std::size_t n = batch.dim(0), k = all.embedding.dim(1);
  const std::size_t h = all.maps.dim(2), w = all.maps.dim(3);
  std::vector<FeatureBundle> out(n);
  for (std::size_t b = 0; b < n; ++b) {
    out[b].maps = Tensor({1, k, h, w});
    std::copy_n(all.maps.ptr() + b * k * h * w, k * h * w, out[b].maps.ptr());
    out[b].embedding = Tensor({1, k});
    std::copy_n(all.embedding.ptr() + b * k, k, out[b].embedding.ptr());
  }
  return out;
}

Checkpoint transfer_weights(const Checkpoint& src, const HeadSpec& head) {
  Checkpoint out;
  bool any_backbone = false;
  for (const auto& [name, tensor] : src.tensors) {
    if (name.rfind("backbone.", 0) == 0) {
      out.tensors[name] = tensor;
      any_backbone = true;
    }
  }
  require(any_backbone, Errc::Transfer, "source checkpoint has no backbone tensors");
  // Backbone completeness check: a net built from the recorded config must
  // find every tensor it expects.
  const BackboneConfig cfg = config_from_meta(src);
  BackboneNet<float> probe(cfg);
  for (auto& p : probe.named_params())
    require(out.has(p.name), Errc::Transfer, "missing backbone tensor " + p.name);

  const std::size_t d = cfg.embedding_dim();
  const Rng root(head.seed);
  if (head.task == "classification") {
    init_linear_named(out, root, "head.cls", d, head.num_classes);
  } else if (head.task == "rotation") {
    init_linear_named(out, root, "head.rotation", d, 4);
  } else if (head.task == "relloc") {
    init_linear_named(out, root, "head.relloc", 2 * d, 8);
  } else if (head.task == "moco" || head.task == "swav") {
    init_linear_named(out, root, "head.proj.fc1", d, d);
    init_linear_named(out, root, "head.proj.fc2", d, head.proj_dim);
    if (head.task == "swav") {
      Tensor protos({head.prototypes, head.proj_dim});
      Rng rng = root.fork("init.head.swav.prototypes");
      for (auto& v : protos.data) v = static_cast<float>(rng.normal());
      for (std::size_t r = 0; r < head.prototypes; ++r) {
        float* row = protos.ptr() + r * head.proj_dim;
        double norm = 0;
        for (std::size_t i = 0; i < head.proj_dim; ++i) norm += double(row[i]) * row[i];
        const float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm, 1e-30)));
        for (std::size_t i = 0; i < head.proj_dim; ++i) row[i] *= inv;
      }
      out.tensors["head.swav.prototypes"] = std::move(protos);
    }
  } else {
    throw_error(Errc::Task, "unknown head task '" + head.task + "'");
  }

  config_to_meta(cfg, out);
  out.meta["task"] = head.task;
  out.meta["seed"] = std::to_string(head.seed);
  return out;
}

}  // namespace curricubench::nn
