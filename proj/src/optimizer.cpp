#include "curricubench/optimizer.hpp"

#include <cmath>

namespace curricubench::nn {

namespace {

void momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity,
                   double effective_lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double v = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    velocity[i] = static_cast<float>(v);
    param[i] = static_cast<float>(param[i] - effective_lr * v);
  }
}

double l2_norm(const Tensor& t) {
  double s = 0;
  for (const float v : t.data) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

}  // namespace

void sgd_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                double momentum, double weight_decay) {
  require(param.same_shape(grad) && param.same_shape(velocity), Errc::Shape,
          "sgd_update shape mismatch");
  momentum_step(param, grad, velocity, lr, momentum, weight_decay);
}

void lars_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                 double trust_coeff, double momentum, double weight_decay) {
  require(param.same_shape(grad) && param.same_shape(velocity), Errc::Shape,
          "lars_update shape mismatch");
  const double pn = l2_norm(param);
  const double gn = l2_norm(grad);
  double local_lr = 1.0;
  if (pn > 0.0 && gn > 0.0)
    local_lr = trust_coeff * pn / (gn + weight_decay * pn + 1e-9);
  momentum_step(param, grad, velocity, lr * local_lr, momentum, weight_decay);
}

void Optimizer::step(const std::vector<NamedParam<float>>& params) {
  for (const auto& p : params) {
    if (p.is_buffer || !p.grad) continue;
    Tensor& vel = velocity_.try_emplace(p.name, Tensor(p.value->shape)).first->second;
    if (cfg_.kind == OptimConfig::Kind::Lars)
      lars_update(*p.value, *p.grad, vel, cfg_.lr, cfg_.trust_coeff, cfg_.momentum,
                  cfg_.weight_decay);
    else
      sgd_update(*p.value, *p.grad, vel, cfg_.lr, cfg_.momentum, cfg_.weight_decay);
  }
}

}  // namespace curricubench::nn
