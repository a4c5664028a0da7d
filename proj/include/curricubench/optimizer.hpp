#ifndef CURRICUBENCH_OPTIMIZER_HPP_
#define CURRICUBENCH_OPTIMIZER_HPP_

#include <map>
#include <string>
#include <vector>

#include "curricubench/layers.hpp"

namespace curricubench::nn {

struct OptimConfig {
  enum class Kind { Sgd, Lars };
  Kind kind = Kind::Sgd;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double trust_coeff = 0.001;  // LARS only
};

// v' = momentum * v + g + wd * p ; p' = p - lr * v'
void sgd_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                double momentum = 0.9, double weight_decay = 1e-4);

// Layer-wise adaptive rate scaling: local_lr = trust * |p| / (|g| + wd*|p| + 1e-9)
// when both norms are positive, else 1; then the SGD rule with lr * local_lr.
void lars_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                 double trust_coeff, double momentum = 0.9, double weight_decay = 1e-4);

// Keeps one velocity tensor per parameter name across steps.
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  const OptimConfig& config() const { return cfg_; }

  void step(const std::vector<NamedParam<float>>& params);

 private:
  OptimConfig cfg_;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace curricubench::nn

#endif  // CURRICUBENCH_OPTIMIZER_HPP_
