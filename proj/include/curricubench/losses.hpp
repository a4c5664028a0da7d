#ifndef CURRICUBENCH_LOSSES_HPP_
#define CURRICUBENCH_LOSSES_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "curricubench/tensor.hpp"

namespace curricubench::nn {

// All losses return the scalar loss and write analytic input gradients.
// They are templated so tests can verify gradients against central finite
// differences in f64 (<= 1e-5) as well as f32 (<= 1e-3).

template <typename T>
struct LossGrad {
  double loss = 0.0;
  TensorT<T> grad;
};

// Mean per-sample-weighted cross-entropy over rows of `logits` [B,C].
// loss = (1/B) * sum_i w_i * (-log softmax(logits_i)[y_i]); softmax uses
// max-subtraction. Weights default to 1.
template <typename T>
LossGrad<T> cross_entropy(const TensorT<T>& logits, const std::vector<std::size_t>& targets,
                          const std::vector<double>& sample_weights = {}) {
  require(logits.rank() == 2, Errc::Shape, "cross_entropy logits must be [B,C]");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  require(targets.size() == b, Errc::Shape, "cross_entropy target count mismatch");
  require(sample_weights.empty() || sample_weights.size() == b, Errc::Shape,
          "cross_entropy weight count mismatch");
  for (const T v : logits.data)
    require(std::isfinite(static_cast<double>(v)), Errc::Numeric,
            "non-finite logit in cross_entropy");

  LossGrad<T> out;
  out.grad = TensorT<T>(logits.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* row = logits.ptr() + i * c;
    require(targets[i] < c, Errc::Shape, "cross_entropy target out of range");
    const double w = sample_weights.empty() ? 1.0 : sample_weights[i];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const double log_denom = std::log(denom);
    total += w * (log_denom - (static_cast<double>(row[targets[i]]) - mx));
    T* grow = out.grad.ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
      const double onehot = j == targets[i] ? 1.0 : 0.0;
      grow[j] = static_cast<T>(w * (p - onehot) / static_cast<double>(b));
    }
  }
  out.loss = total / static_cast<double>(b);
  return out;
}

namespace detail {

// L2-normalizes rows of [B,d]; returns norms for the backward pass.
template <typename T>
std::vector<double> normalize_rows(TensorT<T>& m) {
  const std::size_t b = m.dim(0), d = m.dim(1);
  std::vector<double> norms(b);
  for (std::size_t i = 0; i < b; ++i) {
    T* row = m.ptr() + i * d;
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(row[j]) * row[j];
    const double n = std::sqrt(std::max(s, 1e-30));
    norms[i] = n;
    for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<T>(row[j] / n);
  }
  return norms;
}

// Given g = dL/d(unit vector u) for u = x/|x|, returns dL/dx.
template <typename T>
void normalize_backward_row(const T* u, const T* g, double norm, T* gx, std::size_t d) {
  double dot = 0;
  for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(u[j]) * g[j];
  for (std::size_t j = 0; j < d; ++j)
    gx[j] = static_cast<T>((static_cast<double>(g[j]) - dot * u[j]) / norm);
}

}  // namespace detail

// InfoNCE with one positive per query and a shared negative bank.
// `query` rows are normalized internally (gradient flows through the
// normalization); `key_pos` [B,d] and `negatives` [K,d] are expected
// unit-norm and receive no gradient.
template <typename T>
LossGrad<T> info_nce(const TensorT<T>& query, const TensorT<T>& key_pos,
                     const TensorT<T>& negatives, double temperature) {
  require(query.rank() == 2 && key_pos.same_shape(query), Errc::Shape,
          "info_nce query/key shapes must match");
  require(negatives.rank() == 2 && negatives.dim(1) == query.dim(1), Errc::Shape,
          "info_nce negative bank dim mismatch");
  require(temperature > 0, Errc::Validation, "temperature must be > 0");
  const std::size_t b = query.dim(0), d = query.dim(1), k = negatives.dim(0);

  TensorT<T> qn = query;
  const std::vector<double> norms = detail::normalize_rows(qn);

  TensorT<T> logits({b, k + 1});
  for (std::size_t i = 0; i < b; ++i) {
    const T* q = qn.ptr() + i * d;
    double pos = 0;
    const T* kp = key_pos.ptr() + i * d;
    for (std::size_t j = 0; j < d; ++j) pos += static_cast<double>(q[j]) * kp[j];
    logits.at2(i, 0) = static_cast<T>(pos / temperature);
    for (std::size_t m = 0; m < k; ++m) {
      const T* neg = negatives.ptr() + m * d;
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(q[j]) * neg[j];
      logits.at2(i, m + 1) = static_cast<T>(dot / temperature);
    }
  }
  const LossGrad<T> ce = cross_entropy(logits, std::vector<std::size_t>(b, 0));

  LossGrad<T> out;
  out.loss = ce.loss;
  out.grad = TensorT<T>(query.shape);
  std::vector<T> gq(d);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) gq[j] = T(0);
    const double g0 = static_cast<double>(ce.grad.at2(i, 0)) / temperature;
    const T* kp = key_pos.ptr() + i * d;
    for (std::size_t j = 0; j < d; ++j) gq[j] += static_cast<T>(g0 * kp[j]);
    for (std::size_t m = 0; m < k; ++m) {
      const double gm = static_cast<double>(ce.grad.at2(i, m + 1)) / temperature;
      const T* neg = negatives.ptr() + m * d;
      for (std::size_t j = 0; j < d; ++j) gq[j] += static_cast<T>(gm * neg[j]);
    }
    detail::normalize_backward_row(qn.ptr() + i * d, gq.data(), norms[i],
                                   out.grad.ptr() + i * d, d);
  }
  return out;
}

// Sinkhorn-Knopp equipartition: Q = diag(u) exp(scores/eps) diag(v) after
// `iters` alternating row/column normalizations targeting row sums 1/B and
// column sums 1/K. Accumulation is in f64 regardless of T.
template <typename T>
TensorT<T> sinkhorn(const TensorT<T>& scores, double eps, std::size_t iters) {
  require(scores.rank() == 2 && scores.dim(0) >= 1 && scores.dim(1) >= 1, Errc::Shape,
          "sinkhorn scores must be a non-empty matrix");
  require(eps > 0, Errc::Validation, "sinkhorn epsilon must be > 0");
  const std::size_t b = scores.dim(0), k = scores.dim(1);
  for (const T v : scores.data)
    require(std::isfinite(static_cast<double>(v)), Errc::Numeric,
            "non-finite sinkhorn score");

  double mx = static_cast<double>(scores[0]);
  for (const T v : scores.data) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> q(b * k);
  for (std::size_t i = 0; i < b * k; ++i)
    q[i] = std::exp((static_cast<double>(scores[i]) - mx) / eps);

  const double row_target = 1.0 / static_cast<double>(b);
  const double col_target = 1.0 / static_cast<double>(k);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += q[i * k + j];
      const double f = row_target / s;
      for (std::size_t j = 0; j < k; ++j) q[i * k + j] *= f;
    }
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < b; ++i) s += q[i * k + j];
      const double f = col_target / s;
      for (std::size_t i = 0; i < b; ++i) q[i * k + j] *= f;
    }
  }
  TensorT<T> out({b, k});
  for (std::size_t i = 0; i < b * k; ++i) out[i] = static_cast<T>(q[i]);
  return out;
}

// Swapped-prediction loss with fixed (gradient-blocked) assignment targets.
// `z_a`, `z_b` [B,d] are raw projections, normalized internally; `targets_*`
// rows are probability distributions over prototypes (the Sinkhorn
// assignments of the *other* view, scaled to row sum 1). Writes gradients
// for both views and for the prototype matrix.
template <typename T>
struct SwavLossGrad {
  double loss = 0.0;
  TensorT<T> grad_a, grad_b, grad_prototypes;
};

template <typename T>
SwavLossGrad<T> swav_swapped_loss(const TensorT<T>& z_a, const TensorT<T>& z_b,
                                  const TensorT<T>& prototypes,
                                  const TensorT<T>& targets_for_a,
                                  const TensorT<T>& targets_for_b, double temperature) {
  require(z_a.same_shape(z_b), Errc::Shape, "swav views must have equal shape");
  const std::size_t b = z_a.dim(0), d = z_a.dim(1), kp = prototypes.dim(0);
  require(prototypes.dim(1) == d, Errc::Shape, "prototype dim mismatch");
  require(targets_for_a.dim(0) == b && targets_for_a.dim(1) == kp &&
              targets_for_b.dim(0) == b && targets_for_b.dim(1) == kp,
          Errc::Shape, "swav target shape mismatch");
  require(temperature > 0, Errc::Validation, "temperature must be > 0");

  SwavLossGrad<T> out;
  out.grad_a = TensorT<T>(z_a.shape);
  out.grad_b = TensorT<T>(z_b.shape);
  out.grad_prototypes = TensorT<T>(prototypes.shape);

  // One direction: probabilities from `z`, targets from the other view.
  const auto one_side = [&](const TensorT<T>& z, const TensorT<T>& targets,
                            TensorT<T>& gz) -> double {
    TensorT<T> zn = z;
    const std::vector<double> norms = detail::normalize_rows(zn);
    TensorT<T> scores({b, kp});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t m = 0; m < kp; ++m) {
        double dot = 0;
        const T* zr = zn.ptr() + i * d;
        const T* pr = prototypes.ptr() + m * d;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(zr[j]) * pr[j];
        scores.at2(i, m) = static_cast<T>(dot / temperature);
      }
    // loss = -(1/B) sum_i sum_m t[i,m] log softmax(scores_i)[m]
    double loss = 0.0;
    TensorT<T> gscores({b, kp});
    for (std::size_t i = 0; i < b; ++i) {
      const T* row = scores.ptr() + i * kp;
      double mx = row[0];
      for (std::size_t m = 1; m < kp; ++m) mx = std::max(mx, static_cast<double>(row[m]));
      double denom = 0;
      for (std::size_t m = 0; m < kp; ++m)
        denom += std::exp(static_cast<double>(row[m]) - mx);
      const double log_denom = std::log(denom);
      double trow = 0;
      for (std::size_t m = 0; m < kp; ++m) {
        const double t = static_cast<double>(targets.at2(i, m));
        trow += t;
        loss -= t * (static_cast<double>(row[m]) - mx - log_denom);
      }
      for (std::size_t m = 0; m < kp; ++m) {
        const double p = std::exp(static_cast<double>(row[m]) - mx) / denom;
        gscores.at2(i, m) = static_cast<T>((trow * p - static_cast<double>(targets.at2(i, m))) /
                                           static_cast<double>(b));
      }
    }
    loss /= static_cast<double>(b);
    // Backprop scores -> zn, prototypes; then zn -> z.
    std::vector<T> gzn(d);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < d; ++j) gzn[j] = T(0);
      const T* zr = zn.ptr() + i * d;
      for (std::size_t m = 0; m < kp; ++m) {
        const double g = static_cast<double>(gscores.at2(i, m)) / temperature;
        const T* pr = prototypes.ptr() + m * d;
        T* gpr = out.grad_prototypes.ptr() + m * d;
        for (std::size_t j = 0; j < d; ++j) {
          gzn[j] += static_cast<T>(g * pr[j]);
          gpr[j] += static_cast<T>(g * zr[j]);
        }
      }
      std::vector<T> gz_row(d);
      detail::normalize_backward_row(zr, gzn.data(), norms[i], gz_row.data(), d);
      T* dst = gz.ptr() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += gz_row[j];
    }
    return loss;
  };

  const double loss_b = one_side(z_b, targets_for_b, out.grad_b);
  const double loss_a = one_side(z_a, targets_for_a, out.grad_a);
  out.loss = 0.5 * (loss_a + loss_b);
  for (auto& g : out.grad_a.data) g = static_cast<T>(g * T(0.5));
  for (auto& g : out.grad_b.data) g = static_cast<T>(g * T(0.5));
  for (auto& g : out.grad_prototypes.data) g = static_cast<T>(g * T(0.5));
  return out;
}

}  // namespace curricubench::nn

#endif  // CURRICUBENCH_LOSSES_HPP_
