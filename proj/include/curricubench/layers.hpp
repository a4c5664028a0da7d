#ifndef CURRICUBENCH_LAYERS_HPP_
#define CURRICUBENCH_LAYERS_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "curricubench/rng.hpp"
#include "curricubench/tensor.hpp"

namespace curricubench::nn {

enum class Mode { Train, Eval };

// Handle to a named parameter (or batch-norm buffer) and its gradient slot,
// used by checkpoint I/O and the optimizer.
template <typename T>
struct NamedParam {
  std::string name;
  TensorT<T>* value = nullptr;
  TensorT<T>* grad = nullptr;   // null for buffers
  bool is_buffer = false;
};

// 2-D convolution, square kernel, zero padding, no bias (batch norm follows).
template <typename T>
struct Conv2d {
  std::size_t in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;
  TensorT<T> weight;  // [out_ch, in_ch, k, k]
  TensorT<T> grad_weight;
  TensorT<T> cached_x;

  Conv2d() = default;
  Conv2d(std::size_t ic, std::size_t oc, std::size_t k, std::size_t s)
      : in_ch(ic), out_ch(oc), kernel(k), stride(s), pad(k / 2),
        weight({oc, ic, k, k}), grad_weight({oc, ic, k, k}) {}

  void init(Rng rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    for (auto& w : weight.data) w = static_cast<T>(rng.normal() * std);
  }

  // Valid output-column range for one kernel column: indices c with
  // 0 <= c*stride + kc - pad < w.
  std::pair<std::size_t, std::size_t> col_range(std::size_t kc, std::size_t w,
                                                std::size_t wo) const {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kc) -
                               static_cast<std::ptrdiff_t>(pad);
    std::size_t c0 = 0;
    if (off < 0)
      c0 = static_cast<std::size_t>((-off + static_cast<std::ptrdiff_t>(stride) - 1) /
                                    static_cast<std::ptrdiff_t>(stride));
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(w) - 1 - off;
    if (last < 0) return {1, 0};
    const std::size_t c1 =
        std::min(wo, static_cast<std::size_t>(last) / stride + 1);
    return {c0, c1};
  }

  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank() == 4 && x.dim(1) == in_ch, Errc::Shape,
            "conv input must be [N," + std::to_string(in_ch) + ",H,W], got " + shape_str(x));
    cached_x = x;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
    const std::size_t wo = (w + 2 * pad - kernel) / stride + 1;
    TensorT<T> y({n, out_ch, ho, wo});
    const std::size_t xs = in_ch * h * w, ys = out_ch * ho * wo;
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = x.ptr() + b * xs;
      T* yb = y.ptr() + b * ys;
      for (std::size_t oc = 0; oc < out_ch; ++oc) {
        T* ymap = yb + oc * ho * wo;
        const T* wk = weight.ptr() + oc * in_ch * kernel * kernel;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
          const T* xc = xb + ic * h * w;
          const T* wc = wk + ic * kernel * kernel;
          for (std::size_t kr = 0; kr < kernel; ++kr) {
            for (std::size_t kc = 0; kc < kernel; ++kc) {
              const T wv = wc[kr * kernel + kc];
              if (wv == T(0)) continue;
              const auto [c0, c1] = col_range(kc, w, wo);
              if (c0 >= c1) continue;
              for (std::size_t r = 0; r < ho; ++r) {
                const std::ptrdiff_t ir = static_cast<std::ptrdiff_t>(r * stride + kr) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(h)) continue;
                const T* xrow = xc + static_cast<std::size_t>(ir) * w +
                                (c0 * stride + kc - pad);
                T* yrow = ymap + r * wo;
                if (stride == 1) {
                  for (std::size_t c = c0; c < c1; ++c)
                    yrow[c] += wv * xrow[c - c0];
                } else {
                  for (std::size_t c = c0; c < c1; ++c)
                    yrow[c] += wv * xrow[(c - c0) * stride];
                }
              }
            }
          }
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const TensorT<T>& x = cached_x;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = gy.dim(2), wo = gy.dim(3);
    TensorT<T> gx(x.shape);
    const std::size_t xs = in_ch * h * w, ys = out_ch * ho * wo;
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = x.ptr() + b * xs;
      const T* gyb = gy.ptr() + b * ys;
      T* gxb = gx.ptr() + b * xs;
      for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const T* gmap = gyb + oc * ho * wo;
        const T* wk = weight.ptr() + oc * in_ch * kernel * kernel;
        T* gwk = grad_weight.ptr() + oc * in_ch * kernel * kernel;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
          const T* xc = xb + ic * h * w;
          T* gxc = gxb + ic * h * w;
          const T* wc = wk + ic * kernel * kernel;
          T* gwc = gwk + ic * kernel * kernel;
          for (std::size_t kr = 0; kr < kernel; ++kr) {
            for (std::size_t kc = 0; kc < kernel; ++kc) {
              const T wv = wc[kr * kernel + kc];
              T gw_acc = 0;
              const auto [c0, c1] = col_range(kc, w, wo);
              if (c0 >= c1) continue;
              for (std::size_t r = 0; r < ho; ++r) {
                const std::ptrdiff_t ir = static_cast<std::ptrdiff_t>(r * stride + kr) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(h)) continue;
                const std::size_t base = static_cast<std::size_t>(ir) * w +
                                         (c0 * stride + kc - pad);
                const T* xrow = xc + base;
                T* gxrow = gxc + base;
                const T* grow = gmap + r * wo;
                if (stride == 1) {
                  for (std::size_t c = c0; c < c1; ++c) {
                    const T g = grow[c];
                    gw_acc += g * xrow[c - c0];
                    gxrow[c - c0] += g * wv;
                  }
                } else {
                  for (std::size_t c = c0; c < c1; ++c) {
                    const T g = grow[c];
                    gw_acc += g * xrow[(c - c0) * stride];
                    gxrow[(c - c0) * stride] += g * wv;
                  }
                }
              }
              gwc[kr * kernel + kc] += gw_acc;
            }
          }
        }
      }
    }
    return gx;
  }
};

template <typename T>
struct BatchNorm2d {
  std::size_t channels = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);
  TensorT<T> gamma, beta, running_mean, running_var;
  TensorT<T> grad_gamma, grad_beta;
  // forward cache
  TensorT<T> xhat;
  std::vector<T> invstd;
  Mode cached_mode = Mode::Eval;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t c)
      : channels(c), gamma({c}), beta({c}), running_mean({c}), running_var({c}),
        grad_gamma({c}), grad_beta({c}) {
    gamma.fill(T(1));
    running_var.fill(T(1));
  }

  TensorT<T> forward(const TensorT<T>& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == channels, Errc::Shape,
            "batchnorm input shape mismatch: " + shape_str(x));
    cached_mode = mode;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = h * w, m = n * hw;
    xhat = TensorT<T>(x.shape);
    invstd.assign(channels, T(0));
    TensorT<T> y(x.shape);
    for (std::size_t c = 0; c < channels; ++c) {
      T mean, var;
      if (mode == Mode::Train) {
        T sum = 0;
        for (std::size_t b = 0; b < n; ++b) {
          const T* xc = x.ptr() + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) sum += xc[i];
        }
        mean = sum / static_cast<T>(m);
        T sq = 0;
        for (std::size_t b = 0; b < n; ++b) {
          const T* xc = x.ptr() + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const T d = xc[i] - mean;
            sq += d * d;
          }
        }
        var = sq / static_cast<T>(m);  // biased, used for normalization
        const T var_unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * var_unbiased;
      } else {
        mean = running_mean[c];
        var = running_var[c];
      }
      const T is = T(1) / std::sqrt(var + eps);
      invstd[c] = is;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xc = x.ptr() + (b * channels + c) * hw;
        T* hc = xhat.ptr() + (b * channels + c) * hw;
        T* yc = y.ptr() + (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          hc[i] = (xc[i] - mean) * is;
          yc[i] = gamma[c] * hc[i] + beta[c];
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const std::size_t n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
    const std::size_t hw = h * w, m = n * hw;
    TensorT<T> gx(gy.shape);
    for (std::size_t c = 0; c < channels; ++c) {
      T sum_gy = 0, sum_gy_xhat = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* gc = gy.ptr() + (b * channels + c) * hw;
        const T* hc = xhat.ptr() + (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_gy += gc[i];
          sum_gy_xhat += gc[i] * hc[i];
        }
      }
      grad_gamma[c] += sum_gy_xhat;
      grad_beta[c] += sum_gy;
      const T is = invstd[c];
      for (std::size_t b = 0; b < n; ++b) {
        const T* gc = gy.ptr() + (b * channels + c) * hw;
        const T* hc = xhat.ptr() + (b * channels + c) * hw;
        T* gxc = gx.ptr() + (b * channels + c) * hw;
        if (cached_mode == Mode::Train) {
          // Batch statistics participate in the gradient.
          for (std::size_t i = 0; i < hw; ++i)
            gxc[i] = gamma[c] * is / static_cast<T>(m) *
                     (static_cast<T>(m) * gc[i] - sum_gy - hc[i] * sum_gy_xhat);
        } else {
          for (std::size_t i = 0; i < hw; ++i) gxc[i] = gamma[c] * is * gc[i];
        }
      }
    }
    return gx;
  }
};

template <typename T>
struct ReLU {
  TensorT<T> mask;

  TensorT<T> forward(const TensorT<T>& x) {
    mask = TensorT<T>(x.shape);
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const bool on = x[i] > T(0);
      mask[i] = on ? T(1) : T(0);
      y[i] = on ? x[i] : T(0);
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    TensorT<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask[i];
    return gx;
  }
};

template <typename T>
struct Linear {
  std::size_t in_dim = 0, out_dim = 0;
  TensorT<T> weight;  // [out, in]
  TensorT<T> bias;    // [out]
  TensorT<T> grad_weight, grad_bias;
  TensorT<T> cached_x;

  Linear() = default;
  Linear(std::size_t in, std::size_t out)
      : in_dim(in), out_dim(out), weight({out, in}), bias({out}),
        grad_weight({out, in}), grad_bias({out}) {}

  void init(Rng rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& w : weight.data) w = static_cast<T>(rng.normal() * std);
    bias.zero();
  }

  TensorT<T> forward(const TensorT<T>& x) {
    require(x.rank() == 2 && x.dim(1) == in_dim, Errc::Shape,
            "linear input shape mismatch: " + shape_str(x));
    cached_x = x;
    const std::size_t n = x.dim(0);
    TensorT<T> y({n, out_dim});
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = x.ptr() + b * in_dim;
      T* yb = y.ptr() + b * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        T acc = bias[o];
        const T* wr = weight.ptr() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * xb[i];
        yb[o] = acc;
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy) {
    const std::size_t n = cached_x.dim(0);
    TensorT<T> gx({n, in_dim});
    for (std::size_t b = 0; b < n; ++b) {
      const T* xb = cached_x.ptr() + b * in_dim;
      const T* gyb = gy.ptr() + b * out_dim;
      T* gxb = gx.ptr() + b * in_dim;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const T g = gyb[o];
        grad_bias[o] += g;
        T* gwr = grad_weight.ptr() + o * in_dim;
        const T* wr = weight.ptr() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
          gwr[i] += g * xb[i];
          gxb[i] += g * wr[i];
        }
      }
    }
    return gx;
  }
};

// Global average pooling [N,C,H,W] -> [N,C].
template <typename T>
struct GlobalAvgPool {
  std::size_t h = 0, w = 0;

  TensorT<T> forward(const TensorT<T>& x) {
    h = x.dim(2);
    w = x.dim(3);
    const std::size_t n = x.dim(0), c = x.dim(1), hw = h * w;
    TensorT<T> y({n, c});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* xc = x.ptr() + (b * c + ch) * hw;
        T acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += xc[i];
        y[b * c + ch] = acc / static_cast<T>(hw);
      }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& gy, std::size_t n, std::size_t c) {
    const std::size_t hw = h * w;
    TensorT<T> gx({n, c, h, w});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = gy[b * c + ch] / static_cast<T>(hw);
        T* gxc = gx.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) gxc[i] = g;
      }
    return gx;
  }
};

}  // namespace curricubench::nn

#endif  // CURRICUBENCH_LAYERS_HPP_
