#include "curricubench/augment.hpp"

#include <algorithm>
#include <cmath>

namespace curricubench::imgf {

Tensor to_float(const ImageU8& img) {
  Tensor out({img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return out;
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  require(img.rank() == 2, Errc::Shape, "resize expects a [H,W] image");
  const std::size_t h = img.dim(0), w = img.dim(1);
  if (out_h == h && out_w == w) return img;
  Tensor out({out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      out.at2(r, c) = static_cast<float>(
          (1.0 - wy) * ((1.0 - wx) * img.at2(y0, x0) + wx * img.at2(y0, x1)) +
          wy * ((1.0 - wx) * img.at2(y1, x0) + wx * img.at2(y1, x1)));
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const auto h = static_cast<std::ptrdiff_t>(img.dim(0));
  const auto w = static_cast<std::ptrdiff_t>(img.dim(1));
  Tensor tmp(img.shape), out(img.shape);
  for (std::ptrdiff_t r = 0; r < h; ++r)
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t cc = std::clamp<std::ptrdiff_t>(c + i, 0, w - 1);
        acc += kernel[i + radius] * img.at2(r, cc);
      }
      tmp.at2(r, c) = static_cast<float>(acc);
    }
  for (std::ptrdiff_t r = 0; r < h; ++r)
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t rr = std::clamp<std::ptrdiff_t>(r + i, 0, h - 1);
        acc += kernel[i + radius] * tmp.at2(rr, c);
      }
      out.at2(r, c) = static_cast<float>(acc);
    }
  return out;
}

Tensor hflip(const Tensor& img) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  Tensor out(img.shape);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at2(r, c) = img.at2(r, w - 1 - c);
  return out;
}

Tensor make_batch(const std::vector<Tensor>& images) {
  require(!images.empty(), Errc::Empty, "cannot build an empty batch");
  const std::size_t h = images[0].dim(0), w = images[0].dim(1);
  Tensor out({images.size(), 1, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    require(images[b].dim(0) == h && images[b].dim(1) == w, Errc::Shape,
            "batch images must share one shape");
    std::copy_n(images[b].ptr(), h * w, out.ptr() + b * h * w);
  }
  return out;
}

}  // namespace curricubench::imgf

namespace curricubench::ssl {

Tensor Augmenter::apply(const Tensor& img, Rng& rng) const {
  const std::size_t h = img.dim(0), w = img.dim(1);
  const double area_px = static_cast<double>(h * w);

  // Random resized crop.
  const double area = rng.uniform(cfg_.min_area, cfg_.max_area) * area_px;
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  const double aspect = std::exp(rng.uniform(log_lo, log_hi));
  auto ch = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
  auto cw = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
  ch = std::clamp<std::size_t>(ch, 1, h);
  cw = std::clamp<std::size_t>(cw, 1, w);
  const std::size_t top = rng.uniform_int(h - ch + 1);
  const std::size_t left = rng.uniform_int(w - cw + 1);
  Tensor crop({ch, cw});
  for (std::size_t r = 0; r < ch; ++r)
    for (std::size_t c = 0; c < cw; ++c) crop.at2(r, c) = img.at2(top + r, left + c);
  Tensor out = imgf::resize_bilinear(crop, h, w);

  if (rng.bernoulli(cfg_.flip_prob)) out = imgf::hflip(out);

  // Brightness/contrast jitter around the crop mean.
  const double contrast = rng.uniform(cfg_.contrast_lo, cfg_.contrast_hi);
  const double shift = rng.uniform(-cfg_.brightness, cfg_.brightness);
  double mean = 0;
  for (const float v : out.data) mean += v;
  mean /= static_cast<double>(out.numel());
  for (float& v : out.data)
    v = static_cast<float>(std::clamp((v - mean) * contrast + mean + shift, 0.0, 1.0));

  if (rng.bernoulli(cfg_.blur_prob))
    out = imgf::gaussian_blur(out, rng.uniform(cfg_.blur_sigma_lo, cfg_.blur_sigma_hi));
  return out;
}

}  // namespace curricubench::ssl
