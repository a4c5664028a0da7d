#ifndef CURRICUBENCH_AUGMENT_HPP_
#define CURRICUBENCH_AUGMENT_HPP_

#include <string>
#include <vector>

#include "curricubench/image.hpp"
#include "curricubench/rng.hpp"
#include "curricubench/tensor.hpp"

namespace curricubench::imgf {

// Float images are [H,W] tensors with values in [0,1].
Tensor to_float(const ImageU8& img);
Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w);
Tensor gaussian_blur(const Tensor& img, double sigma);
Tensor hflip(const Tensor& img);

// Stacks [H,W] float images into an [N,1,H,W] batch.
Tensor make_batch(const std::vector<Tensor>& images);

}  // namespace curricubench::imgf

namespace curricubench::ssl {

// Grayscale-safe subset of the MoCo v2 recipe: random resized crop,
// horizontal flip, brightness/contrast jitter, Gaussian blur. Deliberately
// no 90-degree rotations: those would alias the rotation task's labels when
// the tasks share a backbone.
struct AugmentConfig {
  double min_area = 0.6;
  double max_area = 1.0;
  double flip_prob = 0.5;
  double brightness = 0.1;     // additive, on the [0,1] scale
  double contrast_lo = 0.8;
  double contrast_hi = 1.2;
  double blur_prob = 0.5;
  double blur_sigma_lo = 0.3;
  double blur_sigma_hi = 1.2;
};

class Augmenter {
 public:
  explicit Augmenter(AugmentConfig cfg = {}) : cfg_(cfg) {}

  std::vector<std::string> ops() const {
    return {"random_resized_crop", "hflip", "brightness_contrast", "gaussian_blur"};
  }

  Tensor apply(const Tensor& img, Rng& rng) const;

 private:
  AugmentConfig cfg_;
};

}  // namespace curricubench::ssl

#endif  // CURRICUBENCH_AUGMENT_HPP_
