#ifndef CURRICUBENCH_ATTENTION_HPP_
#define CURRICUBENCH_ATTENTION_HPP_

#include <map>
#include <optional>
#include <string>

#include "curricubench/checkpoint.hpp"
#include "curricubench/data.hpp"
#include "curricubench/image.hpp"

namespace curricubench::attention {

// Nonnegative attention grid at image resolution (CAM for the predicted
// class, after clamping).
using AttentionMap = Tensor;  // [H,W]

struct CamOptions {
  bool clamp_negative = true;  // clamp raw CAM values below zero
};

// CAM of the predicted class: sum_k w_k^{c*} f_k over last-stage feature
// maps, optionally clamped at zero, bilinearly upsampled to the image size.
AttentionMap compute_cam(const Checkpoint& model, const ImageU8& image,
                         const CamOptions& opts = {});

// Same map at feature resolution, before upsampling (exact weighted sum).
Tensor compute_cam_raw(const Checkpoint& model, const ImageU8& image,
                       const CamOptions& opts = {});

struct PostprocessOptions {
  double min_area_fraction = 0.01;
  std::size_t closing_radius = 2;
};

// Keeps the up-to-2 largest 8-connected components with area >=
// min_area_fraction * H * W, then applies binary morphological closing with
// a disc structuring element. EmptyMaskError when nothing passes.
BitGrid postprocess_mask(const BitGrid& raw, const PostprocessOptions& opts = {});

// AIL = sum_ij A_ij * M_ij / sum_ij A_ij, accumulated in f64.
// ZeroAttentionError when the map carries no attention mass.
double ail(const AttentionMap& attention, const BitGrid& mask);

struct MeanAilResult {
  double mean = 0.0;
  std::map<std::string, double> per_image;   // id -> AIL
  std::size_t excluded = 0;                  // zero-attention images
  std::size_t skipped = 0;                   // images without a mask
};

MeanAilResult mean_ail(const Checkpoint& model, const data::Dataset& dataset,
                       const std::map<std::string, BitGrid>& masks,
                       const CamOptions& opts = {});

// Zeroes pixels where the mask is 1 (removes the lung regions).
ImageU8 inverse_segment(const ImageU8& image, const BitGrid& mask);
// Complement: keeps lung pixels, zeroes everything else.
ImageU8 apply_mask(const ImageU8& image, const BitGrid& mask);

// CAM container format "F32G": magic `F32G`, u32-LE rows, u32-LE cols, then
// rows*cols f32-LE row-major.
void save_f32g(const Tensor& grid, const std::filesystem::path& file);
Tensor load_f32g(const std::filesystem::path& file);
// CSV alternative, 9 significant digits.
void save_grid_csv(const Tensor& grid, const std::filesystem::path& file);

void write_ail_csv(const std::filesystem::path& file, const MeanAilResult& result,
                   const data::Dataset& dataset,
                   const std::map<std::string, BitGrid>& masks);

}  // namespace curricubench::attention

#endif  // CURRICUBENCH_ATTENTION_HPP_
