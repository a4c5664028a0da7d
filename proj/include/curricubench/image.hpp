#ifndef CURRICUBENCH_IMAGE_HPP_
#define CURRICUBENCH_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curricubench/error.hpp"

namespace curricubench {

// 8-bit grayscale image, row-major.
struct ImageU8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const ImageU8& o) const = default;
};

// Binary mask, values in {0,1}; 1 = lung.
struct BitGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BitGrid() = default;
  BitGrid(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), bits(h * w, fill ? 1 : 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }
  std::size_t area() const {
    std::size_t n = 0;
    for (const auto b : bits) n += b;
    return n;
  }
  bool operator==(const BitGrid& o) const = default;
};

// PGM binary (P5), 8-bit. The writer emits the canonical header
// "P5\n<w> <h>\n255\n" so that load -> save round-trips byte-exactly on
// files it produced.
ImageU8 load_pgm(const std::filesystem::path& file);
void save_pgm(const ImageU8& img, const std::filesystem::path& file);

// Masks are PGM P5 with values exactly {0,255}; 255 = lung.
BitGrid load_mask_pgm(const std::filesystem::path& file);
void save_mask_pgm(const BitGrid& mask, const std::filesystem::path& file);

// Bilinear resampling to out_h x out_w (half-pixel centers).
ImageU8 resize_bilinear(const ImageU8& img, std::size_t out_h, std::size_t out_w);

// Exact k*90-degree counter-clockwise rotation (grid permutation, lossless).
// Square images only.
ImageU8 rotate90(const ImageU8& img, int k);

}  // namespace curricubench

#endif  // CURRICUBENCH_IMAGE_HPP_
