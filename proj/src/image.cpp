#include "curricubench/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace curricubench {

namespace {

// Reads one PGM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& file) {
  require(!tok.empty() && std::all_of(tok.begin(), tok.end(),
                                      [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }),
          Errc::Format, "bad PGM header field '" + tok + "' in " + file.string());
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace

ImageU8 load_pgm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  require(in.good(), Errc::Io, "cannot open image file " + file.string());
  require(next_token(in) == "P5", Errc::Format, "not a binary PGM (P5): " + file.string());
  const std::size_t w = parse_dim(next_token(in), file);
  const std::size_t h = parse_dim(next_token(in), file);
  const std::size_t maxval = parse_dim(next_token(in), file);
  require(w > 0 && h > 0, Errc::Format, "degenerate PGM size in " + file.string());
  require(maxval > 0 && maxval <= 255, Errc::Format,
          "only 8-bit PGM supported: " + file.string());
  // The header tokenizer consumed exactly one whitespace byte after maxval.
  ImageU8 img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  require(in.gcount() == static_cast<std::streamsize>(img.pixels.size()), Errc::Io,
          "truncated PGM payload in " + file.string());
  return img;
}

void save_pgm(const ImageU8& img, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::Io, "cannot write image file " + file.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  require(out.good(), Errc::Io, "short write to " + file.string());
}

BitGrid load_mask_pgm(const std::filesystem::path& file) {
  const ImageU8 img = load_pgm(file);
  BitGrid mask(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::uint8_t v = img.pixels[i];
    require(v == 0 || v == 255, Errc::Format,
            "mask PGM must contain only {0,255}: " + file.string());
    mask.bits[i] = v == 255 ? 1 : 0;
  }
  return mask;
}

void save_mask_pgm(const BitGrid& mask, const std::filesystem::path& file) {
  ImageU8 img(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    img.pixels[i] = mask.bits[i] ? 255 : 0;
  save_pgm(img, file);
}

ImageU8 resize_bilinear(const ImageU8& img, std::size_t out_h, std::size_t out_w) {
  require(out_h > 0 && out_w > 0, Errc::Shape, "resize target must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  ImageU8 out(out_h, out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double v = (1.0 - wy) * ((1.0 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
                       wy * ((1.0 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
      out.at(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

ImageU8 rotate90(const ImageU8& img, int k) {
  require(img.height == img.width, Errc::Shape, "rotate90 requires a square image");
  const std::size_t s = img.height;
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  ImageU8 out(s, s);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      // One CCW quarter turn sends (r,c) to (s-1-c, r).
      std::size_t rr = r, cc = c;
      for (int i = 0; i < k; ++i) {
        const std::size_t nr = s - 1 - cc;
        const std::size_t nc = rr;
        rr = nr;
        cc = nc;
      }
      out.at(rr, cc) = img.at(r, c);
    }
  }
  return out;
}

}  // namespace curricubench
