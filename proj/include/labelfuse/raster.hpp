#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace labelfuse {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary portable graymap (P5, maxval 255).
std::string encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::string& bytes);

void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

/// Pixel rectangle [x, x+w) x [y, y+h); must lie inside the image.
GrayImage crop(const GrayImage& img, int x, int y, int w, int h);

}  // namespace labelfuse
