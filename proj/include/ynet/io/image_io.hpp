#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ynet::io {

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

// Per-pixel tissue labels; kInvalid marks pixels excluded from features.
struct LabelMask {
  static constexpr std::uint8_t kInvalid = 255;

  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), labels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  bool operator==(const LabelMask&) const = default;
};

// Binary P6 / P5, maxval 255. Errors are DataError naming the path.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
LabelMask read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const LabelMask& mask);

// Throws DataError if any label is >= classes and not kInvalid.
void check_labels(const LabelMask& mask, std::size_t classes, const std::filesystem::path& origin = {});

}  // namespace ynet::io
