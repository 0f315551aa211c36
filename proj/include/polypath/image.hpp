#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "polypath/error.hpp"

namespace polypath {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

/// Dense, row-major, interleaved 8-bit RGB buffer.
class RgbImage {
public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidArgument("negative image dimensions");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb& at(int x, int y) { return pixels_[offset(x, y)]; }
  const Rgb& at(int x, int y) const { return pixels_[offset(x, y)]; }

  std::span<Rgb> row(int y) {
    return std::span<Rgb>(pixels_).subspan(offset(0, y), static_cast<std::size_t>(width_));
  }
  std::span<const Rgb> row(int y) const {
    return std::span<const Rgb>(pixels_).subspan(offset(0, y), static_cast<std::size_t>(width_));
  }

  std::span<Rgb> pixels() { return pixels_; }
  std::span<const Rgb> pixels() const { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
  std::size_t offset(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

} // namespace polypath
