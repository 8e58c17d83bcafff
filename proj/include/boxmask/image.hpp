#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace boxmask {

/// Interleaved 8-bit RGB raster, row-major.
struct ImageRgb {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height bytes

  ImageRgb() = default;
  ImageRgb(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0})
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {
    if (w < 0 || h < 0) throw std::invalid_argument("ImageRgb: negative dimensions");
    for (std::size_t i = 0; i < data.size(); i += 3) {
      data[i] = fill[0];
      data[i + 1] = fill[1];
      data[i + 2] = fill[2];
    }
  }

  std::array<std::uint8_t, 3> pixel(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set_pixel(int x, int y, std::array<std::uint8_t, 3> rgb) {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    data[i] = rgb[0];
    data[i + 1] = rgb[1];
    data[i + 2] = rgb[2];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool same_shape(const ImageRgb& o) const {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const ImageRgb&, const ImageRgb&) = default;
};

}  // namespace boxmask
