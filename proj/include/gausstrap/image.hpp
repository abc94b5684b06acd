#pragma once

#include <gausstrap/geometry.hpp>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gausstrap {

using Rgb = Vec3;

/// Row-major, interleaved RGB image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  static Image filled(int w, int h, Rgb c) {
    Image img(w, h);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) img.set(p, c);
    return img;
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t size() const { return data.size(); }

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  Rgb pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set(std::size_t p, Rgb c) {
    data[p * 3] = c.x;
    data[p * 3 + 1] = c.y;
    data[p * 3 + 2] = c.z;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size())
    throw std::invalid_argument(std::string(who) + ": image dimensions differ");
}

/// Two-color checkerboard with `cells` squares along each side.
inline Image checkerboard(int width, int height, int cells, Rgb a, Rgb b) {
  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int cx = x * cells / width;
      const int cy = y * cells / height;
      img.set(static_cast<std::size_t>(y) * width + x, ((cx + cy) % 2 == 0) ? a : b);
    }
  return img;
}

}  // namespace gausstrap
