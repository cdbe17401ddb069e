#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace evfocus {

/// Dense row-major scalar image. Pixel (x, y) = column x of row y.
struct ImageGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ImageGrid() = default;
  ImageGrid(int w, int h, double fill = 0.0) : width(w), height(h), values(size_t(w) * h, fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("ImageGrid: dimensions must be positive");
  }

  size_t pixels() const { return values.size(); }
  double& at(int x, int y) { return values[size_t(y) * width + x]; }
  double at(int x, int y) const { return values[size_t(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  bool same_shape(const ImageGrid& o) const { return width == o.width && height == o.height; }

  void fill(double v) { std::fill(values.begin(), values.end(), v); }
};

inline double image_sum(const ImageGrid& im) {
  double s = 0.0;
  for (double v : im.values) s += v;
  return s;
}

inline double image_mean(const ImageGrid& im) { return image_sum(im) / double(im.pixels()); }

inline double image_min(const ImageGrid& im) {
  return *std::min_element(im.values.begin(), im.values.end());
}

inline double image_max(const ImageGrid& im) {
  return *std::max_element(im.values.begin(), im.values.end());
}

inline bool image_all_finite(const ImageGrid& im) {
  for (double v : im.values)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Replicated-edge sample.
inline double at_clamped(const ImageGrid& im, int x, int y) {
  x = std::clamp(x, 0, im.width - 1);
  y = std::clamp(y, 0, im.height - 1);
  return im.at(x, y);
}

/// Central-difference x derivative, edges replicated.
inline ImageGrid derivative_x(const ImageGrid& im) {
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      out.at(x, y) = 0.5 * (at_clamped(im, x + 1, y) - at_clamped(im, x - 1, y));
  return out;
}

inline ImageGrid derivative_y(const ImageGrid& im) {
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      out.at(x, y) = 0.5 * (at_clamped(im, x, y + 1) - at_clamped(im, x, y - 1));
  return out;
}

/// Second derivatives for the 5-point Laplacian and the Hessian entries.
inline ImageGrid derivative_xx(const ImageGrid& im) {
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      out.at(x, y) = at_clamped(im, x + 1, y) - 2.0 * im.at(x, y) + at_clamped(im, x - 1, y);
  return out;
}

inline ImageGrid derivative_yy(const ImageGrid& im) {
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      out.at(x, y) = at_clamped(im, x, y + 1) - 2.0 * im.at(x, y) + at_clamped(im, x, y - 1);
  return out;
}

/// Mixed derivative by composed central differences.
inline ImageGrid derivative_xy(const ImageGrid& im) { return derivative_y(derivative_x(im)); }

inline ImageGrid laplacian(const ImageGrid& im) {
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      out.at(x, y) = at_clamped(im, x + 1, y) + at_clamped(im, x - 1, y) + at_clamped(im, x, y + 1) +
                     at_clamped(im, x, y - 1) - 4.0 * im.at(x, y);
  return out;
}

}  // namespace evfocus
