#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "evfocus/image.hpp"

namespace evfocus {

/// Truncated sampled Gaussian, normalized to sum 1. Taps cover [-radius, radius].
inline std::vector<double> gaussian_kernel_1d(double sigma, int radius = -1) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel_1d: sigma must be positive");
  if (radius < 0) radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * double(i) * i / (sigma * sigma));
    k[size_t(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

/// 1-D convolution along rows, edges replicated.
inline ImageGrid convolve_rows(const ImageGrid& im, const std::vector<double>& k) {
  const int r = int(k.size() / 2);
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[size_t(i + r)] * im.at(std::clamp(x + i, 0, im.width - 1), y);
      out.at(x, y) = acc;
    }
  }
  return out;
}

inline ImageGrid convolve_cols(const ImageGrid& im, const std::vector<double>& k) {
  const int r = int(k.size() / 2);
  ImageGrid out(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[size_t(i + r)] * im.at(x, std::clamp(y + i, 0, im.height - 1));
      out.at(x, y) = acc;
    }
  }
  return out;
}

/// Separable Gaussian smoothing with replicated edges (constants stay fixed).
inline ImageGrid gaussian_blur(const ImageGrid& im, double sigma, int radius = -1) {
  const auto k = gaussian_kernel_1d(sigma, radius);
  return convolve_cols(convolve_rows(im, k), k);
}

/// Small dense 2-D kernel, origin at the center.
struct Kernel2d {
  int radius = 0;
  std::vector<double> w;  // (2r+1)^2 row-major

  double& at(int dx, int dy) { return w[size_t(dy + radius) * (2 * radius + 1) + (dx + radius)]; }
  double at(int dx, int dy) const {
    return w[size_t(dy + radius) * (2 * radius + 1) + (dx + radius)];
  }
  double sum() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }
};

inline Kernel2d gaussian_kernel_2d(double sigma, int radius) {
  Kernel2d k;
  k.radius = radius;
  k.w.assign(size_t(2 * radius + 1) * (2 * radius + 1), 0.0);
  double sum = 0.0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      double v = std::exp(-0.5 * (double(dx) * dx + double(dy) * dy) / (sigma * sigma));
      k.at(dx, dy) = v;
      sum += v;
    }
  for (double& v : k.w) v /= sum;
  return k;
}

/// Spatial-autocorrelation weight kernel: normalized Gaussian with the center
/// forced to zero, renormalized so the weights sum to 1.
inline Kernel2d autocorrelation_weights(double sigma, int radius) {
  Kernel2d k = gaussian_kernel_2d(sigma, radius);
  const double center = k.at(0, 0);
  k.at(0, 0) = 0.0;
  for (double& v : k.w) v /= (1.0 - center);
  return k;
}

/// Zero-padded dense 2-D convolution (kernels are small; used where the kernel
/// is not separable, e.g. the zero-center autocorrelation weights).
inline ImageGrid convolve_2d(const ImageGrid& im, const Kernel2d& k) {
  ImageGrid out(im.width, im.height);
  const int r = k.radius;
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      double acc = 0.0;
      const int ylo = std::max(-r, -y), yhi = std::min(r, im.height - 1 - y);
      const int xlo = std::max(-r, -x), xhi = std::min(r, im.width - 1 - x);
      for (int dy = ylo; dy <= yhi; ++dy)
        for (int dx = xlo; dx <= xhi; ++dx) acc += k.at(dx, dy) * im.at(x + dx, y + dy);
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace evfocus
