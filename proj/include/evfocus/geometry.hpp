#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace evfocus {

/// Pinhole intrinsics with radial-tangential distortion (k1, k2, p1, p2, k3).
/// Undistortion of integer pixels is precomputed as a lookup table of bearing
/// vectors (z = 1), which the calibrated warps consume.
class CameraGeometry {
 public:
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0, k3 = 0;

  CameraGeometry() = default;

  CameraGeometry(int w, int h, double fx_, double fy_, double cx_, double cy_, double k1_ = 0,
                 double k2_ = 0, double p1_ = 0, double p2_ = 0, double k3_ = 0)
      : width(w), height(h), fx(fx_), fy(fy_), cx(cx_), cy(cy_), k1(k1_), k2(k2_), p1(p1_),
        p2(p2_), k3(k3_) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("CameraGeometry: bad sensor size");
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("CameraGeometry: focal lengths must be > 0");
    if (cx < 0 || cx >= w || cy < 0 || cy >= h)
      throw std::invalid_argument("CameraGeometry: principal point outside sensor");
    build_lut();
  }

  bool in_sensor(double x, double y) const {
    return x >= 0.0 && x <= width - 1.0 && y >= 0.0 && y <= height - 1.0;
  }

  /// Distort normalized coordinates (forward model).
  Eigen::Vector2d distort(const Eigen::Vector2d& n) const {
    const double x = n.x(), y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
  }

  /// Invert the distortion by fixed-point iteration.
  Eigen::Vector2d undistort_normalized(const Eigen::Vector2d& d) const {
    Eigen::Vector2d n = d;
    for (int it = 0; it < 20; ++it) {
      const Eigen::Vector2d delta = distort(n) - n;
      n = d - delta;
    }
    return n;
  }

  /// Undistorted bearing (z = 1) of an integer pixel, via the lookup table.
  Eigen::Vector3d bearing(int px, int py) const {
    const Eigen::Vector2d& n = lut_[size_t(py) * width + px];
    return {n.x(), n.y(), 1.0};
  }

  /// Undistorted bearing of an arbitrary (possibly sub-pixel) position.
  Eigen::Vector3d bearing_at(double px, double py) const {
    const Eigen::Vector2d n =
        undistort_normalized({(px - cx) / fx, (py - cy) / fy});
    return {n.x(), n.y(), 1.0};
  }

  bool has_distortion() const {
    return k1 != 0.0 || k2 != 0.0 || p1 != 0.0 || p2 != 0.0 || k3 != 0.0;
  }

  /// Event bearing: integer pixels hit the lookup table, sub-pixel positions
  /// fall back to the direct computation.
  Eigen::Vector3d bearing_of(double px, double py) const {
    const int ix = int(px), iy = int(py);
    if (double(ix) == px && double(iy) == py && ix >= 0 && ix < width && iy >= 0 && iy < height)
      return bearing(ix, iy);
    if (!has_distortion()) return {(px - cx) / fx, (py - cy) / fy, 1.0};
    return bearing_at(px, py);
  }

  /// Pinhole projection of a camera-frame point; no re-distortion.
  std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& p) const {
    if (p.z() <= 0.0) return std::nullopt;
    return Eigen::Vector2d{fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  /// d(pixel)/d(camera point), valid where z > 0.
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p) const {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> J;
    J << fx * iz, 0.0, -fx * p.x() * iz * iz,
        0.0, fy * iz, -fy * p.y() * iz * iz;
    return J;
  }

  /// Pixel position of a normalized point under the distortion model.
  Eigen::Vector2d distorted_pixel(const Eigen::Vector2d& n) const {
    const Eigen::Vector2d d = distort(n);
    return {fx * d.x() + cx, fy * d.y() + cy};
  }

 private:
  std::vector<Eigen::Vector2d> lut_;

  void build_lut() {
    lut_.resize(size_t(width) * height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        lut_[size_t(y) * width + x] =
            undistort_normalized({(x - cx) / fx, (y - cy) / fy});
  }
};

}  // namespace evfocus
