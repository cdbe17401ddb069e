#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace evfocus {

/// Motion-capture pose sample: body-to-world rotation and translation.
struct PoseSample {
  double t = 0.0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Rotation-vector logarithm of a unit quaternion (shortest path).
inline Eigen::Vector3d quaternion_log(Eigen::Quaterniond q) {
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  if (vn < 1e-12) return 2.0 * q.vec();  // small angle: log q ~ 2 v / w, w ~ 1
  const double angle = 2.0 * std::atan2(vn, q.w());
  return (angle / vn) * q.vec();
}

class PoseTrack {
 public:
  PoseTrack() = default;

  explicit PoseTrack(std::vector<PoseSample> samples) : samples_(std::move(samples)) {
    if (!std::is_sorted(samples_.begin(), samples_.end(),
                        [](const PoseSample& a, const PoseSample& b) { return a.t < b.t; }))
      throw std::invalid_argument("PoseTrack: samples must be sorted by time");
    for (auto& s : samples_) {
      if (std::abs(s.rotation.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("PoseTrack: quaternion norm deviates from 1 beyond 1e-6");
      s.rotation.normalize();
    }
  }

  bool empty() const { return samples_.empty(); }
  size_t size() const { return samples_.size(); }
  const std::vector<PoseSample>& samples() const { return samples_; }
  double t_begin() const { return samples_.front().t; }
  double t_end() const { return samples_.back().t; }
  bool covers(double t) const {
    return !samples_.empty() && t >= samples_.front().t && t <= samples_.back().t;
  }

  /// Body-frame angular velocity from the two samples bracketing t:
  /// first-order log-map of the relative rotation over the sample gap.
  Eigen::Vector3d angular_velocity(double t) const {
    const auto [a, b] = bracket(t);
    const double dt = samples_[b].t - samples_[a].t;
    if (dt <= 0.0)
      throw std::runtime_error("PoseTrack: degenerate (duplicate-timestamp) interval");
    const Eigen::Quaterniond rel = samples_[a].rotation.conjugate() * samples_[b].rotation;
    return quaternion_log(rel) / dt;
  }

  /// Slerp rotation + lerp translation between the bracketing samples.
  PoseSample interpolate(double t) const {
    const auto [a, b] = bracket(t);
    const PoseSample& pa = samples_[a];
    const PoseSample& pb = samples_[b];
    if (a == b) return pa;
    const double dt = pb.t - pa.t;
    if (dt <= 0.0)
      throw std::runtime_error("PoseTrack: degenerate (duplicate-timestamp) interval");
    const double u = (t - pa.t) / dt;
    PoseSample out;
    out.t = t;
    out.rotation = pa.rotation.slerp(u, pb.rotation);
    out.translation = (1.0 - u) * pa.translation + u * pb.translation;
    return out;
  }

 private:
  std::vector<PoseSample> samples_;

  std::pair<size_t, size_t> bracket(double t) const {
    if (samples_.size() < 2 || t < samples_.front().t || t > samples_.back().t)
      throw std::out_of_range("PoseTrack: query time outside the pose track");
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double v, const PoseSample& s) { return v < s.t; });
    size_t hi = size_t(it - samples_.begin());
    if (hi == samples_.size()) --hi;
    if (hi == 0) ++hi;
    return {hi - 1, hi};
  }
};

}  // namespace evfocus
