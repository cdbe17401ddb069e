#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>

#include "evfocus/events.hpp"
#include "evfocus/geometry.hpp"
#include "evfocus/poses.hpp"

namespace evfocus {

enum class WarpKind { Rotation, Flow, Depth };

inline int warp_dim(WarpKind k) {
  switch (k) {
    case WarpKind::Rotation: return 3;
    case WarpKind::Flow: return 2;
    case WarpKind::Depth: return 1;
  }
  return 0;
}

/// Trajectory parameter vector: angular velocity (rad/s), optical flow (px/s)
/// or scene depth (m), depending on the warp kind.
struct WarpParams {
  WarpKind kind = WarpKind::Flow;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector2d flow = Eigen::Vector2d::Zero();
  double depth = 1.0;

  static WarpParams rotation(const Eigen::Vector3d& w) {
    WarpParams p;
    p.kind = WarpKind::Rotation;
    p.omega = w;
    return p;
  }
  static WarpParams flow_of(const Eigen::Vector2d& v) {
    WarpParams p;
    p.kind = WarpKind::Flow;
    p.flow = v;
    return p;
  }
  static WarpParams depth_of(double z) {
    if (z <= 0.0) throw std::invalid_argument("WarpParams: depth must be > 0");
    WarpParams p;
    p.kind = WarpKind::Depth;
    p.depth = z;
    return p;
  }

  int dim() const { return warp_dim(kind); }

  Eigen::VectorXd to_vector() const {
    switch (kind) {
      case WarpKind::Rotation: return omega;
      case WarpKind::Flow: return flow;
      case WarpKind::Depth: {
        Eigen::VectorXd v(1);
        v << depth;
        return v;
      }
    }
    return {};
  }

  static WarpParams from_vector(WarpKind k, const Eigen::VectorXd& v) {
    if (v.size() != warp_dim(k)) throw std::invalid_argument("WarpParams: dimension mismatch");
    WarpParams p;
    p.kind = k;
    switch (k) {
      case WarpKind::Rotation: p.omega = v; break;
      case WarpKind::Flow: p.flow = v; break;
      case WarpKind::Depth: p.depth = v[0]; break;
    }
    return p;
  }
};

/// Warped event: sub-pixel position, optional 2xM position Jacobian, and a
/// validity flag (false when the point leaves the view, e.g. behind the camera).
struct WarpedEvent {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
  bool in_bounds = true;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Rodrigues' formula, exact for any angle.
inline Eigen::Matrix3d exp_so3(const Eigen::Vector3d& phi) {
  const double th = phi.norm();
  const Eigen::Matrix3d S = skew(phi);
  if (th < 1e-9) return Eigen::Matrix3d::Identity() + S + 0.5 * S * S;
  return Eigen::Matrix3d::Identity() + (std::sin(th) / th) * S +
         ((1.0 - std::cos(th)) / (th * th)) * S * S;
}

/// Right Jacobian of SO(3): exp((phi + d)^) ~ exp(phi^) exp((Jr(phi) d)^).
inline Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi) {
  const double th = phi.norm();
  const Eigen::Matrix3d S = skew(phi);
  if (th < 1e-6) return Eigen::Matrix3d::Identity() - 0.5 * S + (1.0 / 6.0) * S * S;
  const double th2 = th * th;
  return Eigen::Matrix3d::Identity() - ((1.0 - std::cos(th)) / th2) * S +
         ((th - std::sin(th)) / (th2 * th)) * S * S;
}

/// Rotational warp: undistort to a bearing, transport by exp((t - t_ref) w^)
/// (the compensation of a camera rotating at body rate w), reproject through
/// the pinhole model (no re-distortion).
inline WarpedEvent warp_rotation(const Event& e, double t_ref, const Eigen::Vector3d& omega,
                                 const CameraGeometry& geom, bool with_jacobian) {
  WarpedEvent out;
  const double dt = e.t - t_ref;
  const Eigen::Vector3d b = geom.bearing_of(e.x, e.y);
  const Eigen::Vector3d phi = dt * omega;
  const Eigen::Matrix3d R = exp_so3(phi);
  const Eigen::Vector3d br = R * b;
  const auto px = geom.project(br);
  if (!px) {
    out.in_bounds = false;
    return out;
  }
  out.x = *px;
  out.in_bounds = geom.in_sensor(out.x.x(), out.x.y());
  if (with_jacobian) {
    // d(br)/d(omega) = -dt * R * skew(b) * Jr(phi)
    const Eigen::Matrix3d dbr_domega = -dt * R * skew(b) * so3_right_jacobian(phi);
    out.jac = geom.projection_jacobian(br) * dbr_domega;
  }
  return out;
}

/// Patch optical-flow warp: x' = x - (t - t_ref) v.
inline WarpedEvent warp_flow(const Event& e, double t_ref, const Eigen::Vector2d& v,
                             bool with_jacobian) {
  WarpedEvent out;
  const double dt = e.t - t_ref;
  out.x = Eigen::Vector2d(e.x, e.y) - dt * v;
  if (with_jacobian) {
    out.jac.setZero();
    out.jac(0, 0) = -dt;
    out.jac(1, 1) = -dt;
  }
  return out;
}

/// Plane-sweep warp: back-project the event pixel to depth Z along its viewing
/// ray, move through the relative pose into the reference camera, reproject.
inline WarpedEvent warp_depth(const Event& e, const PoseSample& pose_at_t,
                              const PoseSample& ref_pose, double Z, const CameraGeometry& geom,
                              bool with_jacobian) {
  if (Z <= 0.0) throw std::invalid_argument("warp_depth: Z must be > 0");
  WarpedEvent out;
  const Eigen::Vector3d b = geom.bearing_of(e.x, e.y);
  const Eigen::Matrix3d R_e = pose_at_t.rotation.toRotationMatrix();
  const Eigen::Matrix3d R_r = ref_pose.rotation.toRotationMatrix();
  const Eigen::Vector3d p_world = R_e * (Z * b) + pose_at_t.translation;
  const Eigen::Vector3d p_ref = R_r.transpose() * (p_world - ref_pose.translation);
  const auto px = geom.project(p_ref);
  if (!px) {
    out.in_bounds = false;
    return out;
  }
  out.x = *px;
  out.in_bounds = geom.in_sensor(out.x.x(), out.x.y());
  if (with_jacobian) {
    const Eigen::Vector3d dp_dz = R_r.transpose() * (R_e * b);
    out.jac.setZero();
    out.jac.col(0) = geom.projection_jacobian(p_ref) * dp_dz;
  }
  return out;
}

/// Uniform warp front-end used by the IWE accumulation and the optimizer.
/// Rotation and Depth require a geometry; Depth additionally needs the pose
/// track (interpolated at event time) and the reference pose.
class WarpModel {
 public:
  static WarpModel rotation(const CameraGeometry& g) {
    WarpModel m;
    m.kind_ = WarpKind::Rotation;
    m.geom_ = &g;
    return m;
  }
  static WarpModel flow() {
    WarpModel m;
    m.kind_ = WarpKind::Flow;
    return m;
  }
  static WarpModel depth(const CameraGeometry& g, const PoseTrack& track, PoseSample ref_pose) {
    WarpModel m;
    m.kind_ = WarpKind::Depth;
    m.geom_ = &g;
    m.track_ = &track;
    m.ref_pose_ = std::move(ref_pose);
    return m;
  }

  WarpKind kind() const { return kind_; }
  int dim() const { return warp_dim(kind_); }

  WarpedEvent apply(const Event& e, double t_ref, const WarpParams& p, bool with_jacobian) const {
    if (p.kind != kind_) throw std::invalid_argument("WarpModel: parameter kind mismatch");
    switch (kind_) {
      case WarpKind::Rotation: return warp_rotation(e, t_ref, p.omega, *geom_, with_jacobian);
      case WarpKind::Flow: return warp_flow(e, t_ref, p.flow, with_jacobian);
      case WarpKind::Depth: {
        if (!track_->covers(e.t)) {
          WarpedEvent out;
          out.in_bounds = false;
          return out;
        }
        return warp_depth(e, track_->interpolate(e.t), ref_pose_, p.depth, *geom_, with_jacobian);
      }
    }
    return {};
  }

 private:
  WarpKind kind_ = WarpKind::Flow;
  const CameraGeometry* geom_ = nullptr;
  const PoseTrack* track_ = nullptr;
  PoseSample ref_pose_;
};

}  // namespace evfocus
