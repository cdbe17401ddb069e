#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "evfocus/events.hpp"
#include "evfocus/geometry.hpp"
#include "evfocus/iwe.hpp"
#include "evfocus/poses.hpp"
#include "evfocus/warp.hpp"

namespace evfocus {

struct SceneElement {
  Eigen::Vector2d position;  // pixel coordinates in the reference (t = 0) view
  std::int8_t sign = 1;      // contrast sign = emitted polarity
  double rate_scale = 1.0;   // per-element multiplier on the scene event rate
};

/// Ideal moving-pattern scene: events are sampled on the true point
/// trajectories (polarity = element contrast sign), rather than simulated
/// through a brightness-threshold model.
struct SceneSpec {
  std::vector<SceneElement> elements;
  WarpKind motion = WarpKind::Flow;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();      // rotation scenario, rad/s
  Eigen::Vector2d flow = Eigen::Vector2d::Zero();       // flow scenario, px/s
  double plane_depth = 1.0;                             // depth scenario: plane at Z*, m
  Eigen::Vector3d camera_velocity = Eigen::Vector3d::Zero();  // depth scenario, m/s
  double duration = 0.1;       // s
  double rate_per_element = 100.0;  // events / s / element
  double jitter_xy = 0.0;      // coordinate noise sigma, px
  double jitter_t = 0.0;       // timestamp noise sigma, s
  double outlier_fraction = 0.0;

  void validate() const {
    if (duration <= 0.0) throw std::invalid_argument("SceneSpec: duration must be > 0");
    if (rate_per_element < 0.0) throw std::invalid_argument("SceneSpec: rate must be >= 0");
    if (outlier_fraction < 0.0 || outlier_fraction >= 1.0)
      throw std::invalid_argument("SceneSpec: outlier fraction must be in [0, 1)");
  }
};

struct SynthResult {
  EventWindow window;
  WarpParams truth;
  std::vector<PoseSample> poses;  // 200 Hz track (depth scenario; identity otherwise)
};

namespace detail {

inline double rand_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double rand_gauss(std::mt19937_64& rng) {
  // Box-Muller; deterministic across platforms unlike std::normal_distribution
  double u1 = rand_uniform(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = rand_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

/// Grid-of-points helper for test scenes.
inline std::vector<SceneElement> grid_pattern(const CameraGeometry& g, int nx, int ny,
                                              double margin_px) {
  std::vector<SceneElement> out;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      SceneElement e;
      e.position.x() = margin_px + (g.width - 1 - 2 * margin_px) * double(ix) / double(nx - 1);
      e.position.y() = margin_px + (g.height - 1 - 2 * margin_px) * double(iy) / double(ny - 1);
      e.sign = ((ix + iy) % 2 == 0) ? 1 : -1;
      out.push_back(e);
    }
  return out;
}

/// Natural-texture proxy: random element positions with heterogeneous rates
/// (log-uniform over about a decade), so the compensated image has dominant
/// peaks the way real edge maps do.
inline std::vector<SceneElement> random_pattern(const CameraGeometry& g, int count,
                                                double margin_px, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SceneElement> out;
  for (int i = 0; i < count; ++i) {
    SceneElement e;
    e.position.x() = margin_px + (g.width - 1 - 2 * margin_px) * detail::rand_uniform(rng);
    e.position.y() = margin_px + (g.height - 1 - 2 * margin_px) * detail::rand_uniform(rng);
    e.sign = detail::rand_uniform(rng) < 0.5 ? std::int8_t(-1) : std::int8_t(1);
    e.rate_scale = std::pow(10.0, detail::rand_uniform(rng) - 0.5);  // 0.32x .. 3.2x
    out.push_back(e);
  }
  return out;
}

/// Deterministic event generation along the true trajectories. The emitted
/// stream inverts exactly under the matching warp at the true parameters.
inline SynthResult gen_events(const SceneSpec& scene, const CameraGeometry& geometry,
                              std::uint64_t seed) {
  scene.validate();
  std::mt19937_64 rng(seed);
  SynthResult out;

  switch (scene.motion) {
    case WarpKind::Rotation: out.truth = WarpParams::rotation(scene.omega); break;
    case WarpKind::Flow: out.truth = WarpParams::flow_of(scene.flow); break;
    case WarpKind::Depth: out.truth = WarpParams::depth_of(scene.plane_depth); break;
  }

  // 200 Hz camera track consistent with the scene motion: constant body rate
  // for rotation scenes, linear translation for depth scenes
  const int pose_count = std::max(2, int(std::ceil(scene.duration * 200.0)) + 1);
  for (int i = 0; i < pose_count; ++i) {
    PoseSample p;
    p.t = scene.duration * double(i) / double(pose_count - 1);
    if (scene.motion == WarpKind::Depth) p.translation = p.t * scene.camera_velocity;
    if (scene.motion == WarpKind::Rotation) {
      const double angle = (p.t * scene.omega).norm();
      if (angle > 0.0)
        p.rotation = Eigen::Quaterniond(
            Eigen::AngleAxisd(angle, (p.t * scene.omega).normalized()));
    }
    out.poses.push_back(p);
  }

  std::vector<Event> events;
  for (const SceneElement& el : scene.elements) {
    const size_t per_element =
        size_t(std::llround(scene.rate_per_element * el.rate_scale * scene.duration));
    const Eigen::Vector3d bearing0 = geometry.bearing_at(el.position.x(), el.position.y());
    const Eigen::Vector3d world_point = scene.plane_depth * bearing0;  // depth scenario
    for (size_t k = 0; k < per_element; ++k) {
      double t = scene.duration * detail::rand_uniform(rng);
      if (scene.jitter_t > 0.0) {
        t += scene.jitter_t * detail::rand_gauss(rng);
        t = std::clamp(t, 0.0, scene.duration);
      }
      Eigen::Vector2d pos;
      switch (scene.motion) {
        case WarpKind::Flow: pos = el.position + t * scene.flow; break;
        case WarpKind::Rotation: {
          // camera at body rate w: bearings evolve as exp(-t w^) b0
          const Eigen::Vector3d b = exp_so3(-t * scene.omega) * bearing0;
          if (b.z() <= 0.0) continue;
          pos = geometry.distorted_pixel({b.x() / b.z(), b.y() / b.z()});
          break;
        }
        case WarpKind::Depth: {
          const Eigen::Vector3d p_cam = world_point - t * scene.camera_velocity;
          if (p_cam.z() <= 0.0) continue;
          pos = geometry.distorted_pixel({p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z()});
          break;
        }
      }
      if (scene.jitter_xy > 0.0) {
        pos.x() += scene.jitter_xy * detail::rand_gauss(rng);
        pos.y() += scene.jitter_xy * detail::rand_gauss(rng);
      }
      if (!geometry.in_sensor(pos.x(), pos.y())) continue;
      events.push_back({t, pos.x(), pos.y(), el.sign});
    }
  }

  if (scene.outlier_fraction > 0.0 && !events.empty()) {
    const size_t n_out = size_t(
        std::llround(double(events.size()) * scene.outlier_fraction / (1.0 - scene.outlier_fraction)));
    for (size_t k = 0; k < n_out; ++k) {
      Event e;
      e.t = scene.duration * detail::rand_uniform(rng);
      e.x = (geometry.width - 1) * detail::rand_uniform(rng);
      e.y = (geometry.height - 1) * detail::rand_uniform(rng);
      e.polarity = detail::rand_uniform(rng) < 0.5 ? std::int8_t(-1) : std::int8_t(1);
      events.push_back(e);
    }
  }

  if (events.empty()) throw std::runtime_error("gen_events: all events fell out of bounds");
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
  out.window = make_window(std::move(events));
  return out;
}

/// 1-D two-event construction: two unit-mass splat kernels (sigma = 1 px)
/// centered dx apart on a 1-D grid, the profile behind the area-monotonicity
/// argument (smaller dx, smaller support).
inline ImageGrid gen_two_event_1d(double dx, int width = 32) {
  if (dx < 0.0) throw std::invalid_argument("gen_two_event_1d: dx must be >= 0");
  ImageGrid profile(width, 1);
  const double c1 = 0.5 * (width - 1) - 0.5 * dx;
  const double c2 = c1 + dx;
  detail::SplatTaps taps;
  for (double c : {c1, c2}) {
    detail::splat_taps(c, 1.0, 3, false, taps);
    for (int i = 0; i < 7; ++i) {
      const int px = taps.center - 3 + i;
      if (px >= 0 && px < width) profile.at(px, 0) += taps.w[i];
    }
  }
  return profile;
}

}  // namespace evfocus
