#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "evfocus/events.hpp"
#include "evfocus/image.hpp"
#include "evfocus/warp.hpp"

namespace evfocus {

enum class SplatKind { GaussianTruncated, Bilinear };

struct IweOptions {
  bool use_polarity = false;  // b_k = p_k instead of b_k = 1
  SplatKind splat = SplatKind::GaussianTruncated;
  double epsilon = 1.0;  // splat kernel sigma, pixels
  int radius = 3;        // truncation radius, pixels
  int polarity_select = 0;  // +1/-1: accumulate only that polarity with b_k = 1

  void validate() const {
    if (epsilon <= 0.0) throw std::invalid_argument("IweOptions: epsilon must be > 0");
    if (radius < int(std::ceil(2.0 * epsilon)))
      throw std::invalid_argument("IweOptions: radius must be >= ceil(2*epsilon)");
  }
};

/// Accumulation target. A full sensor frame by default; a patch when origin
/// and size describe a sub-rectangle (events are warped in sensor coordinates
/// and shifted into the patch).
struct IweFrame {
  int width = 0;
  int height = 0;
  double origin_x = 0.0;
  double origin_y = 0.0;
};

struct IweResult {
  ImageGrid image;
  size_t retained = 0;  // events that landed inside the frame
  size_t total = 0;
};

struct IweWithGradient {
  ImageGrid image;
  std::vector<ImageGrid> grads;  // M per-parameter derivative images dI/dtheta_j
  size_t retained = 0;
  size_t total = 0;
};

struct TimestampImage {
  ImageGrid mean_t;  // per-pixel average timestamp (window start = 0), 0 where empty
  ImageGrid count;
};

namespace detail {

/// 1-D taps of the unit-mass splat kernel around coordinate u, and their exact
/// derivatives with respect to u. The Gaussian is truncated with C1 contact
/// (value and slope both reach zero at radius + 0.5), so the deposited mass is
/// smooth as the stencil center snaps between pixels; taps are renormalized to
/// sum exactly 1.
struct SplatTaps {
  int center = 0;
  double w[16];
  double dw[16];
};

inline void splat_taps(double u, double epsilon, int radius, bool with_derivative,
                       SplatTaps& out) {
  const int n = 2 * radius + 1;
  const int c = int(std::lround(u));
  out.center = c;
  const double inv_e2 = 1.0 / (epsilon * epsilon);
  const double R = radius + 0.5;
  const double gr = std::exp(-0.5 * R * R * inv_e2);
  // g(d) - gr (1 + (R^2 - d^2) / (2 eps^2)): zero value and slope at |d| = R
  double g[16], dg[16];
  double s = 0.0, ds = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = double(c - radius + i) - u;
    const double raw = std::exp(-0.5 * d * d * inv_e2);
    g[i] = raw - gr * (1.0 + 0.5 * (R * R - d * d) * inv_e2);
    if (g[i] < 0.0) g[i] = 0.0;  // guards fp underflow at the exact boundary
    s += g[i];
    if (with_derivative) {
      dg[i] = (raw - gr) * d * inv_e2;
      ds += dg[i];
    }
  }
  const double inv_s = 1.0 / s;
  for (int i = 0; i < n; ++i) out.w[i] = g[i] * inv_s;
  if (with_derivative)
    for (int i = 0; i < n; ++i) out.dw[i] = (dg[i] - out.w[i] * ds) * inv_s;
}

}  // namespace detail

/// Image of warped events: each retained event deposits b_k times a unit-mass
/// splat centered at its warped position. WarpFn: (const Event&, bool) -> WarpedEvent.
template <class WarpFn>
IweResult accumulate_iwe(const EventWindow& window, WarpFn&& warp, const IweFrame& frame,
                         const IweOptions& options) {
  options.validate();
  IweResult out;
  out.image = ImageGrid(frame.width, frame.height);
  out.total = window.events.size();
  detail::SplatTaps tx, ty;
  const int r = options.radius;
  for (const Event& e : window.events) {
    if (options.polarity_select != 0 && e.polarity != options.polarity_select) continue;
    const WarpedEvent we = warp(e, false);
    if (!we.in_bounds) continue;
    const double ux = we.x.x() - frame.origin_x;
    const double uy = we.x.y() - frame.origin_y;
    if (ux < 0.0 || ux > frame.width - 1.0 || uy < 0.0 || uy > frame.height - 1.0) continue;
    ++out.retained;
    const double b =
        options.polarity_select != 0 ? 1.0 : (options.use_polarity ? double(e.polarity) : 1.0);
    if (options.splat == SplatKind::Bilinear) {
      const int x0 = int(std::floor(ux)), y0 = int(std::floor(uy));
      const double ax = ux - x0, ay = uy - y0;
      const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay,
                   w11 = ax * ay;
      if (out.image.contains(x0, y0)) out.image.at(x0, y0) += b * w00;
      if (out.image.contains(x0 + 1, y0)) out.image.at(x0 + 1, y0) += b * w10;
      if (out.image.contains(x0, y0 + 1)) out.image.at(x0, y0 + 1) += b * w01;
      if (out.image.contains(x0 + 1, y0 + 1)) out.image.at(x0 + 1, y0 + 1) += b * w11;
      continue;
    }
    detail::splat_taps(ux, options.epsilon, r, false, tx);
    detail::splat_taps(uy, options.epsilon, r, false, ty);
    for (int j = 0; j < 2 * r + 1; ++j) {
      const int py = ty.center - r + j;
      if (py < 0 || py >= frame.height) continue;
      const double by = b * ty.w[j];
      double* row = &out.image.at(0, py);
      for (int i = 0; i < 2 * r + 1; ++i) {
        const int px = tx.center - r + i;
        if (px < 0 || px >= frame.width) continue;
        row[px] += by * tx.w[i];
      }
    }
  }
  return out;
}

/// IWE plus the M per-parameter gradient images: the exact derivative of the
/// deposited splat mass, dI/dtheta_j(x) = sum_k b_k dK(x - x'_k)/dx' . dx'_k/dtheta_j.
/// Requires the Gaussian splat (the bilinear kernel has no smooth gradient).
template <class WarpFn>
IweWithGradient accumulate_iwe_with_gradient(const EventWindow& window, WarpFn&& warp,
                                             int num_params, const IweFrame& frame,
                                             const IweOptions& options) {
  options.validate();
  if (options.splat != SplatKind::GaussianTruncated)
    throw std::invalid_argument("accumulate_iwe_with_gradient: Gaussian splat required");
  if (num_params < 1 || num_params > 3)
    throw std::invalid_argument("accumulate_iwe_with_gradient: bad parameter count");
  IweWithGradient out;
  out.image = ImageGrid(frame.width, frame.height);
  out.grads.assign(size_t(num_params), ImageGrid(frame.width, frame.height));
  out.total = window.events.size();
  detail::SplatTaps tx, ty;
  const int r = options.radius;
  for (const Event& e : window.events) {
    if (options.polarity_select != 0 && e.polarity != options.polarity_select) continue;
    const WarpedEvent we = warp(e, true);
    if (!we.in_bounds) continue;
    const double ux = we.x.x() - frame.origin_x;
    const double uy = we.x.y() - frame.origin_y;
    if (ux < 0.0 || ux > frame.width - 1.0 || uy < 0.0 || uy > frame.height - 1.0) continue;
    ++out.retained;
    const double b =
        options.polarity_select != 0 ? 1.0 : (options.use_polarity ? double(e.polarity) : 1.0);
    detail::splat_taps(ux, options.epsilon, r, true, tx);
    detail::splat_taps(uy, options.epsilon, r, true, ty);
    for (int j = 0; j < 2 * r + 1; ++j) {
      const int py = ty.center - r + j;
      if (py < 0 || py >= frame.height) continue;
      for (int i = 0; i < 2 * r + 1; ++i) {
        const int px = tx.center - r + i;
        if (px < 0 || px >= frame.width) continue;
        out.image.at(px, py) += b * tx.w[i] * ty.w[j];
        const double kx = b * tx.dw[i] * ty.w[j];  // dK/d(x')
        const double ky = b * tx.w[i] * ty.dw[j];  // dK/d(y')
        for (int m = 0; m < num_params; ++m)
          out.grads[size_t(m)].at(px, py) += kx * we.jac(0, m) + ky * we.jac(1, m);
      }
    }
  }
  return out;
}

/// Per-pixel average timestamp of warped events (nearest-pixel binning),
/// timestamps re-zeroed to the window start.
template <class WarpFn>
TimestampImage timestamp_image(const EventWindow& window, WarpFn&& warp, const IweFrame& frame,
                               const IweOptions& options) {
  options.validate();
  TimestampImage out;
  out.mean_t = ImageGrid(frame.width, frame.height);
  out.count = ImageGrid(frame.width, frame.height);
  const double t0 = window.t_begin();
  for (const Event& e : window.events) {
    if (options.polarity_select != 0 && e.polarity != options.polarity_select) continue;
    const WarpedEvent we = warp(e, false);
    if (!we.in_bounds) continue;
    const int px = int(std::lround(we.x.x() - frame.origin_x));
    const int py = int(std::lround(we.x.y() - frame.origin_y));
    if (!out.count.contains(px, py)) continue;
    out.mean_t.at(px, py) += e.t - t0;
    out.count.at(px, py) += 1.0;
  }
  for (size_t i = 0; i < out.mean_t.pixels(); ++i)
    if (out.count.values[i] > 0.0) out.mean_t.values[i] /= out.count.values[i];
  return out;
}

/// Convenience overloads binding a WarpModel and parameter vector.

inline IweResult accumulate_iwe(const EventWindow& window, const WarpModel& model,
                                const WarpParams& params, const IweFrame& frame,
                                const IweOptions& options) {
  return accumulate_iwe(
      window, [&](const Event& e, bool j) { return model.apply(e, window.t_ref, params, j); },
      frame, options);
}

inline IweWithGradient accumulate_iwe_with_gradient(const EventWindow& window,
                                                    const WarpModel& model,
                                                    const WarpParams& params,
                                                    const IweFrame& frame,
                                                    const IweOptions& options) {
  return accumulate_iwe_with_gradient(
      window, [&](const Event& e, bool j) { return model.apply(e, window.t_ref, params, j); },
      params.dim(), frame, options);
}

inline TimestampImage timestamp_image(const EventWindow& window, const WarpModel& model,
                                      const WarpParams& params, const IweFrame& frame,
                                      const IweOptions& options) {
  return timestamp_image(
      window, [&](const Event& e, bool j) { return model.apply(e, window.t_ref, params, j); },
      frame, options);
}

}  // namespace evfocus
