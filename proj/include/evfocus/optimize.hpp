#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "evfocus/iwe.hpp"
#include "evfocus/losses.hpp"
#include "evfocus/warp.hpp"

namespace evfocus {

enum class GradientMode { Analytic, FiniteDifference };

/// Focus objective f(theta): warp the window, accumulate the IWE, score it.
/// Minimize-sense losses are negated so the optimizer always maximizes.
class Objective {
 public:
  Objective(const EventWindow& window, WarpModel warp, LossSpec loss, IweFrame frame,
            IweOptions options, GradientMode mode = GradientMode::Analytic, double fd_step = 1e-4)
      : window_(&window), warp_(std::move(warp)), loss_(loss), frame_(frame), options_(options),
        mode_(mode), fd_step_(fd_step) {
    if (loss_.kind == LossKind::Area) options_.validate();
  }

  int dim() const { return warp_.dim(); }
  WarpKind warp_kind() const { return warp_.kind(); }
  const LossSpec& loss() const { return loss_; }
  double orientation() const { return loss_.sense() == Sense::Minimize ? -1.0 : 1.0; }
  bool analytic_available() const {
    return mode_ == GradientMode::Analytic && has_analytic_gradient(loss_.kind);
  }

  /// Raw loss value at theta (its own sign).
  double raw_value(const Eigen::VectorXd& theta) const {
    const WarpParams p = WarpParams::from_vector(warp_.kind(), theta);
    if (loss_.kind == LossKind::MeanTimestamp)
      return mean_timestamp_loss(timestamp_image(*window_, warp_, p, frame_, options_));
    if (loss_.kind == LossKind::Area && options_.use_polarity) {
      IweOptions o = options_;
      o.polarity_select = +1;
      const double pos = evaluate_loss(accumulate_iwe(*window_, warp_, p, frame_, o).image, loss_);
      o.polarity_select = -1;
      const double neg = evaluate_loss(accumulate_iwe(*window_, warp_, p, frame_, o).image, loss_);
      return pos + neg;
    }
    return evaluate_loss(accumulate_iwe(*window_, warp_, p, frame_, options_).image, loss_);
  }

  /// Oriented value (always maximized). Degenerate images (constant IWE, empty
  /// support) score -inf so line-search probes back away instead of throwing.
  double value(const Eigen::VectorXd& theta) const {
    try {
      return orientation() * raw_value(theta);
    } catch (const std::domain_error&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  /// Oriented gradient; analytic via the IWE gradient images when available.
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    if (analytic_available()) {
      const WarpParams p = WarpParams::from_vector(warp_.kind(), theta);
      if (loss_.kind == LossKind::Area && options_.use_polarity) {
        IweOptions o = options_;
        o.polarity_select = +1;
        Eigen::VectorXd g =
            evaluate_loss_gradient(accumulate_iwe_with_gradient(*window_, warp_, p, frame_, o),
                                   loss_)
                .gradient;
        o.polarity_select = -1;
        g += evaluate_loss_gradient(accumulate_iwe_with_gradient(*window_, warp_, p, frame_, o),
                                    loss_)
                 .gradient;
        return orientation() * g;
      }
      const auto iwg = accumulate_iwe_with_gradient(*window_, warp_, p, frame_, options_);
      return orientation() * evaluate_loss_gradient(iwg, loss_).gradient;
    }
    return finite_diff_gradient([this](const Eigen::VectorXd& t) { return value(t); }, theta,
                                fd_step_);
  }

  /// Central finite differences of an arbitrary scalar function.
  static Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                              const Eigen::VectorXd& theta, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
    Eigen::VectorXd g(theta.size());
    Eigen::VectorXd probe = theta;
    for (int i = 0; i < theta.size(); ++i) {
      probe[i] = theta[i] + h;
      const double fp = f(probe);
      probe[i] = theta[i] - h;
      const double fm = f(probe);
      probe[i] = theta[i];
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_diff_gradient: non-finite objective at probe");
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  }

 private:
  const EventWindow* window_;
  WarpModel warp_;
  LossSpec loss_;
  IweFrame frame_;
  IweOptions options_;
  GradientMode mode_;
  double fd_step_;
};

enum class CgVariant { PolakRibierePlus, FletcherReeves };

struct OptimConfig {
  CgVariant variant = CgVariant::PolakRibierePlus;
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  double step_tolerance = 1e-9;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;  // in the parameter's natural units
  int max_line_search = 40;
};

struct OptimResult {
  Eigen::VectorXd theta;
  double value = 0.0;  // oriented objective at theta
  int iterations = 0;
  int gradient_evaluations = 0;
  bool converged = false;
  std::vector<std::pair<Eigen::VectorXd, double>> trace;  // per-iteration (theta, value)
};

/// Nonlinear conjugate gradient ascent with backtracking Armijo line search.
/// Restarts to steepest ascent every dim(theta) iterations, on non-ascent
/// directions, and (PR+) on negative beta.
template <class Fn, class GradFn>
OptimResult maximize(Fn&& f, GradFn&& grad, const Eigen::VectorXd& theta_init,
                     const OptimConfig& config) {
  OptimResult res;
  res.theta = theta_init;
  const int M = int(theta_init.size());
  double fx = f(res.theta);
  if (!std::isfinite(fx)) {
    std::ostringstream ss;
    ss << "maximize: non-finite objective at theta = [" << res.theta.transpose() << "]";
    throw std::runtime_error(ss.str());
  }
  res.trace.emplace_back(res.theta, fx);
  Eigen::VectorXd g = grad(res.theta);
  ++res.gradient_evaluations;
  Eigen::VectorXd d = g;

  for (int it = 0; it < config.max_iterations; ++it) {
    res.iterations = it;
    if (g.norm() < config.gradient_tolerance) {
      res.converged = true;
      break;
    }
    double gd = g.dot(d);
    if (gd <= 0.0) {  // not an ascent direction: restart
      d = g;
      gd = g.dot(g);
    }
    // first trial moves initial_step in parameter units, then backtracks
    double alpha = config.initial_step / d.norm();
    double f_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    int ls = 0;
    for (; ls < config.max_line_search; ++ls) {
      f_new = f(res.theta + alpha * d);
      if (std::isfinite(f_new) && f_new >= fx + config.armijo_c * alpha * gd) {
        accepted = true;
        break;
      }
      alpha *= config.shrink;
    }
    if (!accepted) {
      res.converged = g.norm() < config.gradient_tolerance;
      break;
    }
    if (ls == 0) {  // accepted at the first trial: expand while it keeps paying
      double f_beyond = -std::numeric_limits<double>::infinity();
      for (int grow = 0; grow < config.max_line_search; ++grow) {
        f_beyond = f(res.theta + (2.0 * alpha) * d);
        if (!std::isfinite(f_beyond) || f_beyond < f_new) break;
        alpha *= 2.0;
        f_new = f_beyond;
        f_beyond = -std::numeric_limits<double>::infinity();
      }
      // parabola through (0, fx), (alpha, f_new), (2 alpha, f_beyond)
      if (std::isfinite(f_beyond)) {
        const double denom = 2.0 * f_new - f_beyond - fx;
        if (denom > 0.0) {
          const double s = alpha * (4.0 * f_new - f_beyond - 3.0 * fx) / (2.0 * denom);
          if (s > 0.0 && s < 2.0 * alpha) {
            const double f_s = f(res.theta + s * d);
            if (std::isfinite(f_s) && f_s > f_new) {
              alpha = s;
              f_new = f_s;
            }
          }
        }
      }
    }
    const Eigen::VectorXd step = alpha * d;
    res.theta += step;
    fx = f_new;
    res.trace.emplace_back(res.theta, fx);
    Eigen::VectorXd g_new = grad(res.theta);
    ++res.gradient_evaluations;

    double beta = 0.0;
    if ((it + 1) % M != 0) {
      const double denom = g.dot(g);
      if (denom > 0.0) {
        if (config.variant == CgVariant::PolakRibierePlus)
          beta = std::max(0.0, g_new.dot(g_new - g) / denom);
        else
          beta = g_new.dot(g_new) / denom;
      }
    }
    d = g_new + beta * d;
    g = g_new;
    res.iterations = it + 1;
    if (step.norm() < config.step_tolerance) {
      res.converged = true;
      break;
    }
  }
  res.value = fx;
  return res;
}

inline OptimResult maximize(const Objective& objective, const Eigen::VectorXd& theta_init,
                            const OptimConfig& config) {
  if (theta_init.size() != objective.dim())
    throw std::invalid_argument("maximize: theta dimension mismatch");
  return maximize([&](const Eigen::VectorXd& t) { return objective.value(t); },
                  [&](const Eigen::VectorXd& t) { return objective.gradient(t); }, theta_init,
                  config);
}

// ---------------------------------------------------------------------------
// Exhaustive evaluations.

struct GridEval {
  int steps = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double half_span = 0.0;
  std::vector<double> values;  // row-major, row = vy index, col = vx index
  int best_col = 0, best_row = 0;

  double value_at(int col, int row) const { return values[size_t(row) * steps + col]; }
  Eigen::Vector2d param_at(int col, int row) const {
    const double step = 2.0 * half_span / double(steps - 1);
    return {center.x() - half_span + col * step, center.y() - half_span + row * step};
  }
};

/// Dense evaluation of a 2-D objective on a uniform grid; the best cell is the
/// extremum of the stated sense with first-cell (row-major) tie break.
template <class Fn>
GridEval grid_eval_2d(Fn&& f, const Eigen::Vector2d& center, double half_span, int steps,
                      Sense sense = Sense::Maximize) {
  if (steps < 2) throw std::invalid_argument("grid_eval_2d: steps must be >= 2");
  GridEval out;
  out.steps = steps;
  out.center = center;
  out.half_span = half_span;
  out.values.resize(size_t(steps) * steps);
  const double step = 2.0 * half_span / double(steps - 1);
  for (int row = 0; row < steps; ++row)
    for (int col = 0; col < steps; ++col) {
      const Eigen::Vector2d v(center.x() - half_span + col * step,
                              center.y() - half_span + row * step);
      out.values[size_t(row) * steps + col] = f(v);
    }
  double best = out.values[0];
  for (int row = 0; row < steps; ++row)
    for (int col = 0; col < steps; ++col) {
      const double v = out.value_at(col, row);
      const bool better = sense == Sense::Maximize ? v > best : v < best;
      if (better) {
        best = v;
        out.best_col = col;
        out.best_row = row;
      }
    }
  return out;
}

inline GridEval grid_eval_2d(const Objective& objective, const Eigen::Vector2d& center,
                             double half_span, int steps) {
  if (objective.warp_kind() != WarpKind::Flow)
    throw std::invalid_argument("grid_eval_2d: flow warp required");
  // raw loss values on the grid; extremum per the loss sense
  return grid_eval_2d([&](const Eigen::Vector2d& v) { return objective.raw_value(v); }, center,
                      half_span, steps, objective.loss().sense());
}

enum class DepthSpacing { Linear, InverseDepth };

struct FocalCurve {
  std::vector<double> depths;
  std::vector<double> values;      // raw loss values
  std::vector<double> normalized;  // min-max scaled to [0, 1] for plotting
  int extremal_index = 0;
};

inline std::vector<double> depth_samples(double z_min, double z_max, int steps,
                                         DepthSpacing spacing) {
  if (!(0.0 < z_min && z_min < z_max) || steps < 2)
    throw std::invalid_argument("depth_samples: need 0 < z_min < z_max and steps >= 2");
  std::vector<double> out(size_t(steps), 0.0);
  for (int i = 0; i < steps; ++i) {
    const double u = double(i) / double(steps - 1);
    if (spacing == DepthSpacing::Linear)
      out[size_t(i)] = z_min + u * (z_max - z_min);
    else
      out[size_t(i)] = 1.0 / (1.0 / z_min + u * (1.0 / z_max - 1.0 / z_min));
  }
  return out;
}

/// Loss along a depth sweep; extremal sample per the loss sense.
template <class Fn>
FocalCurve sweep_depth(Fn&& f, double z_min, double z_max, int steps, DepthSpacing spacing,
                       Sense sense) {
  FocalCurve out;
  out.depths = depth_samples(z_min, z_max, steps, spacing);
  out.values.reserve(out.depths.size());
  for (double z : out.depths) out.values.push_back(f(z));
  double lo = out.values[0], hi = out.values[0];
  for (size_t i = 0; i < out.values.size(); ++i) {
    lo = std::min(lo, out.values[i]);
    hi = std::max(hi, out.values[i]);
    const bool better = sense == Sense::Maximize ? out.values[i] > out.values[size_t(out.extremal_index)]
                                                 : out.values[i] < out.values[size_t(out.extremal_index)];
    if (better) out.extremal_index = int(i);
  }
  out.normalized.resize(out.values.size());
  const double span = hi - lo;
  for (size_t i = 0; i < out.values.size(); ++i)
    out.normalized[i] = span > 0.0 ? (out.values[i] - lo) / span : 0.0;
  return out;
}

inline FocalCurve sweep_depth(const Objective& objective, double z_min, double z_max, int steps,
                              DepthSpacing spacing = DepthSpacing::InverseDepth) {
  if (objective.warp_kind() != WarpKind::Depth)
    throw std::invalid_argument("sweep_depth: depth warp required");
  return sweep_depth([&](double z) { return objective.raw_value(Eigen::VectorXd::Constant(1, z)); },
                     z_min, z_max, steps, spacing, objective.loss().sense());
}

}  // namespace evfocus
