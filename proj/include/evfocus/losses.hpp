#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "evfocus/conv.hpp"
#include "evfocus/image.hpp"
#include "evfocus/iwe.hpp"
#include "evfocus/pdf.hpp"

namespace evfocus {

enum class LossKind {
  Variance,
  MeanSquare,
  Mad,
  Mav,
  Entropy,
  Area,
  Range,
  LocalVariance,
  LocalMeanSquare,
  LocalMad,
  LocalMav,
  MoranIndex,
  GearyRatio,
  GradientMagnitude,
  LaplacianMagnitude,
  HessianMagnitude,
  DifferenceOfGaussians,
  LaplacianOfGaussian,
  VarianceOfLaplacian,
  VarianceOfGradient,
  VarianceOfSquaredGradient,
  MeanTimestamp,
};

enum class Sense { Maximize, Minimize };

enum class SupportWeight { Exp, Gaussian, Lorentzian, Hyperbolic };

/// Optimization goal per loss kind (the taxonomy's Goal column).
inline Sense loss_sense(LossKind k) {
  switch (k) {
    case LossKind::Area:
    case LossKind::MoranIndex:
    case LossKind::MeanTimestamp: return Sense::Minimize;
    default: return Sense::Maximize;
  }
}

/// Analytic chain-rule gradients exist for all kinds except the spatial
/// autocorrelation pair and the timestamp loss (finite differences there).
inline bool has_analytic_gradient(LossKind k) {
  switch (k) {
    case LossKind::MoranIndex:
    case LossKind::GearyRatio:
    case LossKind::MeanTimestamp: return false;
    default: return true;
  }
}

struct LossSpec {
  LossKind kind = LossKind::Variance;
  SupportWeight weight = SupportWeight::Exp;  // area / range weighting
  double sigma_local = 3.0;                   // local statistics kernel
  double sigma_moran = 1.0;                   // autocorrelation weights
  int moran_radius = 3;
  double sigma1 = 1.0;  // DoG / LoG inner scale; DoG outer = 3*sigma1, LoG outer = 1.6*sigma1
  int bins = 200;       // histogram resolution for entropy / range
  double sigma_bins = 5.0;

  Sense sense() const { return loss_sense(kind); }

  std::string name() const;
  static LossSpec from_name(const std::string& s);
};

struct LossEval {
  double value = 0.0;
  Eigen::VectorXd gradient;  // present iff requested and supported
  bool analytic = false;
};

// ---------------------------------------------------------------------------
// Support weighting functions rho and their primitives F (F(0) = 0).

inline double weight_rho(SupportWeight w, double lambda) {
  switch (w) {
    case SupportWeight::Exp: return std::exp(-lambda);
    case SupportWeight::Gaussian: return (2.0 / std::sqrt(M_PI)) * std::exp(-lambda * lambda);
    case SupportWeight::Lorentzian: return 2.0 / ((1.0 + lambda * lambda) * M_PI);
    case SupportWeight::Hyperbolic: {
      const double s = 1.0 / std::cosh(lambda);
      return s * s;
    }
  }
  return 0.0;
}

inline double weight_primitive(SupportWeight w, double lambda) {
  switch (w) {
    case SupportWeight::Exp: return 1.0 - std::exp(-lambda);
    case SupportWeight::Gaussian: return std::erf(lambda);
    case SupportWeight::Lorentzian: return (2.0 / M_PI) * std::atan(lambda);
    case SupportWeight::Hyperbolic: return std::tanh(lambda);
  }
  return 0.0;
}

inline double weight_rho_prime(SupportWeight w, double lambda) {
  switch (w) {
    case SupportWeight::Exp: return -std::exp(-lambda);
    case SupportWeight::Gaussian:
      return (2.0 / std::sqrt(M_PI)) * (-2.0 * lambda) * std::exp(-lambda * lambda);
    case SupportWeight::Lorentzian: {
      const double d = 1.0 + lambda * lambda;
      return -4.0 * lambda / (M_PI * d * d);
    }
    case SupportWeight::Hyperbolic: {
      const double s = 1.0 / std::cosh(lambda);
      return -2.0 * s * s * std::tanh(lambda);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Global statistics.

inline double loss_variance(const ImageGrid& im) {
  const double mu = image_mean(im);
  double acc = 0.0;
  for (double v : im.values) acc += (v - mu) * (v - mu);
  return acc / double(im.pixels());
}

inline double loss_mean_square(const ImageGrid& im) {
  double acc = 0.0;
  for (double v : im.values) acc += v * v;
  return acc / double(im.pixels());
}

inline double loss_mad(const ImageGrid& im) {
  const double mu = image_mean(im);
  double acc = 0.0;
  for (double v : im.values) acc += std::abs(v - mu);
  return acc / double(im.pixels());
}

inline double loss_mav(const ImageGrid& im) {
  double acc = 0.0;
  for (double v : im.values) acc += std::abs(v);
  return acc / double(im.pixels());
}

/// Shannon (differential) entropy of the image value distribution on the
/// smoothed histogram: H = -sum_b p_b log(p_b) dz with densities p = mass/dz,
/// equal to -sum P log P + log dz. Bins below the mass floor are excluded
/// (their -P log P is < 1e-10; their log slope is unbounded).
inline constexpr double kPdfMassFloor = 1e-12;

inline double loss_entropy(const SmoothedPdf& pdf) {
  double h = 0.0;
  for (double m : pdf.mass)
    if (m > kPdfMassFloor) h -= m * std::log(m);
  return h + std::log(pdf.dz);
}

inline double loss_entropy(const ImageGrid& im, const LossSpec& spec) {
  return loss_entropy(SmoothedPdf::build(im, spec.bins, spec.sigma_bins));
}

/// Image area (support): sum of F(I) - F(0) over pixels. Defined for I >= 0;
/// with polarity the caller evaluates the two single-polarity IWEs and adds.
inline double loss_area(const ImageGrid& im, SupportWeight w) {
  double acc = 0.0;
  for (double v : im.values) {
    if (v < -1e-9)
      throw std::invalid_argument("area: image must be non-negative (split polarities first)");
    acc += weight_primitive(w, v < 0.0 ? 0.0 : v);
  }
  return acc;
}

/// Image range as the support of the value PDF: sum_b (F(p_b) - F(0)) dz with
/// densities in value units.
inline double loss_range(const SmoothedPdf& pdf, SupportWeight w) {
  double acc = 0.0;
  for (double m : pdf.mass) acc += weight_primitive(w, m / pdf.dz);
  return acc * pdf.dz;
}

inline double loss_range(const ImageGrid& im, const LossSpec& spec) {
  return loss_range(SmoothedPdf::build(im, spec.bins, spec.sigma_bins), spec.weight);
}

// ---------------------------------------------------------------------------
// Aggregated local statistics (convolution forms).

inline ImageGrid square_image(const ImageGrid& im) {
  ImageGrid out = im;
  for (double& v : out.values) v *= v;
  return out;
}

/// Per-pixel local variance: (I^2 * G) - (I * G)^2.
inline ImageGrid local_variance_map(const ImageGrid& im, double sigma) {
  ImageGrid a = gaussian_blur(square_image(im), sigma);
  const ImageGrid b = gaussian_blur(im, sigma);
  for (size_t i = 0; i < a.pixels(); ++i) a.values[i] -= b.values[i] * b.values[i];
  return a;
}

inline ImageGrid local_mad_map(const ImageGrid& im, double sigma) {
  const ImageGrid mean = gaussian_blur(im, sigma);
  ImageGrid dev = im;
  for (size_t i = 0; i < dev.pixels(); ++i) dev.values[i] = std::abs(dev.values[i] - mean.values[i]);
  return gaussian_blur(dev, sigma);
}

inline double loss_local_variance(const ImageGrid& im, double sigma) {
  return image_sum(local_variance_map(im, sigma));
}

inline double loss_local_mean_square(const ImageGrid& im, double sigma) {
  return image_sum(gaussian_blur(square_image(im), sigma));
}

inline double loss_local_mad(const ImageGrid& im, double sigma) {
  return image_sum(local_mad_map(im, sigma));
}

inline double loss_local_mav(const ImageGrid& im, double sigma) {
  ImageGrid a = im;
  for (double& v : a.values) v = std::abs(v);
  return image_sum(gaussian_blur(a, sigma));
}

// ---------------------------------------------------------------------------
// Spatial autocorrelation. Both indices follow their definitional double sums
// over pixel pairs with Gaussian weights (zero diagonal), evaluated with
// zero-padded convolutions; W = sum_ij w_ij accounts for border truncation.

namespace detail {

struct AutocorrTerms {
  double cross = 0.0;     // sum_i z_i (z * w)_i  = sum_ij w_ij z_i z_j
  double row_sq = 0.0;    // sum_i z_i^2 rowsum_i
  double weight_total = 0.0;  // W
  double sq_centered = 0.0;   // sum_i z_i^2 (centered)
  size_t pixels = 0;
};

inline AutocorrTerms autocorrelation_terms(const ImageGrid& im, const LossSpec& spec) {
  const Kernel2d w = autocorrelation_weights(spec.sigma_moran, spec.moran_radius);
  const double mu = image_mean(im);
  ImageGrid zc = im;
  for (double& v : zc.values) v -= mu;
  const ImageGrid conv = convolve_2d(zc, w);
  ImageGrid ones(im.width, im.height, 1.0);
  const ImageGrid rowsum = convolve_2d(ones, w);
  AutocorrTerms t;
  t.pixels = im.pixels();
  for (size_t i = 0; i < im.pixels(); ++i) {
    t.cross += zc.values[i] * conv.values[i];
    t.row_sq += zc.values[i] * zc.values[i] * rowsum.values[i];
    t.weight_total += rowsum.values[i];
    t.sq_centered += zc.values[i] * zc.values[i];
  }
  return t;
}

}  // namespace detail

inline double loss_moran(const ImageGrid& im, const LossSpec& spec) {
  const auto t = detail::autocorrelation_terms(im, spec);
  if (t.sq_centered <= 0.0) throw std::domain_error("moran: image variance is zero");
  return (t.cross / t.weight_total) / (t.sq_centered / double(t.pixels));
}

inline double loss_geary(const ImageGrid& im, const LossSpec& spec) {
  const auto t = detail::autocorrelation_terms(im, spec);
  if (t.sq_centered <= 0.0) throw std::domain_error("geary: image variance is zero");
  // sum_ij w_ij (z_i - z_j)^2 = 2 sum_i z_i^2 rowsum_i - 2 sum_ij w_ij z_i z_j
  const double num = 2.0 * t.row_sq - 2.0 * t.cross;
  return 0.5 * (num / t.weight_total) / (t.sq_centered / double(t.pixels - 1));
}

// ---------------------------------------------------------------------------
// Derivative (sharpness) losses.

inline double loss_gradient_magnitude(const ImageGrid& im) {
  const ImageGrid ix = derivative_x(im), iy = derivative_y(im);
  double acc = 0.0;
  for (size_t i = 0; i < im.pixels(); ++i)
    acc += ix.values[i] * ix.values[i] + iy.values[i] * iy.values[i];
  return acc;
}

inline double loss_laplacian_magnitude(const ImageGrid& im) {
  const ImageGrid l = laplacian(im);
  double acc = 0.0;
  for (double v : l.values) acc += v * v;
  return acc;
}

inline double loss_hessian_magnitude(const ImageGrid& im) {
  const ImageGrid xx = derivative_xx(im), yy = derivative_yy(im), xy = derivative_xy(im);
  double acc = 0.0;
  for (size_t i = 0; i < im.pixels(); ++i)
    acc += xx.values[i] * xx.values[i] + yy.values[i] * yy.values[i] +
           2.0 * xy.values[i] * xy.values[i];
  return acc;
}

inline ImageGrid band_pass(const ImageGrid& im, double sigma1, double sigma2) {
  ImageGrid a = gaussian_blur(im, sigma1);
  const ImageGrid b = gaussian_blur(im, sigma2);
  for (size_t i = 0; i < a.pixels(); ++i) a.values[i] -= b.values[i];
  return a;
}

inline double loss_band_pass_energy(const ImageGrid& im, double sigma1, double sigma2) {
  const ImageGrid d = band_pass(im, sigma1, sigma2);
  double acc = 0.0;
  for (double v : d.values) acc += v * v;
  return acc;
}

// ---------------------------------------------------------------------------
// Composite losses: variance of a derivative field.

inline ImageGrid gradient_magnitude_map(const ImageGrid& im, bool squared) {
  const ImageGrid ix = derivative_x(im), iy = derivative_y(im);
  ImageGrid out(im.width, im.height);
  for (size_t i = 0; i < im.pixels(); ++i) {
    const double s = ix.values[i] * ix.values[i] + iy.values[i] * iy.values[i];
    out.values[i] = squared ? s : std::sqrt(s);
  }
  return out;
}

inline double loss_variance_of_laplacian(const ImageGrid& im) {
  return loss_variance(laplacian(im));
}

inline double loss_variance_of_gradient(const ImageGrid& im) {
  return loss_variance(gradient_magnitude_map(im, false));
}

inline double loss_variance_of_squared_gradient(const ImageGrid& im) {
  return loss_variance(gradient_magnitude_map(im, true));
}

/// Variance of the per-pixel mean timestamp, over occupied pixels only.
inline double mean_timestamp_loss(const TimestampImage& ts) {
  double sum = 0.0, sq = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < ts.count.pixels(); ++i) {
    if (ts.count.values[i] > 0.0) {
      sum += ts.mean_t.values[i];
      sq += ts.mean_t.values[i] * ts.mean_t.values[i];
      ++n;
    }
  }
  if (n == 0) throw std::domain_error("mean_timestamp_loss: no occupied pixels");
  const double mu = sum / double(n);
  return sq / double(n) - mu * mu;
}

// ---------------------------------------------------------------------------
// Dispatch.

inline double evaluate_loss(const ImageGrid& im, const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::Variance: return loss_variance(im);
    case LossKind::MeanSquare: return loss_mean_square(im);
    case LossKind::Mad: return loss_mad(im);
    case LossKind::Mav: return loss_mav(im);
    case LossKind::Entropy: return loss_entropy(im, spec);
    case LossKind::Area: return loss_area(im, spec.weight);
    case LossKind::Range: return loss_range(im, spec);
    case LossKind::LocalVariance: return loss_local_variance(im, spec.sigma_local);
    case LossKind::LocalMeanSquare: return loss_local_mean_square(im, spec.sigma_local);
    case LossKind::LocalMad: return loss_local_mad(im, spec.sigma_local);
    case LossKind::LocalMav: return loss_local_mav(im, spec.sigma_local);
    case LossKind::MoranIndex: return loss_moran(im, spec);
    case LossKind::GearyRatio: return loss_geary(im, spec);
    case LossKind::GradientMagnitude: return loss_gradient_magnitude(im);
    case LossKind::LaplacianMagnitude: return loss_laplacian_magnitude(im);
    case LossKind::HessianMagnitude: return loss_hessian_magnitude(im);
    case LossKind::DifferenceOfGaussians:
      return loss_band_pass_energy(im, spec.sigma1, 3.0 * spec.sigma1);
    case LossKind::LaplacianOfGaussian:
      return loss_band_pass_energy(im, spec.sigma1, 1.6 * spec.sigma1);
    case LossKind::VarianceOfLaplacian: return loss_variance_of_laplacian(im);
    case LossKind::VarianceOfGradient: return loss_variance_of_gradient(im);
    case LossKind::VarianceOfSquaredGradient: return loss_variance_of_squared_gradient(im);
    case LossKind::MeanTimestamp:
      throw std::invalid_argument("mean-timestamp operates on a TimestampImage");
  }
  throw std::logic_error("evaluate_loss: unknown kind");
}

// ---------------------------------------------------------------------------
// Analytic gradients via the chain rule through the IWE gradient images.

namespace detail {

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Gradient of a pixel-variance functional of a field F with per-parameter
/// derivative dF: d Var(F)/dtheta = (2/N) [sum Fc dF - mean(dF) sum Fc].
inline double variance_chain(const ImageGrid& field, const ImageGrid& dfield) {
  const double n = double(field.pixels());
  const double mu = image_mean(field);
  double s_fd = 0.0, s_f = 0.0, s_d = 0.0;
  for (size_t i = 0; i < field.pixels(); ++i) {
    const double fc = field.values[i] - mu;
    s_fd += fc * dfield.values[i];
    s_f += fc;
    s_d += dfield.values[i];
  }
  return (2.0 / n) * (s_fd - (s_d / n) * s_f);
}

/// d(loss)/dI field for the histogram losses (entropy / range), the exact
/// derivative of the discrete implementation: the chain rule through the
/// smoothed per-bin masses plus the terms from the grid being anchored to
/// [min I, max I].
inline ImageGrid pdf_loss_dI(const ImageGrid& im, const LossSpec& spec, bool range_mode) {
  const SmoothedPdf pdf = SmoothedPdf::build(im, spec.bins, spec.sigma_bins);
  const int total = pdf.total();
  const double n_px = double(im.pixels());

  // dLoss/d(per-bin mass); total mass is 1 by construction (no renormalization)
  std::vector<double> dLdQ(size_t(total), 0.0);
  for (int g = 0; g < total; ++g) {
    const double q = pdf.mass[size_t(g)];
    if (range_mode)
      dLdQ[size_t(g)] = weight_rho(spec.weight, q / pdf.dz);
    else if (q > kPdfMassFloor)
      dLdQ[size_t(g)] = -(std::log(q) + 1.0);
  }

  ImageGrid out(im.width, im.height);
  double anchor_lo = 0.0, anchor_hi = 0.0;  // terms attached to argmin / argmax
  const double r = pdf.zmax - pdf.zmin;
  std::vector<double> w, dw;
  for (size_t i = 0; i < im.pixels(); ++i) {
    const double c = pdf.coord(im.values[i]);
    pdf.kernel_taps(c, w, &dw);
    const int origin = pdf.tap_origin(c);
    double dLdc = 0.0;
    for (int t = 0; t < 2 * pdf.pad + 1; ++t)
      dLdc += dLdQ[size_t(origin + t)] * dw[size_t(t)];
    dLdc /= n_px;
    out.values[i] = dLdc / pdf.dz;
    // grid anchoring: dc/dzmin = (I - zmax)/(dz r), dc/dzmax = -(I - zmin)/(dz r)
    anchor_lo += dLdc * (im.values[i] - pdf.zmax) / (pdf.dz * r);
    anchor_hi -= dLdc * (im.values[i] - pdf.zmin) / (pdf.dz * r);
  }
  if (range_mode) {
    // explicit dz dependence of sum_b F(Q_b/dz) dz
    double dsupp_ddz = 0.0;
    for (double q : pdf.mass) {
      const double rho_val = q / pdf.dz;
      dsupp_ddz += weight_primitive(spec.weight, rho_val) - weight_rho(spec.weight, rho_val) * rho_val;
    }
    anchor_hi += dsupp_ddz / double(pdf.bins - 1);
    anchor_lo -= dsupp_ddz / double(pdf.bins - 1);
  } else {
    // explicit dz dependence of the differential entropy: + log dz
    anchor_hi += 1.0 / r;
    anchor_lo -= 1.0 / r;
  }
  out.values[pdf.argmin_px] += anchor_lo;
  out.values[pdf.argmax_px] += anchor_hi;
  return out;
}

inline double dot_field(const ImageGrid& a, const ImageGrid& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.pixels(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

}  // namespace detail

/// Loss value plus analytic d(loss)/d(theta) assembled from the IWE gradient
/// images. Throws for kinds without an analytic form (moran, geary,
/// mean-timestamp): callers fall back to finite differences for those.
inline LossEval evaluate_loss_gradient(const IweWithGradient& iwg, const LossSpec& spec) {
  if (!has_analytic_gradient(spec.kind))
    throw std::invalid_argument("evaluate_loss_gradient: no analytic form for " + spec.name());
  const ImageGrid& I = iwg.image;
  const int M = int(iwg.grads.size());
  const double n = double(I.pixels());
  LossEval out;
  out.analytic = true;
  out.value = evaluate_loss(I, spec);
  out.gradient.resize(M);

  switch (spec.kind) {
    case LossKind::Variance: {
      for (int m = 0; m < M; ++m) out.gradient[m] = detail::variance_chain(I, iwg.grads[size_t(m)]);
      break;
    }
    case LossKind::MeanSquare: {
      for (int m = 0; m < M; ++m)
        out.gradient[m] = (2.0 / n) * detail::dot_field(I, iwg.grads[size_t(m)]);
      break;
    }
    case LossKind::Mav: {
      ImageGrid s = I;
      for (double& v : s.values) v = detail::sign_of(v);
      for (int m = 0; m < M; ++m)
        out.gradient[m] = detail::dot_field(s, iwg.grads[size_t(m)]) / n;
      break;
    }
    case LossKind::Mad: {
      const double mu = image_mean(I);
      ImageGrid s = I;
      double s_sum = 0.0;
      for (double& v : s.values) {
        v = detail::sign_of(v - mu);
        s_sum += v;
      }
      for (int m = 0; m < M; ++m) {
        const double mu_d = image_mean(iwg.grads[size_t(m)]);
        out.gradient[m] = (detail::dot_field(s, iwg.grads[size_t(m)]) - mu_d * s_sum) / n;
      }
      break;
    }
    case LossKind::Entropy:
    case LossKind::Range: {
      const ImageGrid dLdI = detail::pdf_loss_dI(I, spec, spec.kind == LossKind::Range);
      for (int m = 0; m < M; ++m) out.gradient[m] = detail::dot_field(dLdI, iwg.grads[size_t(m)]);
      break;
    }
    case LossKind::Area: {
      ImageGrid rho = I;
      for (double& v : rho.values) v = weight_rho(spec.weight, v < 0.0 ? 0.0 : v);
      for (int m = 0; m < M; ++m) out.gradient[m] = detail::dot_field(rho, iwg.grads[size_t(m)]);
      break;
    }
    case LossKind::LocalVariance: {
      const ImageGrid bi = gaussian_blur(I, spec.sigma_local);
      for (int m = 0; m < M; ++m) {
        const ImageGrid& D = iwg.grads[size_t(m)];
        ImageGrid id = I;
        for (size_t i = 0; i < id.pixels(); ++i) id.values[i] *= D.values[i];
        const ImageGrid bid = gaussian_blur(id, spec.sigma_local);
        const ImageGrid bd = gaussian_blur(D, spec.sigma_local);
        double acc = 0.0;
        for (size_t i = 0; i < I.pixels(); ++i)
          acc += 2.0 * (bid.values[i] - bi.values[i] * bd.values[i]);
        out.gradient[m] = acc;
      }
      break;
    }
    case LossKind::LocalMeanSquare: {
      for (int m = 0; m < M; ++m) {
        ImageGrid id = I;
        for (size_t i = 0; i < id.pixels(); ++i) id.values[i] *= iwg.grads[size_t(m)].values[i];
        out.gradient[m] = 2.0 * image_sum(gaussian_blur(id, spec.sigma_local));
      }
      break;
    }
    case LossKind::LocalMav: {
      for (int m = 0; m < M; ++m) {
        ImageGrid sd = I;
        for (size_t i = 0; i < sd.pixels(); ++i)
          sd.values[i] = detail::sign_of(sd.values[i]) * iwg.grads[size_t(m)].values[i];
        out.gradient[m] = image_sum(gaussian_blur(sd, spec.sigma_local));
      }
      break;
    }
    case LossKind::LocalMad: {
      const ImageGrid mean = gaussian_blur(I, spec.sigma_local);
      for (int m = 0; m < M; ++m) {
        const ImageGrid dmean = gaussian_blur(iwg.grads[size_t(m)], spec.sigma_local);
        ImageGrid sd(I.width, I.height);
        for (size_t i = 0; i < sd.pixels(); ++i) {
          const double c = I.values[i] - mean.values[i];
          const double dc = iwg.grads[size_t(m)].values[i] - dmean.values[i];
          sd.values[i] = detail::sign_of(c) * dc;
        }
        out.gradient[m] = image_sum(gaussian_blur(sd, spec.sigma_local));
      }
      break;
    }
    case LossKind::GradientMagnitude: {
      const ImageGrid ix = derivative_x(I), iy = derivative_y(I);
      for (int m = 0; m < M; ++m) {
        const ImageGrid dx = derivative_x(iwg.grads[size_t(m)]);
        const ImageGrid dy = derivative_y(iwg.grads[size_t(m)]);
        double acc = 0.0;
        for (size_t i = 0; i < I.pixels(); ++i)
          acc += 2.0 * (ix.values[i] * dx.values[i] + iy.values[i] * dy.values[i]);
        out.gradient[m] = acc;
      }
      break;
    }
    case LossKind::LaplacianMagnitude: {
      const ImageGrid l = laplacian(I);
      for (int m = 0; m < M; ++m)
        out.gradient[m] = 2.0 * detail::dot_field(l, laplacian(iwg.grads[size_t(m)]));
      break;
    }
    case LossKind::HessianMagnitude: {
      const ImageGrid xx = derivative_xx(I), yy = derivative_yy(I), xy = derivative_xy(I);
      for (int m = 0; m < M; ++m) {
        const ImageGrid dxx = derivative_xx(iwg.grads[size_t(m)]);
        const ImageGrid dyy = derivative_yy(iwg.grads[size_t(m)]);
        const ImageGrid dxy = derivative_xy(iwg.grads[size_t(m)]);
        double acc = 0.0;
        for (size_t i = 0; i < I.pixels(); ++i)
          acc += 2.0 * (xx.values[i] * dxx.values[i] + yy.values[i] * dyy.values[i] +
                        2.0 * xy.values[i] * dxy.values[i]);
        out.gradient[m] = acc;
      }
      break;
    }
    case LossKind::DifferenceOfGaussians:
    case LossKind::LaplacianOfGaussian: {
      const double s2 = (spec.kind == LossKind::DifferenceOfGaussians ? 3.0 : 1.6) * spec.sigma1;
      const ImageGrid d = band_pass(I, spec.sigma1, s2);
      for (int m = 0; m < M; ++m)
        out.gradient[m] =
            2.0 * detail::dot_field(d, band_pass(iwg.grads[size_t(m)], spec.sigma1, s2));
      break;
    }
    case LossKind::VarianceOfLaplacian: {
      const ImageGrid l = laplacian(I);
      for (int m = 0; m < M; ++m)
        out.gradient[m] = detail::variance_chain(l, laplacian(iwg.grads[size_t(m)]));
      break;
    }
    case LossKind::VarianceOfSquaredGradient: {
      const ImageGrid ix = derivative_x(I), iy = derivative_y(I);
      const ImageGrid s = gradient_magnitude_map(I, true);
      for (int m = 0; m < M; ++m) {
        const ImageGrid dx = derivative_x(iwg.grads[size_t(m)]);
        const ImageGrid dy = derivative_y(iwg.grads[size_t(m)]);
        ImageGrid ds(I.width, I.height);
        for (size_t i = 0; i < I.pixels(); ++i)
          ds.values[i] = 2.0 * (ix.values[i] * dx.values[i] + iy.values[i] * dy.values[i]);
        out.gradient[m] = detail::variance_chain(s, ds);
      }
      break;
    }
    case LossKind::VarianceOfGradient: {
      const ImageGrid ix = derivative_x(I), iy = derivative_y(I);
      const ImageGrid g = gradient_magnitude_map(I, false);
      for (int m = 0; m < M; ++m) {
        const ImageGrid dx = derivative_x(iwg.grads[size_t(m)]);
        const ImageGrid dy = derivative_y(iwg.grads[size_t(m)]);
        ImageGrid dg(I.width, I.height);
        for (size_t i = 0; i < I.pixels(); ++i) {
          const double gv = g.values[i];
          dg.values[i] =
              gv > 1e-12 ? (ix.values[i] * dx.values[i] + iy.values[i] * dy.values[i]) / gv : 0.0;
        }
        out.gradient[m] = detail::variance_chain(g, dg);
      }
      break;
    }
    default: throw std::logic_error("evaluate_loss_gradient: unhandled kind");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-pixel maps.

/// Kinds with a per-pixel integrand ("local loss" map): everything except the
/// range (a histogram functional) and the timestamp loss.
inline bool has_local_score(LossKind k) {
  return k != LossKind::Range && k != LossKind::MeanTimestamp;
}

/// The integrand whose pixel aggregate is the global loss (visualization /
/// per-pixel dump). Entropy uses -log p(I(x)); variance-family integrands are
/// squared deviations from the global mean of the respective field.
inline ImageGrid local_score_map(const ImageGrid& im, const LossSpec& spec) {
  auto centered_sq = [](const ImageGrid& f) {
    const double mu = image_mean(f);
    ImageGrid out = f;
    for (double& v : out.values) v = (v - mu) * (v - mu);
    return out;
  };
  switch (spec.kind) {
    case LossKind::Variance: return centered_sq(im);
    case LossKind::MeanSquare: return square_image(im);
    case LossKind::Mad: {
      const double mu = image_mean(im);
      ImageGrid out = im;
      for (double& v : out.values) v = std::abs(v - mu);
      return out;
    }
    case LossKind::Mav: {
      ImageGrid out = im;
      for (double& v : out.values) v = std::abs(v);
      return out;
    }
    case LossKind::Entropy: {
      const SmoothedPdf pdf = SmoothedPdf::build(im, spec.bins, spec.sigma_bins);
      ImageGrid out = im;
      for (double& v : out.values)
        v = -std::log(std::max(pdf.mass_at(v) / pdf.dz, kPdfMassFloor));
      return out;
    }
    case LossKind::Area: {
      ImageGrid out = im;
      for (double& v : out.values) v = weight_primitive(spec.weight, v < 0.0 ? 0.0 : v);
      return out;
    }
    case LossKind::LocalVariance: return local_variance_map(im, spec.sigma_local);
    case LossKind::LocalMeanSquare: return gaussian_blur(square_image(im), spec.sigma_local);
    case LossKind::LocalMad: return local_mad_map(im, spec.sigma_local);
    case LossKind::LocalMav: {
      ImageGrid a = im;
      for (double& v : a.values) v = std::abs(v);
      return gaussian_blur(a, spec.sigma_local);
    }
    case LossKind::MoranIndex: {
      const Kernel2d w = autocorrelation_weights(spec.sigma_moran, spec.moran_radius);
      const double mu = image_mean(im);
      ImageGrid zc = im;
      for (double& v : zc.values) v -= mu;
      const double sigma = std::sqrt(loss_variance(im));
      for (double& v : zc.values) v /= sigma;
      const ImageGrid conv = convolve_2d(zc, w);
      ImageGrid out(im.width, im.height);
      for (size_t i = 0; i < out.pixels(); ++i) out.values[i] = zc.values[i] * conv.values[i];
      return out;
    }
    case LossKind::GearyRatio: {
      const Kernel2d w = autocorrelation_weights(spec.sigma_moran, spec.moran_radius);
      const double mu = image_mean(im);
      ImageGrid zc = im;
      for (double& v : zc.values) v -= mu;
      const double sigma = std::sqrt(loss_variance(im));
      for (double& v : zc.values) v /= sigma;
      const ImageGrid conv = convolve_2d(zc, w);
      const ImageGrid sq_conv = convolve_2d(square_image(zc), w);
      ImageGrid out(im.width, im.height);
      for (size_t i = 0; i < out.pixels(); ++i)
        out.values[i] = zc.values[i] * zc.values[i] + sq_conv.values[i] -
                        2.0 * zc.values[i] * conv.values[i];
      return out;
    }
    case LossKind::GradientMagnitude: return gradient_magnitude_map(im, true);
    case LossKind::LaplacianMagnitude: return square_image(laplacian(im));
    case LossKind::HessianMagnitude: {
      const ImageGrid xx = derivative_xx(im), yy = derivative_yy(im), xy = derivative_xy(im);
      ImageGrid out(im.width, im.height);
      for (size_t i = 0; i < out.pixels(); ++i)
        out.values[i] = xx.values[i] * xx.values[i] + yy.values[i] * yy.values[i] +
                        2.0 * xy.values[i] * xy.values[i];
      return out;
    }
    case LossKind::DifferenceOfGaussians:
      return square_image(band_pass(im, spec.sigma1, 3.0 * spec.sigma1));
    case LossKind::LaplacianOfGaussian:
      return square_image(band_pass(im, spec.sigma1, 1.6 * spec.sigma1));
    case LossKind::VarianceOfLaplacian: return centered_sq(laplacian(im));
    case LossKind::VarianceOfGradient: return centered_sq(gradient_magnitude_map(im, false));
    case LossKind::VarianceOfSquaredGradient:
      return centered_sq(gradient_magnitude_map(im, true));
    default: break;
  }
  throw std::invalid_argument("local_score_map: no per-pixel integrand for " + spec.name());
}

/// Kinds usable as per-pixel focus scores in the shape-from-focus pipeline:
/// the loss must be computable on a small weighted patch.
inline bool supports_local_score(LossKind k) {
  return has_local_score(k) && k != LossKind::Entropy;
}

/// Focus score per pixel on a Gaussian-weighted neighborhood: statistics are
/// computed from patch moments; derivative kinds aggregate their pointwise
/// integrand over the patch.
inline ImageGrid patch_score_map(const ImageGrid& im, const LossSpec& spec,
                                 const std::vector<double>& patch_kernel) {
  auto patch_avg = [&](const ImageGrid& f) {
    return convolve_cols(convolve_rows(f, patch_kernel), patch_kernel);
  };
  auto patch_var = [&](const ImageGrid& f) {
    ImageGrid a = patch_avg(square_image(f));
    const ImageGrid b = patch_avg(f);
    for (size_t i = 0; i < a.pixels(); ++i) a.values[i] -= b.values[i] * b.values[i];
    return a;
  };
  switch (spec.kind) {
    case LossKind::Variance: return patch_var(im);
    case LossKind::MeanSquare: return patch_avg(square_image(im));
    case LossKind::Mad: {
      const ImageGrid mean = patch_avg(im);
      ImageGrid dev = im;
      for (size_t i = 0; i < dev.pixels(); ++i)
        dev.values[i] = std::abs(dev.values[i] - mean.values[i]);
      return patch_avg(dev);
    }
    case LossKind::VarianceOfLaplacian: return patch_var(laplacian(im));
    case LossKind::VarianceOfGradient: return patch_var(gradient_magnitude_map(im, false));
    case LossKind::VarianceOfSquaredGradient: return patch_var(gradient_magnitude_map(im, true));
    default:
      if (!supports_local_score(spec.kind))
        throw std::invalid_argument("patch_score_map: unsupported kind " + spec.name());
      return patch_avg(local_score_map(im, spec));
  }
}

// ---------------------------------------------------------------------------
// Stable string names (CLI flags, CSV headers).

inline std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::Variance: return "variance";
    case LossKind::MeanSquare: return "mean-square";
    case LossKind::Mad: return "mad";
    case LossKind::Mav: return "mav";
    case LossKind::Entropy: return "entropy";
    case LossKind::Area:
      switch (weight) {
        case SupportWeight::Exp: return "area-exp";
        case SupportWeight::Gaussian: return "area-gaussian";
        case SupportWeight::Lorentzian: return "area-lorentzian";
        case SupportWeight::Hyperbolic: return "area-hyperbolic";
      }
      break;
    case LossKind::Range:
      switch (weight) {
        case SupportWeight::Exp: return "range-exp";
        case SupportWeight::Gaussian: return "range-gaussian";
        case SupportWeight::Lorentzian: return "range-lorentzian";
        case SupportWeight::Hyperbolic: return "range-hyperbolic";
      }
      break;
    case LossKind::LocalVariance: return "local-variance";
    case LossKind::LocalMeanSquare: return "local-mean-square";
    case LossKind::LocalMad: return "local-mad";
    case LossKind::LocalMav: return "local-mav";
    case LossKind::MoranIndex: return "moran";
    case LossKind::GearyRatio: return "geary";
    case LossKind::GradientMagnitude: return "gradient-magnitude";
    case LossKind::LaplacianMagnitude: return "laplacian-magnitude";
    case LossKind::HessianMagnitude: return "hessian-magnitude";
    case LossKind::DifferenceOfGaussians: return "dog";
    case LossKind::LaplacianOfGaussian: return "log";
    case LossKind::VarianceOfLaplacian: return "variance-of-laplacian";
    case LossKind::VarianceOfGradient: return "variance-of-gradient";
    case LossKind::VarianceOfSquaredGradient: return "variance-of-squared-gradient";
    case LossKind::MeanTimestamp: return "mean-timestamp";
  }
  return "?";
}

inline LossSpec LossSpec::from_name(const std::string& s) {
  LossSpec spec;
  auto k = [&](LossKind kind, SupportWeight w = SupportWeight::Exp) {
    spec.kind = kind;
    spec.weight = w;
    return spec;
  };
  if (s == "variance") return k(LossKind::Variance);
  if (s == "mean-square") return k(LossKind::MeanSquare);
  if (s == "mad") return k(LossKind::Mad);
  if (s == "mav") return k(LossKind::Mav);
  if (s == "entropy") return k(LossKind::Entropy);
  if (s == "area-exp") return k(LossKind::Area, SupportWeight::Exp);
  if (s == "area-gaussian") return k(LossKind::Area, SupportWeight::Gaussian);
  if (s == "area-lorentzian") return k(LossKind::Area, SupportWeight::Lorentzian);
  if (s == "area-hyperbolic") return k(LossKind::Area, SupportWeight::Hyperbolic);
  if (s == "range-exp") return k(LossKind::Range, SupportWeight::Exp);
  if (s == "range-gaussian") return k(LossKind::Range, SupportWeight::Gaussian);
  if (s == "range-lorentzian") return k(LossKind::Range, SupportWeight::Lorentzian);
  if (s == "range-hyperbolic") return k(LossKind::Range, SupportWeight::Hyperbolic);
  if (s == "local-variance") return k(LossKind::LocalVariance);
  if (s == "local-mean-square") return k(LossKind::LocalMeanSquare);
  if (s == "local-mad") return k(LossKind::LocalMad);
  if (s == "local-mav") return k(LossKind::LocalMav);
  if (s == "moran") return k(LossKind::MoranIndex);
  if (s == "geary") return k(LossKind::GearyRatio);
  if (s == "gradient-magnitude") return k(LossKind::GradientMagnitude);
  if (s == "laplacian-magnitude") return k(LossKind::LaplacianMagnitude);
  if (s == "hessian-magnitude") return k(LossKind::HessianMagnitude);
  if (s == "dog") return k(LossKind::DifferenceOfGaussians);
  if (s == "log") return k(LossKind::LaplacianOfGaussian);
  if (s == "variance-of-laplacian") return k(LossKind::VarianceOfLaplacian);
  if (s == "variance-of-gradient") return k(LossKind::VarianceOfGradient);
  if (s == "variance-of-squared-gradient") return k(LossKind::VarianceOfSquaredGradient);
  if (s == "mean-timestamp") return k(LossKind::MeanTimestamp);
  throw std::invalid_argument("unknown loss name: " + s);
}

/// Every addressable loss configuration ("all" in the CLI).
inline std::vector<LossSpec> all_loss_specs() {
  const char* names[] = {"variance",
                         "mean-square",
                         "mad",
                         "mav",
                         "entropy",
                         "area-exp",
                         "area-gaussian",
                         "area-lorentzian",
                         "area-hyperbolic",
                         "range-exp",
                         "local-variance",
                         "local-mean-square",
                         "local-mad",
                         "local-mav",
                         "moran",
                         "geary",
                         "gradient-magnitude",
                         "laplacian-magnitude",
                         "hessian-magnitude",
                         "dog",
                         "log",
                         "variance-of-laplacian",
                         "variance-of-gradient",
                         "variance-of-squared-gradient",
                         "mean-timestamp"};
  std::vector<LossSpec> out;
  for (const char* n : names) out.push_back(LossSpec::from_name(n));
  return out;
}

}  // namespace evfocus
