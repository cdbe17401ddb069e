#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "evfocus/image.hpp"

namespace evfocus {

/// Smoothed value distribution of an image: `bins` centers span [min I, max I]
/// and each pixel deposits a unit-mass Gaussian of sigma_bins bins at its
/// value coordinate (the histogram-then-Gaussian-filter construction in its
/// exact kernel-density form). The grid is padded by the kernel radius so no
/// mass is lost; `mass` holds per-bin probability masses summing to 1.
struct SmoothedPdf {
  int bins = 0;            // core bin count (centers at zmin .. zmax)
  int pad = 0;             // padding bins per side = kernel radius
  double zmin = 0.0;
  double zmax = 0.0;
  double dz = 0.0;         // bin pitch in value units
  double sigma_bins = 0.0;
  double cutoff = 0.0;     // kernel value subtracted at the truncation boundary
  std::vector<double> mass;   // size bins + 2*pad
  std::vector<double> dmass;  // central differences of mass, per bin index
  size_t argmin_px = 0, argmax_px = 0;  // pixels carrying the range endpoints

  int total() const { return bins + 2 * pad; }

  /// Continuous core coordinate of a value; 0 at zmin, bins-1 at zmax.
  double coord(double z) const { return (z - zmin) / dz; }

  /// Unit-mass deposit kernel around coordinate c: taps at round(c)-pad ..
  /// round(c)+pad, Gaussian truncated with C1 contact (value and slope zero at
  /// pad + 0.5), renormalized to sum 1; optional exact derivative w.r.t. c.
  void kernel_taps(double c, std::vector<double>& w, std::vector<double>* dw) const {
    const int n = 2 * pad + 1;
    const int center = int(std::lround(c));
    const double inv_s2 = 1.0 / (sigma_bins * sigma_bins);
    const double R = pad + 0.5;
    w.assign(size_t(n), 0.0);
    if (dw) dw->assign(size_t(n), 0.0);
    double s = 0.0, ds = 0.0;
    std::vector<double> raw_d(size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
      const double d = double(center - pad + i) - c;
      const double raw = std::exp(-0.5 * d * d * inv_s2);
      w[size_t(i)] = std::max(0.0, raw - cutoff * (1.0 + 0.5 * (R * R - d * d) * inv_s2));
      s += w[size_t(i)];
      if (dw) {
        raw_d[size_t(i)] = (raw - cutoff) * d * inv_s2;
        ds += raw_d[size_t(i)];
      }
    }
    const double inv_sum = 1.0 / s;
    for (int i = 0; i < n; ++i) w[size_t(i)] *= inv_sum;
    if (dw)
      for (int i = 0; i < n; ++i)
        (*dw)[size_t(i)] = (raw_d[size_t(i)] - w[size_t(i)] * ds) * inv_sum;
  }

  /// Padded-array index of the first tap for a coordinate.
  int tap_origin(double c) const { return int(std::lround(c)); }

  /// Interpolated per-bin mass at a value (padded-grid linear interpolation).
  double mass_at(double z) const { return interp(mass, coord(z)); }
  double dmass_at(double z) const { return interp(dmass, coord(z)); }

  static SmoothedPdf build(const ImageGrid& im, int bins, double sigma_bins) {
    if (bins < 2) throw std::invalid_argument("SmoothedPdf: bins must be >= 2");
    if (sigma_bins < 0.0) throw std::invalid_argument("SmoothedPdf: sigma_bins must be >= 0");
    SmoothedPdf pdf;
    pdf.bins = bins;
    pdf.sigma_bins = std::max(sigma_bins, 1e-9);
    pdf.argmin_px = 0;
    pdf.argmax_px = 0;
    for (size_t i = 1; i < im.pixels(); ++i) {
      if (im.values[i] < im.values[pdf.argmin_px]) pdf.argmin_px = i;
      if (im.values[i] > im.values[pdf.argmax_px]) pdf.argmax_px = i;
    }
    pdf.zmin = im.values[pdf.argmin_px];
    pdf.zmax = im.values[pdf.argmax_px];
    if (!(pdf.zmax > pdf.zmin))
      throw std::domain_error("SmoothedPdf: constant image, distribution is degenerate");
    pdf.dz = (pdf.zmax - pdf.zmin) / double(bins - 1);
    pdf.pad = std::max(1, int(std::ceil(4.0 * pdf.sigma_bins)));
    pdf.cutoff =
        std::exp(-0.5 * (pdf.pad + 0.5) * (pdf.pad + 0.5) / (pdf.sigma_bins * pdf.sigma_bins));

    pdf.mass.assign(size_t(pdf.total()), 0.0);
    const double unit = 1.0 / double(im.pixels());
    std::vector<double> w;
    for (double v : im.values) {
      const double c = pdf.coord(v);
      pdf.kernel_taps(c, w, nullptr);
      const int origin = pdf.tap_origin(c);
      for (int i = 0; i < 2 * pdf.pad + 1; ++i) pdf.mass[size_t(origin + i)] += unit * w[size_t(i)];
    }

    pdf.dmass.assign(size_t(pdf.total()), 0.0);
    for (int g = 1; g + 1 < pdf.total(); ++g)
      pdf.dmass[size_t(g)] = 0.5 * (pdf.mass[size_t(g + 1)] - pdf.mass[size_t(g - 1)]);
    return pdf;
  }

 private:
  double interp(const std::vector<double>& a, double core_coord) const {
    const double g = core_coord + pad;
    int g0 = int(std::floor(g));
    g0 = std::clamp(g0, 0, total() - 2);
    const double u = g - g0;
    return (1.0 - u) * a[size_t(g0)] + u * a[size_t(g0 + 1)];
  }
};

}  // namespace evfocus
