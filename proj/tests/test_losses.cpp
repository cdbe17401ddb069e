#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "evfocus/losses.hpp"
#include "evfocus/synth.hpp"

using namespace evfocus;

namespace {

double uni(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

ImageGrid random_image(int w, int h, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  ImageGrid im(w, h);
  for (double& v : im.values) v = lo + (hi - lo) * uni(rng);
  return im;
}

ImageGrid two_by_two_0022() {
  ImageGrid im(2, 2);
  im.values = {0.0, 0.0, 2.0, 2.0};
  return im;
}

/// Brute-force Moran double sum (Eq. with Gaussian weights, zero diagonal).
double moran_brute(const ImageGrid& im, double sigma, int radius) {
  const Kernel2d w = autocorrelation_weights(sigma, radius);
  const double mu = image_mean(im);
  double num = 0.0, wsum = 0.0, var = 0.0;
  for (int yi = 0; yi < im.height; ++yi)
    for (int xi = 0; xi < im.width; ++xi) {
      var += (im.at(xi, yi) - mu) * (im.at(xi, yi) - mu);
      for (int yj = 0; yj < im.height; ++yj)
        for (int xj = 0; xj < im.width; ++xj) {
          const int dx = xj - xi, dy = yj - yi;
          if (std::abs(dx) > radius || std::abs(dy) > radius) continue;
          const double wij = w.at(dx, dy);  // zero at the diagonal by construction
          num += wij * (im.at(xi, yi) - mu) * (im.at(xj, yj) - mu);
          wsum += wij;
        }
    }
  const double n = double(im.pixels());
  return (num / wsum) / (var / n);
}

/// Brute-force Geary double sum.
double geary_brute(const ImageGrid& im, double sigma, int radius) {
  const Kernel2d w = autocorrelation_weights(sigma, radius);
  const double mu = image_mean(im);
  double num = 0.0, wsum = 0.0, var = 0.0;
  for (int yi = 0; yi < im.height; ++yi)
    for (int xi = 0; xi < im.width; ++xi) {
      var += (im.at(xi, yi) - mu) * (im.at(xi, yi) - mu);
      for (int yj = 0; yj < im.height; ++yj)
        for (int xj = 0; xj < im.width; ++xj) {
          const int dx = xj - xi, dy = yj - yi;
          if (std::abs(dx) > radius || std::abs(dy) > radius) continue;
          const double d = im.at(xi, yi) - im.at(xj, yj);
          num += w.at(dx, dy) * d * d;
          wsum += w.at(dx, dy);
        }
    }
  const double n = double(im.pixels());
  return 0.5 * (num / wsum) / (var / (n - 1.0));
}

}  // namespace

TEST_CASE("variance basics") {
  ImageGrid c(8, 8, 3.0);
  CHECK(loss_variance(c) == 0.0);
  CHECK(loss_variance(two_by_two_0022()) == doctest::Approx(1.0));
}

TEST_CASE("Var = MS - mean^2 on random images") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageGrid im = random_image(64, 64, rng, -1.0, 3.0);
    const double mu = image_mean(im);
    const double lhs = loss_variance(im);
    const double rhs = loss_mean_square(im) - mu * mu;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("MS, MAD, MAV hand values") {
  const ImageGrid im = two_by_two_0022();
  CHECK(loss_mean_square(im) == doctest::Approx(2.0));
  CHECK(loss_mad(im) == doctest::Approx(1.0));
  CHECK(loss_mav(im) == doctest::Approx(1.0));
  ImageGrid z(4, 4, 0.0);
  CHECK(loss_mean_square(z) == 0.0);
  CHECK(loss_mad(z) == 0.0);
  CHECK(loss_mav(z) == 0.0);
}

TEST_CASE("entropy of a two-level image: log 2 discrete part plus the bin-width term") {
  ImageGrid im(16, 16);
  for (size_t i = 0; i < im.pixels(); ++i) im.values[i] = (i % 2 == 0) ? 0.0 : 1.0;
  LossSpec spec = LossSpec::from_name("entropy");
  spec.sigma_bins = 1e-6;
  // oracle: the two-spike histogram has discrete entropy log 2; the
  // differential value adds log dz with dz = range / (bins - 1)
  const double dz = 1.0 / double(spec.bins - 1);
  CHECK(evaluate_loss(im, spec) == doctest::Approx(std::log(2.0) + std::log(dz)).epsilon(1e-9));
  CHECK(evaluate_loss(im, spec) - std::log(dz) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("entropy is invariant under negation") {
  std::mt19937_64 rng(43);
  const ImageGrid im = random_image(32, 32, rng);
  ImageGrid neg = im;
  for (double& v : neg.values) v = -v;
  const LossSpec spec = LossSpec::from_name("entropy");
  CHECK(evaluate_loss(im, spec) == doctest::Approx(evaluate_loss(neg, spec)).epsilon(1e-9));
}

TEST_CASE("entropy rejects constant images") {
  ImageGrid c(8, 8, 1.0);
  CHECK_THROWS_AS(evaluate_loss(c, LossSpec::from_name("entropy")), std::domain_error);
  CHECK_THROWS_AS(evaluate_loss(c, LossSpec::from_name("range-exp")), std::domain_error);
}

TEST_CASE("area values and contract") {
  ImageGrid z(5, 5, 0.0);
  CHECK(loss_area(z, SupportWeight::Exp) == doctest::Approx(0.0));
  ImageGrid one(1, 1);
  one.at(0, 0) = 1.0;
  CHECK(loss_area(one, SupportWeight::Exp) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
  CHECK(loss_area(one, SupportWeight::Gaussian) == doctest::Approx(std::erf(1.0)));
  CHECK(loss_area(one, SupportWeight::Lorentzian) == doctest::Approx(2.0 / M_PI * std::atan(1.0)));
  CHECK(loss_area(one, SupportWeight::Hyperbolic) == doctest::Approx(std::tanh(1.0)));
  ImageGrid neg(2, 2, -0.5);
  CHECK_THROWS_AS(loss_area(neg, SupportWeight::Exp), std::invalid_argument);
}

TEST_CASE("area monotonicity on the two-event 1-D construction") {
  const double a0 = loss_area(gen_two_event_1d(0.0), SupportWeight::Exp);
  const double a07 = loss_area(gen_two_event_1d(0.7), SupportWeight::Exp);
  const double a14 = loss_area(gen_two_event_1d(1.4), SupportWeight::Exp);
  CHECK(a0 < a07);
  CHECK(a07 < a14);
}

TEST_CASE("range support is permutation invariant") {
  std::mt19937_64 rng(47);
  ImageGrid im = random_image(24, 24, rng);
  ImageGrid shuffled = im;
  std::shuffle(shuffled.values.begin(), shuffled.values.end(), rng);
  const LossSpec spec = LossSpec::from_name("range-exp");
  CHECK(evaluate_loss(im, spec) == doctest::Approx(evaluate_loss(shuffled, spec)).epsilon(1e-12));
}

TEST_CASE("range support: uniform spread beats concentration") {
  // two-level image (mass in one far bin) vs a uniform staircase over the
  // same value interval: the flat histogram has the larger support
  ImageGrid concentrated(16, 16);
  for (size_t i = 0; i < concentrated.pixels(); ++i)
    concentrated.values[i] = (i == 0) ? 1.0 : 0.0;
  ImageGrid uniform(16, 16);
  for (size_t i = 0; i < uniform.pixels(); ++i)
    uniform.values[i] = double(i) / double(uniform.pixels() - 1);
  const LossSpec spec = LossSpec::from_name("range-exp");
  CHECK(evaluate_loss(uniform, spec) > evaluate_loss(concentrated, spec));
}

TEST_CASE("local statistics on constant images vanish") {
  ImageGrid c(16, 16, 2.5);
  CHECK(image_sum(local_variance_map(c, 2.0)) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss_local_mad(c, 2.0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("local variance map is non-negative up to rounding") {
  std::mt19937_64 rng(53);
  const ImageGrid im = random_image(32, 32, rng);
  const ImageGrid lv = local_variance_map(im, 2.0);
  for (double v : lv.values) CHECK(v >= -1e-9);
}

TEST_CASE("local variance equals brute-force windowed variance at interior pixels") {
  std::mt19937_64 rng(59);
  const ImageGrid im = random_image(32, 32, rng);
  const double sigma = 2.0;
  const int radius = int(std::ceil(3.0 * sigma));
  const ImageGrid lv = local_variance_map(im, sigma);
  const auto k = gaussian_kernel_1d(sigma);
  for (int y = radius; y < im.height - radius; y += 3)
    for (int x = radius; x < im.width - radius; x += 3) {
      double m1 = 0.0, m2 = 0.0;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const double w = k[size_t(dx + radius)] * k[size_t(dy + radius)];
          const double v = im.at(x + dx, y + dy);
          m1 += w * v;
          m2 += w * v * v;
        }
      CHECK(lv.at(x, y) == doctest::Approx(m2 - m1 * m1).epsilon(1e-8));
    }
}

TEST_CASE("moran and geary convolution forms equal the double sums") {
  std::mt19937_64 rng(61);
  LossSpec spec = LossSpec::from_name("moran");
  for (int trial = 0; trial < 3; ++trial) {
    const ImageGrid im = random_image(16, 16, rng);
    CHECK(loss_moran(im, spec) ==
          doctest::Approx(moran_brute(im, spec.sigma_moran, spec.moran_radius)).epsilon(1e-8));
    CHECK(loss_geary(im, spec) ==
          doctest::Approx(geary_brute(im, spec.sigma_moran, spec.moran_radius)).epsilon(1e-8));
  }
}

TEST_CASE("moran sign on clustered and dispersed patterns") {
  const LossSpec spec = LossSpec::from_name("moran");
  ImageGrid blocks(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) blocks.at(x, y) = x < 8 ? 0.0 : 1.0;
  CHECK(loss_moran(blocks, spec) > 0.0);

  ImageGrid checker(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) checker.at(x, y) = double((x + y) % 2);
  CHECK(loss_moran(checker, spec) < 0.0);
  CHECK(loss_geary(checker, spec) > 1.0);
}

TEST_CASE("moran and geary reject constant images") {
  ImageGrid c(8, 8, 1.0);
  const LossSpec spec = LossSpec::from_name("moran");
  CHECK_THROWS_AS(loss_moran(c, spec), std::domain_error);
  CHECK_THROWS_AS(loss_geary(c, spec), std::domain_error);
}

TEST_CASE("derivative losses on constant and ramp images") {
  ImageGrid c(12, 12, 4.0);
  CHECK(loss_gradient_magnitude(c) == 0.0);
  CHECK(loss_laplacian_magnitude(c) == 0.0);
  CHECK(loss_hessian_magnitude(c) == 0.0);
  CHECK(loss_band_pass_energy(c, 1.0, 3.0) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(loss_variance_of_laplacian(c) == 0.0);
  CHECK(loss_variance_of_gradient(c) == 0.0);
  CHECK(loss_variance_of_squared_gradient(c) == 0.0);

  ImageGrid ramp(12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) ramp.at(x, y) = double(x);
  const ImageGrid ix = derivative_x(ramp);
  const ImageGrid lap = laplacian(ramp);
  const ImageGrid gmag = gradient_magnitude_map(ramp, false);
  for (int y = 1; y < 11; ++y)
    for (int x = 1; x < 11; ++x) {
      CHECK(ix.at(x, y) == doctest::Approx(1.0));       // unit gradient inside
      CHECK(lap.at(x, y) == doctest::Approx(0.0));      // linear function
      CHECK(gmag.at(x, y) == doctest::Approx(1.0));     // uniform magnitude
    }
}

TEST_CASE("hessian magnitude dominates half the laplacian magnitude") {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageGrid im = random_image(32, 32, rng);
    CHECK(loss_hessian_magnitude(im) >= 0.5 * loss_laplacian_magnitude(im) - 1e-9);
  }
}

TEST_CASE("variance-of-squared-gradient equals variance of the materialized field") {
  std::mt19937_64 rng(71);
  const ImageGrid im = random_image(24, 24, rng);
  const ImageGrid field = gradient_magnitude_map(im, true);
  CHECK(loss_variance_of_squared_gradient(im) ==
        doctest::Approx(loss_variance(field)).epsilon(1e-10));
}

TEST_CASE("mean timestamp loss") {
  TimestampImage ts;
  ts.mean_t = ImageGrid(4, 4);
  ts.count = ImageGrid(4, 4);
  SUBCASE("empty support is an error") { CHECK_THROWS_AS(mean_timestamp_loss(ts), std::domain_error); }
  SUBCASE("single occupied pixel gives zero") {
    ts.mean_t.at(1, 1) = 0.7;
    ts.count.at(1, 1) = 3.0;
    CHECK(mean_timestamp_loss(ts) == doctest::Approx(0.0));
  }
  SUBCASE("two occupied pixels: population variance") {
    ts.mean_t.at(0, 0) = 0.1;
    ts.count.at(0, 0) = 1.0;
    ts.mean_t.at(2, 2) = 0.3;
    ts.count.at(2, 2) = 1.0;
    CHECK(mean_timestamp_loss(ts) == doctest::Approx(0.01).epsilon(1e-12));
  }
}

TEST_CASE("global losses are permutation invariant, spatial losses are not") {
  // a natural-looking IWE: a few blurred edges
  std::mt19937_64 rng(73);
  SceneSpec scene;
  scene.elements = grid_pattern(CameraGeometry(32, 32, 30, 30, 16, 16), 5, 5, 6.0);
  scene.motion = WarpKind::Flow;
  scene.flow = {25.0, -10.0};
  scene.duration = 0.2;
  scene.rate_per_element = 200.0;
  const auto synth = gen_events(scene, CameraGeometry(32, 32, 30, 30, 16, 16), 5);
  const auto iwe = accumulate_iwe(synth.window, WarpModel::flow(), WarpParams::flow_of({0, 0}),
                                  IweFrame{32, 32, 0, 0}, {});
  ImageGrid shuffled = iwe.image;
  std::shuffle(shuffled.values.begin(), shuffled.values.end(), rng);

  for (const char* name : {"variance", "mean-square", "mad", "mav", "entropy", "range-exp"}) {
    const LossSpec spec = LossSpec::from_name(name);
    CHECK_MESSAGE(evaluate_loss(iwe.image, spec) ==
                      doctest::Approx(evaluate_loss(shuffled, spec)).epsilon(1e-9),
                  name);
  }
  CHECK(evaluate_loss(iwe.image, LossSpec::from_name("area-exp")) ==
        doctest::Approx(evaluate_loss(shuffled, LossSpec::from_name("area-exp"))).epsilon(1e-9));
  for (const char* name : {"local-variance", "local-mean-square", "local-mad", "moran", "geary",
                           "gradient-magnitude", "laplacian-magnitude", "hessian-magnitude", "dog",
                           "log", "variance-of-laplacian", "variance-of-gradient",
                           "variance-of-squared-gradient"}) {
    const LossSpec spec = LossSpec::from_name(name);
    const double a = evaluate_loss(iwe.image, spec);
    const double b = evaluate_loss(shuffled, spec);
    CHECK_MESSAGE(std::abs(a - b) > 1e-9 * std::max(std::abs(a), 1.0), name);
  }
}

TEST_CASE("sense table matches the taxonomy") {
  CHECK(loss_sense(LossKind::Area) == Sense::Minimize);
  CHECK(loss_sense(LossKind::MoranIndex) == Sense::Minimize);
  CHECK(loss_sense(LossKind::MeanTimestamp) == Sense::Minimize);
  CHECK(loss_sense(LossKind::GearyRatio) == Sense::Maximize);
  for (LossKind k :
       {LossKind::Variance, LossKind::MeanSquare, LossKind::Mad, LossKind::Mav, LossKind::Entropy,
        LossKind::Range, LossKind::LocalVariance, LossKind::LocalMeanSquare, LossKind::LocalMad,
        LossKind::LocalMav, LossKind::GradientMagnitude, LossKind::LaplacianMagnitude,
        LossKind::HessianMagnitude, LossKind::DifferenceOfGaussians, LossKind::LaplacianOfGaussian,
        LossKind::VarianceOfLaplacian, LossKind::VarianceOfGradient,
        LossKind::VarianceOfSquaredGradient})
    CHECK(loss_sense(k) == Sense::Maximize);
}

TEST_CASE("loss names round trip") {
  for (const LossSpec& spec : all_loss_specs()) {
    const LossSpec back = LossSpec::from_name(spec.name());
    CHECK(back.kind == spec.kind);
    CHECK(back.weight == spec.weight);
  }
  CHECK(all_loss_specs().size() == 25);  // 22 kinds, area and range split by weight
  CHECK_THROWS_AS(LossSpec::from_name("no-such-loss"), std::invalid_argument);
}
