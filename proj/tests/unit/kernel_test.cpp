#include "vfil/kernel/constants.hpp"
#include "vfil/kernel/kernel.hpp"
#include "vfil/kernel/mollifier.hpp"

#include <gtest/gtest.h>

#include <random>

namespace vfil {
namespace {

// Cross product written out component by component, independent of Eigen.
Vec3 cross_by_hand(const Vec3& a, const Vec3& b) {
  return Vec3(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]);
}

std::shared_ptr<const MassTable> shared_table(double k_max = 4.0) {
  static std::map<double, std::shared_ptr<const MassTable>> cache;
  auto& slot = cache[k_max];
  if (!slot) slot = build_mass_table(build_mollifier(k_max));
  return slot;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

TEST(BiotSavart, UnitCrossProduct) {
  const BiotSavartParams p{4.0 * kPi};
  const Vec3 v = biot_savart_eval(Vec3(1, 0, 0), Vec3(0, 1, 0), p);
  EXPECT_NEAR(v.x(), 0.0, 1e-15);
  EXPECT_NEAR(v.y(), 0.0, 1e-15);
  EXPECT_NEAR(v.z(), 1.0, 1e-15);
}

TEST(BiotSavart, ParallelVectorsGiveZero) {
  const Vec3 v = biot_savart_eval(Vec3(1, 0, 0), Vec3(2, 0, 0), BiotSavartParams{0.37});
  EXPECT_EQ(v.norm(), 0.0);
}

TEST(BiotSavart, HandEvaluationOnAxis) {
  const Vec3 x(0, 0, 2), h(1, 0, 0);
  const Vec3 v = biot_savart_eval(x, h, BiotSavartParams{4.0 * kPi});
  const Vec3 oracle = cross_by_hand(x, h) / 8.0;
  EXPECT_NEAR(v.x(), 0.0, 1e-15);
  EXPECT_NEAR(v.y(), 0.25, 1e-15);
  EXPECT_NEAR(v.z(), 0.0, 1e-15);
  EXPECT_NEAR((v - oracle).norm(), 0.0, 1e-15);
}

TEST(BiotSavart, SingularEvaluationThrows) {
  EXPECT_THROW(biot_savart_eval(Vec3::Zero(), Vec3(1, 0, 0), BiotSavartParams{}), NumericalError);
}

TEST(BiotSavart, InvalidGammaRejected) {
  EXPECT_THROW(BiotSavartParams{0.0}.validate(), PreconditionError);
  EXPECT_THROW(BiotSavartParams{std::nan("")}.validate(), PreconditionError);
}

TEST(BiotSavart, OddAndOrthogonalOnRandomSamples) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const BiotSavartParams p{1.3};
  auto kern = MollifiedKernel(shared_table(), 0.3, p);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const Vec3 h(u(rng), u(rng), u(rng));
    const Vec3 k = biot_savart_eval(x, h, p);
    EXPECT_NEAR((biot_savart_eval(-x, h, p) + k).norm(), 0.0, 1e-14 * k.norm());
    EXPECT_NEAR(k.dot(x), 0.0, 1e-13 * k.norm() * x.norm());
    EXPECT_NEAR(k.dot(h), 0.0, 1e-13 * k.norm() * h.norm());
    const Vec3 km = kern.eval(x, h);
    EXPECT_NEAR((kern.eval(-x, h) + km).norm(), 0.0, 1e-14 * (km.norm() + 1e-300));
    EXPECT_NEAR(km.dot(x), 0.0, 1e-13 * km.norm() * x.norm());
  }
}

TEST(Mollifier, RejectsNonPositiveCutoff) {
  EXPECT_THROW(build_mollifier(0.0), PreconditionError);
  EXPECT_THROW(build_mollifier(-1.0), PreconditionError);
}

TEST(Mollifier, FourierSupportByConstruction) {
  auto prof = build_mollifier(2.0);
  EXPECT_EQ(prof->rho_hat(2.001), 0.0);
  EXPECT_EQ(prof->radial_profile_hat(1.0), 0.0);
  EXPECT_GT(prof->rho_hat(1.9), 0.0);
  EXPECT_NEAR(prof->rho_hat(0.0), 1.0, 1e-15);
}

TEST(Mollifier, NonnegativeAtRandomPoints) {
  for (double k_max : {2.0, 4.0, 7.5}) {
    auto prof = build_mollifier(k_max);
    EXPECT_GT(prof->rho_at_origin(), 0.0);
    std::mt19937_64 rng(11);
    std::exponential_distribution<double> radius(0.2 * k_max);
    for (int i = 0; i < 10000; ++i) EXPECT_GE(prof->rho(radius(rng)), -1e-12);
  }
}

// Independent radial quadrature: composite Simpson of 4 pi r^2 rho(r).
double simpson_mass(const MollifierProfile& prof, double r_max, int intervals) {
  const double h = r_max / intervals;
  double acc = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double r = h * i;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * 4.0 * kPi * r * r * prof.rho(r);
  }
  return acc * h / 3.0;
}

TEST(Mollifier, UnitMassByRadialQuadrature) {
  auto prof = build_mollifier(2.0);
  EXPECT_NEAR(simpson_mass(*prof, 400.0, 40000), 1.0, 1e-6);
}

// Radial Fourier transform of sampled rho: 4 pi \int r^2 rho(r) sinc(q r) dr.
double radial_transform(const std::vector<double>& r, const std::vector<double>& rho, double q) {
  double acc = 0.0;
  const double h = r[1] - r[0];
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double w = (i == 0 || i + 1 == r.size()) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double x = q * r[i];
    const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    acc += w * 4.0 * kPi * r[i] * r[i] * rho[i] * sinc;
  }
  return acc * h / 3.0;
}

TEST(Mollifier, SampledTransformVanishesBeyondCutoff) {
  const double k_max = 4.0;
  auto prof = build_mollifier(k_max);
  std::vector<double> r, rho;
  const int n = 60000;
  for (int i = 0; i <= n; ++i) {
    r.push_back(300.0 * i / n);
    rho.push_back(prof->rho(r.back()));
  }
  double peak = 0.0;
  for (double q = 0.0; q < k_max; q += 0.25) {
    const double direct = radial_transform(r, rho, q);
    peak = std::max(peak, std::abs(direct));
    // The convolution formula and the direct transform agree inside the support.
    EXPECT_NEAR(prof->rho_hat(q), direct, 1e-7) << "q=" << q;
  }
  for (double q = k_max + 0.05; q < 3.0 * k_max; q += 0.1)
    EXPECT_LE(std::abs(radial_transform(r, rho, q)), 1e-8 * peak) << "q=" << q;
}

TEST(MassTable, EndpointsAndMonotone) {
  auto kern = MollifiedKernel(shared_table(), 0.5, BiotSavartParams{});
  EXPECT_EQ(kern.mass(0.0), 0.0);
  EXPECT_NEAR(kern.mass(kern.table_rmax()), 1.0, 1e-8);
  EXPECT_NEAR(kern.table().total_mass(), 1.0, 1e-10);
  double prev = 0.0;
  for (int i = 1; i < 20000; ++i) {
    const double m = kern.mass(1e-4 * i);
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(MassTable, UniformTableMatchesLogTable) {
  const auto table = shared_table();
  double worst = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double s = 0.002 + 6e-4 * i;
    const double a = table->mass_over_cube(s);
    worst = std::max(worst, std::abs(table->fast_mass_over_cube(s) - a) / a);
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(MassTable, MatchesMonteCarloOverBall) {
  const double delta = 0.5;
  auto kern = MollifiedKernel(shared_table(), delta, BiotSavartParams{});
  const auto& prof = kern.profile();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-delta, delta);
  const int samples = 40000;
  double sum = 0.0, sum2 = 0.0;
  int hits = 0;
  // Uniform samples in the cube, indicator of the ball times rho^delta.
  for (int i = 0; i < samples; ++i) {
    const Vec3 y(u(rng), u(rng), u(rng));
    const double r = y.norm();
    double v = 0.0;
    if (r <= delta) {
      v = prof.rho(r / delta) / (delta * delta * delta);
      ++hits;
    }
    sum += v;
    sum2 += v * v;
  }
  const double vol = std::pow(2.0 * delta, 3);
  const double mean = sum / samples;
  const double var = sum2 / samples - mean * mean;
  const double estimate = vol * mean;
  const double sigma = vol * std::sqrt(var / samples);
  EXPECT_GT(hits, 0);
  EXPECT_NEAR(kern.mass(delta), estimate, 3.0 * sigma);
}

TEST(MollifiedKernel, ZeroAtOrigin) {
  auto kern = MollifiedKernel(shared_table(), 0.2, BiotSavartParams{});
  EXPECT_EQ(kern.eval(Vec3::Zero(), Vec3(1, 2, 3)).norm(), 0.0);
}

TEST(MollifiedKernel, FarFieldMatchesSingularKernel) {
  const BiotSavartParams p{1.0};
  auto kern = MollifiedKernel(shared_table(), 0.2, p);
  const Vec3 x(0.0, 0.0, 100.0 * 0.2);
  const Vec3 h(0, 1, 0);
  const Vec3 a = kern.eval(x, h);
  const Vec3 b = biot_savart_eval(x, h, p);
  EXPECT_LE((a - b).norm(), 1e-8 * b.norm());
}

TEST(MollifiedKernel, FarFieldPropertyBeyondFiftyDelta) {
  const BiotSavartParams p{-0.7};
  const double delta = 0.25;
  auto kern = MollifiedKernel(shared_table(), delta, p);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> radius(50.0, 400.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 dir = random_unit(rng);
    Vec3 h = random_unit(rng);
    h = (h - h.dot(dir) * dir).normalized();
    const Vec3 x = radius(rng) * delta * dir;
    const Vec3 k = biot_savart_eval(x, h, p);
    EXPECT_LE((kern.eval(x, h) - k).norm(), 1e-6 * k.norm());
  }
}

TEST(MollifiedKernel, AtOneDeltaUsesTabulatedMass) {
  const double delta = 0.5;
  auto kern = MollifiedKernel(shared_table(), delta, BiotSavartParams{4.0 * kPi});
  const Vec3 v = kern.eval(Vec3(delta, 0, 0), Vec3(0, 1, 0));
  EXPECT_NEAR(v.x(), 0.0, 1e-15);
  EXPECT_NEAR(v.y(), 0.0, 1e-15);
  EXPECT_NEAR(v.z(), kern.mass(delta) / (delta * delta), 1e-13);
}

TEST(MollifiedKernel, NearOriginSeriesIsContinuous) {
  const double delta = 0.3;
  auto kern = MollifiedKernel(shared_table(), delta, BiotSavartParams{});
  const double s = kern.table().s_min();
  const double below = kern.factor(std::pow(s * delta * (1 - 1e-9), 2));
  const double above = kern.factor(std::pow(s * delta * (1 + 1e-9), 2));
  EXPECT_NEAR(below, above, 1e-6 * std::abs(above));
}

// Sixth-order central difference of the divergence of x -> K^delta(x) h.
double fd_divergence(const MollifiedKernel& kern, const Vec3& x, const Vec3& h, double step) {
  static constexpr double c[3] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
  double div = 0.0;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = step;
    for (int j = 1; j <= 3; ++j)
      div += c[j - 1] * (kern.eval(x + j * e, h)[a] - kern.eval(x - j * e, h)[a]);
  }
  return div / step;
}

TEST(MollifiedKernel, DivergenceFreeByFiniteDifferences) {
  const double delta = 0.2;
  auto kern = MollifiedKernel(shared_table(), delta, BiotSavartParams{1.0});
  const auto consts = estimate_kernel_constants(kern, 1);
  const double step = delta / 100.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0 * delta, 5.0 * delta);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    worst = std::max(worst, std::abs(fd_divergence(kern, x, random_unit(rng), step)));
  }
  EXPECT_LE(worst, 1e-6 * consts.c1() * step);
}

TEST(MollifiedKernel, BoundedWithMaximumAtDeltaScale) {
  const double delta = 0.2;
  auto kern = MollifiedKernel(shared_table(), delta, BiotSavartParams{1.0});
  double best = 0.0, arg = 0.0;
  for (int i = 1; i < 4000; ++i) {
    const double r = 1e-3 * delta * std::pow(1e5, i / 4000.0);
    const double v = std::abs(kern.factor(r * r)) * r;
    if (v > best) best = v, arg = r;
  }
  EXPECT_TRUE(std::isfinite(best));
  EXPECT_GT(arg, 0.1 * delta);
  EXPECT_LT(arg, 10.0 * delta);
  EXPECT_NEAR(kern.sup_norm_estimate(), best, 1e-3 * best);
}

TEST(KernelConstants, LargerDeltaFlattensKernel) {
  auto table = shared_table();
  const BiotSavartParams p{4.0 * kPi};
  const auto wide = estimate_kernel_constants(MollifiedKernel(table, 10.0, p), 0);
  const auto unit = estimate_kernel_constants(MollifiedKernel(table, 1.0, p), 0);
  EXPECT_LT(wide.c0(), unit.c0());
}

TEST(KernelConstants, MonotoneInInverseDelta) {
  auto table = shared_table();
  const BiotSavartParams p{1.0};
  std::array<double, 3> prev{};
  for (double delta : {1.0, 0.5, 0.25, 0.125}) {
    const auto k = estimate_all_kernel_constants(MollifiedKernel(table, delta, p));
    for (std::size_t m = 0; m < 3; ++m) {
      EXPECT_GT(k.c[m], prev[m]) << "m=" << m << " delta=" << delta;
      prev[m] = k.c[m];
    }
  }
}

TEST(KernelConstants, SharedDerivativeTermIsConsistent) {
  auto kern = MollifiedKernel(shared_table(), 0.5, BiotSavartParams{1.0});
  const auto k0 = estimate_kernel_constants(kern, 0);
  const auto k1 = estimate_kernel_constants(kern, 1);
  EXPECT_EQ(k0.derivative_sup[1], k1.derivative_sup[1]);
  EXPECT_GE(k1.c1(), k0.derivative_sup[1]);
}

TEST(KernelConstants, RejectsBadOrder) {
  auto kern = MollifiedKernel(shared_table(), 0.5, BiotSavartParams{1.0});
  EXPECT_THROW(estimate_kernel_constants(kern, 3), PreconditionError);
}

TEST(KernelConstants, ExponentIsMeasured) {
  auto table = shared_table();
  std::vector<double> deltas{1.0, 0.5, 0.25, 0.125}, c0;
  for (double d : deltas) c0.push_back(estimate_kernel_constants(MollifiedKernel(table, d, {1.0}), 0).c0());
  const double slope = fitted_exponent(deltas, c0);
  // Exact scaling K^delta(x) = delta^-2 K^1(x / delta) puts the slope between 2 and 3.
  EXPECT_GT(slope, 2.0);
  EXPECT_LT(slope, 3.0);
}

}  // namespace
}  // namespace vfil
