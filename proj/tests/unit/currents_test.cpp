#include "support.hpp"
#include "vfil/currents/current.hpp"
#include "vfil/currents/metric.hpp"

#include <gtest/gtest.h>

#include <random>

namespace vfil {
namespace {

using testing::circle;
using testing::kernel;
using testing::ring;

CurrentPolyline one_loop(std::vector<Vec3> nodes, double alpha = 1.0) {
  CurrentPolyline xi;
  xi.loops.push_back({alpha, std::move(nodes), 0});
  return xi;
}

std::vector<Vec3> square(double side, std::size_t per_side, const Vec3& shift = Vec3::Zero()) {
  std::vector<Vec3> pts;
  const Vec3 corners[4] = {Vec3(0, 0, 0), Vec3(side, 0, 0), Vec3(side, side, 0), Vec3(0, side, 0)};
  for (int c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < per_side; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(per_side);
      pts.push_back(corners[c] + t * (corners[(c + 1) % 4] - corners[c]) + shift);
    }
  return pts;
}

// Smooth random closed curve: circle plus a few seeded Fourier modes of size eps.
std::vector<Vec3> wobbly_circle(std::size_t m, double eps, std::mt19937_64& rng, double r = 1.0) {
  std::normal_distribution<double> g;
  Vec3 a[3], b[3];
  for (int k = 0; k < 3; ++k) {
    a[k] = Vec3(g(rng), g(rng), g(rng));
    b[k] = Vec3(g(rng), g(rng), g(rng));
  }
  std::vector<Vec3> pts(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double s = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(m);
    Vec3 p(r * std::cos(s), r * std::sin(s), 0.0);
    for (int k = 0; k < 3; ++k) p += eps * (a[k] * std::cos((k + 1) * s) + b[k] * std::sin((k + 1) * s)) / 3.0;
    pts[i] = p;
  }
  return pts;
}

CurrentPolyline random_current(std::mt19937_64& rng, double eps = 0.3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CurrentPolyline xi;
  const std::size_t loops = 1 + rng() % 3;
  for (std::size_t j = 0; j < loops; ++j) {
    auto pts = wobbly_circle(32, eps, rng, 0.5 + 0.5 * std::abs(u(rng)));
    const Vec3 shift(u(rng), u(rng), u(rng));
    for (auto& p : pts) p += shift;
    xi.loops.push_back({u(rng), pts, j});
  }
  return xi;
}

// Same loops and weights, nodes perturbed smoothly by at most eps.
CurrentPolyline perturbed(const CurrentPolyline& xi, double eps, std::mt19937_64& rng) {
  CurrentPolyline out = xi;
  std::normal_distribution<double> g;
  const Vec3 a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng));
  for (auto& l : out.loops)
    for (auto& p : l.nodes) p += eps * Vec3(std::sin(p.dot(a)), std::cos(p.dot(b)), std::sin(p.dot(a + b))) / std::sqrt(3.0);
  return out;
}

TEST(EmpiricalCurrent, NodeIdenticalLoops) {
  FilamentEnsemble ens({ring(1.0, 256, 1.0, 0), ring(0.5, 32, -2.0, 9, Vec3(0, 0, 1))}, kernel(0.2));
  const auto xi = empirical_current(ens);
  ASSERT_EQ(xi.loops.size(), 2u);
  EXPECT_EQ(xi.loops[1].id, 9u);
  EXPECT_EQ(xi.loops[1].alpha, -2.0);
  EXPECT_EQ(xi.loops[0].nodes, ens.filaments[0].nodes);
  EXPECT_NEAR(mass_norm_upper(one_loop(circle(1.0, 256))), 2.0 * kPi, 1e-3);
}

TEST(EmpiricalCurrent, PairingMatchesStraightforwardLoop) {
  std::mt19937_64 rng(7);
  const auto xi = random_current(rng);
  const auto theta = TestField::bump(Vec3(0.3, -0.4, 0.5), Vec3(0.1, 0.2, 0.0), 0.7);
  double expect = 0.0;
  for (const auto& l : xi.loops) {
    const std::size_t m = l.nodes.size();
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3 d = (l.nodes[(i + 1) % m] - l.nodes[(i + m - 1) % m]) / 2.0;
      expect += l.alpha * theta(l.nodes[i]).dot(d);
    }
  }
  EXPECT_NEAR(pair(xi, theta), expect, 1e-13);
}

TEST(EmpiricalCurrent, ZeroWeightsPairToZero) {
  CurrentPolyline xi = one_loop(circle(1.0, 64), 0.0);
  EXPECT_EQ(pair(xi, TestField::trig(Vec3(1, 0, 0), Vec3(0, 2, 0), 0.3)), 0.0);
}

TEST(Pair, GreenTheoremOnUnitCircle) {
  Mat3 a = Mat3::Zero();
  a(0, 1) = -0.5;
  a(1, 0) = 0.5;
  const TestField raw = TestField::linear(a, Vec3::Zero(), Vec3::Zero(), 1.0);
  const TestField theta = raw.normalized();
  EXPECT_TRUE(theta.admissible());
  const auto xi = one_loop(circle(1.0, 512));
  EXPECT_NEAR(pair(xi, raw), kPi, 1e-4);
  EXPECT_NEAR(pair(xi, theta), pair(xi, raw) * theta.scale, 1e-14);
}

TEST(Pair, ConstantsAnnihilateClosedLoops) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto xi = random_current(rng);
    const double v = pair(xi, TestField::constant(testing::random_unit(rng)));
    EXPECT_LE(std::abs(v), 1e-12 * mass_norm_upper(xi));
  }
}

TEST(Pair, DoublingWeightDoublesExactly) {
  std::mt19937_64 rng(5);
  auto xi = random_current(rng);
  const auto theta = TestField::bump(Vec3(0, 0, 1), Vec3::Zero(), 0.5);
  const double v = pair(xi, theta);
  for (auto& l : xi.loops) l.alpha *= 2.0;
  EXPECT_EQ(pair(xi, theta), 2.0 * v);
}

TEST(TestFieldBounds, BumpLipschitzIsSharp) {
  const auto theta = TestField::bump(Vec3(0, 2, 0), Vec3(0.5, 0, 0), 0.3);
  double worst = 0.0;
  for (int i = 1; i < 4000; ++i) {
    const double r = 1e-3 * i;
    const Vec3 x = theta.center + Vec3(r, 0, 0);
    const Vec3 y = theta.center + Vec3(r + 1e-6, 0, 0);
    worst = std::max(worst, (theta(x) - theta(y)).norm() / 1e-6);
  }
  EXPECT_LE(worst, theta.lip_constant() * (1.0 + 1e-6));
  EXPECT_GE(worst, theta.lip_constant() * (1.0 - 1e-3));
  EXPECT_NEAR(theta.normalized().bl_norm(), 1.0, 1e-14);
}

TEST(ConvolveVelocity, SharesFilamentPath) {
  FilamentEnsemble ens({ring(1.0, 32, 1.0, 0), ring(0.5, 24, -0.3, 1, Vec3(0, 0, 0.7))}, kernel(0.2));
  const auto xi = empirical_current(ens);
  for (const Vec3& x : {Vec3(0.2, 0.1, 0.3), Vec3(1.0, 0.0, 0.0), Vec3(-2, 1, 4)})
    EXPECT_EQ(convolve_velocity(xi, ens.kernel, x), node_velocity(ens, x));
  EXPECT_EQ(convolve_velocity(CurrentPolyline{}, ens.kernel, Vec3(1, 2, 3)), Vec3::Zero());
}

TEST(ConvolveVelocity, FarFieldMatchesSingularLineIntegral) {
  const auto kern = kernel(0.05);
  const auto xi = one_loop(circle(0.5, 64), 1.3);
  for (const Vec3& x : {Vec3(3.0, 0.5, 1.0), Vec3(0.0, 0.0, 3.5), Vec3(-4, 2, 0)}) {
    Vec3 ref = Vec3::Zero();
    const auto& nodes = xi.loops[0].nodes;
    for (std::size_t m = 0; m < nodes.size(); ++m)
      ref += 1.3 * biot_savart_eval(x - nodes[m], loop_element(nodes, m), kern.params());
    EXPECT_LE((convolve_velocity(xi, kern, x) - ref).norm(), 1e-6 * ref.norm());
  }
}

TEST(ConvolveVelocity, BoundedByMassTimesKernelSup) {
  std::mt19937_64 rng(11);
  const auto kern = kernel(0.2);
  const auto xi = random_current(rng);
  const double bound = mass_norm_upper(xi) * kern.sup_norm_estimate();
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) EXPECT_LE(convolve_velocity(xi, kern, Vec3(u(rng), u(rng), u(rng))).norm(), bound);
}

TEST(MassNorm, AbsoluteAndAdditive) {
  const auto a = one_loop(circle(1.0, 64), 0.7);
  const auto b = one_loop(circle(1.0, 64), -0.7);
  EXPECT_EQ(mass_norm_upper(a), mass_norm_upper(b));
  CurrentPolyline both = a;
  both.loops.push_back(one_loop(square(0.5, 8), 2.0).loops[0]);
  EXPECT_DOUBLE_EQ(mass_norm_upper(both), mass_norm_upper(a) + mass_norm_upper(one_loop(square(0.5, 8), 2.0)));
}

TEST(MassNorm, BoundsPairingTimesSup) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto xi = random_current(rng);
    const auto theta = TestField::bump(testing::random_unit(rng), Vec3::Zero(), 0.2 + 0.1 * trial);
    EXPECT_LE(std::abs(pair(xi, theta)), mass_norm_upper(xi) * theta.sup_norm() * (1.0 + 1e-12));
  }
}

TEST(PushForward, IdentityAndTranslation) {
  std::mt19937_64 rng(17);
  const auto xi = random_current(rng);
  const auto same = push_forward(xi, Diffeomorphism::identity());
  for (std::size_t j = 0; j < xi.loops.size(); ++j) EXPECT_EQ(same.loops[j].nodes, xi.loops[j].nodes);
  const Vec3 v(0.3, -0.1, 0.2);
  const auto moved = push_forward(xi, Diffeomorphism::translation(v));
  const auto theta = TestField::bump(Vec3(1, 0, 0), Vec3(0.2, 0.3, 0.1), 0.6);
  const auto shifted = [&](const Vec3& x) { return theta(x + v); };
  EXPECT_NEAR(pair(moved, theta), pair(xi, shifted), 1e-13);
}

TEST(PushForward, DualityErrorIsSecondOrder) {
  const Diffeomorphism phi{[](const Vec3& x) {
                             return Vec3(x.x() + 0.2 * std::sin(x.y()), x.y() + 0.1 * x.z() * x.z(),
                                         x.z() + 0.15 * std::cos(x.x()));
                           },
                           {}};
  const auto theta = TestField::trig(Vec3(0.2, 0.5, -0.3), Vec3(1.0, 0.7, -0.4), 0.2);
  std::vector<double> err;
  for (std::size_t m : {32u, 64u, 128u}) {
    const auto xi = one_loop(circle(1.0, m, Vec3(0.1, 0.0, 0.3)), 0.8);
    err.push_back(std::abs(pair(push_forward(xi, phi), theta) - pair(xi, pull_back(phi, theta))));
  }
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.4);
  EXPECT_NEAR(err[1] / err[2], 4.0, 0.4);
}

TEST(MetricLower, IdenticalCurrentsGiveZero) {
  std::mt19937_64 rng(19);
  const auto xi = random_current(rng);
  EXPECT_EQ(bl_metric_lower(xi, xi).lower, 0.0);
  EXPECT_EQ(bl_metric_upper(xi, xi).upper, 0.0);
}

TEST(MetricLower, TranslatedSquareSandwich) {
  const auto a = one_loop(square(1.0, 16));
  const auto b = one_loop(square(1.0, 16, Vec3(0.1, 0.0, 0.0)));
  const auto lo = bl_metric_lower(a, b);
  const auto up = bl_metric_upper(a, b);
  EXPECT_GT(lo.lower, 0.0);
  EXPECT_LE(lo.lower, up.upper);
  EXPECT_TRUE(lo.witness.admissible());
  // |alpha| |shift| sum_m |t_m|, at most |shift| times the perimeter.
  double elements = 0.0;
  for (std::size_t m = 0; m < a.loops[0].nodes.size(); ++m) elements += loop_element(a.loops[0].nodes, m).norm();
  EXPECT_NEAR(up.upper, 0.1 * elements, 1e-12);
  EXPECT_LE(up.upper, 0.1 * 4.0);
}

TEST(MetricLower, PositivelyHomogeneous) {
  std::mt19937_64 rng(23);
  const auto a = random_current(rng);
  const auto b = perturbed(a, 0.1, rng);
  auto a3 = a, b3 = b;
  for (auto& l : a3.loops) l.alpha *= 3.0;
  for (auto& l : b3.loops) l.alpha *= 3.0;
  const double v1 = bl_metric_lower(a, b, {}, 4).lower;
  const double v3 = bl_metric_lower(a3, b3, {}, 4).lower;
  EXPECT_NEAR(v3, 3.0 * v1, 1e-10 * v3);
}

TEST(MetricUpper, TranslationIsLinearInShift) {
  const auto a = one_loop(square(1.0, 8), 0.5);
  double prev = 0.0;
  for (double s : {0.01, 0.02, 0.04}) {
    const double u = bl_metric_upper(a, one_loop(square(1.0, 8, Vec3(0, s, s)), 0.5)).upper;
    EXPECT_LE(u, 0.5 * (std::sqrt(2.0) * s * 4.0) * (1.0 + 1e-12));
    if (prev > 0.0) {
      EXPECT_NEAR(u / prev, 2.0, 1e-9);
    }
    prev = u;
  }
}

TEST(MetricUpper, PerturbationSandwich) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = one_loop(circle(1.0, 64));
    const double eps = 1e-2;
    const auto b = one_loop(wobbly_circle(64, eps, rng));
    const auto up = bl_metric_upper(a, b).upper;
    EXPECT_LE(up, 40.0 * eps);
    EXPECT_GE(up, bl_metric_lower(a, b, {}, trial).lower);
  }
}

TEST(MetricUpper, MismatchHandling) {
  const auto a = one_loop(circle(1.0, 32), 1.0);
  const auto b = one_loop(circle(1.0, 32), 2.0);
  EXPECT_THROW(bl_metric_upper(a, b), PreconditionError);
  const auto c = one_loop(circle(1.0, 40), 1.0);
  const auto est = bl_metric_upper(a, c);
  EXPECT_EQ(est.upper_method, "unmatched");
  EXPECT_DOUBLE_EQ(est.upper, mass_norm_upper(a) + mass_norm_upper(c));
}

TEST(MetricUpper, CoupledPlanGeneralisesMatching) {
  CurrentPolyline a;
  a.loops.push_back({0.5, circle(1.0, 32), 0});
  a.loops.push_back({0.5, circle(1.1, 32), 1});
  CurrentPolyline b;
  b.loops.push_back({1.0, circle(1.05, 32), 0});
  const auto up = bl_metric_upper_coupled(a, b, {{0, 0, 0.5}, {1, 0, 0.5}});
  EXPECT_EQ(up.upper_method, "coupled");
  const double expect = 0.5 * bl_metric_upper(one_loop(circle(1.0, 32)), one_loop(circle(1.05, 32))).upper +
                        0.5 * bl_metric_upper(one_loop(circle(1.1, 32)), one_loop(circle(1.05, 32))).upper;
  EXPECT_NEAR(up.upper, expect, 1e-14);
  EXPECT_GE(up.upper, bl_metric_lower(a, b).lower);
  EXPECT_THROW(bl_metric_upper_coupled(a, b, {{0, 0, 0.5}, {1, 0, 0.4}}), PreconditionError);
  const auto one = bl_metric_upper_coupled(b, b, {{0, 0, 1.0}});
  EXPECT_EQ(one.upper, 0.0);
}

TEST(MetricSuite, SandwichTriangleAndMassBound) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_current(rng);
    const auto b = perturbed(a, 0.05, rng);
    const auto c = perturbed(b, 0.05, rng);
    const double lab = bl_metric_lower(a, b, {}, trial).lower;
    EXPECT_GE(lab, 0.0);
    EXPECT_LE(lab, bl_metric_upper(a, b).upper);
    EXPECT_LE(bl_metric_lower(a, c, {}, trial).lower, bl_metric_upper(a, b).upper + bl_metric_upper(b, c).upper);
    EXPECT_LE(bl_metric_lower(a, CurrentPolyline{}, {}, trial).lower, mass_norm_upper(a));
  }
}

TEST(FieldNorm, ZeroCurrentAndPreconditions) {
  const auto kern = kernel(0.2);
  EXPECT_EQ(l2_field_norm(CurrentPolyline{}, kern).l2, 0.0);
  const auto xi = one_loop(circle(0.5, 32));
  EXPECT_THROW(l2_field_norm(xi, kern, {0.1, 4.0}), PreconditionError);
  EXPECT_THROW(l2_field_norm(xi, kern, {0.05, 2.0}), PreconditionError);
}

TEST(FieldNorm, GridConvergedAndTailSmall) {
  const auto kern = kernel(0.2);
  const auto xi = one_loop(circle(0.5, 32));
  const auto coarse = l2_field_norm(xi, kern);
  const auto fine = l2_field_norm(xi, kern, {0.025, 4.0});
  EXPECT_GT(coarse.l2, 0.0);
  EXPECT_LE(std::abs(coarse.l2 / fine.l2 - 1.0), 0.01);
  EXPECT_LE(coarse.tail_sq, 1e-2 * coarse.l2 * coarse.l2);
  EXPECT_GT(coarse.sup, 0.0);
  EXPECT_NEAR(sampled_sup_field(xi, kern), coarse.sup, 0.05 * coarse.sup);
}

TEST(Conservation, InitialSnapshotHasNoDrift) {
  const auto kern = kernel(0.2);
  const auto xi = one_loop(circle(0.5, 32));
  const auto rep = conservation_report({0.0}, {xi}, kern);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].l2_drift, 0.0);
  EXPECT_TRUE(rep.rows[0].ee3_pass);
  EXPECT_LE(rep.rows[0].bl_lower, rep.initial_mass);
}

}  // namespace
}  // namespace vfil
