#pragma once

#include "vfil/core.hpp"
#include "vfil/filaments/filament.hpp"
#include "vfil/filaments/sources.hpp"
#include "vfil/kernel/kernel.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vfil {

// A 1-current given by weighted closed polylines. Pairing uses the same
// node-centred elements t_m = (g_{m+1} - g_{m-1}) / 2 as the filament
// velocity, so K^delta * xi here and the filament right-hand side coincide.
struct CurrentPolyline {
  struct Loop {
    double alpha = 0.0;
    std::vector<Vec3> nodes;
    std::uint64_t id = 0;
  };
  std::vector<Loop> loops;

  void validate() const {
    for (const auto& l : loops) {
      if (l.nodes.size() < 3) throw PreconditionError("current: loop needs at least 3 nodes");
      if (!std::isfinite(l.alpha)) throw PreconditionError("current: non-finite weight");
      for (const auto& p : l.nodes)
        if (!all_finite(p)) throw PreconditionError("current: non-finite node");
    }
  }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& l : loops) n += l.nodes.size();
    return n;
  }

  SourceSet sources() const {
    SourceSet s;
    for (const auto& l : loops) s.add_loop(l.nodes, l.alpha);
    return s;
  }

  // Axis-aligned bounding box of all nodes.
  std::pair<Vec3, Vec3> bounds() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& l : loops)
      for (const auto& p : l.nodes) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    return {lo, hi};
  }
};

inline Vec3 loop_element(std::span<const Vec3> nodes, std::size_t m) {
  const std::size_t n = nodes.size();
  return 0.5 * (nodes[(m + 1) % n] - nodes[(m + n - 1) % n]);
}

inline CurrentPolyline empirical_current(const FilamentEnsemble& ens) {
  CurrentPolyline xi;
  xi.loops.reserve(ens.filaments.size());
  for (const auto& f : ens.filaments) xi.loops.push_back({f.alpha, f.nodes, f.id});
  return xi;
}

// sum_loops |alpha| * polygon length
inline double mass_norm_upper(const CurrentPolyline& xi) {
  CompensatedSum acc;
  for (const auto& l : xi.loops) {
    CompensatedSum len;
    for (std::size_t i = 0; i < l.nodes.size(); ++i) len.add((l.nodes[(i + 1) % l.nodes.size()] - l.nodes[i]).norm());
    acc.add(std::abs(l.alpha) * len.value());
  }
  return acc.value();
}

enum class TestFieldKind { constant, linear, bump, trig };

inline const char* to_string(TestFieldKind k) {
  switch (k) {
    case TestFieldKind::constant: return "constant";
    case TestFieldKind::linear: return "linear";
    case TestFieldKind::bump: return "bump";
    case TestFieldKind::trig: return "trig";
  }
  return "unknown";
}

// Test fields with closed-form sup and Lipschitz constants:
//   constant  theta = c
//   linear    theta = A x + c, bounds taken over the ball |x - center| <= radius
//   bump      theta = c exp(-|x - center|^2 / width^2)
//   trig      theta = c cos(k . x + phase)
struct TestField {
  TestFieldKind kind = TestFieldKind::constant;
  Vec3 c = Vec3::Zero();
  Mat3 a = Mat3::Zero();
  Vec3 center = Vec3::Zero();
  double width = 1.0;
  double radius = 1.0;
  Vec3 k = Vec3::Zero();
  double phase = 0.0;
  double scale = 1.0;

  static TestField constant(const Vec3& c) { return TestField{TestFieldKind::constant, c}; }
  static TestField linear(const Mat3& a, const Vec3& c, const Vec3& center, double radius) {
    TestField t;
    t.kind = TestFieldKind::linear;
    t.a = a;
    t.c = c;
    t.center = center;
    t.radius = radius;
    return t;
  }
  static TestField bump(const Vec3& c, const Vec3& center, double width) {
    require(width > 0.0, "bump test field: width must be positive");
    TestField t;
    t.kind = TestFieldKind::bump;
    t.c = c;
    t.center = center;
    t.width = width;
    return t;
  }
  static TestField trig(const Vec3& c, const Vec3& k, double phase) {
    TestField t;
    t.kind = TestFieldKind::trig;
    t.c = c;
    t.k = k;
    t.phase = phase;
    return t;
  }

  Vec3 operator()(const Vec3& x) const {
    switch (kind) {
      case TestFieldKind::constant: return scale * c;
      case TestFieldKind::linear: return scale * (a * x + c);
      case TestFieldKind::bump: return (scale * std::exp(-(x - center).squaredNorm() / (width * width))) * c;
      case TestFieldKind::trig: return (scale * std::cos(k.dot(x) + phase)) * c;
    }
    return Vec3::Zero();
  }

  double sup_norm() const {
    switch (kind) {
      case TestFieldKind::linear: {
        const double opn = Eigen::JacobiSVD<Mat3>(a).singularValues()(0);
        return scale * ((a * center + c).norm() + opn * radius);
      }
      default: return scale * c.norm();
    }
  }

  double lip_constant() const {
    switch (kind) {
      case TestFieldKind::constant: return 0.0;
      case TestFieldKind::linear: return scale * Eigen::JacobiSVD<Mat3>(a).singularValues()(0);
      // max_r (2 r / w^2) e^{-r^2 / w^2} = sqrt(2 / e) / w
      case TestFieldKind::bump: return scale * c.norm() * std::sqrt(2.0 / std::exp(1.0)) / width;
      case TestFieldKind::trig: return scale * c.norm() * k.norm();
    }
    return 0.0;
  }

  double bl_norm() const { return sup_norm() + lip_constant(); }

  // Rescaled so that sup + Lip = 1. A zero field is returned unchanged.
  TestField normalized() const {
    TestField t = *this;
    const double n = bl_norm();
    if (n > 0.0) t.scale = scale / n;
    return t;
  }

  bool admissible() const { return bl_norm() <= 1.0 + 1e-12; }
};

// sum_loops alpha sum_m theta(g_m) . t_m. Per-loop sums are plain, loop totals
// compensated.
template <class Field>
double pair(const CurrentPolyline& xi, const Field& theta) {
  CompensatedSum acc;
  for (const auto& l : xi.loops) {
    if (l.alpha == 0.0) continue;
    double s = 0.0;
    for (std::size_t m = 0; m < l.nodes.size(); ++m) s += theta(l.nodes[m]).dot(loop_element(l.nodes, m));
    acc.add(l.alpha * s);
  }
  return acc.value();
}

inline Vec3 convolve_velocity(const CurrentPolyline& xi, const MollifiedKernel& kern, const Vec3& x) {
  return induced_velocity(xi.sources(), kern, x);
}

// A smooth map with its Jacobian. When `jacobian` is empty a central
// difference with step `fd_step` is used.
struct Diffeomorphism {
  std::function<Vec3(const Vec3&)> map;
  std::function<Mat3(const Vec3&)> jacobian;
  double fd_step = 1e-5;

  Vec3 operator()(const Vec3& x) const { return map(x); }

  Mat3 d(const Vec3& x) const {
    if (jacobian) return jacobian(x);
    Mat3 j;
    for (int k = 0; k < 3; ++k)
      j.col(k) = (map(x + fd_step * Vec3::Unit(k)) - map(x - fd_step * Vec3::Unit(k))) / (2.0 * fd_step);
    return j;
  }

  static Diffeomorphism identity() {
    return {[](const Vec3& x) { return x; }, [](const Vec3&) { return Mat3::Identity(); }};
  }
  static Diffeomorphism translation(const Vec3& v) {
    return {[v](const Vec3& x) { return Vec3(x + v); }, [](const Vec3&) { return Mat3::Identity(); }};
  }
};

inline CurrentPolyline push_forward(const CurrentPolyline& xi, const Diffeomorphism& phi) {
  CurrentPolyline out = xi;
  for (auto& l : out.loops)
    for (auto& p : l.nodes) {
      p = phi(p);
      if (!all_finite(p)) throw NumericalError("push_forward: map returned a non-finite point");
    }
  return out;
}

// Push-forward of pairings moved to the test field: (phi^# theta)(x) = D phi(x)^T theta(phi(x)).
template <class Field>
auto pull_back(const Diffeomorphism& phi, const Field& theta) {
  return [phi, theta](const Vec3& x) -> Vec3 { return phi.d(x).transpose() * theta(phi(x)); };
}

}  // namespace vfil
