#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/quadrature.hpp"

#include <span>
#include <vector>

namespace vfil {

// C2 periodic cubic spline through closed-curve nodes at integer parameters
// sigma = 0, 1, ..., M-1 (period M).
class PeriodicSpline {
 public:
  explicit PeriodicSpline(std::span<const Vec3> nodes) : nodes_(nodes.begin(), nodes.end()) {
    const std::size_t n = nodes_.size();
    require(n >= 3, "periodic spline needs at least 3 nodes");
    second_.assign(n, Vec3::Zero());
    // Cyclic system M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}).
    std::vector<Vec3> rhs(n);
    for (std::size_t i = 0; i < n; ++i)
      rhs[i] = 6.0 * (nodes_[(i + 1) % n] - 2.0 * nodes_[i] + nodes_[(i + n - 1) % n]);
    solve_cyclic(rhs);
  }

  std::size_t size() const { return nodes_.size(); }

  Vec3 eval(double sigma) const {
    const auto [i, t] = locate(sigma);
    const std::size_t j = (i + 1) % nodes_.size();
    const double u = 1.0 - t;
    return u * nodes_[i] + t * nodes_[j] + ((u * u * u - u) * second_[i] + (t * t * t - t) * second_[j]) / 6.0;
  }

  Vec3 derivative(double sigma) const {
    const auto [i, t] = locate(sigma);
    const std::size_t j = (i + 1) % nodes_.size();
    const double u = 1.0 - t;
    return nodes_[j] - nodes_[i] + ((-3.0 * u * u + 1.0) * second_[i] + (3.0 * t * t - 1.0) * second_[j]) / 6.0;
  }

  // Arclength of the piece between knots i and i+1 from its start up to local t.
  double piece_length(std::size_t i, double t_end) const {
    const auto rule = composite_gauss_legendre(0.0, t_end, 1);
    return rule.integrate([&](double t) { return derivative(static_cast<double>(i) + t).norm(); });
  }

 private:
  std::pair<std::size_t, double> locate(double sigma) const {
    const double n = static_cast<double>(nodes_.size());
    double s = std::fmod(sigma, n);
    if (s < 0.0) s += n;
    auto i = static_cast<std::size_t>(s);
    if (i >= nodes_.size()) i = nodes_.size() - 1;
    return {i, s - static_cast<double>(i)};
  }

  // Sherman-Morrison on the cyclic tridiagonal (1, 4, 1) system.
  void solve_cyclic(const std::vector<Vec3>& rhs) {
    const std::size_t n = rhs.size();
    const double gamma = -4.0;
    std::vector<double> diag(n, 4.0);
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    std::vector<Vec3> x = thomas(diag, rhs);
    std::vector<Vec3> u(n, Vec3::Zero());
    u[0] = Vec3::Constant(gamma);
    u[n - 1] = Vec3::Constant(1.0);
    std::vector<Vec3> z = thomas(diag, u);
    for (int k = 0; k < 3; ++k) {
      const double num = x[0][k] + x[n - 1][k] / gamma;
      const double den = 1.0 + z[0][k] + z[n - 1][k] / gamma;
      const double fact = num / den;
      for (std::size_t i = 0; i < n; ++i) second_[i][k] = x[i][k] - fact * z[i][k];
    }
  }

  static std::vector<Vec3> thomas(const std::vector<double>& diag, const std::vector<Vec3>& rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n, 0.0);
    std::vector<Vec3> d(n);
    c[0] = 1.0 / diag[0];
    d[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double m = diag[i] - c[i - 1];
      c[i] = 1.0 / m;
      d[i] = (rhs[i] - d[i - 1]) / m;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
    return d;
  }

  std::vector<Vec3> nodes_;
  std::vector<Vec3> second_;
};

}  // namespace vfil
