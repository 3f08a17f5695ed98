#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <array>
#include <cstddef>
#include <vector>

namespace vfil {

// Nodes and weights of a composite Gauss-Legendre rule on [a, b].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class Fn>
  double integrate(Fn&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

inline QuadratureRule composite_gauss_legendre(double a, double b, std::size_t panels) {
  using Gauss = boost::math::quadrature::gauss<double, 16>;
  const auto& absc = Gauss::abscissa();
  const auto& wts = Gauss::weights();
  QuadratureRule rule;
  rule.nodes.reserve(panels * 16);
  rule.weights.reserve(panels * 16);
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double mid = lo + 0.5 * width;
    const double half = 0.5 * width;
    // Boost stores the non-negative half of a symmetric rule.
    for (std::size_t i = 0; i < absc.size(); ++i) {
      rule.nodes.push_back(mid - half * absc[i]);
      rule.weights.push_back(half * wts[i]);
      rule.nodes.push_back(mid + half * absc[i]);
      rule.weights.push_back(half * wts[i]);
    }
  }
  return rule;
}

}  // namespace vfil
