#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/constants.hpp"

#include <cmath>
#include <limits>

namespace vfil {

// Constants of the current-level stability estimate, kept as natural logs.
//   C*  = R^2 (C0 C1 + C2 (1 + C0 C1 T R e^{C1 T R})) e^{2 T C1 R}
//   C_* = (T C2 R + 2) e^{2 C1 T R}
//   C_{delta,R} = C_* e^{T C*}
// C^0_K in the source display is read as C0 = C^0_delta.
struct StabilityConstants {
  double delta = 0.0;
  double R = 0.0;
  double T = 0.0;
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double log_c_star = 0.0;
  double log_c_lower_star = 0.0;
  double log_c_delta_R = 0.0;  // +inf when T C* itself overflows
  double log10_exponent = 0.0;  // log10(T C*), always finite for T > 0

  double c_star() const { return std::exp(log_c_star); }
  double c_lower_star() const { return std::exp(log_c_lower_star); }
  double c_delta_R() const { return std::exp(log_c_delta_R); }
  bool overflows() const { return !std::isfinite(c_delta_R()); }
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace detail

inline StabilityConstants stability_constant(double c0, double c1, double c2, double R, double T, double delta = 0.0) {
  require(R > 0.0 && std::isfinite(R), "stability_constant: R must be positive");
  require(T >= 0.0 && std::isfinite(T), "stability_constant: T must be nonnegative");
  require(c0 > 0.0 && c1 > 0.0 && c2 > 0.0 && std::isfinite(c0 * c1 * c2),
          "stability_constant: kernel constants must be positive and finite");
  StabilityConstants s;
  s.delta = delta;
  s.R = R;
  s.T = T;
  s.c0 = c0;
  s.c1 = c1;
  s.c2 = c2;
  const double a = c1 * T * R;
  const double inner = detail::log_add(std::log(c0 * c1 + c2),
                                       T > 0.0 ? std::log(c2) + std::log(c0) + std::log(c1) + std::log(T * R) + a
                                               : -std::numeric_limits<double>::infinity());
  s.log_c_star = 2.0 * std::log(R) + inner + 2.0 * a;
  s.log_c_lower_star = std::log(T * c2 * R + 2.0) + 2.0 * a;
  if (T > 0.0) {
    const double log_exponent = std::log(T) + s.log_c_star;
    s.log10_exponent = log_exponent / std::log(10.0);
    s.log_c_delta_R = s.log_c_lower_star + std::exp(log_exponent);
  } else {
    s.log10_exponent = -std::numeric_limits<double>::infinity();
    s.log_c_delta_R = s.log_c_lower_star;
  }
  return s;
}

inline StabilityConstants stability_constant(const KernelConstants& k, double R, double T) {
  return stability_constant(k.c0(), k.c1(), k.c2(), R, T, k.delta);
}

}  // namespace vfil
