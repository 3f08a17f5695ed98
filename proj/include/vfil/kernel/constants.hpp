#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/kernel.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace vfil {

// Deterministic sample grid for sup-norm estimation: log-spaced radii in units
// of delta times a Fibonacci sphere of directions.
struct SampleResolution {
  std::size_t radii = 48;
  std::size_t directions = 26;
  double r_min_over_delta = 0.01;
  double r_max_over_delta = 20.0;
  double fd_step_over_delta = 0.01;
};

// C^m_delta = ||D^m K^delta||_inf + ||D^{m+1} K^delta||_inf, estimated as sampled
// maxima of the Frobenius norm of the derivative tensor. Sampled maxima are
// lower estimates of the true suprema.
struct KernelConstants {
  double delta = 0.0;
  std::array<double, 3> c{};            // c0, c1, c2
  std::array<double, 4> derivative_sup{};  // ||D^j K^delta|| for j = 0..3
  SampleResolution resolution;

  double c0() const { return c[0]; }
  double c1() const { return c[1]; }
  double c2() const { return c[2]; }
};

namespace detail {

inline std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> dirs;
  dirs.reserve(n);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    dirs.emplace_back(rad * std::cos(phi), rad * std::sin(phi), z);
  }
  return dirs;
}

// Sum of squares of all entries of the order-th derivative tensor of the 3x3
// kernel matrix at x, by nested central differences with step h.
inline double derivative_tensor_norm2(const MollifiedKernel& kern, const Vec3& x, int order, double h) {
  if (order == 0) return kern.matrix(x).squaredNorm();
  double acc = 0.0;
  // Enumerate all multi-indices (a1..am); each partial is a nested stencil.
  std::vector<int> idx(static_cast<std::size_t>(order), 0);
  while (true) {
    // Stencil: sum over sign patterns of prod(sign) K(x + h * sum sign_j e_{a_j}) / (2h)^m.
    Mat3 d = Mat3::Zero();
    const int patterns = 1 << order;
    for (int p = 0; p < patterns; ++p) {
      Vec3 shift = Vec3::Zero();
      double sign = 1.0;
      for (int j = 0; j < order; ++j) {
        const double s = (p >> j) & 1 ? -1.0 : 1.0;
        sign *= s;
        shift[idx[static_cast<std::size_t>(j)]] += s * h;
      }
      d += sign * kern.matrix(x + shift);
    }
    d /= std::pow(2.0 * h, order);
    acc += d.squaredNorm();
    int j = 0;
    while (j < order && ++idx[static_cast<std::size_t>(j)] == 3) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == order) break;
  }
  return acc;
}

}  // namespace detail

// Sampled sup of ||D^order K^delta|| over the resolution grid.
inline double sampled_derivative_sup(const MollifiedKernel& kern, int order, const SampleResolution& res) {
  require(order >= 0 && order <= 3, "derivative order must be in 0..3");
  require(res.radii >= 2 && res.directions >= 1, "sample resolution too small");
  const auto dirs = detail::fibonacci_sphere(res.directions);
  const double delta = kern.delta();
  const double h = res.fd_step_over_delta * delta;
  const std::size_t total = res.radii * dirs.size();
  std::vector<double> values(total, 0.0);
  parallel_for(total, [&](std::size_t k) {
    const std::size_t ir = k / dirs.size();
    const std::size_t id = k % dirs.size();
    const double frac = static_cast<double>(ir) / static_cast<double>(res.radii - 1);
    const double r = delta * res.r_min_over_delta *
                     std::pow(res.r_max_over_delta / res.r_min_over_delta, frac);
    values[k] = detail::derivative_tensor_norm2(kern, r * dirs[id], order, h);
  });
  double best = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("kernel constants: non-finite finite-difference value");
    best = std::max(best, v);
  }
  return std::sqrt(best);
}

// One entry C^m_delta for m in {0, 1, 2}; the returned struct carries only the
// derivative sups that were needed.
inline KernelConstants estimate_kernel_constants(const MollifiedKernel& kern, int m,
                                                 const SampleResolution& res = {}) {
  require(m >= 0 && m <= 2, "estimate_kernel_constants: m must be 0, 1 or 2");
  KernelConstants out;
  out.delta = kern.delta();
  out.resolution = res;
  out.derivative_sup[static_cast<std::size_t>(m)] = sampled_derivative_sup(kern, m, res);
  out.derivative_sup[static_cast<std::size_t>(m + 1)] = sampled_derivative_sup(kern, m + 1, res);
  out.c[static_cast<std::size_t>(m)] =
      out.derivative_sup[static_cast<std::size_t>(m)] + out.derivative_sup[static_cast<std::size_t>(m + 1)];
  return out;
}

inline KernelConstants estimate_all_kernel_constants(const MollifiedKernel& kern, const SampleResolution& res = {}) {
  KernelConstants out;
  out.delta = kern.delta();
  out.resolution = res;
  for (int j = 0; j <= 3; ++j) out.derivative_sup[static_cast<std::size_t>(j)] = sampled_derivative_sup(kern, j, res);
  for (std::size_t m = 0; m < 3; ++m) out.c[m] = out.derivative_sup[m] + out.derivative_sup[m + 1];
  return out;
}

// Least-squares slope of log c_m against log(1/delta).
inline double fitted_exponent(const std::vector<double>& deltas, const std::vector<double>& values) {
  require(deltas.size() == values.size() && deltas.size() >= 2, "fitted_exponent: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double x = -std::log(deltas[i]);
    const double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace vfil
