#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/quadrature.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace vfil {

// Radial mollifier rho = |psi|^2 / ||psi||^2 where psi_hat is a fixed C-infinity
// bump supported in |k| <= k_max / 2. Then rho >= 0 pointwise, the Fourier
// transform rho_hat = (2 pi)^-3 (psi_hat * psi_hat) / ||psi||^2 vanishes for
// |k| >= k_max, and rho_hat(0) = 1.
//
// Fourier convention: f_hat(k) = \int f(x) exp(-i k.x) dx.
class MollifierProfile {
 public:
  explicit MollifierProfile(double fourier_cutoff) : k_max_(fourier_cutoff) {
    if (!(fourier_cutoff > 0.0) || !std::isfinite(fourier_cutoff))
      throw PreconditionError("mollifier: fourier_cutoff must be positive and finite");
    half_ = 0.5 * k_max_;
    rule_ = composite_gauss_legendre(0.0, half_, kPanels);
    kpsi_.resize(rule_.nodes.size());
    double k2psi = 0.0;
    double k2psi2 = 0.0;
    for (std::size_t i = 0; i < rule_.nodes.size(); ++i) {
      const double k = rule_.nodes[i];
      const double b = bump(k);
      kpsi_[i] = rule_.weights[i] * k * b;
      k2psi += rule_.weights[i] * k * k * b;
      k2psi2 += rule_.weights[i] * k * k * b * b;
    }
    psi0_ = k2psi / (2.0 * kPi * kPi);
    // Parseval: ||psi||^2 = (2 pi)^-3 \int |psi_hat|^2 dk.
    norm_ = 4.0 * kPi * k2psi2 / std::pow(2.0 * kPi, 3);
    build_antiderivative();
  }

  double fourier_cutoff() const { return k_max_; }
  double normalization() const { return norm_; }

  // psi_hat(k): exp(-1 / (1 - (k/c)^2)) for |k| < c, zero otherwise.
  double radial_profile_hat(double k) const { return bump(std::abs(k)); }

  double psi(double r) const {
    r = std::abs(r);
    if (r < 1e-6 / half_) return psi0_;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule_.nodes.size(); ++i) acc += kpsi_[i] * std::sin(rule_.nodes[i] * r);
    return acc / (2.0 * kPi * kPi * r);
  }

  double rho(double r) const {
    const double p = psi(r);
    return p * p / norm_;
  }

  double rho_at_origin() const { return psi0_ * psi0_ / norm_; }

  // rho_hat(q) from the 3D radial autocorrelation of psi_hat:
  //   (f*f)(q) = (2 pi / q) \int_0^c p f(p) [G(q+p) - G(|q-p|)] dp,
  // with G(s) = \int_0^s t f(t) dt.
  double rho_hat(double q) const {
    q = std::abs(q);
    if (q >= k_max_) return 0.0;
    if (q < 1e-9 * k_max_) return 1.0;
    // Kinks of the integrand sit at p = q and p = c - q.
    std::vector<double> cuts{0.0, half_};
    if (q < half_) cuts.push_back(q);
    if (half_ - q > 0.0) cuts.push_back(half_ - q);
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      if (cuts[c + 1] - cuts[c] <= 0.0) continue;
      const auto rule = composite_gauss_legendre(cuts[c], cuts[c + 1], 4);
      acc += rule.integrate([&](double p) {
        return p * bump(p) * (antiderivative(q + p) - antiderivative(std::abs(q - p)));
      });
    }
    const double conv = 2.0 * kPi / q * acc;
    return conv / (std::pow(2.0 * kPi, 3) * norm_);
  }

 private:
  static constexpr std::size_t kPanels = 48;
  static constexpr std::size_t kAntiderivativeCells = 4096;

  double bump(double k) const {
    const double t = k / half_;
    if (t >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - t * t));
  }

  void build_antiderivative() {
    // G on a uniform grid with exact slopes t * psi_hat(t); cubic Hermite in between.
    g_step_ = half_ / static_cast<double>(kAntiderivativeCells);
    g_values_.assign(kAntiderivativeCells + 1, 0.0);
    for (std::size_t i = 0; i < kAntiderivativeCells; ++i) {
      const double lo = g_step_ * static_cast<double>(i);
      const auto rule = composite_gauss_legendre(lo, lo + g_step_, 1);
      g_values_[i + 1] = g_values_[i] + rule.integrate([&](double t) { return t * bump(t); });
    }
  }

  double antiderivative(double s) const {
    if (s <= 0.0) return 0.0;
    if (s >= half_) return g_values_.back();
    const double x = s / g_step_;
    const auto i = static_cast<std::size_t>(x);
    const double t = x - static_cast<double>(i);
    const double s0 = g_step_ * static_cast<double>(i);
    const double s1 = s0 + g_step_;
    const double d0 = s0 * bump(s0) * g_step_;
    const double d1 = s1 * bump(s1) * g_step_;
    const double y0 = g_values_[i];
    const double y1 = g_values_[i + 1];
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 +
           (t3 - t2) * d1;
  }

  double k_max_;
  double half_;
  double psi0_ = 0.0;
  double norm_ = 1.0;
  QuadratureRule rule_;
  std::vector<double> kpsi_;
  double g_step_ = 0.0;
  std::vector<double> g_values_;
};

inline std::shared_ptr<const MollifierProfile> build_mollifier(double fourier_cutoff) {
  return std::make_shared<const MollifierProfile>(fourier_cutoff);
}

}  // namespace vfil
