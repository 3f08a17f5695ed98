#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/mollifier.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace vfil {

struct BiotSavartParams {
  double gamma = 1.0;

  void validate() const {
    if (!std::isfinite(gamma) || gamma == 0.0)
      throw PreconditionError("biot-savart: gamma must be finite and nonzero");
  }
};

// Singular kernel K(x)h = (gamma / 4 pi) x / |x|^3 x h.
inline Vec3 biot_savart_eval(const Vec3& x, const Vec3& h, const BiotSavartParams& params) {
  const double r2 = x.squaredNorm();
  if (r2 == 0.0) throw NumericalError("biot_savart_eval: singular evaluation at x = 0");
  const double r = std::sqrt(r2);
  return (params.gamma / (4.0 * kPi * r2 * r)) * x.cross(h);
}

struct MassTableSpec {
  double s_min = 1e-3;     // below this the r^3 series is used
  double s_far = 0.0;      // 0 selects 800 / k_max
  std::size_t cells = 4096;
  double tail_tolerance = 1e-14;
  double uniform_step = 1.0 / 64.0;  // s-spacing of the hot-path table for m(s) / s^3
};

// Unit-scale radial mass m_1(s) = \int_{|y| <= s} rho(y) dy tabulated on a
// uniform grid in u = ln s. Interpolation is cubic Hermite with the exact
// slope dm/du = 4 pi s^3 rho(s), limited (Fritsch-Carlson) to stay monotone.
// For a scale delta, m_delta(r) = m_1(r / delta).
class MassTable {
 public:
  MassTable(std::shared_ptr<const MollifierProfile> profile, const MassTableSpec& spec = {})
      : profile_(std::move(profile)) {
    if (!profile_) throw PreconditionError("mass table: null mollifier profile");
    const double s_far = spec.s_far > 0.0 ? spec.s_far : 800.0 / profile_->fourier_cutoff();
    require(spec.s_min > 0.0 && s_far > spec.s_min && spec.cells >= 16,
            "mass table: invalid table spec");
    rho0_ = profile_->rho_at_origin();
    u0_ = std::log(spec.s_min);
    du_ = (std::log(s_far) - u0_) / static_cast<double>(spec.cells);
    const std::size_t n = spec.cells + 1;

    auto integrand = [this](double s) { return 4.0 * kPi * s * s * profile_->rho(s); };
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    std::vector<double> inc(n, 0.0);
    inc[0] = GK::integrate(integrand, 0.0, spec.s_min, 3, 1e-10);
    for (std::size_t i = 1; i < n; ++i) {
      const double a = std::exp(u0_ + du_ * static_cast<double>(i - 1));
      const double b = std::exp(u0_ + du_ * static_cast<double>(i));
      inc[i] = GK::integrate(integrand, a, b, 3, 1e-10);
      if (!(inc[i] >= 0.0))
        throw NumericalError("mass table: negative or non-finite mass increment (quadrature failure)");
    }
    // Prefix sums give m; suffix sums give 1 - m without cancellation.
    values_.assign(n, 0.0);
    CompensatedSum head;
    for (std::size_t i = 0; i < n; ++i) {
      head.add(inc[i]);
      values_[i] = head.value();
    }
    total_mass_ = values_.back();
    std::vector<double> tail(n, 0.0);
    CompensatedSum suffix;
    for (std::size_t i = n; i-- > 1;) {
      suffix.add(inc[i]);
      tail[i - 1] = suffix.value();
    }
    // Truncate where the remaining mass is negligible; beyond it m = 1.
    std::size_t last = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (tail[i] < spec.tail_tolerance) {
        last = i;
        break;
      }
    }
    values_.resize(last + 1);
    slopes_.resize(last + 1);
    for (std::size_t i = 0; i <= last; ++i) {
      const double s = std::exp(u0_ + du_ * static_cast<double>(i));
      slopes_[i] = 4.0 * kPi * s * s * s * profile_->rho(s);
    }
    for (std::size_t i = 1; i < values_.size(); ++i) {
      if (values_[i] < values_[i - 1])
        throw NumericalError("mass table: non-monotone table after quadrature");
    }
    limit_slopes();
    s_max_ = std::exp(u0_ + du_ * static_cast<double>(values_.size() - 1));
    s_min_ = spec.s_min;
    series_coeff_ = 4.0 * kPi / 3.0 * rho0_;
    build_uniform(spec.uniform_step);
  }

  const MollifierProfile& profile() const { return *profile_; }
  std::shared_ptr<const MollifierProfile> profile_ptr() const { return profile_; }

  // m_1(s). Exactly 0 at s = 0 and exactly 1 beyond s_max().
  double operator()(double s) const {
    if (s >= s_max_) return 1.0;
    if (s < s_min_) return series_coeff_ * s * s * s;
    const double x = (std::log(s) - u0_) / du_;
    auto i = static_cast<std::size_t>(x);
    if (i >= values_.size() - 1) i = values_.size() - 2;
    const double t = x - static_cast<double>(i);
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * values_[i] + (t3 - 2 * t2 + t) * du_ * slopes_[i] +
           (-2 * t3 + 3 * t2) * values_[i + 1] + (t3 - t2) * du_ * slopes_[i + 1];
  }

  // m_1(s) / s^3, finite at s = 0.
  double mass_over_cube(double s) const {
    if (s < s_min_) return series_coeff_;
    if (s >= s_max_) return 1.0 / (s * s * s);
    return (*this)(s) / (s * s * s);
  }

  // Same quantity from a uniform-in-s Hermite table; used on the hot path.
  double fast_mass_over_cube(double s) const {
    const double x = s * inv_ds_;
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= g_.size()) return 1.0 / (s * s * s);
    const double t = x - static_cast<double>(i);
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * g_[i] + (t3 - 2 * t2 + t) * dg_[i] + (-2 * t3 + 3 * t2) * g_[i + 1] +
           (t3 - t2) * dg_[i + 1];
  }

  double s_min() const { return s_min_; }
  double s_max() const { return s_max_; }
  double total_mass() const { return total_mass_; }
  double rho_at_origin() const { return rho0_; }
  std::size_t size() const { return values_.size(); }
  double node(std::size_t i) const { return std::exp(u0_ + du_ * static_cast<double>(i)); }
  double value(std::size_t i) const { return values_[i]; }

 private:
  void limit_slopes() {
    for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
      const double secant = (values_[i + 1] - values_[i]) / du_;
      if (secant <= 0.0) {
        slopes_[i] = 0.0;
        slopes_[i + 1] = 0.0;
        continue;
      }
      const double a = slopes_[i] / secant;
      const double b = slopes_[i + 1] / secant;
      const double r2 = a * a + b * b;
      if (r2 > 9.0) {
        const double tau = 3.0 / std::sqrt(r2);
        slopes_[i] = tau * a * secant;
        slopes_[i + 1] = tau * b * secant;
      }
    }
  }

  // g(s) = m(s) / s^3 with g'(s) = 4 pi rho(s) / s - 3 g(s) / s; slopes stored times ds.
  void build_uniform(double ds) {
    require(ds > 0.0, "mass table: uniform step must be positive");
    const auto n = static_cast<std::size_t>(std::ceil(s_max_ / ds)) + 1;
    g_.resize(n);
    dg_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = ds * static_cast<double>(i);
      g_[i] = mass_over_cube(s);
      dg_[i] = s == 0.0 ? 0.0 : ds * (4.0 * kPi * profile_->rho(s) / s - 3.0 * g_[i] / s);
    }
    inv_ds_ = 1.0 / ds;
  }

  std::shared_ptr<const MollifierProfile> profile_;
  double rho0_ = 0.0;
  double inv_ds_ = 1.0;
  std::vector<double> g_, dg_;
  double u0_ = 0.0;
  double du_ = 0.0;
  double s_min_ = 0.0;
  double s_max_ = 0.0;
  double series_coeff_ = 0.0;
  double total_mass_ = 0.0;
  std::vector<double> values_;
  std::vector<double> slopes_;
};

inline std::shared_ptr<const MassTable> build_mass_table(std::shared_ptr<const MollifierProfile> profile,
                                                         const MassTableSpec& spec = {}) {
  return std::make_shared<const MassTable>(std::move(profile), spec);
}

// K^delta = rho^delta * K, evaluated through the radial mass representation
//   K^delta(x) h = (gamma / 4 pi) m_delta(|x|) x / |x|^3 x h.
// Immutable after construction; safe to share across threads.
class MollifiedKernel {
 public:
  MollifiedKernel(std::shared_ptr<const MassTable> table, double delta, BiotSavartParams params)
      : table_(std::move(table)), delta_(delta), params_(params) {
    if (!table_) throw PreconditionError("mollified kernel: null mass table");
    if (!(delta > 0.0) || !std::isfinite(delta))
      throw PreconditionError("mollified kernel: delta must be positive");
    params_.validate();
    inv_delta_ = 1.0 / delta_;
    prefactor_ = params_.gamma / (4.0 * kPi);
  }

  double delta() const { return delta_; }
  const BiotSavartParams& params() const { return params_; }
  double gamma() const { return params_.gamma; }
  const MassTable& table() const { return *table_; }
  std::shared_ptr<const MassTable> table_ptr() const { return table_; }
  const MollifierProfile& profile() const { return table_->profile(); }
  double table_rmax() const { return table_->s_max() * delta_; }

  double mass(double r) const { return (*table_)(r * inv_delta_); }

  // Scalar factor f(|x|^2) with K^delta(x) h = f x x h.
  double factor(double r2) const {
    const double r = std::sqrt(r2);
    const double s = r * inv_delta_;
    if (s >= table_->s_max()) return prefactor_ / (r2 * r);
    return prefactor_ * table_->fast_mass_over_cube(s) * inv_delta_ * inv_delta_ * inv_delta_;
  }

  Vec3 eval(const Vec3& x, const Vec3& h) const {
    const double r2 = x.squaredNorm();
    if (r2 == 0.0) return Vec3::Zero();
    return factor(r2) * x.cross(h);
  }

  // Matrix form: K^delta(x) h = M h.
  Mat3 matrix(const Vec3& x) const {
    const double r2 = x.squaredNorm();
    if (r2 == 0.0) return Mat3::Zero();
    const double f = factor(r2);
    Mat3 m;
    m << 0.0, -x.z(), x.y(), x.z(), 0.0, -x.x(), -x.y(), x.x(), 0.0;
    return f * m;
  }

  // sup_x |K^delta(x)| in operator norm, which is f(r) r maximized over r.
  double sup_norm_estimate(std::size_t samples = 4096) const {
    double best = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double s = table_->s_min() * std::pow(table_->s_max() / table_->s_min(),
                                                   static_cast<double>(i) / static_cast<double>(samples - 1));
      const double r = s * delta_;
      best = std::max(best, std::abs(factor(r * r)) * r);
    }
    return best;
  }

 private:
  std::shared_ptr<const MassTable> table_;
  double delta_;
  BiotSavartParams params_;
  double inv_delta_ = 1.0;
  double prefactor_ = 0.0;
};

inline Vec3 mollified_kernel_eval(const MollifiedKernel& kern, const Vec3& x, const Vec3& h) {
  return kern.eval(x, h);
}

inline MollifiedKernel mollified_kernel_build(std::shared_ptr<const MollifierProfile> profile, double delta,
                                              BiotSavartParams params, const MassTableSpec& spec = {}) {
  return MollifiedKernel(build_mass_table(std::move(profile), spec), delta, params);
}

// Two-column CSV (r, m_delta(r)) at the table nodes.
inline void export_mass_table_csv(const MollifiedKernel& kern, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "r,m\n";
  out.precision(17);
  const auto& table = kern.table();
  out << 0.0 << ',' << 0.0 << '\n';
  for (std::size_t i = 0; i < table.size(); ++i)
    out << table.node(i) * kern.delta() << ',' << table.value(i) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace vfil
