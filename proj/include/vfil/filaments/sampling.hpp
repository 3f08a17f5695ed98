#pragma once

#include "vfil/core.hpp"
#include "vfil/currents/metric.hpp"
#include "vfil/filaments/filament.hpp"

#include <random>
#include <string>
#include <vector>

namespace vfil {

// Axisymmetric Gaussian-core vortex ring: azimuthal vorticity
//   Gamma / (pi a^2) exp(-d^2 / a^2),  d = distance to the core circle,
// so the flux within distance d of the core is Gamma (1 - exp(-d^2 / a^2)).
// Its integral curves are the coaxial circles, which makes the flux tubes
// explicit. a = 0 is the ideal thin ring.
struct VorticityTarget {
  std::string kind = "ring";
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double radius = 1.0;
  double core = 0.1;
  double circulation = 1.0;

  void validate() const {
    if (kind != "ring")
      throw PreconditionError("unsupported target '" + kind + "': only the axisymmetric ring has closed integral curves");
    require(all_finite(center) && axis.norm() > 0.0, "ring target: invalid center or axis");
    require(radius > 0.0 && std::isfinite(radius), "ring target: radius must be positive");
    require(core >= 0.0 && core <= radius / 4.0, "ring target: core must lie in [0, radius / 4]");
    require(std::isfinite(circulation) && circulation != 0.0, "ring target: circulation must be finite and nonzero");
  }

  // Radius in the meridional plane enclosing flux fraction u.
  double core_offset(double u) const { return core * std::sqrt(-std::log1p(-u)); }

  // Integral curve at flux quantile u and meridional angle 2 pi v, sampled at m nodes.
  std::vector<Vec3> curve(double u, double v, std::size_t m) const {
    const Vec3 ez = axis.normalized();
    const Vec3 e1 = ez.unitOrthogonal();
    const Vec3 e2 = ez.cross(e1);
    const double d = core_offset(u);
    const double r = radius + d * std::cos(2.0 * kPi * v);
    const double z = d * std::sin(2.0 * kPi * v);
    std::vector<Vec3> pts(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double phi = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(m);
      pts[i] = center + z * ez + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
    }
    return pts;
  }
};

// Rectangle [u0, u1) x [v0, v1) of the unit (flux quantile, angle) square.
struct FluxCell {
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;
  double area() const { return (u1 - u0) * (v1 - v0); }
};

// Recursive bisection into n equal-area cells, alternating the split axis and
// starting with v. Counts split as floor / ceil so any n works.
inline std::vector<FluxCell> partition_flux(std::size_t n) {
  require(n >= 1, "flux partition: need at least one cell");
  std::vector<FluxCell> out;
  out.reserve(n);
  auto rec = [&](auto&& self, const FluxCell& c, std::size_t k, bool split_v) -> void {
    if (k == 1) {
      out.push_back(c);
      return;
    }
    const std::size_t k1 = k / 2;
    const double f = static_cast<double>(k1) / static_cast<double>(k);
    FluxCell a = c, b = c;
    if (split_v) {
      a.v1 = b.v0 = c.v0 + f * (c.v1 - c.v0);
    } else {
      a.u1 = b.u0 = c.u0 + f * (c.u1 - c.u0);
    }
    self(self, a, k1, !split_v);
    self(self, b, k - k1, !split_v);
  };
  rec(rec, FluxCell{}, n, true);
  return out;
}

inline double overlap_area(const FluxCell& a, const FluxCell& b) {
  const double du = std::min(a.u1, b.u1) - std::max(a.u0, b.u0);
  const double dv = std::min(a.v1, b.v1) - std::max(a.v0, b.v0);
  return du > 0.0 && dv > 0.0 ? du * dv : 0.0;
}

// Plan between two flux partitions: w_ij = Gamma * |cell_i cap cell_j|.
inline std::vector<CouplingEntry> flux_coupling(const std::vector<FluxCell>& a, const std::vector<FluxCell>& b,
                                                double circulation) {
  std::vector<CouplingEntry> plan;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double w = overlap_area(a[i], b[j]);
      if (w > 0.0) plan.push_back({i, j, circulation * w});
    }
  return plan;
}

struct SamplingOptions {
  std::size_t reference_n = 0;  // 0 skips the initial-error estimate
  DictionarySpec dictionary{};
};

struct SampledFilaments {
  FilamentEnsemble ensemble;
  std::vector<FluxCell> cells;
  MetricEstimate initial_error;  // against the reference sample when requested
  bool has_initial_error = false;
};

// One filament per flux cell, placed on the integral curve through a seeded
// point in the middle half of the cell, with weight Gamma * cell area.
inline std::vector<Filament> sample_flux_tubes(const VorticityTarget& target, const std::vector<FluxCell>& cells,
                                               std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Filament> fs;
  fs.reserve(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const auto& c = cells[j];
    const double u = 0.5 * (c.u0 + c.u1) + 0.5 * (uniform01(rng) - 0.5) * (c.u1 - c.u0);
    const double v = 0.5 * (c.v0 + c.v1) + 0.5 * (uniform01(rng) - 0.5) * (c.v1 - c.v0);
    fs.push_back(Filament{target.curve(u, v, m), target.circulation * c.area(), j});
  }
  return fs;
}

inline SampledFilaments sample_initial_filaments(const VorticityTarget& target, std::size_t n, std::size_t m,
                                                 std::uint64_t seed, const MollifiedKernel& kern,
                                                 const SamplingOptions& opt = {}) {
  target.validate();
  require(n >= 1, "sample_initial_filaments: N must be at least 1");
  require(m >= 8, "sample_initial_filaments: M must be at least 8");
  auto cells = partition_flux(n);
  SampledFilaments out{FilamentEnsemble(sample_flux_tubes(target, cells, m, seed), kern), cells, {}, false};
  if (opt.reference_n > 0) {
    const auto ref_cells = partition_flux(opt.reference_n);
    const FilamentEnsemble ref(sample_flux_tubes(target, ref_cells, m, seed), kern);
    const auto xi = empirical_current(out.ensemble);
    const auto xr = empirical_current(ref);
    out.initial_error = bl_metric_lower(xi, xr, opt.dictionary, seed);
    const auto up = bl_metric_upper_coupled(xi, xr, flux_coupling(cells, ref_cells, target.circulation));
    out.initial_error.upper = up.upper;
    out.initial_error.upper_method = up.upper_method;
    out.has_initial_error = true;
  }
  return out;
}

}  // namespace vfil
