#pragma once

#include "vfil/core.hpp"
#include "vfil/currents/current.hpp"
#include "vfil/euler/field.hpp"
#include "vfil/filaments/sampling.hpp"
#include "vfil/kernel/mollifier.hpp"

#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace vfil {

// rho_hat(delta |k|) tabulated by integer |m|^2 on the retained shell.
inline std::vector<double> mollifier_multipliers(const SpectralGrid& g, double delta, const MollifierProfile* profile) {
  const int cut = g.cutoff();
  std::vector<double> out(static_cast<std::size_t>(3 * cut * cut + 1), 1.0);
  if (delta == 0.0) return out;
  require(profile != nullptr, "spectral mollifier: profile required for delta > 0");
  for (std::size_t m2 = 0; m2 < out.size(); ++m2)
    out[m2] = profile->rho_hat(delta * g.k0() * std::sqrt(static_cast<double>(m2)));
  return out;
}

// v_k = rho_hat(delta k) i k x xi_k / |k|^2, v_0 = 0.
class SpectralBiotSavart {
 public:
  SpectralBiotSavart(std::shared_ptr<const SpectralGrid> grid, double delta,
                     std::shared_ptr<const MollifierProfile> profile = nullptr)
      : grid_(std::move(grid)), delta_(delta), profile_(std::move(profile)) {
    require(grid_ != nullptr, "spectral Biot-Savart: null grid");
    require(delta >= 0.0 && std::isfinite(delta), "spectral Biot-Savart: delta must be nonnegative");
    rho_ = mollifier_multipliers(*grid_, delta_, profile_.get());
  }

  double delta() const { return delta_; }
  const SpectralGrid& grid() const { return *grid_; }
  double multiplier(int m2) const {
    return m2 < static_cast<int>(rho_.size()) ? rho_[static_cast<std::size_t>(m2)] : 0.0;
  }

  ModeArrays velocity_hat(const PeriodicVorticityField& f) const {
    require(f.grid->spec() == grid_->spec(), "spectral Biot-Savart: grid mismatch");
    const auto& g = *grid_;
    ModeArrays v;
    for (auto& c : v) c.assign(g.modes(), cplx(0.0, 0.0));
    spectral_detail::for_modes(g, [&](std::size_t ix, std::size_t iy, std::size_t iz, std::size_t i) {
      if (!g.retained(ix, iy, iz)) return;
      const int m2 = g.m2(ix, iy, iz);
      if (m2 == 0) return;
      const double r = multiplier(m2);
      if (r == 0.0) return;
      const Vec3 k = g.k(ix, iy, iz);
      const double s = r / k.squaredNorm();
      const cplx I(0.0, s);
      const cplx a = f.hat[0][i], b = f.hat[1][i], c = f.hat[2][i];
      v[0][i] = I * (k.y() * c - k.z() * b);
      v[1][i] = I * (k.z() * a - k.x() * c);
      v[2][i] = I * (k.x() * b - k.y() * a);
    });
    return v;
  }

 private:
  std::shared_ptr<const SpectralGrid> grid_;
  double delta_;
  std::shared_ptr<const MollifierProfile> profile_;
  std::vector<double> rho_;
};

struct VelocityField {
  std::shared_ptr<const SpectralGrid> grid;
  ModeArrays hat;
  std::array<RBuffer, 3> values;

  double max_speed() const {
    double m = 0.0;
    for (std::size_t p = 0; p < values[0].size(); ++p)
      m = std::max(m, values[0][p] * values[0][p] + values[1][p] * values[1][p] + values[2][p] * values[2][p]);
    return std::sqrt(m);
  }
};

inline VelocityField biot_savart_spectral(const PeriodicVorticityField& f, const SpectralBiotSavart& bs) {
  VelocityField v{f.grid, bs.velocity_hat(f), {}};
  for (int c = 0; c < 3; ++c) f.grid->inverse(v.hat[c], v.values[c]);
  return v;
}

// 1/2 ||v||^2 over the box.
inline double energy(const PeriodicVorticityField& f, const SpectralBiotSavart& bs) {
  const auto& g = *f.grid;
  const double k02 = g.k0() * g.k0();
  return 0.5 * g.volume() * spectral_detail::sum_modes(g, [&](auto ix, auto iy, auto iz, std::size_t i) {
           const int m2 = g.m2(ix, iy, iz);
           if (m2 == 0 || !g.retained(ix, iy, iz)) return 0.0;
           const double r = bs.multiplier(m2);
           const double e = std::norm(f.hat[0][i]) + std::norm(f.hat[1][i]) + std::norm(f.hat[2][i]);
           return r * r * e / (k02 * m2);
         });
}

// d xi / dt = curl(v x xi), which equals (xi.grad) v - (v.grad) xi for
// divergence-free v and xi; products in physical space, then dealias and
// project. vmax receives max |v| on the grid.
inline ModeArrays vorticity_rhs(const PeriodicVorticityField& f, const SpectralBiotSavart& bs,
                                double* vmax = nullptr) {
  const auto& g = *f.grid;
  const auto vel = biot_savart_spectral(f, bs);
  if (vmax) *vmax = vel.max_speed();
  const auto w = f.physical();
  std::array<RBuffer, 3> cross;
  for (auto& c : cross) c.resize(g.points());
  const auto& v = vel.values;
  parallel_for(g.n(), [&](std::size_t i) {
    const std::size_t n2 = g.n() * g.n();
    for (std::size_t p = i * n2; p < (i + 1) * n2; ++p) {
      cross[0][p] = v[1][p] * w[2][p] - v[2][p] * w[1][p];
      cross[1][p] = v[2][p] * w[0][p] - v[0][p] * w[2][p];
      cross[2][p] = v[0][p] * w[1][p] - v[1][p] * w[0][p];
    }
  });
  ModeArrays ch, out;
  for (int c = 0; c < 3; ++c) {
    g.forward(cross[c], ch[c]);
    out[c].assign(g.modes(), cplx(0.0, 0.0));
  }
  spectral_detail::for_modes(g, [&](std::size_t ix, std::size_t iy, std::size_t iz, std::size_t i) {
    if (!g.retained(ix, iy, iz)) return;
    const Vec3 k = g.k(ix, iy, iz);
    const cplx I(0.0, 1.0);
    out[0][i] = I * (k.y() * ch[2][i] - k.z() * ch[1][i]);
    out[1][i] = I * (k.z() * ch[0][i] - k.x() * ch[2][i]);
    out[2][i] = I * (k.x() * ch[1][i] - k.y() * ch[0][i]);
  });
  for (const auto& c : out)
    for (const auto& z : c)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw NumericalError("vorticity_rhs: non-finite tendency");
  dealias_and_project(g, out);
  return out;
}

inline constexpr double kSpectralCfl = 0.5;

namespace spectral_detail {

inline ModeArrays axpy(const ModeArrays& x, double a, const ModeArrays& y) {
  ModeArrays out;
  for (int c = 0; c < 3; ++c) {
    out[c].resize(x[c].size());
    for (std::size_t i = 0; i < x[c].size(); ++i) out[c][i] = x[c][i] + a * y[c][i];
  }
  return out;
}

}  // namespace spectral_detail

// Classical RK4 with the advective guard dt max|v| <= h / 2 checked on the
// first stage. The result is dealiased and projected.
inline PeriodicVorticityField step_rk4_spectral(const PeriodicVorticityField& f, double dt,
                                                const SpectralBiotSavart& bs) {
  require(dt > 0.0 && std::isfinite(dt), "step_rk4_spectral: dt must be positive");
  const auto& g = *f.grid;
  double vmax = 0.0;
  const auto k1 = vorticity_rhs(f, bs, &vmax);
  const double limit = kSpectralCfl * g.spacing();
  if (dt * vmax > limit) throw StepRejected("step_rk4_spectral", dt, limit / vmax);
  auto stage = [&](const ModeArrays& k, double a) {
    PeriodicVorticityField s(f.grid, f.t + a);
    s.hat = spectral_detail::axpy(f.hat, a, k);
    return s;
  };
  const auto k2 = vorticity_rhs(stage(k1, 0.5 * dt), bs);
  const auto k3 = vorticity_rhs(stage(k2, 0.5 * dt), bs);
  const auto k4 = vorticity_rhs(stage(k3, dt), bs);
  PeriodicVorticityField out(f.grid, f.t + dt);
  const double w = dt / 6.0;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < g.modes(); ++i)
      out.hat[c][i] = f.hat[c][i] + w * (k1[c][i] + 2.0 * k2[c][i] + 2.0 * k3[c][i] + k4[c][i]);
  dealias_and_project(g, out.hat);
  return out;
}

// Core resolved (a >= 4 h) and support (R + 3a) inside the box.
inline void validate_ring_on_grid(const GridSpec& spec, const VorticityTarget& ring) {
  ring.validate();
  const double h = spec.box_length / static_cast<double>(spec.n), L = spec.box_length;
  const double a = ring.core;
  if (!(a >= 4.0 * h))
    throw PreconditionError("init_vortex_ring: core " + std::to_string(a) + " under-resolved, need at least 4 h = " +
                            std::to_string(4.0 * h));
  const double reach = ring.center.cwiseAbs().maxCoeff() + ring.radius + 3.0 * a;
  if (reach > 0.5 * L)
    throw PreconditionError("init_vortex_ring: support reaches " + std::to_string(reach) + " > L/2 = " +
                            std::to_string(0.5 * L));
}

// Gaussian-core ring (same target as the filament sampler), summed over the
// 27 nearest periodic images and projected. correction receives
// ||projection correction|| / ||xi||.
inline PeriodicVorticityField init_vortex_ring(std::shared_ptr<const SpectralGrid> grid, const VorticityTarget& ring,
                                               double* correction = nullptr) {
  require(grid != nullptr, "init_vortex_ring: null grid");
  validate_ring_on_grid(grid->spec(), ring);
  const double L = grid->box_length();
  const double a = ring.core;
  const Vec3 ez = ring.axis.normalized();
  const double amp = ring.circulation / (kPi * a * a);
  const std::size_t n = grid->n();
  std::array<RBuffer, 3> w;
  for (auto& c : w) c.assign(grid->points(), 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) {
        const Vec3 x = grid->point(i, j, l);
        Vec3 acc = Vec3::Zero();
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj)
            for (int dl = -1; dl <= 1; ++dl) {
              const Vec3 rel = x + L * Vec3(di, dj, dl) - ring.center;
              const double z = rel.dot(ez);
              const Vec3 p = rel - z * ez;
              const double r = p.norm();
              if (r == 0.0) continue;
              const double d2 = (r - ring.radius) * (r - ring.radius) + z * z;
              if (d2 > 60.0 * a * a) continue;
              acc += amp * std::exp(-d2 / (a * a)) * ez.cross(p / r);
            }
        const std::size_t p = (i * n + j) * n + l;
        for (int c = 0; c < 3; ++c) w[c][p] = acc[c];
      }
  });
  PeriodicVorticityField f(grid);
  for (int c = 0; c < 3; ++c) grid->forward(w[c], f.hat[c]);
  // Measure the projection on the dealiased field only.
  for (int c = 0; c < 3; ++c)
    spectral_detail::for_modes(*grid, [&](auto ix, auto iy, auto iz, std::size_t i) {
      if (!grid->retained(ix, iy, iz)) f.hat[c][i] = 0.0;
    });
  const double before = l2_norm(f);
  const double removed = dealias_and_project(*grid, f.hat);
  if (correction) *correction = before > 0.0 ? removed / before : 0.0;
  return f;
}

// Fourier deposit of rho^delta * xi: coefficient
//   c_k = rho_hat(delta k) / L^3 sum_loops alpha sum_m exp(-i k.y_m) t_m
// with t_m the node-centred elements and y = x + L/2. Exact for the
// polygonal current up to the 2/3 truncation.
inline PeriodicVorticityField filament_to_grid(const CurrentPolyline& xi, double delta,
                                               const MollifierProfile& profile,
                                               std::shared_ptr<const SpectralGrid> grid,
                                               double* correction = nullptr) {
  require(grid != nullptr, "filament_to_grid: null grid");
  require(delta > 0.0 && std::isfinite(delta), "filament_to_grid: delta must be positive");
  xi.validate();
  const double L = grid->box_length();
  const double limit = 0.5 * L - 20.0 * delta;
  for (const auto& l : xi.loops)
    for (const auto& p : l.nodes)
      if (p.cwiseAbs().maxCoeff() > limit)
        throw PreconditionError("filament_to_grid: node within 20 delta of the box face (|x|_inf = " +
                                std::to_string(p.cwiseAbs().maxCoeff()) + ", limit " + std::to_string(limit) + ")");
  std::vector<Vec3> ys, ws;
  for (const auto& l : xi.loops) {
    if (l.alpha == 0.0) continue;
    for (std::size_t m = 0; m < l.nodes.size(); ++m) {
      ys.push_back(l.nodes[m] + Vec3::Constant(0.5 * L));
      ws.push_back(l.alpha * loop_element(l.nodes, m));
    }
  }
  PeriodicVorticityField f(grid);
  const std::size_t n = grid->n();
  const int cut = grid->cutoff();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(grid->wave(i)) <= cut) kept.push_back(i);
  const std::size_t nk = kept.size(), nzk = static_cast<std::size_t>(cut) + 1, q = ys.size();
  std::vector<cplx> ey(q * nk), ez(q * nzk);
  for (std::size_t p = 0; p < q; ++p) {
    for (std::size_t a = 0; a < nk; ++a)
      ey[p * nk + a] = std::polar(1.0, -grid->k0() * grid->wave(kept[a]) * ys[p].y());
    for (std::size_t a = 0; a < nzk; ++a)
      ez[p * nzk + a] = std::polar(1.0, -grid->k0() * static_cast<double>(a) * ys[p].z());
  }
  parallel_for(nk, [&](std::size_t s) {
    const std::size_t ix = kept[s];
    for (std::size_t p = 0; p < q; ++p) {
      const cplx ex = std::polar(1.0, -grid->k0() * grid->wave(ix) * ys[p].x());
      const Vec3& wt = ws[p];
      for (std::size_t b = 0; b < nk; ++b) {
        const cplx exy = ex * ey[p * nk + b];
        const std::size_t base = grid->index(ix, kept[b], 0);
        const cplx* e = &ez[p * nzk];
        for (std::size_t iz = 0; iz < nzk; ++iz) {
          const cplx v = exy * e[iz];
          f.hat[0][base + iz] += v * wt.x();
          f.hat[1][base + iz] += v * wt.y();
          f.hat[2][base + iz] += v * wt.z();
        }
      }
    }
  });
  const auto rho = mollifier_multipliers(*grid, delta, &profile);
  const double inv_vol = 1.0 / grid->volume();
  spectral_detail::for_modes(*grid, [&](auto ix, auto iy, auto iz, std::size_t i) {
    if (!grid->retained(ix, iy, iz)) return;
    const double r = rho[static_cast<std::size_t>(grid->m2(ix, iy, iz))] * inv_vol;
    for (int c = 0; c < 3; ++c) f.hat[c][i] *= r;
  });
  const double before = l2_norm(f);
  const double removed = dealias_and_project(*grid, f.hat);
  if (correction) *correction = before > 0.0 ? removed / before : 0.0;
  return f;
}

// Core a of the Gaussian ring whose cross-section has the same second
// moment as the planar marginal of rho^delta: a^2 = (2/3) delta^2 mu2 with
// mu2 = \int |y|^2 rho = 6 (1 - rho_hat(q)) / q^2 as q -> 0.
inline double gaussian_core_equivalent(const MollifierProfile& profile, double delta) {
  const double q = 1e-3 * profile.fourier_cutoff();
  const double mu2 = 6.0 * (1.0 - profile.rho_hat(q)) / (q * q);
  return delta * std::sqrt(2.0 * mu2 / 3.0);
}

// History of ||xi(t)||_{H^s}.
struct SobolevMonitor {
  double s = 2.0;
  std::vector<std::pair<double, double>> history;

  explicit SobolevMonitor(double index = 2.0) : s(index) {
    require(s > 1.5, "Sobolev monitor: need s > 3/2");
  }
  double record(const PeriodicVorticityField& f) {
    const double v = hs_norm(f, s);
    history.emplace_back(f.t, v);
    return v;
  }
  double sup() const {
    double m = 0.0;
    for (const auto& h : history) m = std::max(m, h.second);
    return m;
  }
};

// Columns t, l2, hs, energy, max_div.
class FieldDiagnosticsCsv {
 public:
  FieldDiagnosticsCsv(const std::string& path, double s) : path_(path), s_(s), out_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
    out_.precision(17);
    out_ << "t,l2,hs,energy,max_div\n";
  }
  void append(const PeriodicVorticityField& f, const SpectralBiotSavart& bs) {
    out_ << f.t << ',' << l2_norm(f) << ',' << hs_norm(f, s_) << ',' << energy(f, bs) << ',' << max_divergence(f)
         << '\n';
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  double s_;
  std::ofstream out_;
};

}  // namespace vfil
