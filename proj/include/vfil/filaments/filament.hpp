#pragma once

#include "vfil/core.hpp"
#include "vfil/filaments/sources.hpp"
#include "vfil/filaments/spline.hpp"
#include "vfil/kernel/kernel.hpp"

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace vfil {

// One closed curve sampled at sigma_m = m / M; the closing segment
// nodes[M-1] -> nodes[0] is implicit.
struct Filament {
  std::vector<Vec3> nodes;
  double alpha = 0.0;
  std::uint64_t id = 0;

  std::size_t size() const { return nodes.size(); }

  void validate() const {
    if (nodes.size() < 8)
      throw PreconditionError("filament " + std::to_string(id) + ": needs at least 8 nodes");
    if (!std::isfinite(alpha)) throw PreconditionError("filament " + std::to_string(id) + ": non-finite alpha");
    for (const auto& p : nodes)
      if (!all_finite(p)) throw PreconditionError("filament " + std::to_string(id) + ": non-finite node");
  }

  double polygon_length() const {
    CompensatedSum acc;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc.add((nodes[(i + 1) % nodes.size()] - nodes[i]).norm());
    return acc.value();
  }

  // max spacing <= 4 * mean spacing
  bool spacing_ok() const {
    const std::size_t m = nodes.size();
    double total = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = (nodes[(i + 1) % m] - nodes[i]).norm();
      total += d;
      worst = std::max(worst, d);
    }
    return worst <= 4.0 * total / static_cast<double>(m);
  }
};

enum class SigmaQuadrature { trapezoid };

struct FilamentEnsemble {
  std::vector<Filament> filaments;
  MollifiedKernel kernel;
  double time = 0.0;
  SigmaQuadrature quadrature = SigmaQuadrature::trapezoid;

  FilamentEnsemble(std::vector<Filament> f, MollifiedKernel k, double t = 0.0)
      : filaments(std::move(f)), kernel(std::move(k)), time(t) {}

  void validate() const {
    if (filaments.empty()) throw PreconditionError("ensemble: needs at least one filament");
    if (!std::isfinite(time)) throw PreconditionError("ensemble: non-finite time");
    for (const auto& f : filaments) f.validate();
    if (!std::isfinite(total_weight())) throw PreconditionError("ensemble: infinite total weight");
  }

  double total_weight() const {
    double s = 0.0;
    for (const auto& f : filaments) s += std::abs(f.alpha);
    return s;
  }

  // sum_j |alpha_j| * polygon length
  double mass() const {
    CompensatedSum acc;
    for (const auto& f : filaments) acc.add(std::abs(f.alpha) * f.polygon_length());
    return acc.value();
  }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& f : filaments) n += f.size();
    return n;
  }

  SourceSet sources() const {
    SourceSet s;
    for (const auto& f : filaments) s.add_loop(f.nodes, f.alpha);
    return s;
  }

  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    out.reserve(node_count());
    for (const auto& f : filaments) out.insert(out.end(), f.nodes.begin(), f.nodes.end());
    return out;
  }

  void set_positions(std::span<const Vec3> flat) {
    std::size_t k = 0;
    for (auto& f : filaments)
      for (auto& p : f.nodes) p = flat[k++];
  }
};

inline Vec3 node_velocity(const FilamentEnsemble& ens, const Vec3& x) {
  return induced_velocity(ens.sources(), ens.kernel, x);
}

namespace detail {

inline void check_finite_velocities(const FilamentEnsemble& ens, std::span<const Vec3> vel, const char* where) {
  std::size_t k = 0;
  for (const auto& f : ens.filaments) {
    for (std::size_t m = 0; m < f.size(); ++m, ++k) {
      if (!all_finite(vel[k]))
        throw NumericalError(std::string(where) + ": non-finite velocity at filament " + std::to_string(f.id) +
                             " node " + std::to_string(m));
    }
  }
}

}  // namespace detail

inline std::vector<Vec3> ensemble_rhs(const FilamentEnsemble& ens) {
  const auto targets = ens.positions();
  auto vel = induced_velocities(ens.sources(), ens.kernel, targets);
  detail::check_finite_velocities(ens, vel, "ensemble_rhs");
  return vel;
}

inline constexpr double kCflFraction = 0.2;

namespace detail {

// Distance between segments [p0, p1] and [q0, q1].
inline double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 0.0 && e <= 0.0) return r.norm();
  if (a <= 0.0) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 0.0) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double den = a * e - b * b;
      s = den > 0.0 ? std::clamp((b * f - c * e) / den, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

// Smallest distance between two non-adjacent edges of a closed polygon.
inline double min_nonadjacent_distance(std::span<const Vec3> nodes) {
  const std::size_t m = nodes.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 2; j < m; ++j) {
      if (i == 0 && j == m - 1) continue;
      best = std::min(best, segment_distance(nodes[i], nodes[(i + 1) % m], nodes[j], nodes[(j + 1) % m]));
    }
  }
  return best;
}

}  // namespace detail

// Resample a closed curve at uniform arclength onto m_out nodes. Node 0 is kept.
inline Filament remesh(const Filament& f, std::size_t m_out = 0) {
  if (m_out == 0) m_out = f.size();
  require(m_out >= 8, "remesh: needs at least 8 output nodes");
  const PeriodicSpline spline(f.nodes);
  const std::size_t m = f.size();
  std::vector<double> cum(m + 1, 0.0);
  double min_speed = std::numeric_limits<double>::infinity();
  double mean_speed = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    cum[i + 1] = cum[i] + spline.piece_length(i, 1.0);
    for (double t : {0.0, 0.25, 0.5, 0.75}) {
      const double s = spline.derivative(static_cast<double>(i) + t).norm();
      min_speed = std::min(min_speed, s);
      mean_speed += s;
    }
  }
  mean_speed /= static_cast<double>(4 * m);
  const double total = cum[m];
  if (!(total > 0.0) || !std::isfinite(total) || min_speed < 1e-6 * mean_speed)
    throw NumericalError("remesh: degenerate interpolant for filament " + std::to_string(f.id) +
                         " (cusp or self-intersection)");

  Filament out{{}, f.alpha, f.id};
  out.nodes.reserve(m_out);
  std::size_t piece = 0;
  for (std::size_t k = 0; k < m_out; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(m_out);
    while (piece + 1 < m && cum[piece + 1] <= target) ++piece;
    const double want = target - cum[piece];
    // Newton on the in-piece arclength, safeguarded by bisection.
    double lo = 0.0, hi = 1.0;
    double t = std::clamp(want / (cum[piece + 1] - cum[piece]), 0.0, 1.0);
    for (int it = 0; it < 60; ++it) {
      const double g = spline.piece_length(piece, t) - want;
      if (std::abs(g) <= 1e-15 * total) break;
      if (g > 0.0)
        hi = t;
      else
        lo = t;
      const double step = g / spline.derivative(static_cast<double>(piece) + t).norm();
      double next = t - step;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      t = next;
    }
    out.nodes.push_back(spline.eval(static_cast<double>(piece) + t));
  }
  if (detail::min_nonadjacent_distance(out.nodes) <= 1e-9 * total)
    throw NumericalError("remesh: self-intersecting interpolant for filament " + std::to_string(f.id));
  return out;
}

// Length of the periodic cubic interpolant.
inline double curve_length(const Filament& f) {
  const PeriodicSpline spline(f.nodes);
  CompensatedSum acc;
  for (std::size_t i = 0; i < f.size(); ++i) acc.add(spline.piece_length(i, 1.0));
  return acc.value();
}

// Classical RK4 on the filament nodes. Points in `passive` (if given) are
// carried along in the same stage fields without acting as sources.
inline FilamentEnsemble step_rk4(const FilamentEnsemble& ens, double dt, std::vector<Vec3>* passive = nullptr) {
  require(dt > 0.0 && std::isfinite(dt), "step_rk4: dt must be positive");
  const std::vector<Vec3> x0 = ens.positions();
  const std::size_t n = x0.size();
  const std::size_t np = passive ? passive->size() : 0;

  std::vector<Vec3> targets(n + np);
  auto stage = [&](std::span<const Vec3> nodes, std::span<const Vec3> pts) {
    FilamentEnsemble tmp = ens;
    tmp.set_positions(nodes);
    std::copy(nodes.begin(), nodes.end(), targets.begin());
    std::copy(pts.begin(), pts.end(), targets.begin() + static_cast<std::ptrdiff_t>(n));
    auto vel = induced_velocities(tmp.sources(), ens.kernel, targets);
    detail::check_finite_velocities(tmp, std::span<const Vec3>(vel.data(), n), "step_rk4");
    for (std::size_t i = n; i < n + np; ++i)
      if (!all_finite(vel[i])) throw NumericalError("step_rk4: non-finite velocity at passive point " + std::to_string(i - n));
    return vel;
  };

  const std::vector<Vec3> p0 = passive ? *passive : std::vector<Vec3>{};
  const auto k1 = stage(x0, p0);
  double vmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) vmax = std::max(vmax, k1[i].norm());
  const double limit = kCflFraction * ens.kernel.delta();
  if (dt * vmax > limit) throw StepRejected("step_rk4", dt, limit / vmax);

  auto shift = [&](const std::vector<Vec3>& k, double h, std::vector<Vec3>& xs, std::vector<Vec3>& ps) {
    xs.resize(n);
    ps.resize(np);
    for (std::size_t i = 0; i < n; ++i) xs[i] = x0[i] + h * k[i];
    for (std::size_t i = 0; i < np; ++i) ps[i] = p0[i] + h * k[n + i];
  };
  std::vector<Vec3> xs, ps;
  shift(k1, 0.5 * dt, xs, ps);
  const auto k2 = stage(xs, ps);
  shift(k2, 0.5 * dt, xs, ps);
  const auto k3 = stage(xs, ps);
  shift(k3, dt, xs, ps);
  const auto k4 = stage(xs, ps);

  const double w = dt / 6.0;
  std::vector<Vec3> x1(n);
  for (std::size_t i = 0; i < n; ++i) x1[i] = x0[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  for (std::size_t i = 0; i < np; ++i)
    (*passive)[i] = p0[i] + w * (k1[n + i] + 2.0 * k2[n + i] + 2.0 * k3[n + i] + k4[n + i]);

  FilamentEnsemble out = ens;
  out.set_positions(x1);
  out.time = ens.time + dt;
  for (auto& f : out.filaments)
    if (!f.spacing_ok()) f = remesh(f);
  return out;
}

struct SimulateOptions {
  double T = 1.0;
  double dt = 0.01;
  std::size_t record_every = 1;  // steps between recorded states
};

struct TrajectoryRecord {
  std::vector<FilamentEnsemble> states;
  bool completed = false;
  std::string failure;

  const FilamentEnsemble& final_state() const { return states.back(); }
};

using Observer = std::function<void(const FilamentEnsemble&, std::size_t step)>;

class SimulationError : public NumericalError {
 public:
  SimulationError(const std::string& what, TrajectoryRecord partial, bool step_rejected = false)
      : NumericalError(what), partial_(std::move(partial)), step_rejected_(step_rejected) {}
  const TrajectoryRecord& partial() const { return partial_; }
  // The cause was a CFL rejection (a precondition on dt), not a blow-up.
  bool step_rejected() const { return step_rejected_; }

 private:
  TrajectoryRecord partial_;
  bool step_rejected_ = false;
};

// Fixed-step integration to T. The last step is shortened to land on T.
// Observers run on this thread after every recorded state (including t = 0).
inline TrajectoryRecord simulate(const FilamentEnsemble& ens, const SimulateOptions& opt,
                                 const std::vector<Observer>& observers = {}) {
  require(opt.T > 0.0 && std::isfinite(opt.T), "simulate: T must be positive");
  require(opt.dt > 0.0, "simulate: dt must be positive");
  require(opt.record_every >= 1, "simulate: record_every must be >= 1");
  ens.validate();
  TrajectoryRecord rec;
  rec.states.push_back(ens);
  for (const auto& ob : observers) ob(ens, 0);
  const auto steps = static_cast<std::size_t>(std::ceil(opt.T / opt.dt - 1e-9));
  FilamentEnsemble cur = ens;
  const double t_end = ens.time + opt.T;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(opt.dt, t_end - cur.time);
    try {
      cur = step_rk4(cur, h);
    } catch (const Error& e) {
      rec.failure = e.what();
      if (cur.time != rec.states.back().time) rec.states.push_back(cur);
      throw SimulationError(std::string("simulate: failed at t = ") + std::to_string(cur.time) + ": " + e.what(),
                            std::move(rec), dynamic_cast<const StepRejected*>(&e) != nullptr);
    }
    if (s == steps) cur.time = t_end;
    if (s % opt.record_every == 0 || s == steps) {
      rec.states.push_back(cur);
      for (const auto& ob : observers) ob(cur, s);
    }
  }
  rec.completed = true;
  return rec;
}

}  // namespace vfil
