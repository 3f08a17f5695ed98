#pragma once

#include "vfil/euler/field.hpp"
#include "vfil/euler/solver.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/convergence_n.hpp"
#include "vfil/harness/output.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace vfil {

struct PilotRow {
  double t = 0.0;
  double hs = 0.0;
  double c_running = 0.0;  // running max of (dH/dt) / H^2
  double face_tail = 0.0;
};

// T0 from the pilot: run delta = 0 and stop once t >= theta / (C H0) with C the
// running maximum of the finite-difference quotient (dH/dt) / H^2 over [0, t].
// On [0, T0] the Riccati comparison then gives H <= H0 / (1 - theta).
struct PilotResult {
  double T0 = 0.0;
  double c_fit = 0.0;
  double h0 = 0.0;
  double admissible_dt = std::numeric_limits<double>::infinity();  // min over the pilot
  bool capped_by_tail = false;
  bool capped_by_limit = false;
  std::vector<PilotRow> rows;
};

inline PilotResult run_pilot(const PeriodicVorticityField& xi0, const SpectralBiotSavart& bs0, const GridConfig& g) {
  PilotResult p;
  const double h = xi0.grid->spacing();
  PeriodicVorticityField f = xi0;
  p.h0 = hs_norm(f, g.s);
  double hcur = p.h0;
  p.rows.push_back({f.t, hcur, 0.0, face_tail_ratio(f)});
  double t_ok = 0.0;  // last time with the face tail under the limit
  while (true) {
    double vmax = 0.0;
    vorticity_rhs(f, bs0, &vmax);
    const double adm = vmax > 0.0 ? kSpectralCfl * h / vmax : std::numeric_limits<double>::infinity();
    p.admissible_dt = std::min(p.admissible_dt, adm);
    const double dt = std::min(0.8 * adm, g.t0_cap - f.t);
    f = step_rk4_spectral(f, dt, bs0);
    const double hn = hs_norm(f, g.s);
    p.c_fit = std::max(p.c_fit, (hn - hcur) / (dt * hcur * hn));
    hcur = hn;
    const double tail = face_tail_ratio(f);
    p.rows.push_back({f.t, hn, p.c_fit, tail});
    if (g.face_tail_policy == "cap" && tail > g.face_tail_limit) {
      p.capped_by_tail = true;
      break;
    }
    t_ok = f.t;
    if (p.c_fit > 0.0 && f.t >= g.theta / (p.c_fit * p.h0)) break;
    if (f.t >= g.t0_cap * (1.0 - 1e-12)) {
      p.capped_by_limit = true;
      break;
    }
  }
  p.T0 = p.c_fit > 0.0 ? std::min(g.theta / (p.c_fit * p.h0), g.t0_cap) : g.t0_cap;
  if (p.capped_by_tail) p.T0 = std::min(p.T0, t_ok);
  if (!(p.T0 > 0.0)) throw NumericalError("pilot: face tail exceeded the limit before the first step");
  return p;
}

struct DeltaRow {
  double t = 0.0;
  double delta = 0.0;
  double distance = 0.0;  // l2_distance to the delta = 0 field at t
  double l2 = 0.0, hs = 0.0, energy = 0.0, max_div = 0.0, face_tail = 0.0;
};

struct DeltaRun {
  double delta = 0.0;
  std::vector<DeltaRow> rows;
  std::string failure;
  std::shared_ptr<PeriodicVorticityField> final_field;
  double wall = 0.0;
};

struct ConvergenceDeltaReport {
  PilotResult pilot;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<DeltaRun> runs;  // runs[0] is delta = 0
  std::vector<double> deltas;  // positive deltas, descending
  std::vector<double> dist_half, dist_T0;  // per positive delta, NaN when failed
  bool nonincreasing_half = false;
  bool nonincreasing_T0 = false;
  double trend_T0 = std::numeric_limits<double>::quiet_NaN();  // slope of log distance vs log delta
  double hs_initial_max = 0.0;
  double hs_sup = 0.0;
  double hs_ratio = 0.0;
  double face_tail_max = 0.0;
  double max_div_max = 0.0;
};

inline void mollify_in_place(PeriodicVorticityField& f, const SpectralBiotSavart& bs) {
  const auto& g = *f.grid;
  spectral_detail::for_modes(g, [&](std::size_t ix, std::size_t iy, std::size_t iz, std::size_t i) {
    const double r = g.retained(ix, iy, iz) ? bs.multiplier(g.m2(ix, iy, iz)) : 0.0;
    for (int c = 0; c < 3; ++c) f.hat[c][i] *= r;
  });
}

inline ConvergenceDeltaReport run_convergence_delta(const ScenarioConfig& cfg) {
  validate_for_delta(cfg);
  const auto& gc = cfg.grid;
  const auto grid = make_grid(GridSpec{gc.box_length, gc.n});
  const auto profile = shared_mass_table(cfg.kernel.k_max)->profile_ptr();
  const auto xi0 = init_vortex_ring(grid, gc.target);
  const SpectralBiotSavart bs0(grid, 0.0);

  ConvergenceDeltaReport rep;
  rep.deltas = cfg.kernel.deltas;
  std::sort(rep.deltas.begin(), rep.deltas.end(), std::greater<>());
  rep.pilot = run_pilot(xi0, bs0, gc);
  const double T0 = rep.pilot.T0;
  rep.steps = gc.steps;
  if (rep.steps == 0) {
    const auto half = static_cast<std::size_t>(std::ceil(T0 / (2.0 * 0.8 * rep.pilot.admissible_dt)));
    rep.steps = 2 * std::max<std::size_t>(1, half);
  }
  rep.dt = T0 / static_cast<double>(rep.steps);
  if (rep.dt > 0.8 * rep.pilot.admissible_dt)
    throw PreconditionError("converge-delta: grid.steps = " + std::to_string(rep.steps) + " gives dt = " +
                            fmt(rep.dt) + " above 0.8 x the pilot CFL limit " + fmt(rep.pilot.admissible_dt));

  std::vector<SpectralBiotSavart> bss{bs0};
  std::vector<PeriodicVorticityField> fields;
  std::vector<bool> alive;
  std::vector<Stopwatch> clocks;
  std::vector<double> all{0.0};
  all.insert(all.end(), rep.deltas.begin(), rep.deltas.end());
  for (double d : all) {
    if (d > 0.0) bss.emplace_back(grid, d, profile);
    PeriodicVorticityField f = xi0;
    if (d > 0.0 && gc.initial == "mollified") mollify_in_place(f, bss.back());
    fields.push_back(f);
    alive.push_back(true);
    rep.runs.push_back(DeltaRun{d, {}, {}, nullptr, 0.0});
  }
  auto record = [&](std::size_t i) {
    const auto& f = fields[i];
    DeltaRow r;
    r.t = f.t;
    r.delta = all[i];
    r.distance = alive[0] ? l2_distance(f, fields[0]) : std::numeric_limits<double>::quiet_NaN();
    r.l2 = l2_norm(f);
    r.hs = hs_norm(f, gc.s);
    r.energy = energy(f, bss[i]);
    r.max_div = max_divergence(f);
    r.face_tail = face_tail_ratio(f);
    rep.runs[i].rows.push_back(r);
  };
  for (std::size_t i = 0; i < all.size(); ++i) record(i);
  for (std::size_t k = 1; k <= rep.steps; ++k) {
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (!alive[i]) continue;
      Stopwatch sw;
      try {
        fields[i] = step_rk4_spectral(fields[i], rep.dt, bss[i]);
        if (k == rep.steps) fields[i].t = T0;
      } catch (const Error& e) {
        alive[i] = false;
        rep.runs[i].failure = e.what();
      }
      rep.runs[i].wall += sw.seconds();
    }
    for (std::size_t i = 0; i < all.size(); ++i)
      if (alive[i]) record(i);
  }
  for (std::size_t i = 0; i < all.size(); ++i)
    if (alive[i]) rep.runs[i].final_field = std::make_shared<PeriodicVorticityField>(fields[i]);

  const std::size_t mid = rep.steps / 2;
  for (std::size_t i = 1; i < all.size(); ++i) {
    const auto& rows = rep.runs[i].rows;
    const bool done = rep.runs[i].failure.empty() && rep.runs[0].failure.empty();
    rep.dist_half.push_back(done ? rows[mid].distance : std::numeric_limits<double>::quiet_NaN());
    rep.dist_T0.push_back(done ? rows.back().distance : std::numeric_limits<double>::quiet_NaN());
  }
  auto finite_all = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  rep.nonincreasing_half = finite_all(rep.dist_half) && nonincreasing_within(rep.dist_half, 0.0);
  rep.nonincreasing_T0 = finite_all(rep.dist_T0) && nonincreasing_within(rep.dist_T0, 0.0);
  if (rep.deltas.size() >= 2 && finite_all(rep.dist_T0)) {
    bool pos = true;
    for (double d : rep.dist_T0) pos = pos && d > 0.0;
    if (pos) rep.trend_T0 = loglog_slope(rep.deltas, rep.dist_T0);
  }
  for (const auto& run : rep.runs) {
    if (run.rows.empty()) continue;
    rep.hs_initial_max = std::max(rep.hs_initial_max, run.rows.front().hs);
    for (const auto& r : run.rows) {
      rep.hs_sup = std::max(rep.hs_sup, r.hs);
      rep.face_tail_max = std::max(rep.face_tail_max, r.face_tail);
      rep.max_div_max = std::max(rep.max_div_max, r.max_div);
    }
  }
  rep.hs_ratio = rep.hs_sup / rep.hs_initial_max;
  return rep;
}

inline std::string delta_tag(double d) {
  std::string s = fmt(d);
  for (auto& c : s)
    if (c == '.') c = 'p';
  return s;
}

inline Report to_report(const ConvergenceDeltaReport& r, const ScenarioConfig& cfg) {
  Report rep;
  rep.kind = "converge-delta";
  rep.name = cfg.name;
  rep.config_text = cfg.source;
  rep.threads = worker_count();
  Table pilot{"pilot", {"t", "hs", "c_running", "face_tail"}, {}};
  for (const auto& p : r.pilot.rows) pilot.add(p.t, p.hs, p.c_running, p.face_tail);
  Table dist{"distance", {"t", "delta", "l2_distance", "hs", "face_tail"}, {}};
  Table fails{"failures", {"delta", "message"}, {}};
  for (const auto& run : r.runs) {
    Table diag{"diagnostics_delta_" + delta_tag(run.delta), {"t", "l2", "hs", "energy", "max_div"}, {}};
    for (const auto& row : run.rows) {
      diag.add(row.t, row.l2, row.hs, row.energy, row.max_div);
      dist.add(row.t, row.delta, row.distance, row.hs, row.face_tail);
    }
    rep.tables.push_back(diag);
    if (!run.failure.empty()) fails.add(run.delta, "\"" + run.failure + "\"");
    rep.wall_times.emplace_back("delta=" + fmt(run.delta), run.wall);
  }
  rep.tables.insert(rep.tables.begin(), {pilot, dist, fails});
  Plot p{"distance_vs_delta", "l2 distance to delta = 0", "delta", "l2 distance", {}};
  p.series = {{"t = T0/2", r.deltas, r.dist_half}, {"t = T0", r.deltas, r.dist_T0}};
  Plot hs{"hs_vs_t", "H^s norm", "t", "H^s", {}};
  for (const auto& run : r.runs) {
    PlotSeries s{"delta = " + fmt(run.delta), {}, {}};
    for (const auto& row : run.rows)
      if (row.t > 0.0) s.x.push_back(row.t), s.y.push_back(row.hs);
    hs.series.push_back(s);
  }
  rep.plots = {p, hs};
  rep.results = {{"T0", fmt(r.pilot.T0)},
                 {"C_fit", fmt(r.pilot.c_fit)},
                 {"H0", fmt(r.pilot.h0)},
                 {"dt", fmt(r.dt)},
                 {"steps", std::to_string(r.steps)},
                 {"capped_by_face_tail", r.pilot.capped_by_tail ? "true" : "false"},
                 {"distance_nonincreasing_T0_half", r.nonincreasing_half ? "true" : "false"},
                 {"distance_nonincreasing_T0", r.nonincreasing_T0 ? "true" : "false"},
                 {"trend_slope_T0", fmt(r.trend_T0)},
                 {"hs_sup_over_initial", fmt(r.hs_ratio)},
                 {"face_tail_max", fmt(r.face_tail_max)},
                 {"max_div_max", fmt(r.max_div_max)}};
  return rep;
}

}  // namespace vfil
