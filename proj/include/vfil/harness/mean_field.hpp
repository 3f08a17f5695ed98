#pragma once

#include "vfil/currents/metric.hpp"
#include "vfil/euler/field.hpp"
#include "vfil/euler/solver.hpp"
#include "vfil/filaments/filament.hpp"
#include "vfil/filaments/sampling.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/convergence_n.hpp"
#include "vfil/harness/output.hpp"
#include "vfil/harness/stability.hpp"
#include "vfil/kernel/constants.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace vfil {

struct ScheduleEntry {
  std::size_t n = 0;
  double tolerance = 0.0;
  MetricEstimate initial_error;  // against the N_ref current at t = 0
  bool admissible = false;
  double delta = 0.0;            // delta_N, or the fallback when infeasible
  double log_c = 0.0;            // log C_{delta,R} at that delta
};

struct MeanFieldRow {
  std::size_t n = 0;
  double delta = 0.0;
  bool admissible = false;
  double t = 0.0;
  double total = 0.0;      // ||deposit(xi^N_t) - xi_t||
  double part1 = 0.0;      // ||deposit(xi^N_t) - deposit(xi^ref_t)||
  double part1_bl = 0.0;   // coupled BL upper bound between xi^N_t and xi^ref_t
  double part2 = 0.0;      // ||deposit(xi^ref_t) - xi_t||
  double log_rhs = 0.0;    // log(C ||xi_0^N - xi_0||_lower + part2)
  bool bound_holds = false;
  bool triangle_holds = false;
};

struct MeanFieldReport {
  double R = 0.0;  // |xi_0|_M of the reference current
  double T = 0.0;
  std::size_t n_ref = 0;
  std::vector<StabilityConstants> constants;  // one per grid delta, descending delta
  std::vector<ScheduleEntry> schedule;
  std::vector<MeanFieldRow> rows;
  std::vector<std::string> failures;
  double grid_dt = 0.0;
  std::size_t admissible_count = 0;
  bool all_admissible_hold = true;  // bound at every snapshot for admissible N
  bool all_fallback_hold = true;    // same check at the fallback delta
  bool triangle_all = true;
  std::vector<std::pair<std::string, double>> walls;
};

inline double default_tolerance(std::size_t n) { return 1.0 / std::log(static_cast<double>(n) + std::exp(1.0)); }

// Largest grid delta with C_{delta,R} x <= tol, compared in logs; -1 when none.
inline int largest_admissible(const std::vector<StabilityConstants>& consts, double x, double tol) {
  for (std::size_t i = 0; i < consts.size(); ++i)
    if (consts[i].log_c_delta_R + std::log(x) <= std::log(tol)) return static_cast<int>(i);
  return -1;
}

inline MeanFieldReport run_mean_field(const ScenarioConfig& cfg) {
  validate_for_mean_field(cfg);
  const auto& mf = cfg.mean_field;
  MeanFieldReport rep;
  rep.T = cfg.time.T;
  rep.n_ref = cfg.reference_n();
  const std::size_t S = mf.snapshots;
  const double interval = rep.T / static_cast<double>(S);
  const double per = interval / cfg.time.dt;
  require(std::abs(per - std::round(per)) < 1e-9 * per,
          "mean_field: T / snapshots must be a multiple of time.dt");
  const auto record_every = static_cast<std::size_t>(std::llround(per));

  std::vector<double> grid_deltas = mf.deltas;
  std::sort(grid_deltas.begin(), grid_deltas.end(), std::greater<>());
  const auto ref_cells = partition_flux(rep.n_ref);
  const auto ref_loops = sample_flux_tubes(cfg.target, ref_cells, cfg.filaments.m, cfg.seed);
  {
    CurrentPolyline xr;
    for (const auto& f : ref_loops) xr.loops.push_back({f.alpha, f.nodes, f.id});
    rep.R = mass_norm_upper(xr);
  }
  Stopwatch sw;
  for (double d : grid_deltas) rep.constants.push_back(stability_constant(estimate_all_kernel_constants(cfg.kernel_at(d)), rep.R, rep.T));
  rep.walls.emplace_back("constants", sw.seconds());

  // (1) initial errors and (3) the schedule
  sw = Stopwatch();
  std::vector<SampledFilaments> samples;
  for (std::size_t i = 0; i < cfg.filaments.n_list.size(); ++i) {
    const std::size_t n = cfg.filaments.n_list[i];
    SamplingOptions so;
    so.reference_n = rep.n_ref;
    so.dictionary = cfg.dictionary;
    samples.push_back(sample_initial_filaments(cfg.target, n, cfg.filaments.m, cfg.seed, cfg.kernel_at(grid_deltas[0]), so));
    ScheduleEntry e;
    e.n = n;
    e.tolerance = mf.tolerances.empty() ? default_tolerance(n) : mf.tolerances[i];
    e.initial_error = samples.back().initial_error;
    const int k = largest_admissible(rep.constants, e.initial_error.upper, e.tolerance);
    e.admissible = k >= 0;
    const std::size_t pick = e.admissible ? static_cast<std::size_t>(k) : 0;
    e.delta = grid_deltas[pick];
    e.log_c = rep.constants[pick].log_c_delta_R;
    rep.admissible_count += e.admissible ? 1 : 0;
    rep.schedule.push_back(e);
  }
  rep.walls.emplace_back("sampling", sw.seconds());

  // (4) Lagrangian runs: xi^{N, delta_N} and the N_ref reference per distinct delta
  sw = Stopwatch();
  const SimulateOptions so{rep.T, cfg.time.dt, record_every};
  std::map<double, std::vector<CurrentPolyline>> ref_states;
  std::vector<std::vector<CurrentPolyline>> n_states(rep.schedule.size());
  auto currents = [](const TrajectoryRecord& tr) {
    std::vector<CurrentPolyline> out;
    for (const auto& s : tr.states) out.push_back(empirical_current(s));
    return out;
  };
  for (std::size_t i = 0; i < rep.schedule.size(); ++i) {
    const double d = rep.schedule[i].delta;
    try {
      if (!ref_states.count(d)) ref_states[d] = currents(simulate(FilamentEnsemble(ref_loops, cfg.kernel_at(d)), so));
      n_states[i] = currents(simulate(FilamentEnsemble(samples[i].ensemble.filaments, cfg.kernel_at(d)), so));
    } catch (const Error& e) {
      rep.failures.push_back("N=" + std::to_string(rep.schedule[i].n) + ": " + e.what());
    }
  }
  rep.walls.emplace_back("lagrangian", sw.seconds());

  // Grid Euler xi(t) with delta = 0, compared at the snapshot times.
  sw = Stopwatch();
  const auto grid = make_grid(GridSpec{mf.box_length, mf.n});
  const auto& profile = *shared_mass_table(cfg.kernel.k_max)->profile_ptr();
  const SpectralBiotSavart bs0(grid, 0.0);
  auto field = init_vortex_ring(grid, cfg.target);
  double vmax = 0.0;
  vorticity_rhs(field, bs0, &vmax);
  const double adm = kSpectralCfl * grid->spacing() / vmax;
  const auto sub = static_cast<std::size_t>(
      std::ceil(interval / (mf.dt_grid > 0.0 ? mf.dt_grid : 0.8 * adm) - 1e-9));
  rep.grid_dt = interval / static_cast<double>(sub);
  for (std::size_t k = 0; k <= S; ++k) {
    if (k > 0)
      for (std::size_t j = 0; j < sub; ++j) field = step_rk4_spectral(field, rep.grid_dt, bs0);
    field.t = static_cast<double>(k) * interval;
    std::map<double, std::shared_ptr<PeriodicVorticityField>> ref_dep;
    for (std::size_t i = 0; i < rep.schedule.size(); ++i) {
      const auto& e = rep.schedule[i];
      if (n_states[i].empty()) continue;
      try {
        if (!ref_dep.count(e.delta))
          ref_dep[e.delta] = std::make_shared<PeriodicVorticityField>(
              filament_to_grid(ref_states[e.delta][k], e.delta, profile, grid));
        const auto dn = filament_to_grid(n_states[i][k], e.delta, profile, grid);
        MeanFieldRow r;
        r.n = e.n;
        r.delta = e.delta;
        r.admissible = e.admissible;
        r.t = field.t;
        r.total = l2_distance(dn, field);
        r.part1 = l2_distance(dn, *ref_dep[e.delta]);
        r.part2 = l2_distance(*ref_dep[e.delta], field);
        r.part1_bl = bl_metric_upper_coupled(n_states[i][k], ref_states[e.delta][k],
                                             flux_coupling(samples[i].cells, ref_cells, cfg.target.circulation))
                         .upper;
        r.log_rhs = detail::log_add(e.log_c + std::log(e.initial_error.lower), std::log(r.part2));
        r.bound_holds = std::log(r.total) <= r.log_rhs;
        r.triangle_holds = r.total <= (r.part1 + r.part2) * (1.0 + 1e-12);
        if (r.admissible) rep.all_admissible_hold = rep.all_admissible_hold && r.bound_holds;
        else rep.all_fallback_hold = rep.all_fallback_hold && r.bound_holds;
        rep.triangle_all = rep.triangle_all && r.triangle_holds;
        rep.rows.push_back(r);
      } catch (const Error& err) {
        rep.failures.push_back("N=" + std::to_string(e.n) + " t=" + fmt(field.t) + ": " + err.what());
      }
    }
  }
  rep.walls.emplace_back("grid_and_deposits", sw.seconds());
  return rep;
}

inline Report to_report(const MeanFieldReport& r, const ScenarioConfig& cfg) {
  Report rep;
  rep.kind = "mean-field";
  rep.name = cfg.name;
  rep.config_text = cfg.source;
  rep.threads = worker_count();
  rep.seeds = {{"sampling", cfg.seed}, {"dictionary", cfg.seed}};
  const double l10 = std::log(10.0);
  Table c{"constants", {"delta", "R", "T", "c0", "c1", "c2", "log10_c_star", "log10_c_lower_star",
                        "log10_c_delta_R", "log10_T_c_star"}, {}};
  for (const auto& k : r.constants)
    c.add(k.delta, k.R, k.T, k.c0, k.c1, k.c2, k.log_c_star / l10, k.log_c_lower_star / l10, k.log_c_delta_R / l10,
          k.log10_exponent);
  Table s{"schedule", {"N", "tolerance", "initial_lower", "initial_upper", "admissible", "delta", "log10_c_delta_R"}, {}};
  for (const auto& e : r.schedule)
    s.add(e.n, e.tolerance, e.initial_error.lower, e.initial_error.upper, e.admissible ? "admissible" : "infeasible",
          e.delta, e.log_c / l10);
  Table t{"errors", {"N", "delta", "admissible", "t", "total", "part1_l2", "part1_bl_upper", "part2", "log10_rhs",
                     "bound_holds", "triangle_holds"}, {}};
  for (const auto& row : r.rows)
    t.add(row.n, row.delta, row.admissible, row.t, row.total, row.part1, row.part1_bl, row.part2, row.log_rhs / l10,
          row.bound_holds, row.triangle_holds);
  Table f{"failures", {"message"}, {}};
  for (const auto& m : r.failures) f.add("\"" + m + "\"");
  rep.tables = {c, s, t, f};
  Plot p{"errors_vs_n", "errors at t = T", "N", "l2 distance", {}};
  PlotSeries tot{"total", {}, {}}, p1{"part1", {}, {}}, p2{"part2", {}, {}};
  for (const auto& row : r.rows)
    if (row.t == r.T) {
      tot.x.push_back(static_cast<double>(row.n)), tot.y.push_back(row.total);
      p1.x.push_back(static_cast<double>(row.n)), p1.y.push_back(row.part1);
      p2.x.push_back(static_cast<double>(row.n)), p2.y.push_back(row.part2);
    }
  p.series = {tot, p1, p2};
  Plot q{"stability_exponent", "log10(T C*) against 1/delta", "1/delta", "log10(T C*)", {}};
  PlotSeries qs{"log10(T C*)", {}, {}};
  for (const auto& k : r.constants) qs.x.push_back(1.0 / k.delta), qs.y.push_back(k.log10_exponent);
  q.series = {qs};
  rep.plots = {p, q};
  rep.wall_times = r.walls;
  rep.results = {{"R", fmt(r.R)},
                 {"N_ref", std::to_string(r.n_ref)},
                 {"admissible_count", std::to_string(r.admissible_count)},
                 {"bound_holds_admissible", r.all_admissible_hold ? "true" : "false"},
                 {"bound_holds_fallback", r.all_fallback_hold ? "true" : "false"},
                 {"triangle_holds", r.triangle_all ? "true" : "false"},
                 {"grid_dt", fmt(r.grid_dt)}};
  return rep;
}

}  // namespace vfil
