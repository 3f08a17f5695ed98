#pragma once

#include "vfil/currents/metric.hpp"
#include "vfil/filaments/filament.hpp"
#include "vfil/filaments/sampling.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/output.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace vfil {

struct ConvergenceNRow {
  std::size_t n = 0;
  double t = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::string witness;
};

struct ConvergenceNEntry {
  std::size_t n = 0;
  std::vector<ConvergenceNRow> rows;
  MetricEstimate initial_error;  // as reported by the sampler
  std::string failure;           // empty on success
  double wall = 0.0;
};

struct ConvergenceNReport {
  double delta = 0.0;
  std::size_t n_ref = 0;
  std::vector<ConvergenceNEntry> entries;
  double rate = std::numeric_limits<double>::quiet_NaN();  // slope of log upper(T) against log N
  bool monotone = false;  // upper(T) nonincreasing in N up to the 5% allowance
  double reference_wall = 0.0;
};

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a, sy += b, sxx += a * a, sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Values nonincreasing along the sequence, each step allowed to grow by a
// relative `noise`.
inline bool nonincreasing_within(const std::vector<double>& v, double noise) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] * (1.0 + noise)) return false;
  return true;
}

inline ConvergenceNReport run_convergence_n(const ScenarioConfig& cfg) {
  validate_for_n(cfg);
  const auto kern = cfg.kernel_at(cfg.kernel.delta);
  const std::size_t n_ref = cfg.reference_n();
  const SimulateOptions so{cfg.time.T, cfg.time.dt, cfg.time.record_every};
  ConvergenceNReport rep;
  rep.delta = cfg.kernel.delta;
  rep.n_ref = n_ref;

  Stopwatch sw;
  const auto ref_cells = partition_flux(n_ref);
  const FilamentEnsemble ref0(sample_flux_tubes(cfg.target, ref_cells, cfg.filaments.m, cfg.seed), kern);
  const auto ref = simulate(ref0, so);  // a failing reference aborts the study
  std::vector<CurrentPolyline> ref_xi;
  for (const auto& s : ref.states) ref_xi.push_back(empirical_current(s));
  rep.reference_wall = sw.seconds();

  for (std::size_t n : cfg.filaments.n_list) {
    Stopwatch one;
    ConvergenceNEntry e;
    e.n = n;
    try {
      SamplingOptions sopt;
      sopt.reference_n = n_ref;
      sopt.dictionary = cfg.dictionary;
      const auto smp = sample_initial_filaments(cfg.target, n, cfg.filaments.m, cfg.seed, kern, sopt);
      e.initial_error = smp.initial_error;
      const auto plan = flux_coupling(smp.cells, ref_cells, cfg.target.circulation);
      const auto tr = simulate(smp.ensemble, so);
      for (std::size_t s = 0; s < tr.states.size(); ++s) {
        ConvergenceNRow row;
        row.n = n;
        row.t = tr.states[s].time;
        if (s == 0) {
          row.lower = smp.initial_error.lower;
          row.upper = smp.initial_error.upper;
          row.witness = to_string(smp.initial_error.witness.kind);
        } else {
          const auto xi = empirical_current(tr.states[s]);
          const auto lo = bl_metric_lower(xi, ref_xi[s], cfg.dictionary, cfg.seed);
          row.lower = lo.lower;
          row.witness = to_string(lo.witness.kind);
          row.upper = bl_metric_upper_coupled(xi, ref_xi[s], plan).upper;
        }
        e.rows.push_back(row);
      }
    } catch (const Error& err) {
      e.failure = err.what();
    }
    e.wall = one.seconds();
    rep.entries.push_back(std::move(e));
  }

  std::vector<double> ns, finals;
  for (const auto& e : rep.entries)
    if (e.failure.empty() && e.rows.back().upper > 0.0) {
      ns.push_back(static_cast<double>(e.n));
      finals.push_back(e.rows.back().upper);
    }
  if (ns.size() >= 2) rep.rate = loglog_slope(ns, finals);
  rep.monotone = ns.size() == cfg.filaments.n_list.size() && nonincreasing_within(finals, 0.05);
  return rep;
}

inline Report to_report(const ConvergenceNReport& r, const ScenarioConfig& cfg) {
  Report rep;
  rep.kind = "converge-n";
  rep.name = cfg.name;
  rep.config_text = cfg.source;
  rep.threads = worker_count();
  rep.seeds = {{"sampling", cfg.seed}, {"dictionary", cfg.seed}};
  Table t{"metric_vs_n", {"N", "t", "lower", "upper", "witness_kind"}, {}};
  Table f{"failures", {"N", "message"}, {}};
  Plot p{"metric_vs_n", "BL distance to N_ref = " + std::to_string(r.n_ref) + " at t = T", "N", "metric", {}};
  PlotSeries up{"upper", {}, {}}, lo{"lower", {}, {}};
  for (const auto& e : r.entries) {
    for (const auto& row : e.rows) t.add(row.n, row.t, row.lower, row.upper, row.witness);
    if (!e.failure.empty()) f.add(e.n, "\"" + e.failure + "\"");
    if (e.failure.empty() && !e.rows.empty()) {
      up.x.push_back(static_cast<double>(e.n));
      up.y.push_back(e.rows.back().upper);
      lo.x.push_back(static_cast<double>(e.n));
      lo.y.push_back(e.rows.back().lower);
    }
    rep.wall_times.emplace_back("N=" + std::to_string(e.n), e.wall);
  }
  p.series = {up, lo};
  rep.tables = {t, f};
  rep.plots = {p};
  rep.wall_times.emplace_back("reference", r.reference_wall);
  rep.results = {{"delta", fmt(r.delta)},
                 {"N_ref", std::to_string(r.n_ref)},
                 {"rate_upper_vs_N", fmt(r.rate)},
                 {"upper_nonincreasing_5pct", r.monotone ? "true" : "false"}};
  return rep;
}

}  // namespace vfil
