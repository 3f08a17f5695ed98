#pragma once

#include "vfil/currents/metric.hpp"
#include "vfil/filaments/filament.hpp"
#include "vfil/filaments/io.hpp"
#include "vfil/filaments/sampling.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/output.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vfil {

struct SimulateRun {
  TrajectoryRecord trajectory;
  ConservationReport conservation;
  double sim_wall = 0.0, diag_wall = 0.0;
};

// Sample the target, integrate to T and evaluate EE1-EE3 on the recorded
// states. When `out_dir` is non-empty the trajectory CSV and the first and
// last VFIL snapshots are written there.
inline SimulateRun run_simulate(const ScenarioConfig& cfg, const std::string& out_dir = {}) {
  const auto kern = cfg.kernel_at(cfg.kernel.delta);
  const auto smp = sample_initial_filaments(cfg.target, cfg.filaments.n, cfg.filaments.m, cfg.seed, kern);
  SimulateRun run;
  std::unique_ptr<TrajectoryCsv> csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv = std::make_unique<TrajectoryCsv>((std::filesystem::path(out_dir) / "trajectory.csv").string());
  }
  std::vector<Observer> obs;
  if (csv) obs.push_back([&](const FilamentEnsemble& e, std::size_t) { csv->append(e); });
  Stopwatch sw;
  run.trajectory = simulate(smp.ensemble, {cfg.time.T, cfg.time.dt, cfg.time.record_every}, obs);
  run.sim_wall = sw.seconds();
  if (!out_dir.empty()) {
    write_vfil((std::filesystem::path(out_dir) / "initial.vfil").string(), run.trajectory.states.front());
    write_vfil((std::filesystem::path(out_dir) / "final.vfil").string(), run.trajectory.final_state());
  }
  sw = Stopwatch();
  std::vector<double> times;
  std::vector<CurrentPolyline> snaps;
  for (const auto& s : run.trajectory.states) {
    times.push_back(s.time);
    snaps.push_back(empirical_current(s));
  }
  ConservationOptions co;
  co.grid = cfg.field_grid;
  co.ee1_tolerance = cfg.conservation.ee1_tolerance;
  co.l2_every_snapshot = cfg.conservation.l2_every_snapshot;
  co.dictionary = cfg.dictionary;
  co.seed = cfg.seed;
  run.conservation = conservation_report(times, snaps, kern, co);
  run.diag_wall = sw.seconds();
  return run;
}

inline Report to_report(const SimulateRun& r, const ScenarioConfig& cfg) {
  Report rep;
  rep.kind = "simulate";
  rep.name = cfg.name;
  rep.config_text = cfg.source;
  rep.threads = worker_count();
  rep.seeds = {{"sampling", cfg.seed}, {"dictionary", cfg.seed}};
  Table t{"conservation", {"t", "l2", "l2_drift", "sup", "ee2_margin", "bl_lower", "ee3_bound", "ee3_margin",
                           "ee1_pass", "ee2_pass", "ee3_pass"}, {}};
  for (const auto& row : r.conservation.rows)
    t.add(row.t, row.l2, row.l2_drift, row.sup, row.ee2_margin, row.bl_lower, row.ee3_bound, row.ee3_margin,
          row.ee1_pass, row.ee2_pass, row.ee3_pass);
  rep.tables = {t};
  rep.wall_times = {{"simulate", r.sim_wall}, {"diagnostics", r.diag_wall}};
  rep.results = {{"initial_l2", fmt(r.conservation.initial_l2)},
                 {"initial_mass", fmt(r.conservation.initial_mass)},
                 {"final_l2_drift", fmt(r.conservation.rows.back().l2_drift)},
                 {"all_pass", r.conservation.all_pass() ? "true" : "false"}};
  return rep;
}

}  // namespace vfil
