// vfil: batch driver for the filament / grid experiments.
//
//   vfil simulate       --config ring.ini
//   vfil converge-n     --config converge_n.ini
//   vfil converge-delta --config converge_delta.ini
//   vfil mean-field     --config mean_field.ini
//   vfil constants      --config ring.ini
//   vfil metric         a.vfil b.vfil
//
// Exit codes: 0 ok, 2 precondition / input error, 3 numerical failure.

#include "vfil/filaments/io.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/convergence_delta.hpp"
#include "vfil/harness/convergence_n.hpp"
#include "vfil/harness/mean_field.hpp"
#include "vfil/harness/output.hpp"
#include "vfil/harness/simulate.hpp"
#include "vfil/harness/stability.hpp"
#include "vfil/kernel/constants.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using namespace vfil;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
};

ScenarioConfig load(const Overrides& o) {
  ScenarioConfig cfg = o.config.empty() ? parse_config("") : load_config(o.config);
  // Overrides take part in the config hash.
  if (o.seed) cfg.seed = *o.seed, cfg.source += "\n# --seed " + std::to_string(*o.seed);
  if (o.threads) cfg.threads = *o.threads, cfg.source += "\n# --threads " + std::to_string(*o.threads);
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  validate_common(cfg);
  set_worker_count(cfg.threads);
  return cfg;
}

// `extra`: files the subcommand wrote itself (trajectory, snapshots, fields).
void finish(Report rep, const ScenarioConfig& cfg, double wall, std::vector<std::string> extra = {}) {
  rep.wall_times.emplace_back("total", wall);
  rep.extra_files = std::move(extra);
  const auto files = emit_outputs(rep, cfg.out_dir);
  for (const auto& [k, v] : rep.results) std::cout << k << " = " << v << '\n';
  std::cout << "wrote " << files.size() + rep.extra_files.size() << " files to " << cfg.out_dir << '\n';
}

void add_common(CLI::App* sub, Overrides& o, bool need_config) {
  auto* c = sub->add_option("-c,--config", o.config, "scenario INI file");
  if (need_config) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override scenario.seed");
  sub->add_option("--threads", o.threads, "override scenario.threads")->check(CLI::Range(1u, 1024u));
  sub->add_option("--out-dir", o.out_dir, "override scenario.out_dir");
}

int run(int argc, char** argv) {
  CLI::App app{"vfil: mollified vortex filament laboratory"};
  app.require_subcommand(1);
  Overrides o;
  std::string metric_a, metric_b;
  double metric_t = 0.0;
  auto* sim = app.add_subcommand("simulate", "sample a ring, integrate, write trajectory and EE1-EE3 diagnostics");
  auto* cn = app.add_subcommand("converge-n", "N -> infinity at fixed delta against an N_ref run");
  auto* cd = app.add_subcommand("converge-delta", "delta -> 0 on the periodic grid");
  auto* mfc = app.add_subcommand("mean-field", "joint delta_N schedule and triangle split");
  auto* cst = app.add_subcommand("constants", "kernel constants, stability constants and the m_delta table");
  auto* met = app.add_subcommand("metric", "BL metric bounds between two VFIL currents");
  for (auto* s : {sim, cn, cd, mfc}) add_common(s, o, true);
  add_common(cst, o, false);
  add_common(met, o, false);
  met->add_option("a", metric_a, "first current (VFIL)")->required()->check(CLI::ExistingFile);
  met->add_option("b", metric_b, "second current (VFIL)")->required()->check(CLI::ExistingFile);
  met->add_option("--t", metric_t, "time stamp written to the CSV row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Stopwatch total;
  const ScenarioConfig cfg = load(o);
  if (*sim) {
    const auto r = run_simulate(cfg, cfg.out_dir);
    finish(to_report(r, cfg), cfg, total.seconds(), {"trajectory.csv", "initial.vfil", "final.vfil"});
  } else if (*cn) {
    const auto r = run_convergence_n(cfg);
    finish(to_report(r, cfg), cfg, total.seconds());
  } else if (*cd) {
    const auto r = run_convergence_delta(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::string> fields;
    for (const auto& run : r.runs)
      if (run.final_field) {
        fields.push_back("field_delta_" + delta_tag(run.delta) + "_T0.vfld");
        write_vfld((std::filesystem::path(cfg.out_dir) / fields.back()).string(), *run.final_field);
      }
    finish(to_report(r, cfg), cfg, total.seconds(), fields);
  } else if (*mfc) {
    const auto r = run_mean_field(cfg);
    finish(to_report(r, cfg), cfg, total.seconds());
  } else if (*cst) {
    std::vector<double> deltas = cfg.kernel.deltas.empty() ? std::vector<double>{cfg.kernel.delta} : cfg.kernel.deltas;
    const auto kern0 = cfg.kernel_at(cfg.kernel.delta);
    const auto smp = sample_initial_filaments(cfg.target, cfg.filaments.n, cfg.filaments.m, cfg.seed, kern0);
    const double R = smp.ensemble.mass();
    Report rep;
    rep.kind = "constants";
    rep.name = cfg.name;
    rep.config_text = cfg.source;
    rep.threads = worker_count();
    Table t{"constants", {"delta", "c0", "c1", "c2", "R", "T", "log10_c_star", "log10_c_lower_star",
                          "log10_c_delta_R", "log10_T_c_star"}, {}};
    const double l10 = std::log(10.0);
    for (double d : deltas) {
      const auto k = estimate_all_kernel_constants(cfg.kernel_at(d));
      const auto s = stability_constant(k, R, cfg.time.T);
      t.add(d, k.c0(), k.c1(), k.c2(), R, cfg.time.T, s.log_c_star / l10, s.log_c_lower_star / l10,
            s.log_c_delta_R / l10, s.log10_exponent);
    }
    rep.tables = {t};
    std::filesystem::create_directories(cfg.out_dir);
    export_mass_table_csv(kern0, (std::filesystem::path(cfg.out_dir) / "mass_table.csv").string());
    finish(rep, cfg, total.seconds(), {"mass_table.csv"});
  } else if (*met) {
    const auto a = read_current(metric_a);
    const auto b = read_current(metric_b);
    const auto est = bl_metric(a, b, cfg.dictionary, cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = (std::filesystem::path(cfg.out_dir) / "metric.csv").string();
    write_metric_csv(path, {{metric_t, est}});
    std::cout << "lower = " << fmt(est.lower) << " (" << to_string(est.witness.kind) << ")\n"
              << "upper = " << fmt(est.upper) << " (" << est.upper_method << ")\n"
              << "wrote " << path << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vfil::SimulationError& e) {
    std::cerr << (e.step_rejected() ? "error: " : "numerical failure: ") << e.what() << '\n';
    return e.step_rejected() ? 2 : 3;
  } catch (const vfil::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const vfil::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
