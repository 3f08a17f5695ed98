#include "support.hpp"
#include "vfil/harness/config.hpp"
#include "vfil/harness/convergence_delta.hpp"
#include "vfil/harness/convergence_n.hpp"
#include "vfil/harness/mean_field.hpp"
#include "vfil/harness/output.hpp"
#include "vfil/harness/simulate.hpp"
#include "vfil/harness/stability.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

namespace vfil {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("vfil_harness_" + name);
  fs::remove_all(p);
  return p;
}

// ---- config ----

TEST(Config, DefaultsAndOverrides) {
  const auto c = parse_config(
      "[scenario]\nname = x\nseed = 7\n[kernel]\ndelta = 0.3\ndeltas = 0.2, 0.1\n[filaments]\nn_list = 2 4\n"
      "[target]\ncenter = 0 0 0.5\n[time]\nT = 0.5\ndt = 0.05\n");
  EXPECT_EQ(c.name, "x");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.kernel.delta, 0.3);
  ASSERT_EQ(c.kernel.deltas.size(), 2u);
  EXPECT_DOUBLE_EQ(c.kernel.deltas[1], 0.1);
  EXPECT_EQ(c.filaments.n_list, (std::vector<std::size_t>{2, 4}));
  EXPECT_DOUBLE_EQ(c.target.center.z(), 0.5);
  EXPECT_EQ(c.reference_n(), 16u);
  EXPECT_DOUBLE_EQ(c.kernel.gamma, -1.0);
}

TEST(Config, RejectsEveryMalformedInput) {
  EXPECT_THROW(parse_config("[kernel]\nbogus = 1\n"), PreconditionError);
  EXPECT_THROW(parse_config("[kernel]\ndelta = abc\n"), PreconditionError);
  EXPECT_THROW(parse_config("[kernel]\ndelta = -0.1\n"), PreconditionError);
  EXPECT_THROW(parse_config("[kernel]\ngamma = 0\n"), PreconditionError);
  EXPECT_THROW(parse_config("delta = 0.1\n"), PreconditionError);
  EXPECT_THROW(parse_config("[target]\ncore = 0.5\nradius = 1\n"), PreconditionError);
  EXPECT_THROW(parse_config("[target]\nkind = sheet\n"), PreconditionError);
  EXPECT_THROW(parse_config("[target]\ncenter = 1 2\n"), PreconditionError);
  EXPECT_THROW(parse_config("[time]\ndt = 2\nT = 1\n"), PreconditionError);
  EXPECT_THROW(parse_config("[filaments]\nm = 4\n"), PreconditionError);
  EXPECT_THROW(parse_config("[conservation]\nl2_every_snapshot = maybe\n"), PreconditionError);
  EXPECT_THROW(load_config("/nonexistent/x.ini"), IoError);
}

TEST(Config, SubcommandChecksRunBeforeCompute) {
  EXPECT_THROW(validate_for_n(parse_config("")), PreconditionError);  // no N list
  EXPECT_THROW(validate_for_n(parse_config("[filaments]\nn_list = 8 4\n")), PreconditionError);
  EXPECT_THROW(validate_for_n(parse_config("[filaments]\nn_list = 4 8\nn_ref = 16\n")), PreconditionError);
  EXPECT_NO_THROW(validate_for_n(parse_config("[filaments]\nn_list = 4 16\nn_ref = 16\n")));
  // h = 1.6 / 64 = 0.025 needs delta_min >= 0.05.
  EXPECT_THROW(validate_for_delta(parse_config("[kernel]\ndeltas = 0.2 0.04\n")), PreconditionError);
  EXPECT_NO_THROW(validate_for_delta(parse_config("[kernel]\ndeltas = 0.2 0.05\n")));
  EXPECT_THROW(validate_for_delta(parse_config("[kernel]\ndeltas = 0.1\n[grid]\nsteps = 3\n")), PreconditionError);
  EXPECT_THROW(validate_for_delta(parse_config("[kernel]\ndeltas = 0.1\n[grid]\ns = 1.5\n")), PreconditionError);
  EXPECT_THROW(validate_for_delta(parse_config("[kernel]\ndeltas = 0.1\n[grid]\ncore = 0.05\n")),
               PreconditionError);
  const std::string mf = "[filaments]\nn_list = 4\nn_ref = 16\nm = 16\n[target]\nradius = 1\ncore = 0.25\n";
  EXPECT_NO_THROW(validate_for_mean_field(parse_config(mf + "[mean_field]\ndeltas = 0.1\n")));
  EXPECT_THROW(validate_for_mean_field(parse_config(mf + "[mean_field]\ndeltas = 0.2\n")), PreconditionError);
  EXPECT_THROW(validate_for_mean_field(parse_config(mf + "[mean_field]\ndeltas = 0.1\ntolerances = 1 2\n")),
               PreconditionError);
}

// ---- stability constants ----

TEST(StabilityConstant, ZeroHorizonLimit) {
  const double c0 = 0.7, c1 = 1.3, c2 = 4.1, R = 2.5;
  const auto s = stability_constant(c0, c1, c2, R, 0.0);
  EXPECT_NEAR(s.c_lower_star(), 2.0, 1e-15);
  EXPECT_NEAR(s.c_delta_R(), 2.0, 1e-15);
  EXPECT_NEAR(s.c_star(), R * R * (c0 * c1 + c2), 1e-12 * s.c_star());
  const auto tiny = stability_constant(c0, c1, c2, R, 1e-12);
  EXPECT_NEAR(tiny.c_delta_R(), 2.0, 1e-9);
}

TEST(StabilityConstant, MatchesDirectFormulaAtHalfDelta) {
  const auto kern = testing::kernel(0.5);
  const auto k = estimate_all_kernel_constants(kern);
  const double R = 2.0 * kPi * 0.5, T = 0.25;  // small ring, short horizon: no overflow
  const auto s = stability_constant(k, R, T);
  // Independent evaluation of the displayed formulas in plain arithmetic.
  const double c0 = k.c0(), c1 = k.c1(), c2 = k.c2();
  const double cstar = R * R * (c0 * c1 + c2 * (1.0 + c0 * c1 * T * R * std::exp(c1 * T * R))) *
                       std::exp(2.0 * T * c1 * R);
  const double clow = (T * c2 * R + 2.0) * std::exp(2.0 * c1 * T * R);
  const double cdr = clow * std::exp(T * cstar);
  ASSERT_TRUE(std::isfinite(cdr));
  EXPECT_NEAR(s.log_c_star, std::log(cstar), 1e-12 * std::abs(std::log(cstar)));
  EXPECT_NEAR(s.log_c_lower_star, std::log(clow), 1e-12 * std::abs(std::log(clow)));
  EXPECT_NEAR(s.log_c_delta_R, std::log(cdr), 1e-12 * std::abs(std::log(cdr)));
  EXPECT_NEAR(s.c_delta_R(), cdr, 1e-10 * cdr);
}

TEST(StabilityConstant, InvariantsAndMonotonicity) {
  const auto table = testing::table();
  std::vector<KernelConstants> ks;
  for (double d : {1.0, 0.5, 0.25, 0.125}) ks.push_back(estimate_all_kernel_constants(MollifiedKernel(table, d, {-1.0})));
  for (const auto& k : ks)
    for (double R : {0.5, 1.0, 2.0})
      for (double T : {0.01, 0.1, 1.0}) {
        const auto s = stability_constant(k, R, T);
        EXPECT_GE(s.log_c_delta_R, s.log_c_lower_star);
        EXPECT_GE(s.log_c_lower_star, std::log(2.0));
        const auto r2 = stability_constant(k, 2.0 * R, T);
        const auto t2 = stability_constant(k, R, 2.0 * T);
        EXPECT_GT(r2.log_c_star, s.log_c_star);
        EXPECT_GT(r2.log_c_lower_star, s.log_c_lower_star);
        EXPECT_GE(r2.log_c_delta_R, s.log_c_delta_R);
        EXPECT_GT(t2.log_c_lower_star, s.log_c_lower_star);
        EXPECT_GE(t2.log_c_delta_R, s.log_c_delta_R);
      }
  // in 1/delta
  for (std::size_t i = 1; i < ks.size(); ++i) {
    const auto a = stability_constant(ks[i - 1], 1.0, 0.1), b = stability_constant(ks[i], 1.0, 0.1);
    EXPECT_GT(b.log_c_star, a.log_c_star);
    EXPECT_GE(b.log_c_delta_R, a.log_c_delta_R);
  }
}

TEST(StabilityConstant, OverflowKeepsTheExponent) {
  const auto s = stability_constant(50.0, 500.0, 1e4, 6.0, 0.5);
  EXPECT_FALSE(std::isfinite(s.log_c_delta_R));
  EXPECT_TRUE(s.overflows());
  EXPECT_TRUE(std::isfinite(s.log10_exponent));
  EXPECT_GT(s.log10_exponent, 308.0);
  EXPECT_NEAR(s.log10_exponent, (std::log(0.5) + s.log_c_star) / std::log(10.0), 1e-12 * s.log10_exponent);
  // a finite product is still rejected by the admissibility rule
  EXPECT_EQ(largest_admissible({s}, 1e-300, 1.0), -1);
}

TEST(StabilityConstant, PreconditionsOnly) {
  EXPECT_THROW(stability_constant(1, 1, 1, 0.0, 1.0), PreconditionError);
  EXPECT_THROW(stability_constant(1, 1, 1, 1.0, -1.0), PreconditionError);
  EXPECT_THROW(stability_constant(0, 1, 1, 1.0, 1.0), PreconditionError);
}

// ---- schedule rule ----

TEST(Schedule, LargestAdmissibleAndHalvingTolerance) {
  std::vector<StabilityConstants> cs;
  for (double lc : {1.0, 3.0, 6.0, 12.0}) {  // descending delta, increasing C
    StabilityConstants s;
    s.log_c_delta_R = lc;
    cs.push_back(s);
  }
  const double x = 1e-3;
  EXPECT_EQ(largest_admissible(cs, x, 1.0), 0);
  EXPECT_EQ(largest_admissible(cs, x, std::exp(1.0) * x * 0.99), -1);
  int prev = 0;
  for (double tol = 1.0; tol > 1e-8; tol *= 0.5) {
    const int k = largest_admissible(cs, std::exp(-8.0), tol);
    if (k < 0) break;
    EXPECT_GE(k, prev);  // selected delta nonincreasing
    prev = k;
  }
  EXPECT_NEAR(default_tolerance(1), 1.0 / std::log(1.0 + std::exp(1.0)), 1e-15);
  EXPECT_GT(default_tolerance(4), default_tolerance(8));
}

// ---- outputs ----

TEST(Outputs, EmptyReportWritesManifestOnly) {
  const auto dir = scratch("empty");
  Report rep;
  rep.kind = "none";
  const auto files = emit_outputs(rep, dir.string());
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(fs::path(files[0]).filename(), "manifest.json");
  const auto m = slurp(files[0]);
  EXPECT_NE(m.find("\"config_hash\": \"fnv1a64:"), std::string::npos);
  EXPECT_NE(m.find("\"version\": \"0.1.0+g"), std::string::npos);
}

TEST(Outputs, FormattingAndHash) {
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0}) EXPECT_EQ(std::stod(fmt(v)), v);
  EXPECT_EQ(fmt(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
  Table t{"x", {"a", "b"}, {}};
  EXPECT_THROW(t.add(1.0), PreconditionError);
}

TEST(Outputs, PlotAxesContainEveryPoint) {
  Plot p{"p", "t", "x", "y", {}};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> e(-7.0, 3.0);
  for (int s = 0; s < 3; ++s) {
    PlotSeries ps{"s" + std::to_string(s), {}, {}};
    for (int i = 0; i < 25; ++i) ps.x.push_back(std::pow(10.0, e(rng))), ps.y.push_back(std::pow(10.0, e(rng)));
    ps.x.push_back(1.0), ps.y.push_back(0.0);  // dropped
    p.series.push_back(ps);
  }
  const auto svg = render_svg(p);
  const std::regex rect("class=\"axes\" x=\"([0-9.]+)\" y=\"([0-9.]+)\" width=\"([0-9.]+)\" height=\"([0-9.]+)\"");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, rect));
  const double x0 = std::stod(m[1]), y0 = std::stod(m[2]), x1 = x0 + std::stod(m[3]), y1 = y0 + std::stod(m[4]);
  const std::regex circ("cx=\"([0-9.-]+)\" cy=\"([0-9.-]+)\"");
  std::size_t count = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circ); it != std::sregex_iterator(); ++it) {
    const double cx = std::stod((*it)[1]), cy = std::stod((*it)[2]);
    EXPECT_GE(cx, x0);
    EXPECT_LE(cx, x1);
    EXPECT_GE(cy, y0);
    EXPECT_LE(cy, y1);
    ++count;
  }
  EXPECT_EQ(count, 75u);
  EXPECT_NE(svg.find("<!-- dropped 3 -->"), std::string::npos);
}

// ---- experiments at toy scale ----

const char* kSmallN =
    "[scenario]\nseed = 3\n[kernel]\ndelta = 0.3\n[filaments]\nn_list = 2 8\nn_ref = 8\nm = 16\n"
    "[target]\nradius = 1\ncore = 0.1\n[time]\nT = 0.2\ndt = 0.05\nrecord_every = 2\n"
    "[metric]\nmax_centers = 24\nrandom_centers = 4\ntrig_directions = 4\n";

TEST(ConvergenceN, ReferenceSizedEntryIsZeroAndInitialColumnMatchesSampler) {
  const auto cfg = parse_config(kSmallN);
  const auto r = run_convergence_n(cfg);
  ASSERT_EQ(r.entries.size(), 2u);
  for (const auto& e : r.entries) {
    ASSERT_TRUE(e.failure.empty()) << e.failure;
    ASSERT_EQ(e.rows.size(), 3u);  // t = 0, 0.1, 0.2
    EXPECT_EQ(e.rows.front().lower, e.initial_error.lower);
    EXPECT_EQ(e.rows.front().upper, e.initial_error.upper);
  }
  for (const auto& row : r.entries[1].rows) {
    EXPECT_EQ(row.lower, 0.0);
    EXPECT_EQ(row.upper, 0.0);
  }
  EXPECT_GT(r.entries[0].rows.back().upper, 0.0);
  // the rate needs two positive finals; the self entry is zero
  EXPECT_TRUE(std::isnan(r.rate));
}

TEST(ConvergenceN, OutputsAreByteDeterministic) {
  const auto cfg = parse_config(kSmallN);
  const auto a = scratch("det_a"), b = scratch("det_b");
  emit_outputs(to_report(run_convergence_n(cfg), cfg), a.string());
  emit_outputs(to_report(run_convergence_n(cfg), cfg), b.string());
  for (const char* f : {"metric_vs_n.csv", "failures.csv", "metric_vs_n.svg"}) {
    const auto x = slurp(a / f), y = slurp(b / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, y) << f;
  }
}

TEST(ConvergenceDelta, SharedDataStartsAtZeroAndSelfDistanceVanishes) {
  const auto cfg = parse_config("[kernel]\ndeltas = 0.1 0.05\n[grid]\nt0_cap = 0.02\nsteps = 4\n");
  const auto r = run_convergence_delta(cfg);
  EXPECT_DOUBLE_EQ(r.pilot.T0, 0.02);  // C H0 is far below theta / 0.02
  EXPECT_EQ(r.steps, 4u);
  ASSERT_EQ(r.runs.size(), 3u);
  for (const auto& run : r.runs) {
    ASSERT_TRUE(run.failure.empty()) << run.failure;
    ASSERT_EQ(run.rows.size(), 5u);
    EXPECT_EQ(run.rows.front().distance, 0.0);
    EXPECT_NEAR(run.rows.back().t, 0.02, 1e-15);
    for (const auto& row : run.rows) EXPECT_LE(row.max_div, 1e-10);
  }
  for (const auto& row : r.runs[0].rows) EXPECT_EQ(row.distance, 0.0);
  EXPECT_GT(r.dist_T0[0], 0.0);
  EXPECT_GE(r.hs_ratio, 1.0);
  const auto rep = to_report(r, cfg);
  EXPECT_EQ(rep.tables.size(), 6u);  // pilot, distance, failures, three diagnostics
  EXPECT_EQ(rep.tables[3].columns, (std::vector<std::string>{"t", "l2", "hs", "energy", "max_div"}));
}

TEST(ConvergenceDelta, TooFewStepsRejectedBeforeTheSweep) {
  const auto cfg = parse_config("[kernel]\ndeltas = 0.1\n[grid]\nt0_cap = 0.02\nsteps = 2\n");
  EXPECT_THROW(run_convergence_delta(cfg), PreconditionError);
}

TEST(ConvergenceDelta, MollifiedInitialDataDiffersAtTimeZero) {
  const auto cfg = parse_config("[kernel]\ndeltas = 0.1\n[grid]\nt0_cap = 0.01\nsteps = 2\ninitial = mollified\n");
  const auto r = run_convergence_delta(cfg);
  EXPECT_GT(r.runs[1].rows.front().distance, 0.0);
}

TEST(ConvergenceDelta, PilotRuleGivesRiccatiFactor) {
  // With theta = 1/3, H0 / (1 - C H0 T0) = 1.5 H0 whenever T0 is not capped.
  const auto cfg = parse_config("[kernel]\ndeltas = 0.2\n[grid]\nt0_cap = 5\ntheta = 0.05\n");
  const auto grid = make_grid(GridSpec{cfg.grid.box_length, cfg.grid.n});
  const auto p = run_pilot(init_vortex_ring(grid, cfg.grid.target), SpectralBiotSavart(grid, 0.0), cfg.grid);
  ASSERT_GT(p.c_fit, 0.0);
  EXPECT_FALSE(p.capped_by_limit);
  EXPECT_NEAR(p.c_fit * p.h0 * p.T0, 0.05, 1e-12);
  EXPECT_GE(p.rows.back().t, p.T0);
}

TEST(MeanField, SelfReferenceHasZeroFirstColumnAndTriangleHolds) {
  const auto cfg = parse_config(
      "[scenario]\nseed = 2\n[filaments]\nn_list = 2 8\nn_ref = 8\nm = 16\n[target]\nradius = 1\ncore = 0.25\n"
      "[time]\nT = 0.02\ndt = 0.005\n[mean_field]\ndeltas = 0.025 0.02\nbox_length = 4\nn = 64\nsnapshots = 2\n"
      "[metric]\nmax_centers = 24\nrandom_centers = 4\ntrig_directions = 4\n");
  const auto r = run_mean_field(cfg);
  ASSERT_TRUE(r.failures.empty()) << r.failures.front();
  ASSERT_EQ(r.rows.size(), 6u);  // 2 N x 3 times
  EXPECT_EQ(r.constants.size(), 2u);
  for (const auto& e : r.schedule) {
    if (!e.admissible) {
      EXPECT_EQ(e.delta, 0.025);  // fallback: largest grid delta
    }
  }
  for (const auto& row : r.rows) {
    EXPECT_TRUE(row.triangle_holds);
    if (row.n == 8) {
      EXPECT_EQ(row.part1, 0.0);
      EXPECT_EQ(row.part1_bl, 0.0);
      EXPECT_EQ(row.total, row.part2);
    }
  }
  EXPECT_TRUE(r.triangle_all);
  EXPECT_NEAR(r.R, 2.0 * kPi, 0.02 * 2.0 * kPi);  // polygon and core offsets
}

TEST(Simulate, ConservationRowsAndFiles) {
  const auto dir = scratch("sim");
  auto cfg = parse_config(
      "[kernel]\ndelta = 0.4\n[filaments]\nn = 2\nm = 16\n[time]\nT = 0.1\ndt = 0.05\nrecord_every = 1\n"
      "[metric]\nmax_centers = 16\nrandom_centers = 2\ntrig_directions = 2\n");
  const auto r = run_simulate(cfg, dir.string());
  ASSERT_EQ(r.conservation.rows.size(), 3u);
  EXPECT_EQ(r.conservation.rows[0].l2_drift, 0.0);
  EXPECT_TRUE(fs::exists(dir / "trajectory.csv"));
  EXPECT_EQ(read_vfil((dir / "final.vfil").string()).size(), 2u);
  const auto rep = to_report(r, cfg);
  EXPECT_EQ(rep.tables[0].rows.size(), 3u);
}

}  // namespace
}  // namespace vfil
