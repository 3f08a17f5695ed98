#pragma once

#include "vfil/core.hpp"
#include "vfil/currents/metric.hpp"
#include "vfil/euler/solver.hpp"
#include "vfil/filaments/sampling.hpp"
#include "vfil/kernel/kernel.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace vfil {

struct KernelConfig {
  double gamma = -1.0;
  double k_max = 4.0;
  double delta = 0.2;
  std::vector<double> deltas;  // sweep for converge-delta / mean-field
};

struct FilamentConfig {
  std::size_t n = 4;
  std::vector<std::size_t> n_list;
  std::size_t n_ref = 0;  // 0 selects 4 max(n_list)
  std::size_t m = 64;
};

struct TimeConfig {
  double T = 1.0;
  double dt = 0.01;
  std::size_t record_every = 10;
};

// Grid study (converge-delta): delta = 0 plus the kernel sweep on one grid.
struct GridConfig {
  double box_length = 1.6;
  std::size_t n = 64;
  double s = 2.0;
  std::string initial = "shared";  // shared | mollified
  double theta = 1.0 / 3.0;        // T0 = theta / (C H0)
  double t0_cap = 1.0;
  std::size_t steps = 0;           // grid steps on [0, T0]; 0 picks the CFL count
  std::string face_tail_policy = "report";  // report | cap
  double face_tail_limit = 1e-6;
  VorticityTarget target{"ring", Vec3::Zero(), Vec3::UnitZ(), 0.4, 0.1, 1.0};
};

struct MeanFieldConfig {
  std::vector<double> deltas;          // admissibility grid, any order
  std::vector<double> tolerances;      // per N; empty selects 1 / log(N + e)
  double box_length = 8.0;
  std::size_t n = 128;
  double dt_grid = 0.0;                // 0 picks the CFL step
  std::size_t snapshots = 4;           // comparison times on (0, T]
};

struct ConservationConfig {
  double ee1_tolerance = 1e-4;
  bool l2_every_snapshot = false;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string source;  // raw text the config hash is taken over
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir = "out";
  KernelConfig kernel;
  FilamentConfig filaments;
  VorticityTarget target;
  TimeConfig time;
  GridConfig grid;
  MeanFieldConfig mean_field;
  ConservationConfig conservation;
  FieldGridSpec field_grid;
  DictionarySpec dictionary;

  std::size_t reference_n() const {
    if (filaments.n_ref > 0) return filaments.n_ref;
    std::size_t mx = filaments.n;
    for (auto n : filaments.n_list) mx = std::max(mx, n);
    return 4 * mx;
  }
  MollifiedKernel kernel_at(double delta) const;
};

namespace detail {

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    std::istringstream one(tok);
    T v{};
    one >> v;
    if (!one || !one.eof()) throw PreconditionError("config: bad list entry '" + tok + "' for " + key);
    out.push_back(v);
  }
  return out;
}

inline Vec3 parse_vec3(const std::string& text, const std::string& key) {
  const auto v = parse_list<double>(text, key);
  if (v.size() != 3) throw PreconditionError("config: " + key + " needs three numbers");
  return {v[0], v[1], v[2]};
}

class Reader {
 public:
  explicit Reader(const boost::property_tree::ptree& pt) : pt_(pt) {}

  template <class T>
  void get(const std::string& key, T& dst) const {
    const auto node = pt_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!node) return;
    std::istringstream in(*node);
    T v{};
    in >> v;
    if (!in || !(in >> std::ws).eof()) throw PreconditionError("config: cannot parse " + key + " = '" + *node + "'");
    dst = v;
  }
  void get(const std::string& key, std::string& dst) const {
    if (auto node = pt_.get_optional<std::string>(key)) dst = *node;
  }
  void get(const std::string& key, bool& dst) const {
    if (auto node = pt_.get_optional<std::string>(key)) {
      if (*node == "true" || *node == "1" || *node == "yes") dst = true;
      else if (*node == "false" || *node == "0" || *node == "no") dst = false;
      else throw PreconditionError("config: cannot parse " + key + " = '" + *node + "' as a flag");
    }
  }
  template <class T>
  void list(const std::string& key, std::vector<T>& dst) const {
    if (auto node = pt_.get_optional<std::string>(key)) dst = parse_list<T>(*node, key);
  }
  void vec(const std::string& key, Vec3& dst) const {
    if (auto node = pt_.get_optional<std::string>(key)) dst = parse_vec3(*node, key);
  }
  void check_known(const std::vector<std::string>& keys) const {
    for (const auto& [section, body] : pt_) {
      if (body.empty()) throw PreconditionError("config: key '" + section + "' outside a [section]");
      for (const auto& [k, v] : body) {
        const std::string full = section + "." + k;
        if (std::find(keys.begin(), keys.end(), full) == keys.end())
          throw PreconditionError("config: unknown key " + full);
      }
    }
  }

 private:
  const boost::property_tree::ptree& pt_;
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "scenario.name", "scenario.seed", "scenario.threads", "scenario.out_dir",
      "kernel.gamma", "kernel.k_max", "kernel.delta", "kernel.deltas",
      "filaments.n", "filaments.n_list", "filaments.n_ref", "filaments.m",
      "target.kind", "target.center", "target.axis", "target.radius", "target.core", "target.circulation",
      "time.T", "time.dt", "time.record_every",
      "grid.box_length", "grid.n", "grid.s", "grid.initial", "grid.theta", "grid.t0_cap", "grid.steps",
      "grid.face_tail_policy", "grid.face_tail_limit", "grid.radius", "grid.core", "grid.circulation",
      "metric.spacing", "metric.padding", "metric.max_centers", "metric.random_centers", "metric.widths",
      "metric.trig_directions", "metric.trig_wavenumbers", "metric.refine_top", "metric.refine_iterations",
      "mean_field.deltas", "mean_field.tolerances", "mean_field.box_length", "mean_field.n",
      "mean_field.dt_grid", "mean_field.snapshots",
      "conservation.ee1_tolerance", "conservation.l2_every_snapshot"};
  return keys;
}

}  // namespace detail

inline std::shared_ptr<const MassTable> shared_mass_table(double k_max) {
  static std::vector<std::pair<double, std::shared_ptr<const MassTable>>> cache;
  for (const auto& [k, t] : cache)
    if (k == k_max) return t;
  auto t = build_mass_table(build_mollifier(k_max));
  cache.emplace_back(k_max, t);
  return t;
}

inline MollifiedKernel ScenarioConfig::kernel_at(double delta) const {
  return MollifiedKernel(shared_mass_table(kernel.k_max), delta, BiotSavartParams{kernel.gamma});
}

// Checks that do not depend on which subcommand runs.
inline void validate_common(const ScenarioConfig& c) {
  BiotSavartParams{c.kernel.gamma}.validate();
  require(c.kernel.k_max > 0.0 && std::isfinite(c.kernel.k_max), "config: kernel.k_max must be positive");
  require(c.kernel.delta > 0.0, "config: kernel.delta must be positive");
  for (double d : c.kernel.deltas) require(d > 0.0, "config: kernel.deltas entries must be positive");
  require(c.filaments.n >= 1, "config: filaments.n must be at least 1");
  require(c.filaments.m >= 8, "config: filaments.m must be at least 8");
  for (auto n : c.filaments.n_list) require(n >= 1, "config: filaments.n_list entries must be positive");
  c.target.validate();
  require(c.time.T > 0.0 && std::isfinite(c.time.T), "config: time.T must be positive");
  require(c.time.dt > 0.0 && c.time.dt <= c.time.T, "config: time.dt must lie in (0, T]");
  require(c.time.record_every >= 1, "config: time.record_every must be at least 1");
  require(c.threads >= 1, "config: threads must be at least 1");
  require(!c.out_dir.empty(), "config: out_dir must not be empty");
  require(c.field_grid.spacing >= 0.0 && c.field_grid.padding >= 0.0, "config: metric spacing/padding negative");
  c.dictionary.validate();
  require(c.conservation.ee1_tolerance > 0.0, "config: conservation.ee1_tolerance must be positive");
}

inline ScenarioConfig parse_config(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw PreconditionError(std::string("config: ") + e.what());
  }
  const detail::Reader r(pt);
  r.check_known(detail::known_keys());
  ScenarioConfig c;
  c.source = text;
  r.get("scenario.name", c.name);
  r.get("scenario.seed", c.seed);
  r.get("scenario.threads", c.threads);
  r.get("scenario.out_dir", c.out_dir);
  r.get("kernel.gamma", c.kernel.gamma);
  r.get("kernel.k_max", c.kernel.k_max);
  r.get("kernel.delta", c.kernel.delta);
  r.list("kernel.deltas", c.kernel.deltas);
  r.get("filaments.n", c.filaments.n);
  r.list("filaments.n_list", c.filaments.n_list);
  r.get("filaments.n_ref", c.filaments.n_ref);
  r.get("filaments.m", c.filaments.m);
  r.get("target.kind", c.target.kind);
  r.vec("target.center", c.target.center);
  r.vec("target.axis", c.target.axis);
  r.get("target.radius", c.target.radius);
  r.get("target.core", c.target.core);
  r.get("target.circulation", c.target.circulation);
  r.get("time.T", c.time.T);
  r.get("time.dt", c.time.dt);
  r.get("time.record_every", c.time.record_every);
  r.get("grid.box_length", c.grid.box_length);
  r.get("grid.n", c.grid.n);
  r.get("grid.s", c.grid.s);
  r.get("grid.initial", c.grid.initial);
  r.get("grid.theta", c.grid.theta);
  r.get("grid.t0_cap", c.grid.t0_cap);
  r.get("grid.steps", c.grid.steps);
  r.get("grid.face_tail_policy", c.grid.face_tail_policy);
  r.get("grid.face_tail_limit", c.grid.face_tail_limit);
  r.get("grid.radius", c.grid.target.radius);
  r.get("grid.core", c.grid.target.core);
  r.get("grid.circulation", c.grid.target.circulation);
  r.get("metric.spacing", c.field_grid.spacing);
  r.get("metric.padding", c.field_grid.padding);
  r.get("metric.max_centers", c.dictionary.max_centers);
  r.get("metric.random_centers", c.dictionary.random_centers);
  r.list("metric.widths", c.dictionary.widths);
  r.get("metric.trig_directions", c.dictionary.trig_directions);
  r.list("metric.trig_wavenumbers", c.dictionary.trig_wavenumbers);
  r.get("metric.refine_top", c.dictionary.refine_top);
  r.get("metric.refine_iterations", c.dictionary.refine_iterations);
  r.list("mean_field.deltas", c.mean_field.deltas);
  r.list("mean_field.tolerances", c.mean_field.tolerances);
  r.get("mean_field.box_length", c.mean_field.box_length);
  r.get("mean_field.n", c.mean_field.n);
  r.get("mean_field.dt_grid", c.mean_field.dt_grid);
  r.get("mean_field.snapshots", c.mean_field.snapshots);
  r.get("conservation.ee1_tolerance", c.conservation.ee1_tolerance);
  r.get("conservation.l2_every_snapshot", c.conservation.l2_every_snapshot);
  validate_common(c);
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Per-subcommand eager validation; every check runs before any compute.
inline void validate_for_n(const ScenarioConfig& c) {
  require(!c.filaments.n_list.empty(), "config: filaments.n_list is required");
  require(std::is_sorted(c.filaments.n_list.begin(), c.filaments.n_list.end()) &&
              std::adjacent_find(c.filaments.n_list.begin(), c.filaments.n_list.end()) == c.filaments.n_list.end(),
          "config: filaments.n_list must be strictly ascending");
  // An entry equal to N_ref is a self-consistency run and is exempt.
  std::size_t mx = 0;
  for (auto n : c.filaments.n_list)
    if (n != c.reference_n()) mx = std::max(mx, n);
  require(c.reference_n() >= 4 * mx, "config: filaments.n_ref must be at least 4 max(n_list)");
}

inline void validate_for_delta(const ScenarioConfig& c) {
  require(!c.kernel.deltas.empty(), "config: kernel.deltas is required");
  const auto& g = c.grid;
  require(g.n >= 8 && g.n % 2 == 0, "config: grid.n must be even and at least 8");
  require(g.box_length > 0.0, "config: grid.box_length must be positive");
  require(g.s > 1.5, "config: grid.s must exceed 3/2");
  require(g.initial == "shared" || g.initial == "mollified", "config: grid.initial must be shared or mollified");
  require(g.theta > 0.0 && g.theta < 1.0, "config: grid.theta must lie in (0, 1)");
  require(g.t0_cap > 0.0, "config: grid.t0_cap must be positive");
  require(g.steps == 0 || g.steps % 2 == 0, "config: grid.steps must be even so T0 / 2 is a step");
  require(g.face_tail_policy == "report" || g.face_tail_policy == "cap",
          "config: grid.face_tail_policy must be report or cap");
  require(g.face_tail_limit > 0.0, "config: grid.face_tail_limit must be positive");
  const double h = g.box_length / static_cast<double>(g.n);
  const double dmin = *std::min_element(c.kernel.deltas.begin(), c.kernel.deltas.end());
  require(h <= 0.5 * dmin * (1.0 + 1e-12),
          "config: grid spacing " + std::to_string(h) + " does not resolve min delta (need h <= delta_min / 2)");
  validate_ring_on_grid(GridSpec{g.box_length, g.n}, g.target);
}

inline void validate_for_mean_field(const ScenarioConfig& c) {
  validate_for_n(c);
  const auto& mf = c.mean_field;
  require(!mf.deltas.empty(), "config: mean_field.deltas is required");
  for (double d : mf.deltas) require(d > 0.0, "config: mean_field.deltas entries must be positive");
  require(mf.tolerances.empty() || mf.tolerances.size() == c.filaments.n_list.size(),
          "config: mean_field.tolerances needs one entry per N");
  for (double t : mf.tolerances) require(t > 0.0, "config: mean_field.tolerances must be positive");
  require(mf.snapshots >= 1, "config: mean_field.snapshots must be at least 1");
  require(mf.dt_grid >= 0.0, "config: mean_field.dt_grid must be nonnegative");
  require(mf.n >= 8 && mf.n % 2 == 0, "config: mean_field.n must be even and at least 8");
  const GridSpec gs{mf.box_length, mf.n};
  validate_ring_on_grid(gs, c.target);
  // The deposit margin has to hold for the initial nodes at every delta on the grid.
  double reach = 0.0;
  std::vector<std::size_t> ns = c.filaments.n_list;
  ns.push_back(c.reference_n());
  for (auto n : ns)
    for (const auto& f : sample_flux_tubes(c.target, partition_flux(n), c.filaments.m, c.seed))
      for (const auto& p : f.nodes) reach = std::max(reach, p.cwiseAbs().maxCoeff());
  const double dmax = *std::max_element(mf.deltas.begin(), mf.deltas.end());
  require(0.5 * mf.box_length - reach >= 20.0 * dmax,
          "config: mean_field box too small for the 20 delta deposit margin at delta = " + std::to_string(dmax));
}

}  // namespace vfil
