#pragma once

#include "vfil/core.hpp"
#include "vfil/currents/current.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace vfil {

struct DictionarySpec {
  std::size_t max_centers = 96;      // bump centres drawn from the nodes of both currents
  std::size_t random_centers = 16;   // extra centres uniform in the padded bounding box
  std::vector<double> widths{0.02, 0.05, 0.1, 0.2, 0.4, 0.8};  // relative to the bounding-box diagonal
  std::size_t trig_directions = 12;
  std::vector<double> trig_wavenumbers{0.25, 0.5, 1.0, 2.0, 4.0};  // times 2 pi / diagonal
  std::size_t refine_top = 4;
  std::size_t refine_iterations = 40;

  void validate() const {
    require(!widths.empty() || trig_directions > 0, "dictionary: empty candidate set");
    for (double w : widths) require(w > 0.0, "dictionary: widths must be positive");
    for (double k : trig_wavenumbers) require(k > 0.0, "dictionary: wavenumbers must be positive");
  }
};

struct MetricEstimate {
  double lower = 0.0;
  double upper = 0.0;
  TestField witness;
  std::string lower_method = "dictionary";
  std::string upper_method = "matched";
};

namespace detail {

// Weighted sums over the difference current xi - xt, kept as separate
// accumulations so that xi == xt gives exactly zero.
struct DiffPairing {
  const CurrentPolyline& xi;
  const CurrentPolyline& xt;

  template <class Fn>  // fn(x, t) -> Vec3, summed over alpha-weighted elements
  Vec3 vector_sum(Fn&& fn) const {
    return one(xi, fn) - one(xt, fn);
  }

  template <class Fn>
  static Vec3 one(const CurrentPolyline& c, Fn& fn) {
    CompensatedSum3 acc;
    for (const auto& l : c.loops) {
      if (l.alpha == 0.0) continue;
      Vec3 s = Vec3::Zero();
      for (std::size_t m = 0; m < l.nodes.size(); ++m) s += fn(l.nodes[m], loop_element(l.nodes, m));
      acc.add(l.alpha * s);
    }
    return acc.value();
  }
};

inline double bump_factor(double width) { return 1.0 / (1.0 + std::sqrt(2.0 / std::exp(1.0)) / width); }

// Best admissible bump at (center, width): theta = c exp(-|x - x0|^2 / w^2) with
// |c| (1 + sqrt(2/e) / w) = 1 gives pair = |V| * factor for c parallel to V.
inline double bump_value(const DiffPairing& dp, const Vec3& center, double width, Vec3* direction = nullptr) {
  const double inv = 1.0 / (width * width);
  const Vec3 v = dp.vector_sum([&](const Vec3& x, const Vec3& t) -> Vec3 {
    return std::exp(-(x - center).squaredNorm() * inv) * t;
  });
  if (direction) *direction = v;
  return v.norm() * bump_factor(width);
}

// Best admissible c cos(k.x + phi) for fixed k: with S = sum cos(k.x) t and
// C = sum sin(k.x) t the pairing is c . (cos phi S - sin phi C), maximised by
// the top singular pair of [S, -C].
inline double trig_value(const DiffPairing& dp, const Vec3& k, Vec3* direction = nullptr, double* phase = nullptr) {
  const Vec3 s = dp.vector_sum([&](const Vec3& x, const Vec3& t) -> Vec3 { return std::cos(k.dot(x)) * t; });
  const Vec3 c = dp.vector_sum([&](const Vec3& x, const Vec3& t) -> Vec3 { return std::sin(k.dot(x)) * t; });
  Eigen::Matrix2d g;
  g << s.dot(s), -s.dot(c), -s.dot(c), c.dot(c);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(g);
  const double lmax = std::max(0.0, eig.eigenvalues()(1));
  const Eigen::Vector2d e = eig.eigenvectors().col(1);
  if (direction) *direction = e(0) * s - e(1) * c;
  if (phase) *phase = std::atan2(e(1), e(0));
  return std::sqrt(lmax) / (1.0 + k.norm());
}

inline std::pair<Vec3, Vec3> joint_bounds(const CurrentPolyline& a, const CurrentPolyline& b) {
  auto [lo, hi] = a.bounds();
  auto [lo2, hi2] = b.bounds();
  return {lo.cwiseMin(lo2), hi.cwiseMax(hi2)};
}

}  // namespace detail

// Certified lower bound for the BL dual norm of xi - xt: the best pairing over a
// seeded dictionary of admissible fields followed by coordinate ascent on the
// best bumps. The returned value is recomputed by `pair` on the witness.
inline MetricEstimate bl_metric_lower(const CurrentPolyline& xi, const CurrentPolyline& xt,
                                      const DictionarySpec& spec = {}, std::uint64_t seed = 0) {
  spec.validate();
  MetricEstimate est;
  est.upper = mass_norm_upper(xi) + mass_norm_upper(xt);
  est.upper_method = "mass";
  if (xi.node_count() + xt.node_count() == 0) return est;
  const detail::DiffPairing dp{xi, xt};
  const auto [lo, hi] = detail::joint_bounds(xi, xt);
  const double diag = std::max((hi - lo).norm(), 1e-12);

  std::mt19937_64 rng(seed);
  std::vector<Vec3> all;
  for (const auto* c : {&xi, &xt})
    for (const auto& l : c->loops) all.insert(all.end(), l.nodes.begin(), l.nodes.end());
  std::vector<Vec3> centers;
  if (all.size() <= spec.max_centers) {
    centers = all;
  } else {
    for (std::size_t i = 0; i < spec.max_centers; ++i) centers.push_back(all[rng() % all.size()]);
  }
  for (std::size_t i = 0; i < spec.random_centers; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = lo[k] - 0.1 * diag + uniform01(rng) * (hi[k] - lo[k] + 0.2 * diag);
    centers.push_back(p);
  }
  struct Candidate {
    bool bump;
    Vec3 center_or_k;
    double width;
  };
  std::vector<Candidate> cands;
  for (const auto& c : centers)
    for (double w : spec.widths) cands.push_back({true, c, w * diag});
  std::normal_distribution<double> gauss;
  for (std::size_t d = 0; d < spec.trig_directions; ++d) {
    Vec3 u(gauss(rng), gauss(rng), gauss(rng));
    u.normalize();
    for (double kw : spec.trig_wavenumbers) cands.push_back({false, u * (2.0 * kPi * kw / diag), 0.0});
  }

  std::vector<double> values(cands.size());
  parallel_for(cands.size(), [&](std::size_t i) {
    const auto& c = cands[i];
    values[i] = c.bump ? detail::bump_value(dp, c.center_or_k, c.width) : detail::trig_value(dp, c.center_or_k);
  });

  // Coordinate ascent on the top bumps (ties broken by index).
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::size_t refined = 0;
  for (std::size_t oi = 0; oi < order.size() && refined < spec.refine_top; ++oi) {
    const std::size_t i = order[oi];
    if (!cands[i].bump) continue;
    ++refined;
    Vec3 center = cands[i].center_or_k;
    double width = cands[i].width;
    double best = values[i];
    double step = 0.25 * width;
    for (std::size_t it = 0; it < spec.refine_iterations; ++it) {
      bool improved = false;
      for (int k = 0; k < 3; ++k)
        for (double sgn : {1.0, -1.0}) {
          const Vec3 trial = center + sgn * step * Vec3::Unit(k);
          const double v = detail::bump_value(dp, trial, width);
          if (v > best) {
            best = v;
            center = trial;
            improved = true;
          }
        }
      for (double f : {1.25, 0.8}) {
        const double v = detail::bump_value(dp, center, width * f);
        if (v > best) {
          best = v;
          width *= f;
          improved = true;
        }
      }
      if (!improved) step *= 0.5;
    }
    if (best > values[i]) {
      cands.push_back({true, center, width});
      values.push_back(best);
    }
  }

  std::size_t arg = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[arg]) arg = i;

  TestField w;
  const auto& c = cands[arg];
  if (c.bump) {
    Vec3 dir;
    detail::bump_value(dp, c.center_or_k, c.width, &dir);
    w = TestField::bump(dir.norm() > 0.0 ? Vec3(dir.normalized()) : Vec3::UnitX(), c.center_or_k, c.width);
  } else {
    Vec3 dir;
    double phase = 0.0;
    detail::trig_value(dp, c.center_or_k, &dir, &phase);
    w = TestField::trig(dir.norm() > 0.0 ? Vec3(dir.normalized()) : Vec3::UnitX(), c.center_or_k, phase);
  }
  est.witness = w.normalized();
  est.lower = std::max(0.0, pair(xi, est.witness) - pair(xt, est.witness));
  est.lower_method = std::string("dictionary:") + to_string(est.witness.kind);
  return est;
}

namespace detail {

inline double matched_loop_bound(std::span<const Vec3> a, std::span<const Vec3> b) {
  CompensatedSum acc;
  for (std::size_t m = 0; m < a.size(); ++m) {
    const Vec3 ta = loop_element(a, m);
    const Vec3 tb = loop_element(b, m);
    acc.add((a[m] - b[m]).norm() * ta.norm() + (ta - tb).norm());
  }
  return acc.value();
}

}  // namespace detail

inline bool matched_shape(const CurrentPolyline& xi, const CurrentPolyline& xt) {
  if (xi.loops.size() != xt.loops.size()) return false;
  for (std::size_t j = 0; j < xi.loops.size(); ++j)
    if (xi.loops[j].nodes.size() != xt.loops[j].nodes.size()) return false;
  return true;
}

// Upper bound from the node correspondence of matched loops:
//   sum_j |alpha_j| sum_m (|g - g~| |t| + |t - t~|).
// Unmatched shapes fall back to the mass bound.
inline MetricEstimate bl_metric_upper(const CurrentPolyline& xi, const CurrentPolyline& xt) {
  MetricEstimate est;
  if (!matched_shape(xi, xt)) {
    est.upper = mass_norm_upper(xi) + mass_norm_upper(xt);
    est.upper_method = "unmatched";
    return est;
  }
  CompensatedSum acc;
  for (std::size_t j = 0; j < xi.loops.size(); ++j) {
    const double a = xi.loops[j].alpha, b = xt.loops[j].alpha;
    if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
      throw PreconditionError("bl_metric_upper: invalid matching, loop " + std::to_string(j) + " weights differ");
    acc.add(std::abs(a) * detail::matched_loop_bound(xi.loops[j].nodes, xt.loops[j].nodes));
  }
  est.upper = acc.value();
  est.upper_method = "matched";
  return est;
}

// Transport plan between loops: xi - xt = sum_ij w_ij (loop_i - loop~_j) when the
// plan's marginals are the two weight vectors.
struct CouplingEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 0.0;
};

inline MetricEstimate bl_metric_upper_coupled(const CurrentPolyline& xi, const CurrentPolyline& xt,
                                              const std::vector<CouplingEntry>& plan) {
  std::vector<double> row(xi.loops.size(), 0.0), col(xt.loops.size(), 0.0);
  for (const auto& e : plan) {
    require(e.i < row.size() && e.j < col.size(), "coupled bound: plan index out of range");
    require(xi.loops[e.i].nodes.size() == xt.loops[e.j].nodes.size(),
            "coupled bound: coupled loops need equal node counts");
    row[e.i] += e.weight;
    col[e.j] += e.weight;
  }
  auto check = [](const std::vector<double>& got, const CurrentPolyline& c) {
    for (std::size_t k = 0; k < got.size(); ++k) {
      const double want = c.loops[k].alpha;
      if (std::abs(got[k] - want) > 1e-10 * std::max(1.0, std::abs(want)))
        throw PreconditionError("coupled bound: plan marginal does not match loop weight " + std::to_string(k));
    }
  };
  check(row, xi);
  check(col, xt);
  CompensatedSum acc;
  for (const auto& e : plan)
    acc.add(std::abs(e.weight) * detail::matched_loop_bound(xi.loops[e.i].nodes, xt.loops[e.j].nodes));
  MetricEstimate est;
  est.upper = acc.value();
  est.upper_method = "coupled";
  return est;
}

// Lower and upper bounds together; the upper bound uses the matching when the
// shapes allow it.
inline MetricEstimate bl_metric(const CurrentPolyline& xi, const CurrentPolyline& xt, const DictionarySpec& spec = {},
                                std::uint64_t seed = 0) {
  MetricEstimate est = bl_metric_lower(xi, xt, spec, seed);
  const MetricEstimate up = bl_metric_upper(xi, xt);
  est.upper = up.upper;
  est.upper_method = up.upper_method;
  return est;
}

struct FieldGridSpec {
  double spacing = 0.0;  // 0 selects delta / 4
  double padding = 0.0;  // 0 selects 20 delta

  FieldGridSpec resolved(double delta) const {
    return {spacing > 0.0 ? spacing : 0.25 * delta, padding > 0.0 ? padding : 20.0 * delta};
  }
};

struct FieldNormReport {
  double l2 = 0.0;       // (h^3 sum |u|^2)^{1/2} over the box
  double tail_sq = 0.0;  // estimate of the squared norm outside the box
  double sup = 0.0;      // max |u| over the grid nodes
  std::array<std::size_t, 3> cells{0, 0, 0};
  double spacing = 0.0;
};

namespace detail {

// h^3 sum and max of |u|^2 over lo + h * (i, j, k); slabs in k are reduced in order.
inline std::pair<double, double> grid_sums(const SourceSet& src, const MollifiedKernel& kern, const Vec3& lo,
                                           double h, const std::array<std::size_t, 3>& n, double* face_c2 = nullptr,
                                           const Vec3* center = nullptr) {
  std::vector<double> slab_sum(n[2], 0.0), slab_max(n[2], 0.0), slab_face(n[2], 0.0);
  parallel_for(n[2], [&](std::size_t k) {
    CompensatedSum acc;
    double mx = 0.0, face = 0.0;
    for (std::size_t j = 0; j < n[1]; ++j)
      for (std::size_t i = 0; i < n[0]; ++i) {
        const Vec3 x = lo + h * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
        const double u2 = induced_velocity(src, kern, x).squaredNorm();
        acc.add(u2);
        mx = std::max(mx, u2);
        const bool on_face = i == 0 || j == 0 || k == 0 || i + 1 == n[0] || j + 1 == n[1] || k + 1 == n[2];
        if (face_c2 && on_face) {
          const double r2 = (x - *center).squaredNorm();
          face = std::max(face, u2 * r2 * r2 * r2);
        }
      }
    slab_sum[k] = acc.value();
    slab_max[k] = mx;
    slab_face[k] = face;
  });
  CompensatedSum total;
  double mx = 0.0, face = 0.0;
  for (std::size_t k = 0; k < n[2]; ++k) {
    total.add(slab_sum[k]);
    mx = std::max(mx, slab_max[k]);
    face = std::max(face, slab_face[k]);
  }
  if (face_c2) *face_c2 = face;
  return {total.value() * h * h * h, std::sqrt(mx)};
}

inline std::array<std::size_t, 3> grid_counts(const Vec3& lo, const Vec3& hi, double h) {
  std::array<std::size_t, 3> n{};
  for (int k = 0; k < 3; ++k) n[k] = static_cast<std::size_t>(std::ceil((hi[k] - lo[k]) / h)) + 1;
  return n;
}

}  // namespace detail

// L2 norm of K^delta * xi by direct summation on a box that follows the
// current's bounding box. The far field decays like |x|^-3, so the tail is
// estimated as 4 pi C^2 / (3 r_in^3) with C^2 = max over the faces of |u|^2 r^6
// and r_in the distance from the box centre to the nearest face.
inline FieldNormReport l2_field_norm(const CurrentPolyline& xi, const MollifiedKernel& kern,
                                     const FieldGridSpec& grid = {}) {
  const FieldGridSpec g = grid.resolved(kern.delta());
  const double delta = kern.delta();
  if (g.spacing > 0.25 * delta * (1.0 + 1e-12) || g.padding < 20.0 * delta * (1.0 - 1e-12))
    throw PreconditionError("l2_field_norm: grid too coarse or too small; use spacing <= " +
                            std::to_string(0.25 * delta) + " and padding >= " + std::to_string(20.0 * delta));
  FieldNormReport rep;
  rep.spacing = g.spacing;
  if (xi.node_count() == 0) return rep;
  xi.validate();
  const auto [blo, bhi] = xi.bounds();
  const Vec3 lo = blo - Vec3::Constant(g.padding);
  const Vec3 hi = bhi + Vec3::Constant(g.padding);
  rep.cells = detail::grid_counts(lo, hi, g.spacing);
  const Vec3 center = 0.5 * (blo + bhi);
  double c2 = 0.0;
  const auto [sum, sup] = detail::grid_sums(xi.sources(), kern, lo, g.spacing, rep.cells, &c2, &center);
  rep.l2 = std::sqrt(sum);
  rep.sup = sup;
  double r_in = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k)
    r_in = std::min({r_in, center[k] - lo[k], lo[k] + g.spacing * static_cast<double>(rep.cells[k] - 1) - center[k]});
  rep.tail_sq = 4.0 * kPi * c2 / (3.0 * r_in * r_in * r_in);
  return rep;
}

// max |K^delta * xi| over a grid of spacing h around the bounding box padded by `padding`.
inline double sampled_sup_field(const CurrentPolyline& xi, const MollifiedKernel& kern, double spacing = 0.0,
                                double padding = 0.0) {
  if (xi.node_count() == 0) return 0.0;
  const double h = spacing > 0.0 ? spacing : 0.25 * kern.delta();
  const double pad = padding > 0.0 ? padding : 3.0 * kern.delta();
  const auto [blo, bhi] = xi.bounds();
  const Vec3 lo = blo - Vec3::Constant(pad);
  const auto n = detail::grid_counts(lo, bhi + Vec3::Constant(pad), h);
  return detail::grid_sums(xi.sources(), kern, lo, h, n).second;
}

struct ConservationRow {
  double t = 0.0;
  double l2 = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  double l2_drift = std::numeric_limits<double>::quiet_NaN();
  double sup = 0.0;
  double ee2_margin = 0.0;  // initial L2 - sup
  double bl_lower = 0.0;
  double ee3_bound = 0.0;   // |xi_0|_M exp(t * initial L2)
  double ee3_margin = 0.0;
  bool ee1_pass = true;
  bool ee2_pass = true;
  bool ee3_pass = true;
};

struct ConservationOptions {
  FieldGridSpec grid{};
  double ee1_tolerance = 1e-4;
  bool l2_every_snapshot = false;  // otherwise first and last only
  DictionarySpec dictionary{};
  std::uint64_t seed = 0;
};

struct ConservationReport {
  std::vector<ConservationRow> rows;
  double initial_l2 = 0.0;
  double initial_mass = 0.0;
  bool all_pass() const {
    for (const auto& r : rows)
      if (!r.ee1_pass || !r.ee2_pass || !r.ee3_pass) return false;
    return true;
  }
};

inline ConservationReport conservation_report(const std::vector<double>& times,
                                              const std::vector<CurrentPolyline>& snapshots,
                                              const MollifiedKernel& kern, const ConservationOptions& opt = {}) {
  require(times.size() == snapshots.size() && !snapshots.empty(), "conservation_report: need matching snapshots");
  ConservationReport rep;
  rep.initial_l2 = l2_field_norm(snapshots.front(), kern, opt.grid).l2;
  rep.initial_mass = mass_norm_upper(snapshots.front());
  const CurrentPolyline zero;
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    ConservationRow row;
    row.t = times[s];
    const double t = times[s] - times.front();
    if (s == 0) {
      row.l2 = rep.initial_l2;
      row.l2_drift = 0.0;
    } else if (opt.l2_every_snapshot || s + 1 == snapshots.size()) {
      row.l2 = l2_field_norm(snapshots[s], kern, opt.grid).l2;
      row.l2_drift = std::abs(row.l2 - rep.initial_l2) / rep.initial_l2;
      row.ee1_pass = row.l2_drift <= opt.ee1_tolerance;
    }
    row.sup = sampled_sup_field(snapshots[s], kern);
    row.ee2_margin = rep.initial_l2 - row.sup;
    row.ee2_pass = row.ee2_margin > 0.0;
    row.bl_lower = bl_metric_lower(snapshots[s], zero, opt.dictionary, opt.seed).lower;
    row.ee3_bound = rep.initial_mass * std::exp(t * rep.initial_l2);
    row.ee3_margin = row.ee3_bound - row.bl_lower;
    row.ee3_pass = row.ee3_margin > 0.0;
    rep.rows.push_back(row);
  }
  return rep;
}

struct MetricRow {
  double t = 0.0;
  MetricEstimate estimate;
};

inline void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << "t,lower,upper,witness_kind\n";
  for (const auto& r : rows)
    out << r.t << ',' << r.estimate.lower << ',' << r.estimate.upper << ',' << to_string(r.estimate.witness.kind)
        << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace vfil
