#pragma once

#include "vfil/core.hpp"
#include "vfil/kernel/kernel.hpp"

#include <span>
#include <vector>

namespace vfil {

// Flattened quadrature points of a set of closed weighted loops. Each point
// carries the trapezoidal element t_m = (g_{m+1} - g_{m-1}) / 2, which is the
// centered periodic difference of the tangent times the uniform weight 1/M.
// The induced field is
//   u(x) = sum_j alpha_j sum_m K^delta(x - g_jm) t_jm.
struct SourceSet {
  std::vector<double> x, y, z;     // node positions
  std::vector<double> tx, ty, tz;  // tangent elements
  std::vector<std::size_t> offsets{0};
  std::vector<double> alphas;

  std::size_t loop_count() const { return alphas.size(); }
  std::size_t size() const { return x.size(); }

  void add_loop(std::span<const Vec3> nodes, double alpha) {
    const std::size_t m = nodes.size();
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3& p = nodes[i];
      const Vec3 t = 0.5 * (nodes[(i + 1) % m] - nodes[(i + m - 1) % m]);
      x.push_back(p.x());
      y.push_back(p.y());
      z.push_back(p.z());
      tx.push_back(t.x());
      ty.push_back(t.y());
      tz.push_back(t.z());
    }
    offsets.push_back(x.size());
    alphas.push_back(alpha);
  }

  Vec3 node(std::size_t i) const { return Vec3(x[i], y[i], z[i]); }
  Vec3 element(std::size_t i) const { return Vec3(tx[i], ty[i], tz[i]); }
};

// Field of the sources at one point. Loops are visited in order; within a loop
// nodes are summed plainly and the per-loop totals are accumulated with
// compensation, so the result is independent of the worker count.
inline Vec3 induced_velocity(const SourceSet& src, const MollifiedKernel& kern, const Vec3& at) {
  CompensatedSum3 total;
  const double px = at.x(), py = at.y(), pz = at.z();
  for (std::size_t j = 0; j < src.loop_count(); ++j) {
    const double alpha = src.alphas[j];
    if (alpha == 0.0) continue;
    double ax = 0.0, ay = 0.0, az = 0.0;
    for (std::size_t i = src.offsets[j]; i < src.offsets[j + 1]; ++i) {
      const double dx = px - src.x[i];
      const double dy = py - src.y[i];
      const double dz = pz - src.z[i];
      const double r2 = dx * dx + dy * dy + dz * dz;
      if (r2 == 0.0) continue;
      const double f = kern.factor(r2);
      ax += f * (dy * src.tz[i] - dz * src.ty[i]);
      ay += f * (dz * src.tx[i] - dx * src.tz[i]);
      az += f * (dx * src.ty[i] - dy * src.tx[i]);
    }
    total.add(alpha * Vec3(ax, ay, az));
  }
  return total.value();
}

inline std::vector<Vec3> induced_velocities(const SourceSet& src, const MollifiedKernel& kern,
                                            std::span<const Vec3> targets) {
  std::vector<Vec3> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) { out[i] = induced_velocity(src, kern, targets[i]); });
  return out;
}

}  // namespace vfil
