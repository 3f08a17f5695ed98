#pragma once

#include "vfil/filaments/filament.hpp"
#include "vfil/kernel/kernel.hpp"
#include "vfil/kernel/mollifier.hpp"

#include <map>
#include <memory>
#include <random>
#include <vector>

namespace vfil::testing {

inline std::shared_ptr<const MassTable> table(double k_max = 4.0) {
  static std::map<double, std::shared_ptr<const MassTable>> cache;
  auto& slot = cache[k_max];
  if (!slot) slot = build_mass_table(build_mollifier(k_max));
  return slot;
}

inline MollifiedKernel kernel(double delta, double gamma = -1.0) {
  return MollifiedKernel(table(), delta, BiotSavartParams{gamma});
}

// Circle of radius r in the plane z = z0 around (cx, cy), counter-clockwise.
inline std::vector<Vec3> circle(double r, std::size_t m, const Vec3& center = Vec3::Zero(), double phase = 0.0) {
  std::vector<Vec3> pts(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(m) + phase;
    pts[i] = center + Vec3(r * std::cos(t), r * std::sin(t), 0.0);
  }
  return pts;
}

inline Filament ring(double r, std::size_t m, double alpha = 1.0, std::uint64_t id = 0,
                     const Vec3& center = Vec3::Zero()) {
  return Filament{circle(r, m, center), alpha, id};
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

inline double max_node_distance(const FilamentEnsemble& a, const FilamentEnsemble& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.filaments.size(); ++j)
    for (std::size_t m = 0; m < a.filaments[j].size(); ++m)
      d = std::max(d, (a.filaments[j].nodes[m] - b.filaments[j].nodes[m]).norm());
  return d;
}

}  // namespace vfil::testing
