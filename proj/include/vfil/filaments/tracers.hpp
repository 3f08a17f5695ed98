#pragma once

#include "vfil/core.hpp"
#include "vfil/filaments/filament.hpp"

#include <Eigen/SVD>

#include <array>
#include <vector>

namespace vfil {

// Base point and its six perturbations x +- eps e_k, stored as
// [x, x+e1, x-e1, x+e2, x-e2, x+e3, x-e3].
struct TracerCloud {
  Vec3 base_point = Vec3::Zero();
  double epsilon = 1e-4;
  std::array<Vec3, 7> points{};

  TracerCloud() = default;
  TracerCloud(const Vec3& x, double eps) : base_point(x), epsilon(eps) {
    require(eps > 0.0 && std::isfinite(eps), "tracer cloud: epsilon must be positive");
    require(all_finite(x), "tracer cloud: non-finite base point");
    points[0] = x;
    for (int k = 0; k < 3; ++k) {
      points[1 + 2 * k] = x + eps * Vec3::Unit(k);
      points[2 + 2 * k] = x - eps * Vec3::Unit(k);
    }
  }

  Mat3 jacobian() const {
    Mat3 j;
    for (int k = 0; k < 3; ++k) j.col(k) = (points[1 + 2 * k] - points[2 + 2 * k]) / (2.0 * epsilon);
    return j;
  }
};

inline double operator_norm(const Mat3& m) {
  return Eigen::JacobiSVD<Mat3>(m).singularValues()(0);
}

struct JacobianSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Mat3 jacobian = Mat3::Identity();
  double norm = 1.0;
};

struct TracerHistory {
  std::vector<JacobianSample> samples;
  FilamentEnsemble final_ensemble;
};

// Advects each cloud in the ensemble's own field with the filament stepper and
// records D phi(t) at every recorded step. `domain_guard` bounds how far a
// tracer may move from its start.
inline TracerHistory evolve_tracers(const FilamentEnsemble& ens, const TracerCloud& cloud, const SimulateOptions& opt,
                                    double domain_guard = 1e6) {
  require(cloud.epsilon <= ens.kernel.delta() / 100.0 * (1.0 + 1e-12),
          "evolve_tracers: epsilon must be at most delta / 100");
  require(opt.T > 0.0 && opt.dt > 0.0 && opt.record_every >= 1, "evolve_tracers: invalid time options");
  ens.validate();
  std::vector<Vec3> pts(cloud.points.begin(), cloud.points.end());
  TracerCloud cur = cloud;
  TracerHistory hist{{}, ens};
  auto record = [&](double t) {
    std::copy(pts.begin(), pts.end(), cur.points.begin());
    JacobianSample s;
    s.t = t;
    s.position = pts[0];
    s.jacobian = cur.jacobian();
    s.norm = operator_norm(s.jacobian);
    hist.samples.push_back(s);
  };
  record(ens.time);
  const auto steps = static_cast<std::size_t>(std::ceil(opt.T / opt.dt - 1e-9));
  const double t_end = ens.time + opt.T;
  FilamentEnsemble state = ens;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(opt.dt, t_end - state.time);
    state = step_rk4(state, h, &pts);
    if (s == steps) state.time = t_end;
    for (const auto& p : pts) {
      if (!all_finite(p) || (p - cloud.base_point).norm() > domain_guard)
        throw NumericalError("evolve_tracers: tracer left the domain guard at t = " + std::to_string(state.time));
    }
    if (s % opt.record_every == 0 || s == steps) record(state.time);
  }
  hist.final_ensemble = state;
  return hist;
}

// Flow map phi^t of the ensemble's field applied to arbitrary points, using the
// same stepping as the filaments.
inline std::vector<Vec3> advect_points(const FilamentEnsemble& ens, std::vector<Vec3> points, double T, double dt) {
  require(T > 0.0 && dt > 0.0, "advect_points: T and dt must be positive");
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double t_end = ens.time + T;
  FilamentEnsemble state = ens;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(dt, t_end - state.time);
    state = step_rk4(state, h, &points);
  }
  return points;
}

}  // namespace vfil
