#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vfil {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

// Error taxonomy. The CLI maps PreconditionError to exit code 2 and
// NumericalError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Time step above the stability limit; carries the admissible step.
class StepRejected : public PreconditionError {
 public:
  StepRejected(const std::string& what, double dt, double admissible)
      : PreconditionError(what + ": dt = " + std::to_string(dt) + " violates the CFL guard; admissible dt = " +
                          std::to_string(admissible)),
        admissible_dt_(admissible) {}
  double admissible_dt() const { return admissible_dt_; }

 private:
  double admissible_dt_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw PreconditionError(what);
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

// Number of worker threads used by the parallel loops. Results never depend
// on this value: every output slot is written by exactly one worker and all
// reductions run in index order on the calling thread.
inline unsigned& worker_count() {
  static unsigned n = 1;
  return n;
}

inline void set_worker_count(unsigned n) { worker_count() = std::max(1u, n); }

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Neumaier compensated accumulator for 3-vectors.
class CompensatedSum3 {
 public:
  void add(const Vec3& v) {
    for (int k = 0; k < 3; ++k) {
      const double t = sum_[k] + v[k];
      if (std::abs(sum_[k]) >= std::abs(v[k]))
        comp_[k] += (sum_[k] - t) + v[k];
      else
        comp_[k] += (v[k] - t) + sum_[k];
      sum_[k] = t;
    }
  }
  Vec3 value() const { return sum_ + comp_; }

 private:
  Vec3 sum_ = Vec3::Zero();
  Vec3 comp_ = Vec3::Zero();
};

class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Portable uniform double in [0, 1) from a 64-bit engine draw.
template <class Engine>
double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace vfil
