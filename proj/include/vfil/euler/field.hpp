#pragma once

#include "vfil/core.hpp"

#include <fftw3.h>

#include <array>
#include <bit>
#include <complex>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace vfil {

using cplx = std::complex<double>;

template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  FftwAllocator(const FftwAllocator<U>&) {}
  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { fftw_free(p); }
  template <class U>
  bool operator==(const FftwAllocator<U>&) const { return true; }
};

using CBuffer = std::vector<cplx, FftwAllocator<cplx>>;
using RBuffer = std::vector<double, FftwAllocator<double>>;

struct GridSpec {
  double box_length = 1.6;
  std::size_t n = 64;

  void validate() const {
    require(box_length > 0.0 && std::isfinite(box_length), "grid: box length must be positive");
    require(n >= 8 && n % 2 == 0 && n <= 512, "grid: resolution must be even and in [8, 512]");
  }
  double spacing() const { return box_length / static_cast<double>(n); }
  bool operator==(const GridSpec&) const = default;
};

// Cube [-L/2, L/2)^3 sampled at x_j = -L/2 + j h. Coefficients are Fourier
// series coefficients in the shifted coordinate y = x + L/2, stored as the
// r2c half spectrum (n x n x (n/2+1), row-major).
class SpectralGrid {
 public:
  explicit SpectralGrid(GridSpec spec) : spec_(spec) {
    spec_.validate();
    n_ = spec_.n;
    nz_ = n_ / 2 + 1;
    cut_ = static_cast<int>(n_ / 3);
    k0_ = 2.0 * kPi / spec_.box_length;
    wave_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i)
      wave_[i] = i < n_ / 2 ? static_cast<int>(i) : static_cast<int>(i) - static_cast<int>(n_);
    RBuffer r(points());
    CBuffer c(modes());
    const int ni = static_cast<int>(n_);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c_3d(ni, ni, ni, r.data(), reinterpret_cast<fftw_complex*>(c.data()), FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_3d(ni, ni, ni, reinterpret_cast<fftw_complex*>(c.data()), r.data(), FFTW_ESTIMATE);
    if (!fwd_ || !inv_) throw NumericalError("FFTW planning failed");
  }
  ~SpectralGrid() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  SpectralGrid(const SpectralGrid&) = delete;
  SpectralGrid& operator=(const SpectralGrid&) = delete;

  const GridSpec& spec() const { return spec_; }
  std::size_t n() const { return n_; }
  std::size_t nz() const { return nz_; }
  std::size_t modes() const { return n_ * n_ * nz_; }
  std::size_t points() const { return n_ * n_ * n_; }
  double box_length() const { return spec_.box_length; }
  double spacing() const { return spec_.spacing(); }
  double volume() const { return spec_.box_length * spec_.box_length * spec_.box_length; }
  double k0() const { return k0_; }
  int cutoff() const { return cut_; }

  // Integer wavenumber of an x/y index; z indices are their own wavenumber.
  int wave(std::size_t i) const { return wave_[i]; }
  std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const { return (ix * n_ + iy) * nz_ + iz; }
  bool retained(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return std::abs(wave_[ix]) <= cut_ && std::abs(wave_[iy]) <= cut_ && static_cast<int>(iz) <= cut_;
  }
  Vec3 k(std::size_t ix, std::size_t iy, std::size_t iz) const {
    return k0_ * Vec3(wave_[ix], wave_[iy], static_cast<double>(iz));
  }
  int m2(std::size_t ix, std::size_t iy, std::size_t iz) const {
    const int a = wave_[ix], b = wave_[iy], c = static_cast<int>(iz);
    return a * a + b * b + c * c;
  }
  // Multiplicity of a half-spectrum mode in full-spectrum sums.
  double weight(std::size_t iz) const { return iz == 0 || iz == n_ / 2 ? 1.0 : 2.0; }

  // Physical samples -> series coefficients.
  void forward(const RBuffer& in, CBuffer& out) const {
    out.resize(modes());
    fftw_execute_dft_r2c(fwd_, const_cast<double*>(in.data()), reinterpret_cast<fftw_complex*>(out.data()));
    const double s = 1.0 / static_cast<double>(points());
    for (auto& c : out) c *= s;
  }
  // Series coefficients -> physical samples (input untouched).
  void inverse(const CBuffer& in, RBuffer& out) const {
    CBuffer tmp(in);
    out.resize(points());
    fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(tmp.data()), out.data());
  }

  Vec3 point(std::size_t i, std::size_t j, std::size_t l) const {
    const double h = spacing(), half = 0.5 * spec_.box_length;
    return Vec3(static_cast<double>(i) * h - half, static_cast<double>(j) * h - half,
                static_cast<double>(l) * h - half);
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  GridSpec spec_;
  std::size_t n_ = 0, nz_ = 0;
  int cut_ = 0;
  double k0_ = 0.0;
  std::vector<int> wave_;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline std::shared_ptr<const SpectralGrid> make_grid(const GridSpec& spec) {
  return std::make_shared<const SpectralGrid>(spec);
}

struct PeriodicVorticityField {
  std::shared_ptr<const SpectralGrid> grid;
  std::array<CBuffer, 3> hat;
  double t = 0.0;

  explicit PeriodicVorticityField(std::shared_ptr<const SpectralGrid> g, double time = 0.0)
      : grid(std::move(g)), t(time) {
    require(grid != nullptr, "field: null grid");
    for (auto& c : hat) c.assign(grid->modes(), cplx(0.0, 0.0));
  }

  std::array<RBuffer, 3> physical() const {
    std::array<RBuffer, 3> out;
    for (int c = 0; c < 3; ++c) grid->inverse(hat[c], out[c]);
    return out;
  }
};

using ModeArrays = std::array<CBuffer, 3>;

namespace spectral_detail {

// fn(ix, iy, iz, idx) over every stored mode, slabs in parallel.
template <class Fn>
void for_modes(const SpectralGrid& g, Fn&& fn) {
  const std::size_t n = g.n(), nz = g.nz();
  parallel_for(n, [&](std::size_t ix) {
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < nz; ++iz) fn(ix, iy, iz, g.index(ix, iy, iz));
  });
}

// Ordered reduction of a per-mode quantity over slabs.
template <class Fn>
double sum_modes(const SpectralGrid& g, Fn&& fn) {
  const std::size_t n = g.n(), nz = g.nz();
  std::vector<double> partial(n, 0.0);
  parallel_for(n, [&](std::size_t ix) {
    CompensatedSum acc;
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < nz; ++iz) acc.add(g.weight(iz) * fn(ix, iy, iz, g.index(ix, iy, iz)));
    partial[ix] = acc.value();
  });
  CompensatedSum total;
  for (double p : partial) total.add(p);
  return total.value();
}

inline void require_same_grid(const PeriodicVorticityField& a, const PeriodicVorticityField& b) {
  if (!(a.grid->spec() == b.grid->spec())) throw PreconditionError("field comparison: grid mismatch");
}

}  // namespace spectral_detail

// Zero the 2/3-rule modes and the mean, project onto k . xi = 0. Returns
// the L2 norm of what the projection removed.
inline double dealias_and_project(const SpectralGrid& g, ModeArrays& a) {
  std::vector<double> removed(g.n(), 0.0);
  const std::size_t n = g.n(), nz = g.nz();
  parallel_for(n, [&](std::size_t ix) {
    double acc = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const std::size_t idx = g.index(ix, iy, iz);
        if (!g.retained(ix, iy, iz) || (ix == 0 && iy == 0 && iz == 0)) {
          for (int c = 0; c < 3; ++c) a[c][idx] = 0.0;
          continue;
        }
        const Vec3 k = g.k(ix, iy, iz);
        const cplx kd = k.x() * a[0][idx] + k.y() * a[1][idx] + k.z() * a[2][idx];
        const cplx f = kd / k.squaredNorm();
        for (int c = 0; c < 3; ++c) {
          const cplx d = f * k[c];
          a[c][idx] -= d;
          acc += g.weight(iz) * std::norm(d);
        }
      }
    removed[ix] = acc;
  });
  double total = 0.0;
  for (double r : removed) total += r;
  return std::sqrt(g.volume() * total);
}

inline double l2_norm(const PeriodicVorticityField& f) {
  const auto& h = f.hat;
  return std::sqrt(f.grid->volume() * spectral_detail::sum_modes(*f.grid, [&](auto, auto, auto, std::size_t i) {
                     return std::norm(h[0][i]) + std::norm(h[1][i]) + std::norm(h[2][i]);
                   }));
}

inline double l2_norm(const SpectralGrid& g, const ModeArrays& h) {
  return std::sqrt(g.volume() * spectral_detail::sum_modes(g, [&](auto, auto, auto, std::size_t i) {
                     return std::norm(h[0][i]) + std::norm(h[1][i]) + std::norm(h[2][i]);
                   }));
}

// Parseval: ||a - b||_{L^2} over the box.
inline double l2_distance(const PeriodicVorticityField& a, const PeriodicVorticityField& b) {
  spectral_detail::require_same_grid(a, b);
  const auto& x = a.hat;
  const auto& y = b.hat;
  return std::sqrt(a.grid->volume() * spectral_detail::sum_modes(*a.grid, [&](auto, auto, auto, std::size_t i) {
                     return std::norm(x[0][i] - y[0][i]) + std::norm(x[1][i] - y[1][i]) + std::norm(x[2][i] - y[2][i]);
                   }));
}

// (sum (1 + |k|^2)^s |xi_k|^2)^{1/2} with the box-normalized coefficients, so
// s = 0 is the L2 norm.
inline double hs_norm(const PeriodicVorticityField& f, double s) {
  require(s >= 0.0 && std::isfinite(s), "hs_norm: s must be nonnegative");
  const auto& g = *f.grid;
  const auto& h = f.hat;
  const double k02 = g.k0() * g.k0();
  return std::sqrt(g.volume() * spectral_detail::sum_modes(g, [&](auto ix, auto iy, auto iz, std::size_t i) {
                     const double e = std::norm(h[0][i]) + std::norm(h[1][i]) + std::norm(h[2][i]);
                     if (e == 0.0) return 0.0;
                     return std::pow(1.0 + k02 * g.m2(ix, iy, iz), s) * e;
                   }));
}

// max |k . xi_k| / max |k| |xi_k|: scale-free spectral divergence.
inline double max_divergence(const PeriodicVorticityField& f) {
  const auto& g = *f.grid;
  std::vector<double> num(g.n(), 0.0), den(g.n(), 0.0);
  const std::size_t n = g.n(), nz = g.nz();
  parallel_for(n, [&](std::size_t ix) {
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const std::size_t i = g.index(ix, iy, iz);
        const Vec3 k = g.k(ix, iy, iz);
        const cplx kd = k.x() * f.hat[0][i] + k.y() * f.hat[1][i] + k.z() * f.hat[2][i];
        const double mag =
            k.norm() * std::sqrt(std::norm(f.hat[0][i]) + std::norm(f.hat[1][i]) + std::norm(f.hat[2][i]));
        num[ix] = std::max(num[ix], std::abs(kd));
        den[ix] = std::max(den[ix], mag);
      }
  });
  const double a = *std::max_element(num.begin(), num.end());
  const double b = *std::max_element(den.begin(), den.end());
  return b > 0.0 ? a / b : 0.0;
}

// max |xi| on the face planes relative to max |xi| in the box.
inline double face_tail_ratio(const PeriodicVorticityField& f) {
  const auto v = f.physical();
  const std::size_t n = f.grid->n();
  double inner = 0.0, face = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) {
        const std::size_t p = (i * n + j) * n + l;
        const double m = std::sqrt(v[0][p] * v[0][p] + v[1][p] * v[1][p] + v[2][p] * v[2][p]);
        inner = std::max(inner, m);
        if (i == 0 || j == 0 || l == 0) face = std::max(face, m);
      }
  return inner > 0.0 ? face / inner : 0.0;
}

inline constexpr std::uint32_t kVfldVersion = 1;

namespace vfld_detail {

template <class T>
void put(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated file: " + path);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

}  // namespace vfld_detail

// "VFLD", u32 version, f64 L, u32 n, then for every (kx, ky, kz) index in
// row-major FFT order the three components as (re, im) f64 pairs.
inline void write_vfld(const std::string& path, const PeriodicVorticityField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const auto& g = *f.grid;
  const std::size_t n = g.n();
  out.write("VFLD", 4);
  vfld_detail::put<std::uint32_t>(out, kVfldVersion);
  vfld_detail::put<double>(out, g.box_length());
  vfld_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  for (std::size_t ix = 0; ix < n; ++ix)
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < n; ++iz) {
        const bool direct = iz <= n / 2;
        const std::size_t idx = direct ? g.index(ix, iy, iz) : g.index((n - ix) % n, (n - iy) % n, n - iz);
        for (int c = 0; c < 3; ++c) {
          const cplx v = direct ? f.hat[c][idx] : std::conj(f.hat[c][idx]);
          vfld_detail::put<double>(out, v.real());
          vfld_detail::put<double>(out, v.imag());
        }
      }
  if (!out) throw IoError("write failed: " + path);
}

inline PeriodicVorticityField read_vfld(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "VFLD", 4) != 0) throw IoError("not a VFLD file: " + path);
  const auto version = vfld_detail::get<std::uint32_t>(in, path);
  if (version != kVfldVersion) throw IoError("unsupported VFLD version " + std::to_string(version) + ": " + path);
  GridSpec spec;
  spec.box_length = vfld_detail::get<double>(in, path);
  spec.n = vfld_detail::get<std::uint32_t>(in, path);
  try {
    spec.validate();
  } catch (const PreconditionError& e) {
    throw IoError(std::string("bad VFLD header in ") + path + ": " + e.what());
  }
  PeriodicVorticityField f(make_grid(spec));
  const auto& g = *f.grid;
  const std::size_t n = g.n();
  for (std::size_t ix = 0; ix < n; ++ix)
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t iz = 0; iz < n; ++iz)
        for (int c = 0; c < 3; ++c) {
          const double re = vfld_detail::get<double>(in, path);
          const double im = vfld_detail::get<double>(in, path);
          if (iz <= n / 2) f.hat[c][g.index(ix, iy, iz)] = cplx(re, im);
        }
  return f;
}

}  // namespace vfil
