#pragma once

#include "vfil/core.hpp"
#include "vfil/currents/current.hpp"
#include "vfil/filaments/filament.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace vfil {

inline constexpr std::uint32_t kVfilVersion = 1;

namespace io_detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated file: " + path);
  return to_little(v);
}

}  // namespace io_detail

// "VFIL", u32 version, u64 N, then per loop: u64 id, f64 alpha, u64 M, M x 3 f64.
inline void write_vfil(const std::string& path, const std::vector<Filament>& loops) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("VFIL", 4);
  io_detail::put<std::uint32_t>(out, kVfilVersion);
  io_detail::put<std::uint64_t>(out, loops.size());
  for (const auto& f : loops) {
    io_detail::put<std::uint64_t>(out, f.id);
    io_detail::put<double>(out, f.alpha);
    io_detail::put<std::uint64_t>(out, f.nodes.size());
    for (const auto& p : f.nodes)
      for (int k = 0; k < 3; ++k) io_detail::put<double>(out, p[k]);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Filament> read_vfil(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "VFIL", 4) != 0) throw IoError("not a VFIL file: " + path);
  const auto version = io_detail::get<std::uint32_t>(in, path);
  if (version != kVfilVersion) throw IoError("unsupported VFIL version " + std::to_string(version) + ": " + path);
  const auto n = io_detail::get<std::uint64_t>(in, path);
  std::vector<Filament> loops;
  for (std::uint64_t j = 0; j < n; ++j) {
    Filament f;
    f.id = io_detail::get<std::uint64_t>(in, path);
    f.alpha = io_detail::get<double>(in, path);
    const auto m = io_detail::get<std::uint64_t>(in, path);
    if (m > (1u << 28)) throw IoError("implausible node count in " + path);
    f.nodes.resize(m);
    for (auto& p : f.nodes)
      for (int k = 0; k < 3; ++k) p[k] = io_detail::get<double>(in, path);
    loops.push_back(std::move(f));
  }
  return loops;
}

inline void write_vfil(const std::string& path, const FilamentEnsemble& ens) { write_vfil(path, ens.filaments); }

inline void write_vfil(const std::string& path, const CurrentPolyline& xi) {
  std::vector<Filament> loops;
  for (const auto& l : xi.loops) loops.push_back(Filament{l.nodes, l.alpha, l.id});
  write_vfil(path, loops);
}

inline CurrentPolyline read_current(const std::string& path) {
  CurrentPolyline xi;
  for (auto& f : read_vfil(path)) xi.loops.push_back({f.alpha, std::move(f.nodes), f.id});
  xi.validate();
  return xi;
}

// Columns t, filament_id, node_index, x, y, z.
class TrajectoryCsv {
 public:
  explicit TrajectoryCsv(const std::string& path) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
    out_.precision(17);
    out_ << "t,filament_id,node_index,x,y,z\n";
  }

  void append(const FilamentEnsemble& ens) {
    for (const auto& f : ens.filaments)
      for (std::size_t m = 0; m < f.size(); ++m)
        out_ << ens.time << ',' << f.id << ',' << m << ',' << f.nodes[m].x() << ',' << f.nodes[m].y() << ','
             << f.nodes[m].z() << '\n';
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace vfil
