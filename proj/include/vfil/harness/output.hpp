#pragma once

#include "vfil/core.hpp"

#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef VFIL_VERSION
#define VFIL_VERSION "0.0.0-unknown"
#endif

namespace vfil {

// Shortest round-trip text for a double; identical bits give identical text.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  template <class... T>
  void add(const T&... cells) {
    std::vector<std::string> row;
    (row.push_back(cell(cells)), ...);
    require(row.size() == columns.size(), "table " + name + ": row width does not match the header");
    rows.push_back(std::move(row));
  }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) { return std::to_string(v); }
};

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

struct Plot {
  std::string name;  // file stem
  std::string title, x_label, y_label;
  std::vector<PlotSeries> series;
};

struct Report {
  std::string kind;  // subcommand
  std::string name;
  std::vector<Table> tables;
  std::vector<Plot> plots;
  std::vector<std::pair<std::string, std::string>> results;  // fitted rates, pass flags
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, double>> wall_times;
  std::string config_text;
  unsigned threads = 1;
  std::vector<std::string> extra_files;  // written by the caller, listed in the manifest
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << body;
  if (!out) throw IoError("write failed: " + p.string());
}

inline std::string csv_text(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
    s += '\n';
  }
  return s;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

// Plot frame in SVG user units; data go inside [left, right] x [top, bottom].
struct PlotFrame {
  double width = 640, height = 440;
  double left = 80, right = 600, top = 40, bottom = 380;
};

// Log-log plot. Axes span whole decades around the positive data; points with
// a non-positive coordinate are dropped and counted in a comment.
inline std::string render_svg(const Plot& p, const PlotFrame& fr = {}) {
  double xlo = HUGE_VAL, xhi = -HUGE_VAL, ylo = HUGE_VAL, yhi = -HUGE_VAL;
  std::size_t dropped = 0;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!(s.x[i] > 0.0 && s.y[i] > 0.0 && std::isfinite(s.x[i]) && std::isfinite(s.y[i]))) {
        ++dropped;
        continue;
      }
      xlo = std::min(xlo, std::log10(s.x[i]));
      xhi = std::max(xhi, std::log10(s.x[i]));
      ylo = std::min(ylo, std::log10(s.y[i]));
      yhi = std::max(yhi, std::log10(s.y[i]));
    }
  if (xlo > xhi) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  xlo = std::floor(xlo), xhi = std::ceil(xhi), ylo = std::floor(ylo), yhi = std::ceil(yhi);
  if (xhi == xlo) xhi += 1;
  if (yhi == ylo) yhi += 1;
  auto X = [&](double v) { return fr.left + (std::log10(v) - xlo) / (xhi - xlo) * (fr.right - fr.left); };
  auto Y = [&](double v) { return fr.bottom - (std::log10(v) - ylo) / (yhi - ylo) * (fr.bottom - fr.top); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fr.width << "\" height=\"" << fr.height
    << "\" viewBox=\"0 0 " << fr.width << ' ' << fr.height << "\">\n";
  o << "<!-- dropped " << dropped << " -->\n";
  o << "<rect class=\"axes\" x=\"" << fr.left << "\" y=\"" << fr.top << "\" width=\"" << fr.right - fr.left
    << "\" height=\"" << fr.bottom - fr.top << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int d = static_cast<int>(xlo); d <= static_cast<int>(xhi); ++d) {
    const double x = X(std::pow(10.0, d));
    o << "<line x1=\"" << detail::num(x) << "\" y1=\"" << fr.bottom << "\" x2=\"" << detail::num(x) << "\" y2=\""
      << fr.bottom + 5 << "\" stroke=\"black\"/><text x=\"" << detail::num(x) << "\" y=\"" << fr.bottom + 20
      << "\" font-size=\"12\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(ylo); d <= static_cast<int>(yhi); ++d) {
    const double y = Y(std::pow(10.0, d));
    o << "<line x1=\"" << fr.left - 5 << "\" y1=\"" << detail::num(y) << "\" x2=\"" << fr.left << "\" y2=\""
      << detail::num(y) << "\" stroke=\"black\"/><text x=\"" << fr.left - 8 << "\" y=\"" << detail::num(y + 4)
      << "\" font-size=\"12\" text-anchor=\"end\">1e" << d << "</text>\n";
  }
  o << "<text x=\"" << (fr.left + fr.right) / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">"
    << detail::xml_escape(p.title) << "</text>\n";
  o << "<text x=\"" << (fr.left + fr.right) / 2 << "\" y=\"" << fr.height - 12
    << "\" font-size=\"12\" text-anchor=\"middle\">" << detail::xml_escape(p.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (fr.top + fr.bottom) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (fr.top + fr.bottom) / 2 << ")\">" << detail::xml_escape(p.y_label) << "</text>\n";
  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    const char* col = colors[k % 6];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (s.x[i] > 0.0 && s.y[i] > 0.0 && std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        pts += detail::num(X(s.x[i])) + "," + detail::num(Y(s.y[i])) + " ";
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"" << pts << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (s.x[i] > 0.0 && s.y[i] > 0.0 && std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        o << "<circle class=\"pt\" cx=\"" << detail::num(X(s.x[i])) << "\" cy=\"" << detail::num(Y(s.y[i]))
          << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    o << "<text x=\"" << fr.right - 140 << "\" y=\"" << fr.top + 18 + 16 * k << "\" font-size=\"12\" fill=\"" << col
      << "\">" << detail::xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// Writes <stem>.csv per table, <stem>.svg per plot and manifest.json. Only
// the manifest holds wall times, so the CSV and SVG bytes depend on the
// config, seeds and worker count alone.
inline std::vector<std::string> emit_outputs(const Report& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  std::vector<std::string> written;
  for (const auto& t : rep.tables) {
    const auto p = fs::path(dir) / (t.name + ".csv");
    detail::write_text(p, detail::csv_text(t));
    written.push_back(p.string());
  }
  for (const auto& pl : rep.plots) {
    const auto p = fs::path(dir) / (pl.name + ".svg");
    detail::write_text(p, render_svg(pl));
    written.push_back(p.string());
  }
  boost::property_tree::ptree m;
  m.put("kind", rep.kind);
  m.put("name", rep.name);
  m.put("version", VFIL_VERSION);
  m.put("config_hash", "fnv1a64:" + hex64(fnv1a64(rep.config_text)));
  m.put("threads", rep.threads);
  boost::property_tree::ptree seeds, results, times, files;
  for (const auto& [k, v] : rep.seeds) seeds.put(boost::property_tree::ptree::path_type(k, '\0'), v);
  for (const auto& [k, v] : rep.results) results.put(boost::property_tree::ptree::path_type(k, '\0'), v);
  for (const auto& [k, v] : rep.wall_times) times.put(boost::property_tree::ptree::path_type(k, '\0'), fmt(v));
  auto listed = written;
  listed.insert(listed.end(), rep.extra_files.begin(), rep.extra_files.end());
  for (const auto& w : listed) {
    boost::property_tree::ptree f;
    f.put("", fs::path(w).filename().string());
    files.push_back({"", f});
  }
  m.add_child("seeds", seeds);
  m.add_child("results", results);
  m.add_child("wall_times_s", times);
  m.add_child("files", files);
  const auto mp = fs::path(dir) / "manifest.json";
  std::ostringstream js;
  boost::property_tree::write_json(js, m);
  detail::write_text(mp, js.str());
  written.push_back(mp.string());
  return written;
}

// Wall-clock helper for manifests.
class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace vfil
