#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmu/core.hpp"
#include "mmu/loss.hpp"
#include "mmu/saddle_solver.hpp"

namespace mmu {

// 17 significant digits: enough to round-trip every double.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw IoError("cannot parse number '" + std::string(s) + "'");
  }
  return x;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

// ---- Dataset CSV ---------------------------------------------------------------
//
//   # mmu-dataset v1 family=<name> d1=<d1> d2=<d2> seed=<seed>
//   <column names>
//   <one row per sample>
//
// Quadratic rows hold A, B, C row-major (A_r_c, ...), then a, c, y. Bilinear-
// logistic rows hold x, u, y.

inline std::vector<std::string> dataset_columns(LossFamily family, Index d1, Index d2) {
  std::vector<std::string> cols;
  const auto mat = [&](const char* name, Index r, Index c) {
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) cols.push_back(detail::concat(name, '_', i, '_', j));
  };
  const auto vec = [&](const char* name, Index d) {
    for (Index i = 0; i < d; ++i) cols.push_back(detail::concat(name, '_', i));
  };
  if (family == LossFamily::kQuadratic) {
    mat("A", d1, d1);
    mat("B", d1, d2);
    mat("C", d2, d2);
    vec("a", d1);
    vec("c", d2);
  } else {
    vec("x", d1);
    vec("u", d2);
  }
  cols.push_back("y");
  return cols;
}

inline std::string dataset_to_csv(const Dataset& data) {
  std::string out = detail::concat("# mmu-dataset v1 family=", family_name(data.family), " d1=", data.d1,
                                   " d2=", data.d2, " seed=", data.generator_seed, "\n");
  const auto cols = dataset_columns(data.family, data.d1, data.d2);
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& s : data.samples) {
    std::vector<double> vals;
    const auto mat = [&](const Matrix& m) {
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) vals.push_back(m(i, j));
    };
    const auto vec = [&](const Vector& v) {
      for (Index i = 0; i < v.size(); ++i) vals.push_back(v(i));
    };
    if (data.family == LossFamily::kQuadratic) {
      if (!s.quad) throw IoError("quadratic dataset sample without quadratic terms");
      mat(s.quad->A);
      mat(s.quad->B);
      mat(s.quad->C);
      vec(s.quad->a);
      vec(s.quad->c);
    } else {
      vec(s.x);
      vec(s.u);
    }
    vals.push_back(s.y);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ',';
      out += format_double(vals[i]);
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::string header_field(std::string_view header, std::string_view key) {
  const std::string pat = std::string(key) + "=";
  const std::size_t pos = header.find(pat);
  if (pos == std::string_view::npos) throw IoError("dataset header lacks '" + std::string(key) + "'");
  const std::size_t start = pos + pat.size();
  const std::size_t end = header.find(' ', start);
  return std::string(header.substr(start, end == std::string_view::npos ? end : end - start));
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("cannot parse integer '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) lines.push_back(l);
  }
  return lines;
}

}  // namespace detail

inline Dataset dataset_from_csv(std::string_view text) {
  const auto lines = detail::lines_of(text);
  if (lines.size() < 2 || !lines[0].starts_with("# mmu-dataset v1")) throw IoError("not an mmu-dataset v1 file");
  Dataset d;
  d.family = parse_family(detail::header_field(lines[0], "family"));
  d.d1 = detail::parse_int(detail::header_field(lines[0], "d1"));
  d.d2 = detail::parse_int(detail::header_field(lines[0], "d2"));
  {
    const std::string s = detail::header_field(lines[0], "seed");
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc()) throw IoError("bad seed in dataset header");
    d.generator_seed = v;
  }
  if (d.d1 <= 0 || d.d2 <= 0) throw IoError("dataset dimensions must be positive");
  const auto cols = dataset_columns(d.family, d.d1, d.d2);
  const auto header = split(lines[1], ',');
  if (header.size() != cols.size()) throw IoError("dataset column header does not match its dimensions");
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (header[i] != cols[i]) throw IoError("unexpected dataset column '" + std::string(header[i]) + "'");

  for (std::size_t li = 2; li < lines.size(); ++li) {
    const auto f = split(lines[li], ',');
    if (f.size() != cols.size()) throw IoError(detail::concat("dataset row ", li - 1, " has ", f.size(), " fields"));
    std::size_t k = 0;
    const auto next = [&] {
      const double x = parse_double(f[k++]);
      if (!std::isfinite(x)) throw IoError("non-finite value in dataset");
      return x;
    };
    const auto mat = [&](Index r, Index c) {
      Matrix m(r, c);
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = next();
      return m;
    };
    const auto vec = [&](Index n) {
      Vector v(n);
      for (Index i = 0; i < n; ++i) v(i) = next();
      return v;
    };
    Sample s;
    if (d.family == LossFamily::kQuadratic) {
      QuadraticTerms q;
      q.A = mat(d.d1, d.d1);
      q.B = mat(d.d1, d.d2);
      q.C = mat(d.d2, d.d2);
      q.a = vec(d.d1);
      q.c = vec(d.d2);
      s.x = Vector(0);
      s.u = Vector(0);
      s.quad = std::move(q);
    } else {
      s.x = vec(d.d1);
      s.u = vec(d.d2);
    }
    s.y = next();
    d.samples.push_back(std::move(s));
  }
  if (d.empty()) throw IoError("dataset has no samples");
  return d;
}

inline void write_dataset_csv(const std::string& path, const Dataset& d) { write_file(path, dataset_to_csv(d)); }
inline Dataset read_dataset_csv(const std::string& path) { return dataset_from_csv(read_file(path)); }

// ---- Model file ----------------------------------------------------------------
//
//   mmu-model v1
//   d1 <d1>
//   d2 <d2>
//   n <n>
//   residual <r>
//   w <d1 values>
//   v <d2 values>
//   d_ww <d1*d1 values, row-major>
//   d_vv <d2*d2 values, row-major>
//
// The memory anchor is the stored point.

inline std::string model_to_text(const TrainedModel& m) {
  const auto row = [](std::string key, const double* p, Index count) {
    for (Index i = 0; i < count; ++i) key += " " + format_double(p[i]);
    return key + "\n";
  };
  const Index d1 = m.point.w.size(), d2 = m.point.v.size();
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ww = m.memory.d_ww, vv = m.memory.d_vv;
  std::string out = "mmu-model v1\n";
  out += detail::concat("d1 ", d1, "\nd2 ", d2, "\nn ", m.n, "\nresidual ", format_double(m.residual_grad_norm), "\n");
  out += row("w", m.point.w.data(), d1);
  out += row("v", m.point.v.data(), d2);
  out += row("d_ww", ww.data(), d1 * d1);
  out += row("d_vv", vv.data(), d2 * d2);
  return out;
}

inline TrainedModel model_from_text(std::string_view text) {
  const auto lines = detail::lines_of(text);
  if (lines.size() != 9 || lines[0] != "mmu-model v1") throw IoError("not an mmu-model v1 file");
  const auto fields = [&](std::size_t i, std::string_view key) {
    auto f = split(lines[i], ' ');
    if (f.empty() || f[0] != key) throw IoError("model file: expected '" + std::string(key) + "'");
    f.erase(f.begin());
    return f;
  };
  const auto scalar = [&](std::size_t i, std::string_view key) {
    const auto f = fields(i, key);
    if (f.size() != 1) throw IoError("model file: bad '" + std::string(key) + "' line");
    return f[0];
  };
  const Index d1 = detail::parse_int(scalar(1, "d1"));
  const Index d2 = detail::parse_int(scalar(2, "d2"));
  if (d1 <= 0 || d2 <= 0) throw IoError("model dimensions must be positive");
  TrainedModel m;
  m.n = static_cast<std::size_t>(detail::parse_int(scalar(3, "n")));
  m.residual_grad_norm = parse_double(scalar(4, "residual"));
  const auto values = [&](std::size_t i, std::string_view key, Index count) {
    const auto f = fields(i, key);
    if (static_cast<Index>(f.size()) != count) throw IoError("model file: wrong count on '" + std::string(key) + "'");
    std::vector<double> v;
    for (auto s : f) v.push_back(parse_double(s));
    return v;
  };
  const auto w = values(5, "w", d1), v = values(6, "v", d2);
  const auto ww = values(7, "d_ww", d1 * d1), vv = values(8, "d_vv", d2 * d2);
  m.point.w = Eigen::Map<const Vector>(w.data(), d1);
  m.point.v = Eigen::Map<const Vector>(v.data(), d2);
  m.memory.d_ww = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(ww.data(), d1, d1);
  m.memory.d_vv = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(vv.data(), d2, d2);
  m.memory.anchor = m.point;
  m.memory.n = m.n;
  return m;
}

inline void write_model(const std::string& path, const TrainedModel& m) { write_file(path, model_to_text(m)); }
inline TrainedModel read_model(const std::string& path) { return model_from_text(read_file(path)); }

// ---- Report CSV ------------------------------------------------------------------

inline constexpr std::string_view kReportSchema = "mmu-report-v1";

struct ReportRow {
  std::string run_id;
  std::string mode;
  std::size_t n = 0;
  std::size_t m = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  double sigma_w = 0.0;
  double sigma_v = 0.0;
  double bound = 0.0;
  double measured_dw = 0.0;
  double measured_dv = 0.0;
  double eps_effective = 0.0;
  double weak_pd = 0.0;
  double strong_pd = 0.0;
  double wall_time_ms = 0.0;
};

// Provenance stamped into the report header. Bounds from estimated constants are
// labeled as such; risks use a fixed evaluation set with Monte Carlo over noise.
struct ReportMeta {
  std::uint64_t config_hash = 0;
  bool estimated_constants = true;
  double solver_tolerance = 0.0;
};

inline std::string report_header(const ReportMeta& meta) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(meta.config_hash));
  return detail::concat("# schema=", kReportSchema, " config_hash=", hex,
                        " certificate=", meta.estimated_constants ? "estimated" : "supplied",
                        " solver_tolerance=", format_double(meta.solver_tolerance),
                        " risk=fixed-eval-set,noise-monte-carlo\n");
}

inline std::string report_to_csv(const std::vector<ReportRow>& rows, const ReportMeta& meta) {
  std::string out = report_header(meta);
  out += "run_id,mode,n,m,epsilon,delta,sigma_w,sigma_v,bound,measured_dw,measured_dv,eps_effective,weak_pd,strong_pd,wall_time_ms\n";
  for (const auto& r : rows) {
    const double nums[] = {r.epsilon, r.delta, r.sigma_w, r.sigma_v, r.bound, r.measured_dw,
                           r.measured_dv, r.eps_effective, r.weak_pd, r.strong_pd, r.wall_time_ms};
    for (double x : nums)
      if (!std::isfinite(x)) throw IoError("report row '" + r.run_id + "' has a non-finite value");
    out += detail::concat(r.run_id, ',', r.mode, ',', r.n, ',', r.m);
    for (double x : nums) out += "," + format_double(x);
    out += '\n';
  }
  return out;
}

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows, const ReportMeta& meta) {
  write_file(path, report_to_csv(rows, meta));
}

}  // namespace mmu
