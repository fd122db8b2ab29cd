#pragma once

// CSV formats: named-channel waveforms, simulator traces and impedance sweeps.
// Numbers use the shortest decimal form that reads back to the same double, with a
// '.' separator regardless of locale.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pqtwin/error.hpp"
#include "pqtwin/netmodel.hpp"
#include "pqtwin/signalgen.hpp"
#include "pqtwin/simulator.hpp"

namespace pqtwin {

inline void append_number(std::string& out, double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

inline std::string number_text(double v) {
  std::string s;
  append_number(s, v);
  return s;
}

inline double parse_number(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::Ingest, "line " + std::to_string(line) + ": invalid number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',') {
      f.push_back(line.substr(start, k - start));
      start = k + 1;
    }
  }
  return f;
}

// ---- waveform ---------------------------------------------------------------

struct NamedWaveform {
  Waveform wave;
  std::vector<std::string> names;

  int find(std::string_view name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return static_cast<int>(k);
    return -1;
  }
};

/// "# rate=<Hz>", then "t,<name>,...", then one row per sample.
inline void write_waveform_csv(std::ostream& os, const Waveform& w, const std::vector<std::string>& names) {
  require(names.size() == w.channel_count(), ErrorCode::Validation, "one name per channel required");
  std::string buf = "# rate=";
  append_number(buf, w.rate);
  buf += "\nt";
  for (const auto& n : names) {
    buf += ',';
    buf += n;
  }
  buf += '\n';
  for (std::size_t k = 0; k < w.size(); ++k) {
    append_number(buf, w.time(k));
    for (const auto& ch : w.channels) {
      buf += ',';
      append_number(buf, ch[k]);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      os << buf;
      buf.clear();
    }
  }
  os << buf;
}

inline NamedWaveform read_waveform_csv(std::istream& is) {
  std::string line;
  std::size_t ln = 0;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++ln;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next() || line.rfind("# rate=", 0) != 0)
    fail(ErrorCode::Ingest, "line 1: expected '# rate=<Hz>' header");
  NamedWaveform out;
  out.wave.rate = parse_number(std::string_view(line).substr(7), ln);
  if (!(out.wave.rate > 0.0)) fail(ErrorCode::Ingest, "line 1: rate must be positive");
  if (!next()) fail(ErrorCode::Ingest, "line " + std::to_string(ln + 1) + ": missing column header");
  const auto head = split_fields(line);
  if (head.size() < 2 || head[0] != "t")
    fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": header must start with 't' and name a channel");
  for (std::size_t k = 1; k < head.size(); ++k) {
    if (head[k].empty()) fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": empty column name");
    out.names.emplace_back(head[k]);
  }
  out.wave.channels.assign(out.names.size(), {});
  std::size_t row = 0;
  while (next()) {
    const auto f = split_fields(line);
    if (f.size() != head.size())
      fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": expected " + std::to_string(head.size()) +
                                  " fields, found " + std::to_string(f.size()));
    const double t = parse_number(f[0], ln);
    const double expect = static_cast<double>(row) / out.wave.rate;
    if (std::abs(t - expect) > 1e-6 / out.wave.rate + 1e-12 * std::abs(expect))
      fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": time " + std::string(f[0]) +
                                  " breaks the uniform sampling grid");
    for (std::size_t k = 1; k < f.size(); ++k) {
      const double v = parse_number(f[k], ln);
      if (!std::isfinite(v)) fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": non-finite sample");
      out.wave.channels[k - 1].push_back(v);
    }
    ++row;
  }
  if (row == 0) fail(ErrorCode::Ingest, "no samples after the header");
  return out;
}

inline NamedWaveform read_waveform_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "'");
  return read_waveform_csv(f);
}

// ---- simulator trace ----------------------------------------------------------

/// "# trace rate=<Hz> columns=<n>", a header row naming every column, then every
/// stride-th sample (rate is that of the written rows).
/// Voltages are <tap>_<conductor>_V against the source neutral; section currents are
/// <section>_<conductor>_A; load currents are att<k>_A.
inline void write_trace_csv(std::ostream& os, const SimResult& r, std::size_t stride = 1) {
  require(stride >= 1, ErrorCode::InvalidSpec, "trace stride must be >= 1");
  std::vector<std::string> names{"t"};
  std::vector<const std::vector<double>*> cols{&r.time};
  for (Tap t : kAllTaps) {
    if (!r.has_tap(t)) continue;
    for (Conductor c : kAllConductors) {
      names.push_back(to_string(t) + "_" + to_string(c) + "_V");
      cols.push_back(&r.node_v[index(t)][index(c)]);
    }
  }
  if (r.has_sections())
    for (SectionId s : kAllSections)
      for (Conductor c : kAllConductors) {
        names.push_back(to_string(s) + "_" + to_string(c) + "_A");
        cols.push_back(&r.section_i[index(s)][index(c)]);
      }
  for (std::size_t k = 0; k < r.load_i.size(); ++k) {
    names.push_back("att" + std::to_string(k) + "_A");
    cols.push_back(&r.load_i[k]);
  }
  std::string buf = "# trace rate=";
  append_number(buf, 1.0 / (r.dt * static_cast<double>(stride)));
  buf += " columns=" + std::to_string(names.size()) + "\n";
  for (std::size_t k = 0; k < names.size(); ++k) buf += (k ? "," : "") + names[k];
  buf += '\n';
  for (std::size_t row = 0; row < r.size(); row += stride) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (k) buf += ',';
      append_number(buf, (*cols[k])[row]);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      os << buf;
      buf.clear();
    }
  }
  os << buf;
}

// ---- impedance sweep ---------------------------------------------------------

inline void write_sweep_csv(std::ostream& os, const std::vector<ImpedancePoint>& pts) {
  std::string buf = "f_Hz,R_mOhm,X_mOhm\n";
  for (const auto& p : pts) {
    append_number(buf, p.f_hz);
    buf += ',';
    append_number(buf, p.R_mOhm);
    buf += ',';
    append_number(buf, p.X_mOhm);
    buf += '\n';
  }
  os << buf;
}

inline std::vector<ImpedancePoint> read_sweep_csv(std::istream& is) {
  std::string line;
  std::size_t ln = 0;
  std::vector<ImpedancePoint> out;
  while (std::getline(is, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (ln == 1) {
      if (line != "f_Hz,R_mOhm,X_mOhm") fail(ErrorCode::Ingest, "line 1: unexpected sweep header");
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 3) fail(ErrorCode::Ingest, "line " + std::to_string(ln) + ": expected 3 fields");
    out.push_back({parse_number(f[0], ln), parse_number(f[1], ln), parse_number(f[2], ln)});
  }
  return out;
}

}  // namespace pqtwin
