#pragma once

// Power-quality quantities over sampled voltage/current records: rms, powers,
// energies, fundamental frequency, grouped harmonic spectrum, THD, flicker, and
// the 10-cycle aggregated report.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "pqtwin/error.hpp"
#include "pqtwin/flicker.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

inline double rms(std::span<const double> x) {
  require(!x.empty(), ErrorCode::Validation, "rms of an empty window");
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double active_power(std::span<const double> u, std::span<const double> i) {
  require(u.size() == i.size(), ErrorCode::Validation, "voltage and current windows differ in length");
  require(!u.empty(), ErrorCode::Validation, "empty window");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * i[k];
  return s / static_cast<double>(u.size());
}

namespace detail {

inline std::complex<double> dft_at(std::span<const double> x, double f_hz, double rate) {
  // Goertzel-free direct evaluation with a rotating phasor, renormalised periodically.
  const std::complex<double> step = std::polar(1.0, -kTwoPi * f_hz / rate);
  std::complex<double> w{1.0, 0.0}, acc{0.0, 0.0};
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += x[k] * w;
    w *= step;
    if ((k & 1023) == 1023) w = std::polar(1.0, -kTwoPi * f_hz * static_cast<double>(k + 1) / rate);
  }
  return acc;
}

inline double whole_cycles(std::size_t n, double rate, double f_c) {
  return static_cast<double>(n) * f_c / rate;
}

}  // namespace detail

/// Fundamental-frequency reactive power, Q = Im(U1 * conj(I1)); inductive is positive.
inline double reactive_power_fundamental(std::span<const double> u, std::span<const double> i, double rate,
                                         double f_c = 50.0) {
  require(u.size() == i.size(), ErrorCode::Validation, "voltage and current windows differ in length");
  require(!u.empty() && rate > 0.0 && f_c > 0.0, ErrorCode::Validation, "invalid window");
  const double cycles = detail::whole_cycles(u.size(), rate, f_c);
  require(cycles >= 1.0 - 1e-9 && std::abs(cycles - std::round(cycles)) < 1e-6, ErrorCode::Validation,
          "reactive power needs a whole number of fundamental cycles");
  const auto U = detail::dft_at(u, f_c, rate);
  const auto I = detail::dft_at(i, f_c, rate);
  const double n = static_cast<double>(u.size());
  double peak = 0.0;
  for (double v : u) peak = std::max(peak, std::abs(v));
  require(std::abs(U) * 2.0 / n > 1e-9 * peak && std::abs(U) > 0.0, ErrorCode::Validation,
          "voltage fundamental is below the noise floor");
  return 2.0 * (U * std::conj(I)).imag() / (n * n);
}

/// Estimated fundamental: Hann-windowed FFT peak refined by maximising |DTFT| within one bin.
inline double fundamental_frequency(std::span<const double> u, double rate, double f_nominal = 50.0) {
  require(rate > 0.0 && f_nominal > 0.0, ErrorCode::InvalidSpec, "invalid rate or nominal frequency");
  require(detail::whole_cycles(u.size(), rate, f_nominal) >= 10.0 - 1e-9, ErrorCode::Validation,
          "fundamental estimation needs at least 10 cycles");
  const std::size_t n = std::min<std::size_t>(u.size(), static_cast<std::size_t>(10.0 * rate));
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += u[k];
  mean /= static_cast<double>(n);
  std::vector<double> x(n);
  double ac = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double v = u[k] - mean;
    ac += v * v;
    x[k] = v * 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(k) / static_cast<double>(n)));
  }
  ac = std::sqrt(ac / static_cast<double>(n));
  require(ac > 0.0, ErrorCode::Validation, "no dominant fundamental: signal has no AC content");
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X;
  fft.fwd(X, x);
  const double df = rate / static_cast<double>(n);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= n / 2; ++k)
    if (std::abs(X[k]) > std::abs(X[best])) best = k;
  auto mag = [&](double f) { return std::abs(detail::dft_at(x, f, rate)); };
  double a = (static_cast<double>(best) - 1.0) * df, b = (static_cast<double>(best) + 1.0) * df;
  a = std::max(a, 0.0);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = mag(c), fd = mag(d);
  for (int it = 0; it < 60 && (b - a) > 1e-7; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = mag(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = mag(d);
    }
  }
  const double f = 0.5 * (a + b);
  // Hann coherent gain is 1/2: peak amplitude = 4|X|/N.
  const double amp = 4.0 * mag(f) / static_cast<double>(n);
  require(amp >= 0.5 * std::sqrt(2.0) * ac, ErrorCode::Validation, "no dominant fundamental component");
  return f;
}

struct AnalysisWindow {
  std::span<const double> samples;
  double rate = 10000.0;
  double f_c = 50.0;
  int cycles = 10;

  std::size_t expected_length() const {
    require(rate > 0.0 && f_c > 0.0 && cycles >= 1, ErrorCode::InvalidSpec, "invalid analysis window");
    const double n = static_cast<double>(cycles) * rate / f_c;
    require(std::abs(n - std::round(n)) < 1e-6, ErrorCode::Validation,
            "window is not an integer number of samples (synchronous sampling required)");
    return static_cast<std::size_t>(std::llround(n));
  }
};

/// Grouped spectrum in rms volts/amperes. harmonic[h] groups the bins around order h
/// (harmonic[0] is the DC group); interharmonic[h] holds the bins between orders h and h+1.
/// Together the groups cover every bin up to Nyquist.
struct HarmonicSpectrum {
  double f_c = 50.0;
  double bin_hz = 5.0;
  std::vector<double> harmonic;
  std::vector<double> interharmonic;

  double order(std::size_t h) const { return h < harmonic.size() ? harmonic[h] : 0.0; }
  double total_square() const {
    double s = 0.0;
    for (double v : harmonic) s += v * v;
    for (double v : interharmonic) s += v * v;
    return s;
  }
};

inline HarmonicSpectrum harmonic_spectrum(const AnalysisWindow& w) {
  const std::size_t n = w.expected_length();
  require(w.samples.size() == n, ErrorCode::Validation,
          "window holds " + std::to_string(w.samples.size()) + " samples, expected " + std::to_string(n));
  std::vector<double> x(w.samples.begin(), w.samples.end());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X;
  fft.fwd(X, x);
  const std::size_t half = n / 2;
  const double nn = static_cast<double>(n);
  std::vector<double> p(half + 1);  // per-bin mean-square contribution
  for (std::size_t k = 0; k <= half; ++k) {
    const double m = std::abs(X[k]) / nn;
    p[k] = (k == 0 || (n % 2 == 0 && k == half)) ? m * m : 2.0 * m * m;
  }
  const auto c = static_cast<std::size_t>(w.cycles);
  const std::size_t hw = c >= 4 ? 1 : 0;
  HarmonicSpectrum s;
  s.f_c = w.f_c;
  s.bin_hz = w.rate / nn;
  const std::size_t max_order = half / c + 1;
  s.harmonic.assign(max_order + 1, 0.0);
  s.interharmonic.assign(max_order + 1, 0.0);
  for (std::size_t k = 0; k <= half; ++k) {
    const std::size_t h = k / c, r = k % c;
    if (r <= hw)
      s.harmonic[h] += p[k];
    else if (r >= c - hw)
      s.harmonic[h + 1] += p[k];
    else
      s.interharmonic[h] += p[k];
  }
  for (double& v : s.harmonic) v = std::sqrt(v);
  for (double& v : s.interharmonic) v = std::sqrt(v);
  return s;
}

inline constexpr std::size_t kThdMaxOrder = 40;

inline double thd(const HarmonicSpectrum& s) {
  const double h1 = s.order(1);
  require(h1 > 0.0, ErrorCode::Validation, "THD undefined: zero fundamental");
  double sum = 0.0;
  for (std::size_t h = 2; h <= kThdMaxOrder; ++h) sum += s.order(h) * s.order(h);
  return std::sqrt(sum) / h1;
}

// ---- aggregation ------------------------------------------------------------

struct PQReport {
  double t_start = 0.0;
  double duration = 0.0;
  double U_rms = 0.0;
  std::optional<double> I_rms, P, Q, E_P, E_Q;
  std::optional<double> f_c;
  std::optional<double> THDU, THDI;
  std::optional<double> Pst, Plt;
};

struct EnergyTotals {
  double E_P = 0.0;  // Wh
  double E_Q = 0.0;  // varh
};

/// Time integral of P and Q over consecutive windows.
inline EnergyTotals accumulate_energy(std::span<const PQReport> reports) {
  EnergyTotals e;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    if (k > 0) {
      const double expected = reports[k - 1].t_start + reports[k - 1].duration;
      require(std::abs(r.t_start - expected) <= 1e-9 * std::max(1.0, std::abs(expected)), ErrorCode::Validation,
              "gap in the window sequence at t=" + std::to_string(r.t_start) + " s");
    }
    e.E_P += r.P.value_or(0.0) * r.duration / 3600.0;
    e.E_Q += r.Q.value_or(0.0) * r.duration / 3600.0;
  }
  return e;
}

struct ReportConfig {
  double rate = 10000.0;
  double f_c = 50.0;
  int window_cycles = 10;
  std::optional<FlickerOptions> flicker;  // nullopt: no Pst/Plt
};

inline std::vector<PQReport> aggregate_report(std::span<const double> u, std::optional<std::span<const double>> i,
                                              const ReportConfig& cfg) {
  const AnalysisWindow proto{{}, cfg.rate, cfg.f_c, cfg.window_cycles};
  const std::size_t wl = proto.expected_length();
  if (i) require(i->size() == u.size(), ErrorCode::Validation, "voltage and current traces differ in length");
  require(u.size() >= wl, ErrorCode::Validation, "trace is shorter than one aggregation window");
  const std::size_t windows = u.size() / wl;

  std::vector<double> block_pst;
  std::size_t skip = 0, block_len = 0;
  if (cfg.flicker) {
    const auto& fo = *cfg.flicker;
    fo.validate();
    Flickermeter meter(cfg.rate, cfg.f_c);
    const auto pinst = meter.instantaneous(u);
    skip = static_cast<std::size_t>(std::llround(fo.settle_s * cfg.rate));
    block_len = static_cast<std::size_t>(std::llround(fo.observation_s * cfg.rate));
    for (std::size_t b = skip; b + block_len <= pinst.size(); b += block_len)
      block_pst.push_back(pst_from_pinst(std::span<const double>(pinst).subspan(b, block_len)));
  }

  std::vector<PQReport> out;
  out.reserve(windows);
  EnergyTotals e;
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t off = w * wl;
    const auto us = u.subspan(off, wl);
    PQReport r;
    r.t_start = static_cast<double>(off) / cfg.rate;
    r.duration = static_cast<double>(wl) / cfg.rate;
    r.U_rms = rms(us);
    const auto su = harmonic_spectrum({us, cfg.rate, cfg.f_c, cfg.window_cycles});
    if (su.order(1) > 0.0) r.THDU = thd(su);
    if (r.U_rms > 0.0) {
      try {
        r.f_c = fundamental_frequency(us, cfg.rate, cfg.f_c);
      } catch (const Error&) {
        r.f_c.reset();
      }
    }
    if (i) {
      const auto is = i->subspan(off, wl);
      r.I_rms = rms(is);
      r.P = active_power(us, is);
      if (su.order(1) > 0.0) r.Q = reactive_power_fundamental(us, is, cfg.rate, cfg.f_c);
      const auto si = harmonic_spectrum({is, cfg.rate, cfg.f_c, cfg.window_cycles});
      if (si.order(1) > 1e-12 * std::max(1.0, *r.I_rms)) r.THDI = thd(si);
      e.E_P += r.P.value_or(0.0) * r.duration / 3600.0;
      e.E_Q += r.Q.value_or(0.0) * r.duration / 3600.0;
      r.E_P = e.E_P;
      r.E_Q = e.E_Q;
    }
    if (cfg.flicker && off >= skip) {
      const std::size_t b = (off - skip) / block_len;
      if (b < block_pst.size()) {
        r.Pst = block_pst[b];
        const std::size_t g = b / 12;
        if ((g + 1) * 12 <= block_pst.size())
          r.Plt = flicker_plt(std::span<const double>(block_pst).subspan(g * 12, 12));
      }
    }
    out.push_back(r);
  }
  return out;
}

// ---- text output --------------------------------------------------------------

/// Shortest round-trip decimal form, '.' separator, independent of locale.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::string format_report_line(const PQReport& r, std::string_view label = {}) {
  std::string s;
  if (!label.empty()) {
    s += label;
    s += ' ';
  }
  auto put = [&](const char* name, const std::optional<double>& v) {
    s += name;
    s += '=';
    s += v ? format_number(*v) : "NA";
    s += ' ';
  };
  put("t_start", r.t_start);
  put("duration", r.duration);
  put("U_rms", r.U_rms);
  put("I_rms", r.I_rms);
  put("P", r.P);
  put("Q", r.Q);
  put("E_P", r.E_P);
  put("E_Q", r.E_Q);
  put("f_c", r.f_c);
  put("THDU", r.THDU);
  put("THDI", r.THDI);
  put("Pst", r.Pst);
  put("Plt", r.Plt);
  s.pop_back();
  return s;
}

}  // namespace pqtwin
