#pragma once

// Flickermeter for a 230 V / 50 Hz incandescent lamp reference.
//
// Chain: rms normalisation -> squaring demodulator -> 0.05 Hz high-pass ->
// 35 Hz 6th-order Butterworth -> lamp-eye weighting -> squaring -> 300 ms
// smoothing, scaled so that a 0.25 % sinusoidal fluctuation at 8.8 Hz peaks
// at Pinst = 1. Pst comes from a log-binned cumulative probability classifier.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pqtwin/error.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

/// Second-order section, direct form II transposed, a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
  double z1 = 0.0, z2 = 0.0;

  double operator()(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  /// Sets the state to the steady state for a constant input x.
  void settle_to(double x) {
    const double y = dc_gain() * x;
    z2 = b2 * x - a2 * y;
    z1 = b1 * x - a1 * y + z2;
  }

  std::complex<double> response(double f_hz, double rate) const {
    const std::complex<double> z1i = std::polar(1.0, -kTwoPi * f_hz / rate);
    const auto z2i = z1i * z1i;
    return (b0 + b1 * z1i + b2 * z2i) / (1.0 + a1 * z1i + a2 * z2i);
  }

  /// Bilinear transform of (n2 s^2 + n1 s + n0) / (d2 s^2 + d1 s + d0).
  static Biquad bilinear(double n2, double n1, double n0, double d2, double d1, double d0, double rate) {
    const double K = 2.0 * rate;
    const double K2 = K * K;
    const double a0 = d2 * K2 + d1 * K + d0;
    Biquad q;
    q.b0 = (n2 * K2 + n1 * K + n0) / a0;
    q.b1 = (2.0 * n0 - 2.0 * n2 * K2) / a0;
    q.b2 = (n2 * K2 - n1 * K + n0) / a0;
    q.a1 = (2.0 * d0 - 2.0 * d2 * K2) / a0;
    q.a2 = (d2 * K2 - d1 * K + d0) / a0;
    return q;
  }
};

struct FlickerOptions {
  double settle_s = 5.0;          // initial filter transient excluded from classification
  double observation_s = 600.0;   // Pst block length
  bool short_observation = false; // permits observation blocks from 60 s

  void validate() const {
    require(settle_s >= 0.0 && std::isfinite(settle_s), ErrorCode::InvalidSpec, "settle time must be >= 0");
    const double min_obs = short_observation ? 60.0 : 600.0;
    require(observation_s >= min_obs, ErrorCode::InvalidSpec,
            short_observation ? "flicker observation must be at least 60 s"
                              : "flicker observation must be at least 600 s (use the short flag for >= 60 s)");
  }
};

inline constexpr double kFlickerMinRate = 2000.0;

class Flickermeter {
 public:
  explicit Flickermeter(double rate, double f_c = 50.0) : rate_(rate), f_c_(f_c) {
    require(rate >= kFlickerMinRate, ErrorCode::InvalidSpec, "flickermeter needs a sampling rate of at least 2 kHz");
    require(f_c > 0.0 && f_c < rate / 4.0, ErrorCode::InvalidSpec, "flickermeter needs a valid f_c");
    const double wh = kTwoPi * 0.05;
    highpass_ = Biquad::bilinear(0.0, 1.0, 0.0, 0.0, 1.0, wh, rate);
    const double wc = kTwoPi * 35.0;
    for (int k = 0; k < 3; ++k) {
      const double phi = kPi * (2.0 * k + 1.0) / 12.0;
      chain_.push_back(Biquad::bilinear(0.0, 0.0, wc * wc, 1.0, 2.0 * std::cos(phi) * wc, wc * wc, rate));
    }
    constexpr double k = 1.74802;
    const double lambda = kTwoPi * 4.05981;
    const double w1 = kTwoPi * 9.15494, w2 = kTwoPi * 2.27979, w3 = kTwoPi * 1.22535, w4 = kTwoPi * 21.9;
    chain_.push_back(Biquad::bilinear(k * w1 / w2, k * w1, 0.0, 1.0, 2.0 * lambda, w1 * w1, rate));
    chain_.push_back(Biquad::bilinear(0.0, 0.0, 1.0, 1.0 / (w3 * w4), 1.0 / w3 + 1.0 / w4, 1.0, rate));
    constexpr double tau = 0.3;
    smoother_ = Biquad::bilinear(0.0, 0.0, 1.0, 0.0, tau, 1.0, rate);

    constexpr double f_ref = 8.8, d_ref = 0.0025;
    std::complex<double> h = highpass_.response(f_ref, rate);
    for (const auto& q : chain_) h *= q.response(f_ref, rate);
    const double r = std::abs(smoother_.response(2.0 * f_ref, rate));
    gain_ = 2.0 / (d_ref * d_ref * std::norm(h) * (1.0 + r));
    half_cycle_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate / (2.0 * f_c))));
    ref_alpha_ = 1.0 - std::exp(-(static_cast<double>(half_cycle_) / rate) / 60.0);
  }

  double rate() const { return rate_; }
  double gain() const { return gain_; }

  /// Instantaneous flicker sensation, one value per input sample.
  std::vector<double> instantaneous(std::span<const double> u) {
    std::vector<double> out;
    out.reserve(u.size());
    std::size_t k = 0;
    const std::size_t n = u.size();
    while (k < n) {
      const std::size_t end = std::min(n, k + half_cycle_);
      double ss = 0.0;
      for (std::size_t j = k; j < end; ++j) ss += u[j] * u[j];
      const double hc_rms = std::sqrt(ss / static_cast<double>(end - k));
      if (!primed_) {
        require(hc_rms > 0.0, ErrorCode::Validation, "flicker input starts with a zero half cycle");
        ref_rms_ = hc_rms;
        highpass_.settle_to(1.0);
        primed_ = true;
      } else {
        ref_rms_ += ref_alpha_ * (hc_rms - ref_rms_);
      }
      require(ref_rms_ > 0.0, ErrorCode::Validation, "flicker reference level collapsed to zero");
      const double inv = 1.0 / ref_rms_;
      for (std::size_t j = k; j < end; ++j) {
        const double un = u[j] * inv;
        double y = highpass_(un * un);
        for (auto& q : chain_) y = q(y);
        out.push_back(gain_ * smoother_(y * y));
      }
      k = end;
    }
    return out;
  }

 private:
  double rate_, f_c_;
  Biquad highpass_, smoother_;
  std::vector<Biquad> chain_;
  double gain_ = 1.0;
  std::size_t half_cycle_ = 1;
  double ref_alpha_ = 0.0;
  double ref_rms_ = 0.0;
  bool primed_ = false;
};

/// Cumulative probability classifier over logarithmic level bins.
class FlickerClassifier {
 public:
  static constexpr std::size_t kBins = 10000;
  static constexpr double kLow = 1e-6, kHigh = 1e4;

  void add(double p) {
    ++count_;
    if (!(p > kLow)) {
      ++under_;
      return;
    }
    auto b = static_cast<std::size_t>((std::log(p) - log_low_) / log_step_);
    bins_[std::min(b, kBins - 1)] += 1;
  }

  void add(std::span<const double> ps) {
    for (double p : ps) add(p);
  }

  std::size_t count() const { return count_; }

  /// Level exceeded during pct % of the samples.
  double percentile(double pct) const {
    require(count_ > 0, ErrorCode::Validation, "classifier is empty");
    const double target = pct / 100.0 * static_cast<double>(count_);
    double above = 0.0;
    for (std::size_t b = kBins; b-- > 0;) {
      const double c = static_cast<double>(bins_[b]);
      if (c > 0.0 && above + c >= target) {
        const double frac = (target - above) / c;
        const double hi = log_low_ + static_cast<double>(b + 1) * log_step_;
        return std::exp(hi - frac * log_step_);
      }
      above += c;
    }
    return 0.0;
  }

  double pst() const {
    auto P = [&](double x) { return percentile(x); };
    const double p01 = P(0.1);
    const double p1s = (P(0.7) + P(1.0) + P(1.5)) / 3.0;
    const double p3s = (P(2.2) + P(3.0) + P(4.0)) / 3.0;
    const double p10s = (P(6.0) + P(8.0) + P(10.0) + P(13.0) + P(17.0)) / 5.0;
    const double p50s = (P(30.0) + P(50.0) + P(80.0)) / 3.0;
    return std::sqrt(0.0314 * p01 + 0.0525 * p1s + 0.0657 * p3s + 0.28 * p10s + 0.08 * p50s);
  }

 private:
  std::vector<std::uint32_t> bins_ = std::vector<std::uint32_t>(kBins, 0);
  std::size_t count_ = 0, under_ = 0;
  double log_low_ = std::log(kLow);
  double log_step_ = (std::log(kHigh) - std::log(kLow)) / static_cast<double>(kBins);
};

inline double pst_from_pinst(std::span<const double> pinst) {
  FlickerClassifier c;
  c.add(pinst);
  return c.pst();
}

/// Pst of one observation: everything after the settle interval is classified.
inline double flicker_pst(std::span<const double> u, double rate, const FlickerOptions& opt = {},
                          double f_c = 50.0) {
  opt.validate();
  require(rate >= kFlickerMinRate, ErrorCode::InvalidSpec, "flickermeter needs a sampling rate of at least 2 kHz");
  const double observed = static_cast<double>(u.size()) / rate - opt.settle_s;
  const double min_obs = opt.short_observation ? 60.0 : 600.0;
  require(observed >= min_obs - 0.5 / rate, ErrorCode::Validation,
          "trace too short for Pst: " + std::to_string(observed) + " s observed after settling, need " +
              std::to_string(min_obs) + " s");
  Flickermeter meter(rate, f_c);
  const auto pinst = meter.instantaneous(u);
  const auto skip = static_cast<std::size_t>(std::llround(opt.settle_s * rate));
  return pst_from_pinst(std::span<const double>(pinst).subspan(skip));
}

/// Cube-mean of twelve consecutive Pst values.
inline double flicker_plt(std::span<const double> pst) {
  require(pst.size() == 12, ErrorCode::Validation, "Plt needs exactly 12 Pst values");
  double s = 0.0;
  for (double p : pst) {
    require(p >= 0.0 && std::isfinite(p), ErrorCode::InvalidSpec, "Pst values must be non-negative");
    s += p * p * p;
  }
  return std::cbrt(s / 12.0);
}

}  // namespace pqtwin
