#pragma once

// Supply waveform synthesis: pure sine, clipped sine, harmonic mixes and
// amplitude-modulated variants, as sampled single- or three-phase signals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pqtwin/error.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

struct SamplingSpec {
  double rate = 10000.0;  // samples per second; 200 samples per 50 Hz cycle
  double duration = 1.0;  // seconds

  void validate() const {
    require(std::isfinite(rate) && rate > 0.0, ErrorCode::InvalidSpec,
            "sampling rate must be positive");
    require(std::isfinite(duration) && duration > 0.0, ErrorCode::InvalidSpec,
            "duration must be positive");
    const double n = rate * duration;
    require(std::abs(n - std::round(n)) <= 1e-6 * std::max(1.0, n), ErrorCode::InvalidSpec,
            "rate*duration must be an integer sample count");
  }

  std::size_t sample_count() const {
    validate();
    return static_cast<std::size_t>(std::llround(rate * duration));
  }
};

struct PureSine {
  double u_rms = 230.0;
  double f_c = 50.0;
  double phase = 0.0;  // angle of L1, radians
  // Displacement of each phase relative to L1, applied to the fundamental.
  std::array<double, kPhases> phase_offsets{0.0, -kTwoPi / 3.0, kTwoPi / 3.0};
};

struct ClippedSine {
  PureSine base;
  double clip_ratio = 1.0;  // fraction of the unclipped peak where the top is flattened
};

struct HarmonicComponent {
  double order = 1.0;      // multiple of f_c; fractional for sub/interharmonics
  double magnitude = 0.0;  // volts rms
  double phase = 0.0;      // radians
};

struct HarmonicMix {
  double f_c = 50.0;
  std::vector<HarmonicComponent> components;
};

enum class ModulationShape { Sinusoidal, Rectangular };

/// Envelope modulation. depth is dU/U, peak-to-peak of the envelope relative to nominal.
struct Modulation {
  ModulationShape shape = ModulationShape::Sinusoidal;
  double depth = 0.0;
  double f_m = 8.8;
  double duty = 0.5;  // rectangular only: fraction of each period at (1 + depth/2)
};

struct SupplySpec {
  std::variant<PureSine, ClippedSine, HarmonicMix> carrier = PureSine{};
  std::optional<Modulation> modulation;
  double max_component_hz = 2400.0;

  double fundamental() const {
    return std::visit(
        [](const auto& c) -> double {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, ClippedSine>)
            return c.base.f_c;
          else
            return c.f_c;
        },
        carrier);
  }
};

struct Waveform {
  double rate = 0.0;
  std::vector<std::vector<double>> channels;

  std::size_t size() const { return channels.empty() ? 0 : channels.front().size(); }
  std::size_t channel_count() const { return channels.size(); }
  std::span<const double> channel(std::size_t i) const { return channels.at(i); }
  double time(std::size_t n) const { return static_cast<double>(n) / rate; }
  double duration() const { return static_cast<double>(size()) / rate; }

  void validate() const {
    require(rate > 0.0 && std::isfinite(rate), ErrorCode::InvalidSpec, "waveform rate must be positive");
    for (const auto& ch : channels) {
      require(ch.size() == size(), ErrorCode::InvalidSpec, "waveform channels differ in length");
      for (double v : ch)
        require(std::isfinite(v), ErrorCode::InvalidSpec, "waveform contains non-finite samples");
    }
  }
};

namespace detail {

inline void check_sine(const PureSine& s, double rate) {
  require(std::isfinite(s.f_c) && s.f_c > 0.0, ErrorCode::InvalidSpec, "f_c must be positive");
  require(std::isfinite(s.u_rms) && s.u_rms >= 0.0, ErrorCode::InvalidSpec,
          "u_rms must be non-negative");
  require(s.f_c <= rate / 2.0, ErrorCode::Aliasing, "f_c exceeds Nyquist frequency");
}

inline void check_mix(const HarmonicMix& m, double rate, double max_component_hz) {
  require(std::isfinite(m.f_c) && m.f_c > 0.0, ErrorCode::InvalidSpec, "f_c must be positive");
  require(!m.components.empty(), ErrorCode::InvalidSpec, "harmonic mix has no components");
  for (const auto& c : m.components) {
    require(c.order > 0.0 && std::isfinite(c.order), ErrorCode::InvalidSpec,
            "harmonic order must be positive");
    require(c.magnitude >= 0.0, ErrorCode::InvalidSpec, "harmonic magnitude must be non-negative");
    const double f = c.order * m.f_c;
    require(f < rate / 2.0, ErrorCode::Aliasing,
            "component at " + std::to_string(f) + " Hz is at or above Nyquist");
    require(f <= max_component_hz, ErrorCode::InvalidSpec,
            "component at " + std::to_string(f) + " Hz exceeds the configured maximum");
  }
}

// Sum of components for one channel; shift is the fundamental displacement of the channel.
inline std::vector<double> mix_channel(const HarmonicMix& m, std::size_t n, double rate,
                                       double shift) {
  std::vector<double> out(n, 0.0);
  for (const auto& c : m.components) {
    const double w = kTwoPi * c.order * m.f_c;
    const double amp = std::sqrt(2.0) * c.magnitude;
    const double phi = c.phase + c.order * shift;
    for (std::size_t k = 0; k < n; ++k)
      out[k] += amp * std::sin(w * (static_cast<double>(k) / rate) + phi);
  }
  return out;
}

inline std::vector<double> sine_channel(const PureSine& s, std::size_t n, double rate,
                                        double phase) {
  std::vector<double> out(n);
  const double amp = std::sqrt(2.0) * s.u_rms;
  const double w = kTwoPi * s.f_c;
  for (std::size_t k = 0; k < n; ++k) out[k] = amp * std::sin(w * (static_cast<double>(k) / rate) + phase);
  return out;
}

inline void clip_channel(std::vector<double>& ch, double level) {
  for (double& v : ch) v = std::clamp(v, -level, level);
}

}  // namespace detail

/// u(t) = sqrt(2) * u_rms * sin(2*pi*f_c*t + phase), single channel.
inline Waveform synth_sine(const PureSine& spec, const SamplingSpec& s) {
  const std::size_t n = s.sample_count();
  detail::check_sine(spec, s.rate);
  return Waveform{s.rate, {detail::sine_channel(spec, n, s.rate, spec.phase)}};
}

/// Single-channel sum of sinusoids at order*f_c.
inline Waveform synth_harmonic_mix(const HarmonicMix& spec, const SamplingSpec& s,
                                   double max_component_hz = 2400.0) {
  const std::size_t n = s.sample_count();
  detail::check_mix(spec, s.rate, max_component_hz);
  return Waveform{s.rate, {detail::mix_channel(spec, n, s.rate, 0.0)}};
}

/// Limits samples to +-clip_ratio*peak. The peak defaults to the largest |sample|
/// of each channel; pass reference_peak to clip against a fixed unclipped peak.
inline Waveform clip_waveform(Waveform w, double clip_ratio,
                              std::optional<double> reference_peak = std::nullopt) {
  require(clip_ratio > 0.0 && clip_ratio <= 1.0, ErrorCode::InvalidSpec,
          "clip_ratio must be in (0, 1]");
  if (reference_peak) require(*reference_peak >= 0.0, ErrorCode::InvalidSpec, "negative peak");
  if (clip_ratio == 1.0 && !reference_peak) return w;
  for (auto& ch : w.channels) {
    double peak = 0.0;
    if (reference_peak) {
      peak = *reference_peak;
    } else {
      for (double v : ch) peak = std::max(peak, std::abs(v));
    }
    detail::clip_channel(ch, clip_ratio * peak);
  }
  return w;
}

inline double modulation_factor(const Modulation& m, double t, double half_sample) {
  if (m.shape == ModulationShape::Sinusoidal)
    return 1.0 + 0.5 * m.depth * std::sin(kTwoPi * m.f_m * t);
  // Edges land on the nearest sample: evaluate the square at the sample's midpoint.
  const double cycles = (t + half_sample) * m.f_m;
  const double frac = cycles - std::floor(cycles);
  return frac < m.duty ? 1.0 + 0.5 * m.depth : 1.0 - 0.5 * m.depth;
}

inline Waveform modulate_amplitude(Waveform base, const Modulation& m) {
  require(m.depth >= 0.0 && std::isfinite(m.depth), ErrorCode::InvalidSpec,
          "modulation depth must be non-negative");
  require(m.f_m > 0.0 && std::isfinite(m.f_m), ErrorCode::InvalidSpec,
          "modulation frequency must be positive");
  require(m.duty >= 0.0 && m.duty <= 1.0, ErrorCode::InvalidSpec, "duty must be in [0, 1]");
  require(m.f_m < base.rate / 2.0, ErrorCode::Aliasing,
          "modulation frequency at or above Nyquist");
  if (m.depth == 0.0) return base;
  const double half = 0.5 / base.rate;
  const std::size_t n = base.size();
  std::vector<double> env(n);
  for (std::size_t k = 0; k < n; ++k) env[k] = modulation_factor(m, base.time(k), half);
  for (auto& ch : base.channels)
    for (std::size_t k = 0; k < n; ++k) ch[k] *= env[k];
  return base;
}

inline Waveform modulate_amplitude(Waveform base, ModulationShape shape, double depth, double f_m,
                                   double duty = 0.5) {
  return modulate_amplitude(std::move(base), Modulation{shape, depth, f_m, duty});
}

/// Three channels L1, L2, L3; each phase is a time shift of L1 by its fundamental displacement.
inline Waveform synth_three_phase(const SupplySpec& spec, const SamplingSpec& s) {
  const std::size_t n = s.sample_count();
  Waveform w{s.rate, {}};
  w.channels.reserve(kPhases);

  if (const auto* sine = std::get_if<PureSine>(&spec.carrier)) {
    detail::check_sine(*sine, s.rate);
    require(sine->f_c <= spec.max_component_hz, ErrorCode::InvalidSpec,
            "f_c exceeds the configured maximum component frequency");
    for (std::size_t p = 0; p < kPhases; ++p)
      w.channels.push_back(detail::sine_channel(*sine, n, s.rate, sine->phase + sine->phase_offsets[p]));
  } else if (const auto* clipped = std::get_if<ClippedSine>(&spec.carrier)) {
    detail::check_sine(clipped->base, s.rate);
    require(clipped->clip_ratio > 0.0 && clipped->clip_ratio <= 1.0, ErrorCode::InvalidSpec,
            "clip_ratio must be in (0, 1]");
    const double level = clipped->clip_ratio * std::sqrt(2.0) * clipped->base.u_rms;
    for (std::size_t p = 0; p < kPhases; ++p) {
      auto ch = detail::sine_channel(clipped->base, n, s.rate,
                                     clipped->base.phase + clipped->base.phase_offsets[p]);
      detail::clip_channel(ch, level);
      w.channels.push_back(std::move(ch));
    }
  } else {
    const auto& mix = std::get<HarmonicMix>(spec.carrier);
    detail::check_mix(mix, s.rate, spec.max_component_hz);
    const std::array<double, kPhases> shifts{0.0, -kTwoPi / 3.0, kTwoPi / 3.0};
    for (std::size_t p = 0; p < kPhases; ++p)
      w.channels.push_back(detail::mix_channel(mix, n, s.rate, shifts[p]));
  }

  if (spec.modulation) w = modulate_amplitude(std::move(w), *spec.modulation);
  return w;
}

}  // namespace pqtwin
