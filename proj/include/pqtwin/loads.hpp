#pragma once

// Load elements, the preset catalogue, and switching schedules for the control section.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pqtwin/error.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

using Complex = std::complex<double>;

struct Resistive {
  double R_ohm = 0.0;
};
struct Capacitive {
  double C_uF = 0.0;
};
struct Inductive {
  double L_H = 0.0;
  double R_series_ohm = 0.0;
};
/// R, L and C in series. C_uF = 0 means no capacitor in the string.
struct SeriesRLC {
  double R_ohm = 0.0;
  double L_H = 0.0;
  double C_uF = 0.0;
};
/// R, L and C in parallel. A zero value removes that branch.
struct ParallelRLC {
  double R_ohm = 0.0;
  double L_H = 0.0;
  double C_uF = 0.0;
};
/// Four-diode full-wave bridge feeding R_dc || C_dc.
struct GraetzRectifier {
  double R_dc_ohm = 100.0;
  double C_dc_uF = 470.0;
  double diode_drop_V = 0.7;
};

using LoadElement =
    std::variant<Resistive, Capacitive, Inductive, SeriesRLC, ParallelRLC, GraetzRectifier>;

inline bool is_linear(const LoadElement& e) { return !std::holds_alternative<GraetzRectifier>(e); }

inline void validate(const LoadElement& e) {
  auto nonneg = [](double v, const char* what) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidSpec,
            std::string(what) + " must be non-negative");
  };
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Resistive>) {
          require(x.R_ohm > 0.0 && std::isfinite(x.R_ohm), ErrorCode::InvalidSpec,
                  "resistive load needs R > 0");
        } else if constexpr (std::is_same_v<T, Capacitive>) {
          require(x.C_uF > 0.0 && std::isfinite(x.C_uF), ErrorCode::InvalidSpec,
                  "capacitive load needs C > 0");
        } else if constexpr (std::is_same_v<T, Inductive>) {
          require(x.L_H > 0.0 && std::isfinite(x.L_H), ErrorCode::InvalidSpec,
                  "inductive load needs L > 0");
          nonneg(x.R_series_ohm, "R_series");
        } else if constexpr (std::is_same_v<T, SeriesRLC>) {
          nonneg(x.R_ohm, "R");
          nonneg(x.L_H, "L");
          nonneg(x.C_uF, "C");
          require(x.R_ohm > 0.0 || x.L_H > 0.0 || x.C_uF > 0.0, ErrorCode::InvalidSpec,
                  "series RLC with all values zero is a short circuit");
        } else if constexpr (std::is_same_v<T, ParallelRLC>) {
          nonneg(x.R_ohm, "R");
          nonneg(x.L_H, "L");
          nonneg(x.C_uF, "C");
          require(x.R_ohm > 0.0 || x.L_H > 0.0 || x.C_uF > 0.0, ErrorCode::InvalidSpec,
                  "parallel RLC needs at least one branch");
        } else {
          require(x.R_dc_ohm > 0.0 && std::isfinite(x.R_dc_ohm), ErrorCode::InvalidSpec,
                  "rectifier needs R_dc > 0");
          nonneg(x.C_dc_uF, "C_dc");
          nonneg(x.diode_drop_V, "diode drop");
        }
      },
      e);
}

inline Resistive resistive_from_power(double P_W, double U_nom_V) {
  require(P_W > 0.0 && U_nom_V > 0.0, ErrorCode::InvalidSpec,
          "power and nominal voltage must be positive");
  return Resistive{U_nom_V * U_nom_V / P_W};
}

/// One-port impedance in ohms at f. Linear elements only.
inline Complex element_impedance(const LoadElement& e, double f_hz) {
  require(is_linear(e), ErrorCode::NonlinearElement,
          "rectifier has no small-signal impedance; use the transient solver");
  require(std::isfinite(f_hz) && f_hz >= 0.0, ErrorCode::InvalidSpec, "frequency must be >= 0");
  validate(e);
  const double w = kTwoPi * f_hz;
  auto cap = [&](double C_uF) -> Complex {
    require(f_hz > 0.0, ErrorCode::InvalidSpec, "capacitor impedance is undefined at f = 0");
    return {0.0, -1.0 / (w * C_uF * 1e-6)};
  };
  return std::visit(
      [&](const auto& x) -> Complex {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Resistive>) {
          return {x.R_ohm, 0.0};
        } else if constexpr (std::is_same_v<T, Capacitive>) {
          return cap(x.C_uF);
        } else if constexpr (std::is_same_v<T, Inductive>) {
          return {x.R_series_ohm, w * x.L_H};
        } else if constexpr (std::is_same_v<T, SeriesRLC>) {
          Complex z{x.R_ohm, w * x.L_H};
          if (x.C_uF > 0.0) z += cap(x.C_uF);
          return z;
        } else if constexpr (std::is_same_v<T, ParallelRLC>) {
          Complex y{0.0, 0.0};
          if (x.R_ohm > 0.0) y += 1.0 / x.R_ohm;
          if (x.C_uF > 0.0) {
            require(f_hz > 0.0, ErrorCode::InvalidSpec, "capacitor impedance is undefined at f = 0");
            y += Complex{0.0, w * x.C_uF * 1e-6};
          }
          if (x.L_H > 0.0) {
            if (f_hz == 0.0) return {0.0, 0.0};
            y += 1.0 / Complex{0.0, w * x.L_H};
          }
          return 1.0 / y;
        } else {
          return {};  // unreachable: rejected above
        }
      },
      e);
}

/// Q = U^2 * |Im(1/Z)| for the element connected across U.
inline double rated_reactive_power(const LoadElement& e, double U_V, double f_hz) {
  require(U_V > 0.0, ErrorCode::InvalidSpec, "voltage must be positive");
  const Complex z = element_impedance(e, f_hz);
  return U_V * U_V * std::abs((1.0 / z).imag());
}

// ---- presets ---------------------------------------------------------------

inline constexpr double kPresetNominalVoltage = 230.0;

struct LoadPreset {
  std::string name;
  LoadElement element;
  std::string rated;
};

inline std::vector<LoadPreset> preset_catalog() {
  return {
      {"heater750", resistive_from_power(750.0, kPresetNominalVoltage), "0.75 kW convection heater at 230 V"},
      {"heater1250", resistive_from_power(1250.0, kPresetNominalVoltage), "1.25 kW convection heater at 230 V"},
      {"heater2000", resistive_from_power(2000.0, kPresetNominalVoltage), "2 kW convection heater at 230 V"},
      {"cap9u6", Capacitive{9.6}, "9.6 uF capacitor (about 0.16 kvar at 230 V / 50 Hz)"},
      {"choke1123m", Inductive{1.123, 0.0}, "1.123 H choke (about 0.15 kvar at 230 V / 50 Hz)"},
      {"graetz_default", GraetzRectifier{}, "diode bridge, 100 ohm || 470 uF DC side, 0.7 V per diode"},
  };
}

inline LoadPreset preset(std::string_view name) {
  auto catalog = preset_catalog();
  auto it = std::find_if(catalog.begin(), catalog.end(),
                         [&](const LoadPreset& p) { return p.name == name; });
  if (it != catalog.end()) return *it;
  std::string names;
  for (const auto& p : catalog) names += (names.empty() ? "" : ", ") + p.name;
  fail(ErrorCode::UnknownName, "unknown preset '" + std::string(name) + "' (catalog: " + names + ")");
}

// ---- switching ---------------------------------------------------------------

struct AlwaysOn {};
struct PeriodicSquare {
  double f_sw = 1.0;
  double duty = 0.5;
  double phase_offset_s = 0.0;
};
/// Alternating transitions starting from initially_on: times[0] flips the state, etc.
struct EventList {
  std::vector<double> times;
  bool initially_on = false;
};

enum class SwitchSync { Asynchronous, ZeroCross };

struct SwitchSchedule {
  std::variant<AlwaysOn, PeriodicSquare, EventList> mode = AlwaysOn{};
  SwitchSync sync = SwitchSync::Asynchronous;
  double max_switching_hz = 5000.0;

  void validate() const {
    if (const auto* p = std::get_if<PeriodicSquare>(&mode)) {
      require(p->f_sw > 0.0 && std::isfinite(p->f_sw), ErrorCode::InvalidSpec,
              "switching frequency must be positive");
      require(p->f_sw <= max_switching_hz, ErrorCode::InvalidSpec,
              "switching frequency exceeds the configured cap");
      require(p->duty >= 0.0 && p->duty <= 1.0, ErrorCode::InvalidSpec, "duty must be in [0, 1]");
    } else if (const auto* ev = std::get_if<EventList>(&mode)) {
      for (std::size_t k = 0; k < ev->times.size(); ++k) {
        require(std::isfinite(ev->times[k]) && ev->times[k] >= 0.0, ErrorCode::InvalidSpec,
                "event times must be non-negative");
        require(k == 0 || ev->times[k] > ev->times[k - 1], ErrorCode::InvalidSpec,
                "event times must be strictly increasing");
      }
    }
  }
};

/// State requested by the schedule at time t, before any zero-cross deferral.
inline bool commanded_state(const SwitchSchedule& s, double t) {
  return std::visit(
      [&](const auto& m) -> bool {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AlwaysOn>) {
          return true;
        } else if constexpr (std::is_same_v<T, PeriodicSquare>) {
          const double cycles = (t - m.phase_offset_s) * m.f_sw;
          return cycles - std::floor(cycles) < m.duty;
        } else {
          const auto passed = std::upper_bound(m.times.begin(), m.times.end(), t) - m.times.begin();
          return (passed % 2 == 0) ? m.initially_on : !m.initially_on;
        }
      },
      s.mode);
}

/// Switch state at t. In zero-cross mode every commanded transition is deferred to the
/// next reference zero crossing, i.e. the state is the command at the latest crossing <= t.
inline bool switch_state(const SwitchSchedule& s, double t, std::span<const double> zero_cross_times = {}) {
  if (std::holds_alternative<AlwaysOn>(s.mode)) return true;
  if (s.sync == SwitchSync::Asynchronous) return commanded_state(s, t);
  auto it = std::upper_bound(zero_cross_times.begin(), zero_cross_times.end(), t);
  if (it == zero_cross_times.begin()) return false;
  return commanded_state(s, *(it - 1));
}

/// Zero crossings of a sampled reference, linearly interpolated between samples.
inline std::vector<double> zero_crossings(std::span<const double> x, double rate) {
  std::vector<double> z;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const double a = x[k], b = x[k + 1];
    if (a == 0.0) {
      if (k == 0 || x[k - 1] != 0.0) z.push_back(static_cast<double>(k) / rate);
    } else if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) {
      z.push_back((static_cast<double>(k) + a / (a - b)) / rate);
    }
  }
  if (!x.empty() && x.back() == 0.0 && (x.size() == 1 || x[x.size() - 2] != 0.0))
    z.push_back(static_cast<double>(x.size() - 1) / rate);
  return z;
}

struct LoadAttachment {
  Tap tap = Tap::P2;
  Phase phase = Phase::L1;
  LoadElement element = Resistive{1.0};
  SwitchSchedule schedule;

  void validate() const {
    require(tap != Tap::P1, ErrorCode::Validation, "loads attach at P2-P7; P1 carries the supply");
    pqtwin::validate(element);
    schedule.validate();
  }
};

}  // namespace pqtwin
