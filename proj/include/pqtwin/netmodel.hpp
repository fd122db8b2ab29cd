#pragma once

// Radial grid model: six R-L sections per conductor (L1, L2, L3, N) arranged as
//
//   P1 --I-- P2 --II-- P3 --III-- P4 --IV-- P5
//                       \ (branch)
//                        --V--- P6 --VI-- P7
//
// P1 is the supply node. Section values are in milliohms and microhenries; shunt
// capacitance is in nanofarads.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pqtwin/error.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

using Complex = std::complex<double>;

struct ConductorParams {
  double R_mOhm = 0.0;
  double L_uH = 0.0;
};

struct Section {
  SectionId id = SectionId::I;
  std::array<ConductorParams, kConductors> conductors{};

  const ConductorParams& operator[](Conductor c) const { return conductors[index(c)]; }
  ConductorParams& operator[](Conductor c) { return conductors[index(c)]; }
};

/// Frequency-dependent resistance R(f) = R_dc * (1 + (f/f_knee)^alpha). Off by default.
struct ParasiticModel {
  bool enabled = false;
  double f_knee_hz = 20e3;
  double alpha = 0.5;
};

struct GridModel {
  std::array<Section, kSections> sections{};
  // Phase-to-neutral capacitance at each tap, applied to all three phases.
  std::array<double, kTaps> shunt_nF{};
  ParasiticModel parasitic;

  const Section& section(SectionId id) const { return sections[index(id)]; }
  Section& section(SectionId id) { return sections[index(id)]; }

  void validate() const {
    for (std::size_t s = 0; s < kSections; ++s) {
      require(sections[s].id == static_cast<SectionId>(s), ErrorCode::Validation,
              "section ids must be unique and ordered I..VI");
      for (const auto& c : sections[s].conductors)
        require(c.R_mOhm >= 0.0 && c.L_uH >= 0.0 && std::isfinite(c.R_mOhm) && std::isfinite(c.L_uH),
                ErrorCode::InvalidSpec,
                "section " + to_string(sections[s].id) + " has negative or non-finite R/L");
    }
    for (double c : shunt_nF)
      require(c >= 0.0 && std::isfinite(c), ErrorCode::InvalidSpec, "negative shunt capacitance");
    require(shunt_nF[index(Tap::P1)] == 0.0, ErrorCode::Validation,
            "P1 carries the ideal supply; shunt capacitance there has no effect on the grid");
  }
};

struct ImpedancePoint {
  double f_hz = 0.0;
  double R_mOhm = 0.0;
  double X_mOhm = 0.0;
};

enum class SweepSpacing { Log, Linear };

// ---- topology -------------------------------------------------------------

/// Upstream end of each section.
constexpr Tap section_from(SectionId s) {
  constexpr std::array<Tap, kSections> from{Tap::P1, Tap::P2, Tap::P3, Tap::P4, Tap::P3, Tap::P6};
  return from[index(s)];
}

/// Downstream end of each section.
constexpr Tap section_to(SectionId s) {
  constexpr std::array<Tap, kSections> to{Tap::P2, Tap::P3, Tap::P4, Tap::P5, Tap::P6, Tap::P7};
  return to[index(s)];
}

/// Sections on the unique path from P1 to the tap, root first.
inline std::vector<SectionId> path_to(Tap tap) {
  std::vector<SectionId> path;
  Tap cur = tap;
  while (cur != Tap::P1) {
    bool found = false;
    for (SectionId s : kAllSections) {
      if (section_to(s) == cur) {
        path.insert(path.begin(), s);
        cur = section_from(s);
        found = true;
        break;
      }
    }
    if (!found) fail(ErrorCode::UnknownName, "tap " + to_string(tap) + " is not in the tree");
  }
  return path;
}

// ---- catalogued models ------------------------------------------------------

inline GridModel nominal_model() {
  constexpr std::array<ConductorParams, kSections> table{{
      {150.0, 100.0}, {150.0, 100.0}, {100.0, 220.0}, {50.0, 6.8}, {100.0, 220.0}, {50.0, 6.8}}};
  GridModel m;
  for (std::size_t s = 0; s < kSections; ++s) {
    m.sections[s].id = static_cast<SectionId>(s);
    m.sections[s].conductors.fill(table[s]);
  }
  return m;
}

inline constexpr double kMeasurementFrequency = 50.0;

/// Bridge readings at 50 Hz, [section][conductor] in milliohms.
inline constexpr std::array<std::array<double, kConductors>, kSections> kMeasuredR{{
    {172.6, 179.1, 176.3, 181.5},
    {163.4, 164.7, 169.4, 164.3},
    {126.8, 125.5, 125.7, 129.2},
    {61.0, 60.8, 62.6, 61.1},
    {129.6, 131.2, 130.7, 127.3},
    {59.8, 60.9, 61.3, 62.5},
}};

inline constexpr std::array<std::array<double, kConductors>, kSections> kMeasuredX{{
    {32.9, 33.4, 33.6, 33.5},
    {33.7, 33.3, 33.3, 33.1},
    {68.8, 68.9, 67.5, 68.8},
    {2.7, 2.7, 2.7, 2.6},
    {69.2, 68.9, 67.7, 68.2},
    {2.7, 2.8, 2.7, 2.6},
}};

/// Inductance (uH) whose reactance at f equals X (mOhm).
inline double inductance_from_reactance(double X_mOhm, double f_hz) {
  return X_mOhm * 1e3 / (kTwoPi * f_hz);
}

inline GridModel measured_model() {
  GridModel m;
  for (std::size_t s = 0; s < kSections; ++s) {
    m.sections[s].id = static_cast<SectionId>(s);
    for (std::size_t c = 0; c < kConductors; ++c)
      m.sections[s].conductors[c] = {kMeasuredR[s][c],
                                     inductance_from_reactance(kMeasuredX[s][c], kMeasurementFrequency)};
  }
  return m;
}

// ---- impedance --------------------------------------------------------------

inline double resistance_at(double R_dc, double f_hz, const ParasiticModel& p) {
  if (!p.enabled || f_hz <= 0.0) return R_dc;
  return R_dc * (1.0 + std::pow(f_hz / p.f_knee_hz, p.alpha));
}

/// Series impedance of one conductor of a section, milliohms.
inline Complex section_impedance(const Section& sec, Conductor c, double f_hz,
                                 const ParasiticModel& parasitic = {}) {
  require(f_hz >= 0.0 && std::isfinite(f_hz), ErrorCode::InvalidSpec, "frequency must be >= 0");
  require(index(c) < kConductors, ErrorCode::UnknownName, "unknown conductor id");
  const auto& p = sec[c];
  const double X = kTwoPi * f_hz * p.L_uH * 1e-3;  // uH * Hz -> mOhm
  return {resistance_at(p.R_mOhm, f_hz, parasitic), X};
}

inline Complex path_impedance(const GridModel& model, Tap tap, Conductor c, double f_hz) {
  require(index(tap) < kTaps, ErrorCode::UnknownName, "unknown tap");
  Complex z{0.0, 0.0};
  for (SectionId s : path_to(tap)) z += section_impedance(model.section(s), c, f_hz, model.parasitic);
  return z;
}

inline std::vector<double> sweep_frequencies(double f_min, double f_max, std::size_t n,
                                             SweepSpacing spacing) {
  require(std::isfinite(f_min) && std::isfinite(f_max) && f_min > 0.0 && f_min < f_max,
          ErrorCode::InvalidSpec, "sweep requires 0 < f_min < f_max");
  require(n >= 2, ErrorCode::InvalidSpec, "sweep requires at least 2 points");
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(n - 1);
    f[k] = spacing == SweepSpacing::Log ? f_min * std::pow(f_max / f_min, u)
                                        : f_min + (f_max - f_min) * u;
  }
  f.back() = f_max;
  return f;
}

inline std::vector<ImpedancePoint> frequency_sweep(const GridModel& model, Tap tap, Conductor c,
                                                   double f_min = 20.0, double f_max = 200e3,
                                                   std::size_t n_points = 100,
                                                   SweepSpacing spacing = SweepSpacing::Log) {
  std::vector<ImpedancePoint> out;
  for (double f : sweep_frequencies(f_min, f_max, n_points, spacing)) {
    const Complex z = path_impedance(model, tap, c, f);
    out.push_back({f, z.real(), z.imag()});
  }
  return out;
}

inline GridModel add_shunt_capacitance(GridModel model, Tap tap, double C_nF) {
  require(index(tap) < kTaps, ErrorCode::UnknownName, "unknown tap");
  require(C_nF >= 0.0 && std::isfinite(C_nF), ErrorCode::InvalidSpec,
          "capacitance must be non-negative");
  require(tap != Tap::P1 || C_nF == 0.0, ErrorCode::Validation,
          "P1 carries the ideal supply; attach shunt capacitance at P2-P7");
  model.shunt_nF[index(tap)] += C_nF;
  return model;
}

/// Impedance between a phase conductor and the neutral at a tap, looking into the
/// grid with the supply short-circuited. Includes shunt capacitances. Milliohms.
inline Complex driving_point_impedance(const GridModel& model, Tap tap, Phase phase, double f_hz) {
  require(f_hz > 0.0, ErrorCode::InvalidSpec, "driving-point impedance requires f > 0");
  if (tap == Tap::P1) return {0.0, 0.0};
  // Unknowns: taps P2..P7 x 4 conductors; P1 nodes are grounded through the shorted source.
  constexpr std::size_t n = (kTaps - 1) * kConductors;
  auto node = [](Tap t, Conductor c) -> int {
    return t == Tap::P1 ? -1 : static_cast<int>((index(t) - 1) * kConductors + index(c));
  };
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  auto stamp = [&](int a, int b, Complex y) {
    if (a >= 0) Y(a, a) += y;
    if (b >= 0) Y(b, b) += y;
    if (a >= 0 && b >= 0) {
      Y(a, b) -= y;
      Y(b, a) -= y;
    }
  };
  for (SectionId s : kAllSections) {
    for (Conductor c : kAllConductors) {
      const Complex z = section_impedance(model.section(s), c, f_hz, model.parasitic) * 1e-3;
      require(std::abs(z) > 0.0, ErrorCode::Configuration,
              "section " + to_string(s) + " conductor " + to_string(c) + " has zero impedance");
      stamp(node(section_from(s), c), node(section_to(s), c), 1.0 / z);
    }
  }
  for (Tap t : kAllTaps) {
    const double C = model.shunt_nF[index(t)] * 1e-9;
    if (C <= 0.0 || t == Tap::P1) continue;
    for (Phase p : kAllPhases)
      stamp(node(t, conductor_of(p)), node(t, Conductor::N), Complex{0.0, kTwoPi * f_hz * C});
  }
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);
  const int a = node(tap, conductor_of(phase));
  const int b = node(tap, Conductor::N);
  inj(a) = 1.0;
  inj(b) = -1.0;
  const Eigen::VectorXcd v = Y.fullPivLu().solve(inj);
  return (v(a) - v(b)) * 1e3;
}

}  // namespace pqtwin
