// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "pqtwin/pqtwin.hpp"

using namespace pqtwin;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const char* id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s [%s] %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

constexpr double kRate = 10000.0;

Waveform supply_for(double seconds, const SupplySpec& spec = {}) {
  return synth_three_phase(spec, {kRate, seconds + 1.0 / kRate});
}

SimConfig config_for(double seconds) {
  SimConfig c;
  c.dt = 1.0 / kRate;
  c.t_end = seconds;
  return c;
}

double settled_rms(const std::vector<double>& x) {
  const std::size_t start = 1000;
  const std::size_t cycles = (x.size() - 1 - start) / 200;
  double s = 0.0;
  for (std::size_t k = start; k < start + cycles * 200; ++k) s += x[k] * x[k];
  return std::sqrt(s / static_cast<double>(cycles * 200));
}

std::vector<LoadAttachment> random_linear(std::mt19937& rng) {
  std::uniform_int_distribution<int> tap(1, 6), phase(0, 2), kind(0, 4), count(1, 5);
  std::uniform_real_distribution<double> R(5.0, 200.0), L(0.01, 1.2), C(2.0, 40.0);
  std::vector<LoadAttachment> a;
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    LoadElement e;
    switch (kind(rng)) {
      case 0: e = Resistive{R(rng)}; break;
      case 1: e = Inductive{L(rng), R(rng)}; break;
      case 2: e = Capacitive{C(rng)}; break;
      case 3: e = SeriesRLC{R(rng), L(rng), C(rng)}; break;
      default: e = ParallelRLC{R(rng), L(rng), C(rng)}; break;
    }
    a.push_back({static_cast<Tap>(tap(rng)), static_cast<Phase>(phase(rng)), e, {}});
  }
  return a;
}

// Single-phase 230 V / 50 Hz trace with amplitude modulation applied by the signal generator.
std::vector<double> modulated_trace(const Modulation& m, double seconds, double rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  Waveform w{rate, {std::vector<double>(n)}};
  for (std::size_t k = 0; k < n; ++k)
    w.channels[0][k] = 230.0 * std::sqrt(2.0) * std::sin(2 * M_PI * 50.0 * static_cast<double>(k) / rate);
  return std::move(modulate_amplitude(std::move(w), m).channels[0]);
}

// THDU and Pst per report line of one channel.
std::vector<std::pair<double, double>> report_values(const std::string& report, const std::string& channel) {
  std::vector<std::pair<double, double>> out;
  std::istringstream is(report);
  std::string line;
  auto field = [](const std::string& l, const std::string& key) -> double {
    const auto p = l.find(" " + key + "=");
    if (p == std::string::npos) return NAN;
    const auto v = l.substr(p + key.size() + 2, l.find(' ', p + 1) - p - key.size() - 2);
    return v == "NA" ? NAN : std::stod(v);
  };
  while (std::getline(is, line))
    if (line.rfind("channel=" + channel + " ", 0) == 0) out.emplace_back(field(line, "THDU"), field(line, "Pst"));
  return out;
}

}  // namespace

int main() {
  run("1", "nominal reactance regression", [] {
    const double expected[] = {31.4, 31.4, 69.1, 2.1, 69.1, 2.1};
    const auto m = nominal_model();
    double worst = 0.0;
    for (SectionId s : kAllSections)
      for (Conductor c : kAllConductors)
        worst = std::max(worst, std::abs(section_impedance(m.section(s), c, 50.0).imag() - expected[index(s)]));
    return Outcome{worst <= 0.05, fmt("max |X - reference| = %.4f mOhm (tol 0.05)", worst)};
  });

  run("2", "measured-model round-trip", [] {
    const auto m = measured_model();
    double worst = 0.0;
    for (SectionId s : kAllSections)
      for (Conductor c : kAllConductors)
        worst = std::max(worst, std::abs(section_impedance(m.section(s), c, 50.0).imag() - kMeasuredX[index(s)][index(c)]));
    const auto z = path_impedance(m, Tap::P5, Conductor::L1, 50.0);
    const bool ok = worst <= 0.05 && std::abs(z.real() - 523.8) <= 0.05 && std::abs(z.imag() - 138.1) <= 0.05;
    return Outcome{ok, fmt("24 entries max dev %.4f mOhm; chain L1 R = %.3f, X = %.3f mOhm", worst, z.real(), z.imag())};
  });

  run("3", "ideal sweep linearity", [] {
    const auto pts = frequency_sweep(nominal_model(), Tap::P5, Conductor::L1, 20.0, 200e3, 400, SweepSpacing::Log);
    const double ref = pts.front().X_mOhm / pts.front().f_hz;
    double worst = 0.0;
    for (const auto& p : pts) worst = std::max(worst, std::abs(p.X_mOhm / p.f_hz - ref) / ref);
    return Outcome{worst <= 1e-12, fmt("max relative spread of X/f = %.3g over 400 points (tol 1e-12)", worst)};
  });

  run("4", "choke preset reactive power", [] {
    const auto choke = preset("choke1123m").element;
    const double rated = rated_reactive_power(choke, 230.0, 50.0);
    // Measured route: synthesised voltage and the current it drives through the preset impedance.
    const auto z = element_impedance(choke, 50.0);
    const std::size_t n = 2000;
    std::vector<double> u(n), i(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double wt = 2 * M_PI * 50.0 * static_cast<double>(k) / kRate;
      u[k] = 230.0 * std::sqrt(2.0) * std::sin(wt);
      i[k] = 230.0 * std::sqrt(2.0) / std::abs(z) * std::sin(wt - std::arg(z));
    }
    const double q = reactive_power_fundamental(u, i, kRate);
    const bool ok = std::abs(rated - 150.0) <= 1.5 && std::abs(q - 150.0) <= 1.5;
    return Outcome{ok, fmt("rated Q = %.3f var, measured Q = %.3f var (150 +- 1.5)", rated, q)};
  });

  run("5", "solver vs phasor oracle", [] {
    std::mt19937 rng(515);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = random_linear(rng);
      const auto model = trial % 2 ? measured_model() : nominal_model();
      const auto r = run_transient(model, supply_for(0.4), a, config_for(0.4));
      const auto p = solve_phasor_steady_state(model, a, 230.0, 50.0);
      for (Tap t : kAllTaps)
        for (Phase ph : kAllPhases) {
          const double ref = std::abs(p.phase_to_neutral(t, ph));
          worst = std::max(worst, std::abs(settled_rms(r.phase_to_neutral(t, ph)) - ref) / ref);
        }
    }
    return Outcome{worst < 1e-3, fmt("10 scenarios, max relative rms deviation %.3g (tol 1e-3)", worst)};
  });

  run("6", "conservation", [] {
    std::vector<LoadAttachment> mixed{{Tap::P3, Phase::L1, preset("heater1250").element, {}},
                                      {Tap::P4, Phase::L2, preset("choke1123m").element, {}},
                                      {Tap::P7, Phase::L3, preset("cap9u6").element, {}},
                                      {Tap::P6, Phase::L1, preset("graetz_default").element, {}},
                                      {Tap::P5, Phase::L2, preset("heater2000").element, {}}};
    mixed[0].schedule.mode = PeriodicSquare{10.0, 0.5, 0.0};
    mixed[4].schedule.mode = PeriodicSquare{37.0, 0.3, 0.002};
    const auto model = add_shunt_capacitance(measured_model(), Tap::P3, 47.0);
    const auto r = run_transient(model, supply_for(0.5), mixed, config_for(0.5));
    double kcl = 0.0;
    for (Conductor c : kAllConductors) kcl = std::max(kcl, max_kcl_residual(r, mixed, Tap::P3, c));

    std::mt19937 rng(66);
    double mismatch = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      const auto a = random_linear(rng);
      const auto rr = run_transient(nominal_model(), supply_for(0.5), a, config_for(0.5));
      mismatch = std::max(mismatch, power_audit(rr, nominal_model(), a).mismatch);
    }
    return Outcome{kcl < 1e-6 && mismatch < 1e-3,
                   fmt("max KCL residual at P3 %.3g (tol 1e-6); max energy mismatch %.3g over 5 linear runs (tol 1e-3)",
                       kcl, mismatch)};
  });

  run("7", "trapezoidal convergence order", [] {
    const double Rload = 1.0, V = 100.0;
    const double Rt = 2 * 0.450 + Rload + SimConfig{}.switch_on_ohm;
    const double Lt = 2 * 426.8e-6;
    auto max_error = [&](double dt) {
      const double t_end = 5e-3;
      const auto n = static_cast<std::size_t>(std::llround(t_end / dt)) + 1;
      Waveform dc{1.0 / dt, {std::vector<double>(n, V), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)}};
      SimConfig cfg;
      cfg.dt = dt;
      cfg.t_end = t_end;
      const auto r = run_transient(nominal_model(), dc, {{Tap::P5, Phase::L1, Resistive{Rload}, {}}}, cfg);
      double e = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k)
        e = std::max(e, std::abs(r.load_i[0][k] - V / Rt * (1.0 - std::exp(-r.time[k] * Rt / Lt))));
      return e;
    };
    const double ratio = max_error(4e-5) / max_error(2e-5);
    return Outcome{ratio >= 3.5 && ratio <= 4.5, fmt("error ratio under dt halving = %.4f (range 3.5-4.5)", ratio)};
  });

  run("8", "THD oracles", [] {
    const double pure = thd(harmonic_spectrum({synth_sine({}, {kRate, 0.2}).channel(0), kRate}));
    const auto mix = synth_harmonic_mix({50.0, {{1, 230.0, 0.0}, {5, 11.5, 0.0}}}, {kRate, 0.2});
    const double fifth = thd(harmonic_spectrum({mix.channel(0), kRate}));
    const double fast = 100000.0;
    std::vector<double> sq(20000);
    for (std::size_t k = 0; k < sq.size(); ++k) {
      const double v = std::sin(2 * M_PI * 50.0 * static_cast<double>(k) / fast);
      sq[k] = v > 1e-12 ? 1.0 : (v < -1e-12 ? -1.0 : 0.0);
    }
    const double square = thd(harmonic_spectrum({sq, fast}));
    const bool ok = pure < 1e-9 && std::abs(fifth - 0.05) <= 1e-4 && std::abs(square - 0.470) <= 0.002;
    return Outcome{ok, fmt("pure %.3g (<1e-9); fifth %.6f (0.05 +- 1e-4); square %.4f (0.470 +- 0.002)", pure, fifth, square)};
  });

  run("9", "flickermeter unity-Pst calibration, 600 s", [] {
    // Rectangular fluctuation points (changes per minute, dU/U %) rated at Pst = 1 for a 230 V lamp.
    const std::pair<double, double> points[] = {{1, 2.724}, {2, 2.211}, {7, 1.459}, {39, 0.906}, {110, 0.725}, {1620, 0.402}};
    FlickerOptions opt;
    std::string detail;
    bool ok = true;
    for (auto [cpm, d] : points) {
      const Modulation m{ModulationShape::Rectangular, d / 100.0, cpm / 120.0, 0.5};
      const auto u = modulated_trace(m, opt.settle_s + opt.observation_s, kRate);
      const double pst = flicker_pst(u, kRate, opt);
      ok = ok && std::abs(pst - 1.0) <= 0.05;
      char buf[80];
      std::snprintf(buf, sizeof buf, "%s%g/min@%g%%->%.4f", detail.empty() ? "" : " ", cpm, d, pst);
      detail += buf;
    }
    return Outcome{ok, detail + " (1.00 +- 5%)"};
  });

  run("9b", "flickermeter sinusoidal unity-Pinst response", [] {
    // (f_m Hz, dU/U %) giving a peak instantaneous sensation of 1 for a 230 V lamp.
    const std::pair<double, double> points[] = {{0.5, 2.325}, {1.0, 1.397}, {5.0, 0.396}, {8.8, 0.250},
                                                {10.0, 0.261}, {20.0, 0.704}, {25.0, 1.037}};
    std::string detail;
    bool ok = true;
    for (auto [f, d] : points) {
      const auto u = modulated_trace({ModulationShape::Sinusoidal, d / 100.0, f, 0.5}, 40.0, kRate);
      Flickermeter meter(kRate);
      const auto p = meter.instantaneous(u);
      double peak = 0.0;
      for (std::size_t k = static_cast<std::size_t>(15 * kRate); k < p.size(); ++k) peak = std::max(peak, p[k]);
      ok = ok && std::abs(peak - 1.0) <= 0.05;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s%gHz->%.4f", detail.empty() ? "" : " ", f, peak);
      detail += buf;
    }
    return Outcome{ok, detail + " (1.00 +- 5%)"};
  });

  run("10", "simultaneous disturbance scenario", [] {
    const char* disturbed = R"({
      "name": "disturbed",
      "supply": {"type": "clipped", "U_rms_V": 230, "f_Hz": 50, "clip_ratio": 0.8},
      "sampling": {"rate_Hz": 10000, "duration_s": 66},
      "attachments": [{"tap": "P5", "phase": "L1", "element": "heater2000",
                       "schedule": {"mode": "periodic", "f_Hz": 10, "duty": 0.5}}],
      "outputs": {"observe": {"tap": "P5"}, "trace": false, "waveform": false,
                  "flicker": {"settle_s": 5, "short": true}}
    })";
    const char* baseline = R"({
      "name": "baseline",
      "supply": {"type": "sine", "U_rms_V": 230, "f_Hz": 50},
      "sampling": {"rate_Hz": 10000, "duration_s": 66},
      "attachments": [{"tap": "P5", "phase": "L1", "element": "heater2000"}],
      "outputs": {"observe": {"tap": "P5"}, "trace": false, "waveform": false,
                  "flicker": {"settle_s": 5, "short": true}}
    })";
    const auto d = report_values(execute_scenario(parse_scenario(disturbed)).report, "L1");
    const auto b = report_values(execute_scenario(parse_scenario(baseline)).report, "L1");
    bool simultaneous = false;
    double d_thd = 0.0, d_pst = 0.0;
    for (auto [t, p] : d)
      if (!std::isnan(p) && t > 0.03 && p > 1.0) {
        simultaneous = true;
        d_thd = t;
        d_pst = p;
      }
    double b_thd = 0.0, b_pst = 0.0;
    bool b_has_pst = false;
    for (auto [t, p] : b) {
      b_thd = std::max(b_thd, t);
      if (!std::isnan(p)) {
        b_has_pst = true;
        b_pst = std::max(b_pst, p);
      }
    }
    const bool ok = simultaneous && b_has_pst && b_thd < 1e-3 && b_pst < 0.05;
    return Outcome{ok, fmt("disturbed THDU %.4f Pst %.3f; ", d_thd, d_pst) +
                           fmt("baseline max THDU %.3g max Pst %.4f", b_thd, b_pst)};
  });

  run("P", "parasitic resistance rise", [] {
    auto m = nominal_model();
    m.parasitic.enabled = true;
    const double r50 = path_impedance(m, Tap::P5, Conductor::L1, 50.0).real();
    const double r20k = path_impedance(m, Tap::P5, Conductor::L1, 20e3).real();
    const double r200k = path_impedance(m, Tap::P5, Conductor::L1, 200e3).real();
    return Outcome{r200k > r20k && r20k > r50, fmt("R(50 Hz) %.1f < R(20 kHz) %.1f < R(200 kHz) %.1f mOhm", r50, r20k, r200k)};
  });

  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
