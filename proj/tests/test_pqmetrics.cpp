#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "pqtwin/pqmetrics.hpp"
#include "pqtwin/signalgen.hpp"
#include "pqtwin/simulator.hpp"

using namespace pqtwin;
using Catch::Approx;

namespace {

std::vector<double> tone(double amp, double f, double phase, double rate, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[k] = amp * std::sin(2 * M_PI * f * static_cast<double>(k) / rate + phase);
  return x;
}

std::vector<double> modulated(ModulationShape shape, double depth, double f_m, double seconds, double rate = 2000.0) {
  SupplySpec s;
  s.modulation = Modulation{shape, depth, f_m, 0.5};
  return synth_three_phase(s, {rate, seconds}).channels[0];
}

double peak_pinst(const std::vector<double>& u, double rate, double settle) {
  Flickermeter m(rate);
  const auto p = m.instantaneous(u);
  double mx = 0.0;
  for (std::size_t k = static_cast<std::size_t>(settle * rate); k < p.size(); ++k) mx = std::max(mx, p[k]);
  return mx;
}

FlickerOptions short_obs() {
  FlickerOptions o;
  o.short_observation = true;
  o.observation_s = 60.0;
  return o;
}

}  // namespace

TEST_CASE("rms", "[pqmetrics]") {
  const std::vector<double> c(100, -3.5);
  CHECK(rms(c) == 3.5);
  const auto s = tone(10.0, 50.0, 0.3, 10000, 2000);
  CHECK(rms(s) == Approx(10.0 / std::sqrt(2.0)).epsilon(1e-9));
  const auto mix = synth_harmonic_mix({50.0, {{1, 230.0, 0.0}, {5, 11.5, 0.0}}}, {10000, 0.2});
  CHECK(rms(mix.channel(0)) == Approx(230.287).margin(5e-4));
  CHECK_THROWS_AS(rms(std::vector<double>{}), Error);
}

TEST_CASE("active power", "[pqmetrics]") {
  const double R = 26.45;
  auto u = tone(230.0 * std::sqrt(2.0), 50, 0.0, 10000, 2000);
  std::vector<double> i(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) i[k] = u[k] / R;
  CHECK(active_power(u, i) == Approx(230.0 * 230.0 / R).epsilon(1e-3));
  const auto q = tone(10.0, 50, M_PI / 2, 10000, 2000);
  CHECK(std::abs(active_power(u, q)) < 1e-6 * 230.0 * 10.0);
  CHECK_THROWS_AS(active_power(u, std::vector<double>(5, 0.0)), Error);
}

TEST_CASE("reactive power of the fundamental", "[pqmetrics]") {
  const double rate = 10000, w = 2 * M_PI * 50;
  const auto u = tone(230.0 * std::sqrt(2.0), 50, 0.0, rate, 2000);
  SECTION("resistor") {
    std::vector<double> i(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) i[k] = u[k] / 20.0;
    CHECK(std::abs(reactive_power_fundamental(u, i, rate)) < 1e-9);
  }
  SECTION("choke 1.123 H: current lags by 90 degrees") {
    const auto i = tone(230.0 * std::sqrt(2.0) / (w * 1.123), 50, -M_PI / 2, rate, 2000);
    CHECK(reactive_power_fundamental(u, i, rate) == Approx(230.0 * 230.0 / (w * 1.123)).epsilon(1e-9));
    CHECK(reactive_power_fundamental(u, i, rate) == Approx(150.0).margin(1.5));
  }
  SECTION("capacitor 9.6 uF: negative") {
    const auto i = tone(230.0 * std::sqrt(2.0) * w * 9.6e-6, 50, M_PI / 2, rate, 2000);
    CHECK(reactive_power_fundamental(u, i, rate) == Approx(-159.54).margin(0.01));
  }
  SECTION("errors") {
    const std::vector<double> z(2000, 0.0);
    CHECK_THROWS_AS(reactive_power_fundamental(z, u, rate), Error);
    CHECK_THROWS_AS(reactive_power_fundamental(std::vector<double>(u.begin(), u.begin() + 150),
                                               std::vector<double>(150, 0.0), rate),
                    Error);
  }
}

TEST_CASE("apparent power bound", "[pqmetrics][property]") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> a(0.1, 400), ph(-M_PI, M_PI), h(0, 30);
  for (int k = 0; k < 100; ++k) {
    auto u = synth_harmonic_mix({50.0, {{1, a(rng), ph(rng)}, {3, h(rng), ph(rng)}, {7, h(rng), ph(rng)}}}, {10000, 0.2});
    auto i = synth_harmonic_mix({50.0, {{1, a(rng) / 10, ph(rng)}, {5, h(rng) / 10, ph(rng)}}}, {10000, 0.2});
    const double P = active_power(u.channel(0), i.channel(0));
    const double Q = reactive_power_fundamental(u.channel(0), i.channel(0), 10000);
    const double S = rms(u.channel(0)) * rms(i.channel(0));
    CHECK(P * P + Q * Q <= S * S * (1 + 1e-12));
  }
}

TEST_CASE("energy accumulation", "[pqmetrics]") {
  SECTION("1870 W for one hour") {
    std::vector<PQReport> r(360);
    for (std::size_t k = 0; k < r.size(); ++k) {
      r[k].t_start = 10.0 * static_cast<double>(k);
      r[k].duration = 10.0;
      r[k].P = 1870.0;
      r[k].Q = 0.0;
    }
    const auto e = accumulate_energy(r);
    CHECK(e.E_P == Approx(1870.0).epsilon(1e-12));
    CHECK(e.E_Q == 0.0);
  }
  SECTION("zero load") {
    std::vector<PQReport> r(3);
    for (std::size_t k = 0; k < 3; ++k) {
      r[k].t_start = 0.2 * static_cast<double>(k);
      r[k].duration = 0.2;
      r[k].P = 0.0;
      r[k].Q = 0.0;
    }
    const auto e = accumulate_energy(r);
    CHECK(e.E_P == 0.0);
    CHECK(e.E_Q == 0.0);
  }
  SECTION("gaps are rejected") {
    std::vector<PQReport> r(2);
    r[0].duration = 0.2;
    r[1].t_start = 0.4;
    r[1].duration = 0.2;
    CHECK_THROWS_AS(accumulate_energy(r), Error);
  }
  SECTION("50% duty switched heater halves the energy") {
    const double rate = 10000;
    const auto u = tone(230.0 * std::sqrt(2.0), 50, 0.0, rate, 20000);
    SwitchSchedule sw{PeriodicSquare{10.0, 0.5, 0.0}};
    std::vector<double> on(u.size()), half(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
      on[k] = u[k] / 26.45;
      half[k] = switch_state(sw, (k + 0.5) / rate) ? on[k] : 0.0;
    }
    ReportConfig cfg{rate, 50.0, 10, std::nullopt};
    const auto ra = aggregate_report(u, std::span<const double>(on), cfg);
    const auto rb = aggregate_report(u, std::span<const double>(half), cfg);
    const auto ea = accumulate_energy(ra), eb = accumulate_energy(rb);
    CHECK(eb.E_P / ea.E_P == Approx(0.5).epsilon(0.01));
    CHECK(*rb.back().E_P == Approx(eb.E_P).epsilon(1e-12));
  }
}

TEST_CASE("fundamental frequency", "[pqmetrics]") {
  const double rate = 10000;
  CHECK(fundamental_frequency(tone(325, 50.0, 0.2, rate, 10000), rate) == Approx(50.0).margin(0.005));
  CHECK(fundamental_frequency(tone(325, 49.5, 1.1, rate, 10000), rate) == Approx(49.5).margin(0.005));
  SupplySpec clipped;
  clipped.carrier = ClippedSine{PureSine{}, 0.8};
  const auto w = synth_three_phase(clipped, {rate, 1.0});
  CHECK(fundamental_frequency(w.channel(0), rate) == Approx(50.0).margin(0.01));
  SECTION("off-nominal within a short window") {
    CHECK(fundamental_frequency(tone(325, 50.3, 0.0, rate, 2000), rate) == Approx(50.3).margin(0.005));
  }
  SECTION("no dominant fundamental") {
    std::mt19937 rng(3);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> noise(10000);
    for (double& v : noise) v = n(rng);
    CHECK_THROWS_AS(fundamental_frequency(noise, rate), Error);
    CHECK_THROWS_AS(fundamental_frequency(std::vector<double>(10000, 1.0), rate), Error);
    CHECK_THROWS_AS(fundamental_frequency(tone(325, 50.0, 0.0, rate, 1000), rate), Error);
  }
}

TEST_CASE("harmonic spectrum", "[pqmetrics]") {
  const double rate = 10000;
  SECTION("pure sine") {
    const auto x = tone(230.0 * std::sqrt(2.0), 50, 0.4, rate, 2000);
    const auto s = harmonic_spectrum({x, rate});
    CHECK(s.bin_hz == 5.0);
    CHECK(s.order(1) == Approx(230.0).epsilon(1e-12));
    for (std::size_t h = 0; h < s.harmonic.size(); ++h)
      if (h != 1) CHECK(s.harmonic[h] < 1e-6);
    for (double v : s.interharmonic) CHECK(v < 1e-6);
  }
  SECTION("fifth harmonic group") {
    const auto w = synth_harmonic_mix({50.0, {{1, 230.0, 0.0}, {5, 11.5, 0.3}}}, {rate, 0.2});
    const auto s = harmonic_spectrum({w.channel(0), rate});
    CHECK(s.order(5) == Approx(11.5).epsilon(1e-9));
  }
  SECTION("175 Hz sits in the interharmonic group between orders 3 and 4") {
    const auto w = synth_harmonic_mix({50.0, {{1, 230.0, 0.0}, {3.5, 7.0, 0.0}}}, {rate, 0.2});
    const auto s = harmonic_spectrum({w.channel(0), rate});
    CHECK(s.interharmonic[3] == Approx(7.0).epsilon(1e-9));
    CHECK(s.order(3) < 1e-6);
    CHECK(s.order(4) < 1e-6);
  }
  SECTION("non-synchronous windows are rejected") {
    const auto x = tone(1, 50, 0, 10001, 2000);
    CHECK_THROWS_AS(harmonic_spectrum({x, 10001}), Error);
    CHECK_THROWS_AS(harmonic_spectrum({std::span<const double>(x).first(1999), rate}), Error);
  }
}

TEST_CASE("THD", "[pqmetrics]") {
  const double rate = 10000;
  CHECK(thd(harmonic_spectrum({tone(325, 50, 0, rate, 2000), rate})) < 1e-9);
  const auto mix = synth_harmonic_mix({50.0, {{1, 230.0, 0.0}, {5, 11.5, 0.0}}}, {rate, 0.2});
  CHECK(thd(harmonic_spectrum({mix.channel(0), rate})) == Approx(0.05).margin(1e-4));
  SECTION("square wave") {
    // 100 kHz keeps sampling aliasing of orders up to 40 below the tolerance.
    const double fast = 100000;
    std::vector<double> sq(20000);
    for (std::size_t k = 0; k < sq.size(); ++k) {
      const double v = std::sin(2 * M_PI * 50 * static_cast<double>(k) / fast);
      sq[k] = v > 1e-12 ? 1.0 : (v < -1e-12 ? -1.0 : 0.0);
    }
    double series = 0.0;
    for (int h = 3; h <= 39; h += 2) series += 1.0 / (h * h);
    CHECK(thd(harmonic_spectrum({sq, fast})) == Approx(std::sqrt(series)).margin(0.002));
    CHECK(thd(harmonic_spectrum({sq, fast})) == Approx(0.470).margin(0.002));
  }
  SECTION("zero fundamental") {
    const std::vector<double> z(2000, 0.0);
    CHECK_THROWS_AS(thd(harmonic_spectrum({z, rate})), Error);
  }
}

TEST_CASE("spectrum properties", "[pqmetrics][property]") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> amp(0, 50), ph(-M_PI, M_PI), ord(0.1, 45.0), scale(1e-3, 1e3);
  for (int k = 0; k < 40; ++k) {
    HarmonicMix m{50.0, {{1, 100 + amp(rng), ph(rng)}}};
    for (int j = 0; j < 6; ++j) m.components.push_back({std::round(ord(rng) * 10) / 10, amp(rng), ph(rng)});
    auto w = synth_harmonic_mix(m, {10000, 0.2}, 5000);
    for (double& v : w.channels[0]) v += amp(rng) / 10;  // DC offset
    const auto s = harmonic_spectrum({w.channel(0), 10000});
    const double r = rms(w.channel(0));
    CHECK(s.total_square() == Approx(r * r).epsilon(1e-6));
    const double c = scale(rng);
    auto scaled = w.channels[0];
    for (double& v : scaled) v *= c;
    CHECK(thd(harmonic_spectrum({scaled, 10000})) == Approx(thd(s)).epsilon(1e-12));
  }
}

TEST_CASE("flicker Plt", "[pqmetrics]") {
  std::vector<double> ones(12, 1.0);
  CHECK(flicker_plt(ones) == Approx(1.0).epsilon(1e-15));
  std::vector<double> c(12, 0.731);
  CHECK(flicker_plt(c) == Approx(0.731).epsilon(1e-14));
  std::vector<double> one(12, 0.0);
  one[7] = 1.0;
  CHECK(flicker_plt(one) == Approx(0.437).margin(5e-4));
  CHECK(flicker_plt(one) == Approx(std::cbrt(1.0 / 12.0)).epsilon(1e-14));
  CHECK_THROWS_AS(flicker_plt(std::vector<double>(11, 1.0)), Error);
}

TEST_CASE("flickermeter response", "[pqmetrics][flicker]") {
  const double rate = 2000;
  SECTION("8.8 Hz, 0.25% sinusoidal fluctuation peaks at unity") {
    CHECK(peak_pinst(modulated(ModulationShape::Sinusoidal, 0.0025, 8.8, 30), rate, 5) == Approx(1.0).epsilon(0.01));
  }
  SECTION("sinusoidal response across frequency") {
    // (f_m Hz, dU/U %) pairs that produce a peak instantaneous sensation of 1 for a 230 V lamp.
    const std::pair<double, double> table[] = {{0.5, 2.325}, {1.0, 1.397}, {2.0, 0.879}, {5.0, 0.396},
                                               {10.0, 0.261}, {15.0, 0.438}, {20.0, 0.704}, {25.0, 1.037}};
    for (auto [f, d] : table)
      CHECK(peak_pinst(modulated(ModulationShape::Sinusoidal, d / 100, f, 40), rate, 15) == Approx(1.0).epsilon(0.05));
  }
  SECTION("unmodulated supply") {
    const auto u = modulated(ModulationShape::Sinusoidal, 0.0, 8.8, 66);
    CHECK(flicker_pst(u, rate, short_obs()) < 0.05);
  }
  SECTION("doubling the depth doubles Pst") {
    const double p1 = flicker_pst(modulated(ModulationShape::Sinusoidal, 0.002, 8.8, 66), rate, short_obs());
    const double p2 = flicker_pst(modulated(ModulationShape::Sinusoidal, 0.004, 8.8, 66), rate, short_obs());
    CHECK(p2 / p1 == Approx(2.0).epsilon(0.05));
  }
  SECTION("Pst grows with depth") {
    double prev = 0.0;
    for (double d : {0.001, 0.005, 0.01, 0.02, 0.05}) {
      const double p = flicker_pst(modulated(ModulationShape::Rectangular, d, 8.8, 66), rate, short_obs());
      CHECK(p > prev);
      prev = p;
    }
  }
  SECTION("eye response peaks near 8.8 Hz") {
    auto pst_at = [&](double f) {
      return flicker_pst(modulated(ModulationShape::Sinusoidal, 0.01, f, 66), rate, short_obs());
    };
    const double p88 = pst_at(8.8);
    CHECK(p88 > pst_at(1.0));
    CHECK(p88 > pst_at(25.0));
  }
  SECTION("rectangular unity point over a short observation") {
    // 1620 changes per minute at 0.402 %: 13.5 Hz square fluctuation.
    const double p = flicker_pst(modulated(ModulationShape::Rectangular, 0.00402, 13.5, 66), rate, short_obs());
    CHECK(p == Approx(1.0).epsilon(0.05));
  }
  SECTION("observation and rate limits") {
    const auto u = modulated(ModulationShape::Sinusoidal, 0.0, 8.8, 66);
    CHECK_THROWS_AS(flicker_pst(u, rate), Error);  // 600 s needed without the short flag
    const auto brief = modulated(ModulationShape::Sinusoidal, 0.0, 8.8, 40);
    CHECK_THROWS_AS(flicker_pst(brief, rate, short_obs()), Error);
    const auto slow = modulated(ModulationShape::Sinusoidal, 0.0, 8.8, 66, 1000);
    CHECK_THROWS_AS(flicker_pst(slow, 1000, short_obs()), Error);
    FlickerOptions bad;
    bad.observation_s = 60.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("aggregate report", "[pqmetrics]") {
  const double rate = 10000;
  SECTION("open circuit") {
    const auto u = tone(230.0 * std::sqrt(2.0), 50, 0, rate, 6000);
    const std::vector<double> i(u.size(), 0.0);
    const auto r = aggregate_report(u, std::span<const double>(i), {rate, 50.0, 10, std::nullopt});
    REQUIRE(r.size() == 3);
    for (const auto& w : r) {
      CHECK(w.U_rms == Approx(230.0).epsilon(1e-9));
      CHECK(*w.I_rms == 0.0);
      CHECK_FALSE(w.THDI.has_value());
      CHECK(*w.THDU < 1e-9);
      CHECK(*w.f_c == Approx(50.0).margin(0.005));
      CHECK_FALSE(w.Pst.has_value());
    }
    const auto line = format_report_line(r[0], "channel=L1");
    CHECK(line.rfind("channel=L1 t_start=0 duration=0.2 U_rms=", 0) == 0);
    CHECK(line.find("THDI=NA") != std::string::npos);
    CHECK(line.find("Pst=NA Plt=NA") != std::string::npos);
  }
  SECTION("heater2000 at P5 agrees with the power audit") {
    const std::vector<LoadAttachment> a{{Tap::P5, Phase::L1, preset("heater2000").element, {}}};
    SimConfig cfg;
    cfg.t_end = 0.5;
    const auto supply = synth_three_phase(SupplySpec{}, {rate, 0.5001});
    const auto sim = run_transient(nominal_model(), supply, a, cfg);
    const auto u = sim.phase_to_neutral(Tap::P5, Phase::L1);
    std::span<const double> us(u), is(sim.load_i[0]);
    const auto r = aggregate_report(us.subspan(1000, 4000), is.subspan(1000, 4000), {rate, 50.0, 10, std::nullopt});
    double p = 0.0;
    for (const auto& w : r) p += *w.P;
    p /= static_cast<double>(r.size());
    const auto audit = power_audit(sim, nominal_model(), a);
    CHECK(p == Approx(audit.P_loads).epsilon(5e-3));
    CHECK(p == Approx(1870.0).epsilon(5e-3));
  }
  SECTION("short traces are rejected") {
    const std::vector<double> u(1500, 1.0);
    CHECK_THROWS_AS(aggregate_report(u, std::nullopt, {rate, 50.0, 10, std::nullopt}), Error);
  }
}

TEST_CASE("clipped supply with a switched heater shows both disturbances", "[pqmetrics][flicker]") {
  const double rate = 2000;
  SupplySpec spec;
  spec.carrier = ClippedSine{PureSine{}, 0.8};
  const double seconds = 66.0;
  const auto supply = synth_three_phase(spec, {rate, seconds});
  LoadAttachment heater{Tap::P5, Phase::L1, preset("heater2000").element, {}};
  heater.schedule.mode = PeriodicSquare{10.0, 0.5, 0.0};
  SimConfig cfg;
  cfg.dt = 1.0 / rate;
  cfg.t_end = seconds - 1.0 / rate;
  cfg.record_taps = std::vector<Tap>{Tap::P5};
  cfg.record_sections = false;
  const auto sim = run_transient(nominal_model(), supply, {heater}, cfg);
  auto u = sim.phase_to_neutral(Tap::P5, Phase::L1);
  u.resize(static_cast<std::size_t>(seconds * rate));
  const auto r = aggregate_report(u, std::nullopt, {rate, 50.0, 10, short_obs()});
  const auto& mid = r[r.size() / 2];
  REQUIRE(mid.Pst.has_value());
  CHECK(*mid.Pst > 1.0);
  CHECK(*mid.THDU > 0.03);
}
