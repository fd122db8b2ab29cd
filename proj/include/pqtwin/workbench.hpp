#pragma once

// Scenario files (JSON), the synth -> simulate -> measure pipeline, run manifests,
// impedance sweeps and offline waveform analysis.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "pqtwin/csv.hpp"
#include "pqtwin/error.hpp"
#include "pqtwin/loads.hpp"
#include "pqtwin/netmodel.hpp"
#include "pqtwin/pqmetrics.hpp"
#include "pqtwin/signalgen.hpp"
#include "pqtwin/simulator.hpp"
#include "pqtwin/types.hpp"

namespace pqtwin {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct SweepRequest {
  Tap tap = Tap::P5;
  Conductor conductor = Conductor::L1;
  double f_min = 20.0;
  double f_max = 200e3;
  std::size_t points = 100;
  SweepSpacing spacing = SweepSpacing::Log;
  bool driving_point = false;  // phase-to-neutral into the loaded grid instead of the series path
};

struct OutputRequest {
  Tap observe = Tap::P5;
  bool trace = true;
  std::size_t trace_stride = 1;
  bool report = true;
  bool waveform = true;
  std::optional<FlickerOptions> flicker;
  std::optional<SweepRequest> sweep;
};

struct Scenario {
  std::string name = "scenario";
  std::string model_source = "nominal";
  GridModel model = nominal_model();
  SupplySpec supply;
  SamplingSpec sampling;
  SimConfig sim;
  std::vector<LoadAttachment> attachments;
  std::vector<std::string> element_labels;  // preset name or element type per attachment
  OutputRequest outputs;
  std::string canonical;  // normalised scenario JSON used for hashing

  void validate() const {
    sampling.validate();
    sim.validate();
    model.validate();
    for (const auto& a : attachments) a.validate();
    require(std::abs(sim.dt * sampling.rate - 1.0) < 1e-9, ErrorCode::Validation,
            "sim.dt_s must equal 1/sampling.rate_Hz");
    if (outputs.flicker) outputs.flicker->validate();
  }
};

namespace detail {

using nlohmann::json;

/// Object reader that tracks consumed keys so unknown fields can be reported by path.
class JsonObject {
 public:
  JsonObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::Parse, path_ + ": expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) fail(ErrorCode::Parse, at(key) + ": required field missing");
    return *it;
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      fail(ErrorCode::Parse, at(key) + ": required field missing");
    }
    const auto& v = raw(key);
    if (!v.is_number()) fail(ErrorCode::Parse, at(key) + ": expected a number");
    return v.get<double>();
  }

  std::string text(const std::string& key, std::optional<std::string> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      fail(ErrorCode::Parse, at(key) + ": required field missing");
    }
    const auto& v = raw(key);
    if (!v.is_string()) fail(ErrorCode::Parse, at(key) + ": expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_boolean()) fail(ErrorCode::Parse, at(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::size_t count(const std::string& key, std::size_t def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
      fail(ErrorCode::Parse, at(key) + ": expected a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(ErrorCode::UnknownName, at(it.key()) + ": unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

/// Runs f, prefixing any library error with the JSON location.
template <class F>
auto located(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind("$", 0) == 0) throw;
    throw Error(e.code(), path + ": " + what);
  }
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, what + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline GridModel parse_model_json(const json& j, const std::string& path) {
  JsonObject o(j, path);
  GridModel m = nominal_model();
  const std::string base = o.text("base", "nominal");
  if (base == "measured")
    m = measured_model();
  else if (base != "nominal")
    fail(ErrorCode::UnknownName, o.at("base") + ": unknown model '" + base + "' (nominal, measured)");
  if (o.has("sections")) {
    JsonObject secs(o.raw("sections"), o.at("sections"));
    for (SectionId s : kAllSections) {
      const std::string sname = to_string(s);
      if (!secs.has(sname)) continue;
      JsonObject sec(secs.raw(sname), secs.at(sname));
      for (Conductor c : kAllConductors) {
        const std::string cname = to_string(c);
        if (!sec.has(cname)) continue;
        JsonObject cp(sec.raw(cname), sec.at(cname));
        auto& p = m.section(s)[c];
        p.R_mOhm = cp.number("R_mOhm", p.R_mOhm);
        p.L_uH = cp.number("L_uH", p.L_uH);
        cp.finish();
      }
      sec.finish();
    }
    secs.finish();
  }
  o.finish();
  return m;
}

inline Modulation parse_modulation(JsonObject o) {
  Modulation m;
  const std::string shape = o.text("shape", "sinusoidal");
  if (shape == "sinusoidal")
    m.shape = ModulationShape::Sinusoidal;
  else if (shape == "rectangular")
    m.shape = ModulationShape::Rectangular;
  else
    fail(ErrorCode::UnknownName, o.at("shape") + ": unknown shape '" + shape + "' (sinusoidal, rectangular)");
  m.depth = o.number("depth");
  m.f_m = o.number("f_Hz", 8.8);
  m.duty = o.number("duty", 0.5);
  o.finish();
  return m;
}

inline SupplySpec parse_supply(JsonObject o) {
  SupplySpec s;
  const std::string type = o.text("type", "sine");
  PureSine sine;
  if (type == "sine" || type == "clipped") {
    sine.u_rms = o.number("U_rms_V", 230.0);
    sine.f_c = o.number("f_Hz", 50.0);
    sine.phase = o.number("phase_rad", 0.0);
  }
  if (type == "sine") {
    s.carrier = sine;
  } else if (type == "clipped") {
    s.carrier = ClippedSine{sine, o.number("clip_ratio")};
  } else if (type == "harmonics") {
    HarmonicMix mix;
    mix.f_c = o.number("f_Hz", 50.0);
    const auto& comps = o.raw("components");
    if (!comps.is_array()) fail(ErrorCode::Parse, o.at("components") + ": expected an array");
    for (std::size_t k = 0; k < comps.size(); ++k) {
      JsonObject c(comps[k], o.at("components") + "[" + std::to_string(k) + "]");
      mix.components.push_back({c.number("order"), c.number("U_rms_V"), c.number("phase_rad", 0.0)});
      c.finish();
    }
    s.carrier = mix;
  } else {
    fail(ErrorCode::UnknownName, o.at("type") + ": unknown supply type '" + type + "' (sine, clipped, harmonics)");
  }
  if (o.has("modulation")) s.modulation = parse_modulation(JsonObject(o.raw("modulation"), o.at("modulation")));
  s.max_component_hz = o.number("max_component_Hz", 2400.0);
  o.finish();
  return s;
}

inline std::pair<LoadElement, std::string> parse_element(const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    return {located(path, [&] { return preset(name).element; }), name};
  }
  JsonObject o(j, path);
  const std::string type = o.text("type");
  LoadElement e;
  if (type == "resistive") {
    e = Resistive{o.number("R_ohm")};
  } else if (type == "capacitive") {
    e = Capacitive{o.number("C_uF")};
  } else if (type == "inductive") {
    e = Inductive{o.number("L_H"), o.number("R_series_ohm", 0.0)};
  } else if (type == "series_rlc") {
    e = SeriesRLC{o.number("R_ohm", 0.0), o.number("L_H", 0.0), o.number("C_uF", 0.0)};
  } else if (type == "parallel_rlc") {
    e = ParallelRLC{o.number("R_ohm", 0.0), o.number("L_H", 0.0), o.number("C_uF", 0.0)};
  } else if (type == "graetz") {
    GraetzRectifier g;
    e = GraetzRectifier{o.number("R_dc_ohm", g.R_dc_ohm), o.number("C_dc_uF", g.C_dc_uF),
                        o.number("diode_drop_V", g.diode_drop_V)};
  } else {
    fail(ErrorCode::UnknownName,
         o.at("type") + ": unknown element type '" + type +
             "' (resistive, capacitive, inductive, series_rlc, parallel_rlc, graetz)");
  }
  o.finish();
  located(path, [&] { validate(e); });
  return {e, type};
}

inline SwitchSchedule parse_schedule(JsonObject o) {
  SwitchSchedule s;
  const std::string mode = o.text("mode", "always_on");
  if (mode == "always_on") {
    s.mode = AlwaysOn{};
  } else if (mode == "periodic") {
    s.mode = PeriodicSquare{o.number("f_Hz"), o.number("duty", 0.5), o.number("offset_s", 0.0)};
  } else if (mode == "events") {
    EventList ev;
    const auto& t = o.raw("times_s");
    if (!t.is_array()) fail(ErrorCode::Parse, o.at("times_s") + ": expected an array of seconds");
    for (const auto& v : t) {
      if (!v.is_number()) fail(ErrorCode::Parse, o.at("times_s") + ": expected numbers");
      ev.times.push_back(v.get<double>());
    }
    ev.initially_on = o.boolean("initially_on", false);
    s.mode = ev;
  } else {
    fail(ErrorCode::UnknownName, o.at("mode") + ": unknown mode '" + mode + "' (always_on, periodic, events)");
  }
  const std::string sync = o.text("sync", "async");
  if (sync == "async")
    s.sync = SwitchSync::Asynchronous;
  else if (sync == "zero_cross")
    s.sync = SwitchSync::ZeroCross;
  else
    fail(ErrorCode::UnknownName, o.at("sync") + ": unknown sync '" + sync + "' (async, zero_cross)");
  s.max_switching_hz = o.number("max_switching_Hz", 5000.0);
  o.finish();
  located(o.path(), [&] { s.validate(); });
  return s;
}

inline SweepRequest parse_sweep(JsonObject o) {
  SweepRequest r;
  r.tap = located(o.at("tap"), [&] { return parse_tap(o.text("tap", "P5")); });
  r.conductor = located(o.at("conductor"), [&] { return parse_conductor(o.text("conductor", "L1")); });
  r.f_min = o.number("f_min_Hz", r.f_min);
  r.f_max = o.number("f_max_Hz", r.f_max);
  r.points = o.count("points", r.points);
  const std::string spacing = o.text("spacing", "log");
  if (spacing == "log")
    r.spacing = SweepSpacing::Log;
  else if (spacing == "linear")
    r.spacing = SweepSpacing::Linear;
  else
    fail(ErrorCode::UnknownName, o.at("spacing") + ": unknown spacing '" + spacing + "' (log, linear)");
  const std::string mode = o.text("mode", "path");
  if (mode == "driving_point")
    r.driving_point = true;
  else if (mode != "path")
    fail(ErrorCode::UnknownName, o.at("mode") + ": unknown sweep mode '" + mode + "' (path, driving_point)");
  o.finish();
  return r;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::Io, "SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

}  // namespace detail

/// Parses a scenario document. base_dir resolves relative model file paths.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {}) {
  using detail::JsonObject;
  using detail::located;
  auto doc = detail::parse_json_text(text, "scenario");
  JsonObject root(doc, "$");
  Scenario s;
  s.name = root.text("name", "scenario");
  nlohmann::json canonical = doc;

  if (root.has("model")) {
    const auto& m = root.raw("model");
    if (m.is_string()) {
      s.model_source = m.get<std::string>();
      if (s.model_source == "nominal")
        s.model = nominal_model();
      else if (s.model_source == "measured")
        s.model = measured_model();
      else
        fail(ErrorCode::UnknownName, "$.model: unknown model '" + s.model_source + "' (nominal, measured, {\"file\": ...})");
    } else {
      JsonObject mo(m, "$.model");
      const std::string file = mo.text("file");
      mo.finish();
      const auto p = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base_dir / file;
      const auto body = detail::parse_json_text(detail::read_text_file(p.string()), p.string());
      s.model = detail::parse_model_json(body, p.string());
      s.model_source = "file:" + file;
      canonical["model"] = {{"file", file}, {"content", body}};
    }
  }
  if (root.has("parasitic")) {
    JsonObject po(root.raw("parasitic"), "$.parasitic");
    s.model.parasitic.enabled = po.boolean("enabled", true);
    s.model.parasitic.f_knee_hz = po.number("f_knee_Hz", s.model.parasitic.f_knee_hz);
    s.model.parasitic.alpha = po.number("alpha", s.model.parasitic.alpha);
    po.finish();
  }
  if (root.has("shunt_caps_nF")) {
    JsonObject so(root.raw("shunt_caps_nF"), "$.shunt_caps_nF");
    for (Tap t : kAllTaps) {
      const std::string tn = to_string(t);
      if (!so.has(tn)) continue;
      const double c = so.number(tn);
      s.model = located(so.at(tn), [&] { return add_shunt_capacitance(s.model, t, c); });
    }
    so.finish();
  }
  if (root.has("supply")) s.supply = detail::parse_supply(JsonObject(root.raw("supply"), "$.supply"));
  if (root.has("sampling")) {
    JsonObject so(root.raw("sampling"), "$.sampling");
    s.sampling.rate = so.number("rate_Hz", s.sampling.rate);
    s.sampling.duration = so.number("duration_s", s.sampling.duration);
    so.finish();
  }
  located("$.sampling", [&] { s.sampling.validate(); });
  s.sim.dt = 1.0 / s.sampling.rate;
  if (root.has("sim")) {
    JsonObject so(root.raw("sim"), "$.sim");
    const std::string method = so.text("method", "trapezoidal");
    if (method == "trapezoidal")
      s.sim.method = IntegrationMethod::Trapezoidal;
    else if (method == "backward_euler")
      s.sim.method = IntegrationMethod::BackwardEuler;
    else
      fail(ErrorCode::UnknownName, "$.sim.method: unknown method '" + method + "' (trapezoidal, backward_euler)");
    s.sim.dt = so.number("dt_s", s.sim.dt);
    so.finish();
  }
  s.sim.t_end = static_cast<double>(s.sampling.sample_count() - 1) * s.sim.dt;

  if (root.has("attachments")) {
    const auto& arr = root.raw("attachments");
    if (!arr.is_array()) fail(ErrorCode::Parse, "$.attachments: expected an array");
    std::vector<std::string> keys;
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string path = "$.attachments[" + std::to_string(k) + "]";
      JsonObject ao(arr[k], path);
      LoadAttachment a;
      const std::string tap = ao.text("tap");
      a.tap = located(ao.at("tap"), [&] { return parse_tap(tap); });
      const std::string phase = ao.text("phase", "L1");
      a.phase = located(ao.at("phase"), [&] { return parse_phase(phase); });
      auto [element, label] = detail::parse_element(ao.raw("element"), ao.at("element"));
      a.element = element;
      if (ao.has("schedule")) a.schedule = detail::parse_schedule(JsonObject(ao.raw("schedule"), ao.at("schedule")));
      ao.finish();
      located(path, [&] { a.validate(); });
      s.attachments.push_back(a);
      s.element_labels.push_back(label);
      keys.push_back(arr[k].dump());
    }
    // Attachment order does not change the network, so it does not change the hash.
    std::sort(keys.begin(), keys.end());
    canonical["attachments"] = nlohmann::json::array();
    for (const auto& k : keys) canonical["attachments"].push_back(nlohmann::json::parse(k));
  }

  if (root.has("outputs")) {
    JsonObject oo(root.raw("outputs"), "$.outputs");
    auto& out = s.outputs;
    if (oo.has("observe")) {
      JsonObject ob(oo.raw("observe"), "$.outputs.observe");
      const std::string tap = ob.text("tap", "P5");
      out.observe = located(ob.at("tap"), [&] { return parse_tap(tap); });
      ob.finish();
    }
    if (oo.has("trace")) {
      const auto& t = oo.raw("trace");
      if (t.is_boolean()) {
        out.trace = t.get<bool>();
      } else {
        JsonObject to(t, "$.outputs.trace");
        out.trace = true;
        out.trace_stride = to.count("stride", 1);
        to.finish();
        require(out.trace_stride >= 1, ErrorCode::InvalidSpec, "$.outputs.trace.stride: must be >= 1");
      }
    }
    out.report = oo.boolean("report", true);
    out.waveform = oo.boolean("waveform", true);
    if (oo.has("flicker")) {
      JsonObject fo(oo.raw("flicker"), "$.outputs.flicker");
      FlickerOptions f;
      f.settle_s = fo.number("settle_s", f.settle_s);
      f.short_observation = fo.boolean("short", false);
      f.observation_s = fo.number("observation_s", f.short_observation ? 60.0 : 600.0);
      fo.finish();
      located("$.outputs.flicker", [&] { f.validate(); });
      out.flicker = f;
    }
    if (oo.has("sweep")) out.sweep = detail::parse_sweep(JsonObject(oo.raw("sweep"), "$.outputs.sweep"));
    oo.finish();
  }
  root.finish();
  located("$", [&] { s.validate(); });
  s.canonical = canonical.dump();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(detail::read_text_file(path), std::filesystem::path(path).parent_path());
}

inline std::string scenario_hash(const Scenario& s) { return detail::sha256_hex(s.canonical); }

// ---- analysis ---------------------------------------------------------------

struct AnalyzeOptions {
  double f_c = 50.0;
  int window_cycles = 10;
  std::optional<FlickerOptions> flicker;
};

/// Report text for a recording: every channel not named I_<x> is a voltage; a matching
/// I_<x> column supplies its current. One line per channel and window.
inline std::string analyze_waveform(const NamedWaveform& w, const AnalyzeOptions& opt = {}) {
  w.wave.validate();
  ReportConfig cfg{w.wave.rate, opt.f_c, opt.window_cycles, opt.flicker};
  std::string out;
  bool any = false;
  for (std::size_t k = 0; k < w.names.size(); ++k) {
    const auto& name = w.names[k];
    if (name.rfind("I_", 0) == 0) continue;
    any = true;
    std::optional<std::span<const double>> cur;
    const int ci = w.find("I_" + name);
    if (ci >= 0) cur = w.wave.channel(static_cast<std::size_t>(ci));
    for (const auto& r : aggregate_report(w.wave.channel(k), cur, cfg)) {
      out += format_report_line(r, "channel=" + name);
      out += '\n';
    }
  }
  require(any, ErrorCode::Ingest, "recording has no voltage channel");
  return out;
}

// ---- pipeline ---------------------------------------------------------------

struct ScenarioRun {
  Waveform supply;
  SimResult result;
  NamedWaveform observed;  // phase-to-neutral voltages at the observation tap and load currents there
  std::string report;
  std::vector<ImpedancePoint> sweep;
};

inline std::vector<ImpedancePoint> run_sweep(const GridModel& model, const SweepRequest& r) {
  if (!r.driving_point) return frequency_sweep(model, r.tap, r.conductor, r.f_min, r.f_max, r.points, r.spacing);
  require(r.conductor != Conductor::N, ErrorCode::Validation,
          "driving-point sweep is measured from a phase conductor to N");
  std::vector<ImpedancePoint> out;
  for (double f : sweep_frequencies(r.f_min, r.f_max, r.points, r.spacing)) {
    const Complex z = driving_point_impedance(model, r.tap, static_cast<Phase>(index(r.conductor)), f);
    out.push_back({f, z.real(), z.imag()});
  }
  return out;
}

inline ScenarioRun execute_scenario(const Scenario& s) {
  s.validate();
  ScenarioRun run;
  auto context = [&](const char* stage, auto&& f) {
    try {
      return f();
    } catch (const Error& e) {
      throw Error(e.code(), "scenario '" + s.name + "' " + stage + ": " + e.what());
    }
  };
  run.supply = context("synthesis", [&] { return synth_three_phase(s.supply, s.sampling); });
  run.result = context("simulation", [&] { return run_transient(s.model, run.supply, s.attachments, s.sim); });

  const Tap tap = s.outputs.observe;
  run.observed.wave.rate = s.sampling.rate;
  for (Phase p : kAllPhases) {
    run.observed.names.push_back(to_string(p));
    run.observed.wave.channels.push_back(run.result.phase_to_neutral(tap, p));
  }
  for (Phase p : kAllPhases) {
    std::vector<double> i(run.result.size(), 0.0);
    bool any = false;
    for (std::size_t k = 0; k < s.attachments.size(); ++k) {
      if (s.attachments[k].tap != tap || s.attachments[k].phase != p) continue;
      any = true;
      for (std::size_t n = 0; n < i.size(); ++n) i[n] += run.result.load_i[k][n];
    }
    if (!any) continue;
    run.observed.names.push_back("I_" + to_string(p));
    run.observed.wave.channels.push_back(std::move(i));
  }
  if (s.outputs.report) {
    AnalyzeOptions opt;
    opt.f_c = s.supply.fundamental();
    opt.flicker = s.outputs.flicker;
    run.report = context("analysis", [&] { return analyze_waveform(run.observed, opt); });
  }
  if (s.outputs.sweep) run.sweep = context("sweep", [&] { return run_sweep(s.model, *s.outputs.sweep); });
  return run;
}

struct RunManifest {
  std::string scenario;
  std::string scenario_sha256;
  std::vector<std::pair<std::string, std::string>> versions;
  std::vector<std::string> outputs;

  std::string text() const {
    std::string t = "scenario=" + scenario + "\nscenario_sha256=" + scenario_sha256 + "\n";
    for (const auto& [k, v] : versions) t += "version." + k + "=" + v + "\n";
    for (const auto& o : outputs) t += "output=" + o + "\n";
    return t;
  }
};

inline std::vector<std::pair<std::string, std::string>> artifact_versions() {
  auto v = [](int a, int b, int c) {
    return std::to_string(a) + "." + std::to_string(b) + "." + std::to_string(c);
  };
  return {{"pqtwin", kArtifactVersion},
          {"eigen", v(EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"nlohmann_json",
           v(NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)}};
}

/// Runs the scenario and writes its outputs plus manifest.txt into out_dir.
inline RunManifest run_scenario(const Scenario& s, const std::filesystem::path& out_dir) {
  const ScenarioRun run = execute_scenario(s);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  RunManifest m{s.name, scenario_hash(s), artifact_versions(), {}};
  auto write = [&](const std::string& name, auto&& body) {
    const auto p = out_dir / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "cannot write '" + p.string() + "'");
    body(f);
    if (!f) fail(ErrorCode::Io, "write failed for '" + p.string() + "'");
    m.outputs.push_back(name);
  };
  if (s.outputs.trace) write("trace.csv", [&](std::ostream& o) { write_trace_csv(o, run.result, s.outputs.trace_stride); });
  if (s.outputs.waveform)
    write("waveform.csv", [&](std::ostream& o) { write_waveform_csv(o, run.observed.wave, run.observed.names); });
  if (s.outputs.report) write("report.txt", [&](std::ostream& o) { o << run.report; });
  if (s.outputs.sweep) write("sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, run.sweep); });
  write("manifest.txt", [&](std::ostream& o) { o << m.text(); });
  return m;
}

}  // namespace pqtwin
