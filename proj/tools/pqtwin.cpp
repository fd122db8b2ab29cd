#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pqtwin/pqtwin.hpp"

using namespace pqtwin;

namespace {

int report_error(const char* kind, const std::string& why, int code) {
  std::string line = why;
  for (char& c : line)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error: " << kind << ": " << line << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pqtwin: low-voltage grid and power-quality workbench"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out";
  auto* sim = app.add_subcommand("simulate", "run a scenario file and write trace, report and manifest");
  sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
  sim->add_option("--out,-o", out_dir, "output directory");

  std::string model_name = "nominal", tap_name = "P5", conductor_name = "L1", spacing = "log", mode = "path";
  double fmin = 20.0, fmax = 200e3;
  std::size_t points = 100;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep-impedance", "R(f), X(f) of a tap as CSV");
  sweep->add_option("--model", model_name, "nominal, measured, or a model JSON file");
  sweep->add_option("--tap", tap_name, "P1-P7");
  sweep->add_option("--conductor", conductor_name, "L1, L2, L3 or N");
  sweep->add_option("--fmin", fmin, "lowest frequency, Hz");
  sweep->add_option("--fmax", fmax, "highest frequency, Hz");
  sweep->add_option("--points", points, "number of frequencies");
  sweep->add_option("--spacing", spacing, "log or linear");
  sweep->add_option("--mode", mode, "path (series chain) or driving_point (phase to N)");
  sweep->add_option("--out,-o", sweep_out, "write CSV here instead of stdout");

  std::string wave_path;
  double f_c = 50.0, settle = 5.0, observation = 0.0;
  bool flicker = false, short_obs = false;
  auto* analyze = app.add_subcommand("analyze", "PQ report for a waveform CSV");
  analyze->add_option("waveform", wave_path, "waveform CSV (# rate= header)")->required();
  analyze->add_option("--fc", f_c, "nominal fundamental, Hz");
  analyze->add_flag("--flicker", flicker, "compute Pst/Plt");
  analyze->add_flag("--short", short_obs, "allow flicker observation blocks from 60 s");
  analyze->add_option("--settle", settle, "flickermeter settling time excluded, s");
  analyze->add_option("--observation", observation, "Pst block length, s (600, or 60 with --short)");

  auto* presets = app.add_subcommand("presets", "load preset catalogue");
  auto* presets_list = presets->add_subcommand("list", "print the catalogue");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*sim) {
      const Scenario s = load_scenario(scenario_path);
      const RunManifest m = run_scenario(s, out_dir);
      std::cout << m.text();
    } else if (*sweep) {
      GridModel model;
      if (model_name == "nominal")
        model = nominal_model();
      else if (model_name == "measured")
        model = measured_model();
      else if (std::filesystem::exists(model_name))
        model = detail::parse_model_json(
            detail::parse_json_text(detail::read_text_file(model_name), model_name), model_name);
      else
        fail(ErrorCode::UnknownName, "unknown model '" + model_name + "' (nominal, measured, or a model file)");
      SweepRequest r;
      r.tap = parse_tap(tap_name);
      r.conductor = parse_conductor(conductor_name);
      r.f_min = fmin;
      r.f_max = fmax;
      r.points = points;
      if (spacing == "log")
        r.spacing = SweepSpacing::Log;
      else if (spacing == "linear")
        r.spacing = SweepSpacing::Linear;
      else
        fail(ErrorCode::UnknownName, "unknown spacing '" + spacing + "' (log, linear)");
      if (mode == "driving_point")
        r.driving_point = true;
      else if (mode != "path")
        fail(ErrorCode::UnknownName, "unknown mode '" + mode + "' (path, driving_point)");
      const auto pts = run_sweep(model, r);
      if (sweep_out.empty()) {
        write_sweep_csv(std::cout, pts);
      } else {
        std::ofstream f(sweep_out);
        if (!f) fail(ErrorCode::Io, "cannot write '" + sweep_out + "'");
        write_sweep_csv(f, pts);
      }
    } else if (*analyze) {
      AnalyzeOptions opt;
      opt.f_c = f_c;
      if (flicker || short_obs || observation > 0.0) {
        FlickerOptions fo;
        fo.settle_s = settle;
        fo.short_observation = short_obs;
        fo.observation_s = observation > 0.0 ? observation : (short_obs ? 60.0 : 600.0);
        opt.flicker = fo;
      }
      std::cout << analyze_waveform(read_waveform_file(wave_path), opt);
    } else if (*presets_list) {
      for (const auto& p : preset_catalog()) std::cout << p.name << '\t' << p.rated << '\n';
    }
  } catch (const Error& e) {
    return report_error(to_string(e.code()), e.what(), e.exit_code());
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 3);
  }
  return 0;
}
