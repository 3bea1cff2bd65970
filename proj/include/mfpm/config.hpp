#pragma once

// Run configuration (one JSON file, flags override it) and the sweep plan
// derived from it: samples, frame budget, calibrated drive and waveform.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/etl.hpp"
#include "mfpm/fixtures.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/render.hpp"
#include "mfpm/scene.hpp"
#include "mfpm/sync.hpp"

namespace mfpm {

struct SweepRequest {
  double surface_m = 0.5;
  double near_m = 0.167;
  std::optional<double> far_m;  // empty = optical infinity
};

struct RunConfig {
  std::filesystem::path base;  // directory of the config file; resolves relative paths
  std::string scene = "bunnies";

  double frequency_hz = 60.0;
  std::optional<std::vector<double>> samples_D;
  std::optional<std::size_t> sample_count;
  std::optional<SweepRequest> sweep;
  double guideline_D = optics::kGuidelineInterval;
  double power_bound_D = kDefaultPowerBound;

  std::string waveform_source = "simulated";  // or "measured"
  std::filesystem::path waveform_csv;
  int lti_order = 2;
  double lti_cutoff_hz = 200.0;

  sync::DeviceDelays delays;
  sync::ProjectorSpec projector;
  double cff_hz = 60.0;
  double power_tolerance_D = 0.02;
  sync::IlluminationCrossings illumination = sync::IlluminationCrossings::Both;
  etl::Segment left_segment = etl::Segment::Up;

  bool compensation = true;
  double bin_width_m = 0.05;
  bool quantize = true;
  std::optional<double> fixed_power_D;

  double pupil_m = 0.004;
  std::optional<std::vector<double>> accommodations_m;
  int subsamples = 8;
  double vergence_bucket_D = 1.0 / 64.0;

  std::filesystem::path out = "out";
  std::uint64_t seed = 0;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() || base.empty() ? p : base / p;
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key) && !j[key].is_null()) into = j[key].get<T>();
}

inline sync::IlluminationCrossings parse_crossings(const std::string& s) {
  if (s == "both") return sync::IlluminationCrossings::Both;
  if (s == "up") return sync::IlluminationCrossings::Up;
  if (s == "down") return sync::IlluminationCrossings::Down;
  throw ArgumentError("illumination must be both, up or down");
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  using detail::read_opt;
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  RunConfig c;
  c.base = base;
  read_opt(j, "scene", c.scene);
  read_opt(j, "frequency_hz", c.frequency_hz);
  if (j.contains("samples_D")) c.samples_D = j["samples_D"].get<std::vector<double>>();
  if (j.contains("sample_count")) c.sample_count = j["sample_count"].get<std::size_t>();
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    SweepRequest r;
    read_opt(s, "surface_m", r.surface_m);
    read_opt(s, "near_m", r.near_m);
    if (s.contains("far_m") && !s["far_m"].is_null()) r.far_m = s["far_m"].get<double>();
    c.sweep = r;
  }
  read_opt(j, "guideline_D", c.guideline_D);
  read_opt(j, "power_bound_D", c.power_bound_D);
  if (j.contains("waveform")) {
    const auto& w = j["waveform"];
    read_opt(w, "source", c.waveform_source);
    if (w.contains("csv")) c.waveform_csv = w["csv"].get<std::string>();
    read_opt(w, "lti_order", c.lti_order);
    read_opt(w, "lti_cutoff_hz", c.lti_cutoff_hz);
    if (c.waveform_source != "simulated" && c.waveform_source != "measured")
      throw ArgumentError("waveform.source must be simulated or measured");
    if (c.waveform_source == "measured" && c.waveform_csv.empty())
      throw ArgumentError("waveform.csv is required for a measured waveform");
  }
  if (j.contains("delays_ms")) {
    const auto& d = j["delays_ms"];
    if (d.contains("projector")) c.delays.projector = d["projector"].get<double>() * 1e-3;
    if (d.contains("shutter_close")) c.delays.shutter_close = d["shutter_close"].get<double>() * 1e-3;
    if (d.contains("shutter_open")) c.delays.shutter_open = d["shutter_open"].get<double>() * 1e-3;
    c.delays.validate();
  }
  read_opt(j, "projector_fps", c.projector.fps);
  read_opt(j, "cff_hz", c.cff_hz);
  read_opt(j, "power_tolerance_D", c.power_tolerance_D);
  if (j.contains("illumination")) c.illumination = detail::parse_crossings(j["illumination"].get<std::string>());
  if (j.contains("left_segment")) {
    const auto s = j["left_segment"].get<std::string>();
    if (s != "up" && s != "down") throw ArgumentError("left_segment must be up or down");
    c.left_segment = s == "up" ? etl::Segment::Up : etl::Segment::Down;
  }
  read_opt(j, "compensation", c.compensation);
  read_opt(j, "bin_width_m", c.bin_width_m);
  read_opt(j, "quantize", c.quantize);
  if (j.contains("fixed_power_D") && !j["fixed_power_D"].is_null()) c.fixed_power_D = j["fixed_power_D"].get<double>();
  read_opt(j, "pupil_m", c.pupil_m);
  if (j.contains("accommodations_m")) c.accommodations_m = j["accommodations_m"].get<std::vector<double>>();
  read_opt(j, "subsamples", c.subsamples);
  read_opt(j, "vergence_bucket_D", c.vergence_bucket_D);
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  read_opt(j, "seed", c.seed);
  if (!(c.frequency_hz > 0.0)) throw ArgumentError("frequency_hz must be > 0");
  if (!(c.bin_width_m > 0.0)) throw ArgumentError("bin_width_m must be > 0");
  if (!(c.pupil_m >= 0.0)) throw ArgumentError("pupil_m must be >= 0");
  return c;
}

/// Reads a config file. Syntax and schema problems become ConfigError with
/// the file name (and line for syntax errors).
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what(), path.string(), detail::line_of(text, e.byte));
  }
  try {
    RunConfig c = config_from_json(j, path.parent_path());
    if (c.waveform_source == "measured" && !std::filesystem::exists(c.resolve(c.waveform_csv)))
      throw ConfigError("waveform file does not exist: " + c.resolve(c.waveform_csv).string(), path.string());
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), path.string());
  }
}

/// A scene ready to render, with the powers and focus distances it asks for.
struct ResolvedScene {
  std::string name;
  Scene scene;
  PoseTimeline timeline;
  std::optional<std::vector<double>> samples;
  std::optional<std::vector<double>> accommodations;
  bool builtin = false;

  /// Pose times to evaluate: the timeline's, or a single static pose.
  std::vector<double> times() const { return timeline.empty() ? std::vector<double>{0.0} : timeline.times(); }
  Scene at(double t) const { return timeline.empty() ? scene : timeline.apply(scene, t); }
};

inline ResolvedScene resolve_scene(const RunConfig& cfg) {
  ResolvedScene r;
  if (auto f = fixtures::find(cfg.scene)) {
    r.name = f->name;
    r.scene = fixtures::scene(*f);
    r.timeline = f->timeline;
    r.samples = f->samples;
    r.accommodations = f->accommodations;
    r.builtin = true;
    return r;
  }
  const auto path = cfg.resolve(cfg.scene);
  if (!std::filesystem::exists(path))
    throw ConfigError("'" + cfg.scene + "' is neither a built-in scene nor an existing file");
  auto file = load_scene(path);
  r.name = file.scene.name;
  r.scene = std::move(file.scene);
  r.timeline = std::move(file.timeline);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  if (j.contains("samples_D")) r.samples = j["samples_D"].get<std::vector<double>>();
  if (j.contains("accommodations_m")) r.accommodations = j["accommodations_m"].get<std::vector<double>>();
  return r;
}

/// Everything decided before rendering or scheduling.
struct Plan {
  optics::SweepRange range;          // requested virtual-image sweep
  optics::PowerSamples samples;      // the slice powers of the sweep
  optics::PowerSamples display;      // what is actually shown (one sample in fixed-power mode)
  std::size_t frames = 0;            // N
  std::size_t budget = 0;            // slices per eye
  bool feasible = true;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
  double guard_margin = 0.0;         // D added to both ends of the lens sweep
  optics::SweepRange lens_range;     // what the lens is driven to cover
  std::string waveform_source;
  etl::LTIResponse lti;
  etl::DriveWaveform drive;
  etl::PowerWaveform waveform;
  bool has_waveform = false;
};

namespace detail {

inline optics::PowerSamples requested_samples(const RunConfig& cfg, const std::optional<std::vector<double>>& scene,
                                              optics::SweepRange& range) {
  auto span_of = [](const optics::PowerSamples& s) { return optics::SweepRange{Diopter{s.front()}, Diopter{s.back()}}; };
  if (cfg.samples_D) {
    optics::PowerSamples s(*cfg.samples_D, cfg.guideline_D);
    range = span_of(s);
    return s;
  }
  if (cfg.sample_count || cfg.sweep || !scene) {
    const SweepRequest req = cfg.sweep.value_or(SweepRequest{});
    range = optics::sweep_range(Distance::meters(req.surface_m), Distance::meters(req.near_m),
                                req.far_m ? Distance::meters(*req.far_m) : Distance::infinity());
    return optics::sample_powers(range, cfg.sample_count.value_or(7), cfg.guideline_D);
  }
  optics::PowerSamples s(*scene, cfg.guideline_D);
  range = span_of(s);
  return s;
}

}  // namespace detail

/// Samples, frame budget and the lens waveform. Infeasible budgets are
/// reported in `errors` rather than thrown so the plan can still be printed.
inline Plan make_plan(const RunConfig& cfg, const std::optional<std::vector<double>>& scene_samples = std::nullopt) {
  Plan p;
  p.samples = detail::requested_samples(cfg, scene_samples, p.range);
  p.display = cfg.fixed_power_D ? optics::PowerSamples({*cfg.fixed_power_D}, cfg.guideline_D) : p.samples;
  p.warnings = p.samples.warnings();
  p.frames = sync::frames_per_period(cfg.projector, cfg.frequency_hz);
  p.budget = sync::slice_budget_per_eye(p.frames);
  if (cfg.frequency_hz < cfg.cff_hz)
    p.warnings.push_back("sweep frequency " + std::to_string(cfg.frequency_hz) + " Hz is below the " +
                         std::to_string(cfg.cff_hz) + " Hz flicker threshold");
  if (p.display.size() > p.budget) {
    p.feasible = false;
    p.errors.push_back(std::to_string(p.display.size()) + " slices per eye exceed the budget of " +
                       std::to_string(p.budget) + " (N = " + std::to_string(p.frames) + ")");
  }
  for (double v : p.display.values())
    if (!Diopter{v}.within(cfg.power_bound_D)) {
      p.feasible = false;
      p.errors.push_back("sample " + std::to_string(v) + " D is outside the lens range");
    }
  if (!p.feasible) return p;

  p.waveform_source = cfg.waveform_source;
  if (cfg.waveform_source == "measured") {
    std::ifstream in(cfg.resolve(cfg.waveform_csv));
    if (!in) throw ConfigError("cannot open waveform", cfg.resolve(cfg.waveform_csv).string());
    p.waveform = etl::load_measured_waveform(etl::read_waveform_csv(in), cfg.frequency_hz);
    p.lens_range = {Diopter{p.waveform.min_power()}, Diopter{p.waveform.max_power()}};
  } else {
    double lo = p.samples.front();
    double hi = p.samples.back();
    if (hi - lo < 0.5) {  // a lone sample still needs a sweep to sit on
      lo -= 0.5;
      hi += 0.5;
    }
    try {
      p.guard_margin = sync::guard_margin(0.5 * (hi - lo), cfg.delays, cfg.projector, cfg.frequency_hz);
    } catch (const InfeasibleError& e) {
      p.feasible = false;
      p.errors.push_back(e.what());
      return p;
    }
    p.lens_range = {Diopter{lo - p.guard_margin}, Diopter{hi + p.guard_margin}};
    p.lti = etl::fit_plant(etl::DriveWaveform{}, {Diopter{-1.0}, Diopter{2.0}}, cfg.lti_order, cfg.lti_cutoff_hz);
    try {
      p.drive = etl::calibrate_drive(p.lens_range, p.lti, cfg.frequency_hz, cfg.power_bound_D);
    } catch (const InfeasibleError& e) {
      p.feasible = false;
      p.errors.push_back(e.what());
      return p;
    }
    p.waveform = etl::simulate_response(p.drive, p.lti);
  }
  p.has_waveform = true;
  for (double v : p.display.values())
    if (v < p.waveform.min_power() || v > p.waveform.max_power()) {
      p.feasible = false;
      p.errors.push_back("sample " + std::to_string(v) + " D is outside the waveform's range");
    }
  return p;
}

inline render::RenderOptions render_options(const RunConfig& cfg) {
  render::RenderOptions o;
  o.compensate = cfg.compensation;
  o.bin_width = cfg.bin_width_m;
  o.quantize = cfg.quantize;
  o.left_segment = cfg.left_segment;
  return o;
}

inline sync::ChartOptions chart_options(const RunConfig& cfg) {
  return {cfg.left_segment, cfg.illumination, cfg.power_tolerance_D};
}

inline sync::ValidationOptions validation_options(const RunConfig& cfg) {
  return {cfg.power_tolerance_D, cfg.cff_hz};
}

}  // namespace mfpm
