#pragma once

// On-disk artifacts: slice images and their manifest, plan and chart
// exports, retinal images with an angular calibration sidecar, and the
// focus report.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/config.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/image.hpp"
#include "mfpm/render.hpp"
#include "mfpm/retina.hpp"
#include "mfpm/sync.hpp"

namespace mfpm::report {

namespace fs = std::filesystem;
using nlohmann::json;

inline json units() {
  return {{"power", "D"}, {"distance", "m"}, {"time", "s"}, {"angle", "rad"}, {"radiance", "relative, 1 = full white"}};
}

inline void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write", path.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open", path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(e.what(), path.string());
  }
}

inline std::string pose_dir(std::size_t index, std::size_t count) {
  if (count <= 1) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "pose_%02zu", index);
  return buf;
}

inline std::string slice_file(std::size_t order) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slice_%02zu.pgm", order);
  return buf;
}

inline std::string millimeters(double m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04ld", std::lround(m * 1000.0));
  return buf;
}

inline json plan_to_json(const Plan& p, const RunConfig& cfg) {
  json j;
  j["units"] = units();
  j["sweep_range_D"] = {p.range.v_low.value, p.range.v_high.value};
  j["samples_D"] = std::vector<double>(p.samples.values().begin(), p.samples.values().end());
  j["display_samples_D"] = std::vector<double>(p.display.values().begin(), p.display.values().end());
  j["max_interval_D"] = p.samples.max_interval();
  j["guideline_D"] = p.samples.guideline_interval();
  j["meets_guideline"] = p.samples.meets_guideline();
  j["warnings"] = p.warnings;
  j["frequency_hz"] = cfg.frequency_hz;
  j["projector_fps"] = cfg.projector.fps;
  j["frames_per_period"] = p.frames;
  j["slices_per_eye_budget"] = p.budget;
  j["feasible"] = p.feasible;
  j["errors"] = p.errors;
  if (p.has_waveform) {
    j["guard_margin_D"] = p.guard_margin;
    j["lens_range_D"] = {p.lens_range.v_low.value, p.lens_range.v_high.value};
    json w;
    w["source"] = p.waveform_source;
    w["min_D"] = p.waveform.min_power();
    w["max_D"] = p.waveform.max_power();
    if (p.waveform_source == "simulated") {
      w["synthetic_plant"] = true;
      w["lti"] = {{"order", p.lti.order},
                  {"cutoff_hz", p.lti.cutoff},
                  {"dc_gain_D_per_V", p.lti.dc_gain},
                  {"rest_power_D", p.lti.rest_power},
                  {"attenuation", p.lti.attenuation(cfg.frequency_hz)},
                  {"phase_lag_rad", p.lti.phase_lag(cfg.frequency_hz)}};
      w["drive"] = {{"offset_V", p.drive.offset}, {"amplitude_V", p.drive.amplitude}, {"frequency_hz", p.drive.frequency}};
    }
    j["waveform"] = w;
  }
  return j;
}

/// Writes one pose's projector images under `dir` and returns its manifest
/// entry.
inline json write_frame_set(const fs::path& root, const std::string& sub, double time, const render::FrameSet& fs) {
  const fs::path dir = sub.empty() ? root : root / sub;
  json pose;
  pose["time_s"] = time;
  pose["dir"] = sub;
  fs::create_directories(dir);
  write_pgm(dir / "illumination.pgm", fs.illumination);
  pose["illumination"] = "illumination.pgm";
  for (Eye e : {Eye::Left, Eye::Right}) {
    const auto& st = fs.stack(e);
    const fs::path edir = dir / to_string(e);
    fs::create_directories(edir);
    json je;
    je["dropped_pixels"] = st.dropped;
    je["object_pixels"] = st.view.object_pixels;
    je["diagnostics"] = st.view.diagnostics;
    json slices = json::array();
    for (std::size_t k = 0; k < st.slices.size(); ++k) {
      const auto& s = st.slices[k];
      const std::string file = std::string(to_string(e)) + "/" + slice_file(k);
      write_pgm(dir / file, s.projection);
      json patches = json::array();
      for (const auto& p : s.compensation.patches)
        patches.push_back({{"bin", p.bin},
                           {"surface_depth_m", p.surface_depth},
                           {"scale", p.scale},
                           {"fov_factor", p.fov_factor},
                           {"tan_scale", p.tan_scale},
                           {"pixels", p.pixels}});
      slices.push_back({{"order", k},
                        {"sample_index", s.sample_index},
                        {"power_D", s.power},
                        {"fov_factor", s.fov_factor},
                        {"file", file},
                        {"patches", patches}});
    }
    je["slices"] = slices;
    pose["eyes"][to_string(e)] = je;
  }
  return pose;
}

inline json manifest(const std::string& scene, const Plan& plan, const render::RenderOptions& opt,
                     const PinholeCamera& projector, const json& poses) {
  json j;
  j["scene"] = scene;
  j["units"] = units();
  j["samples_D"] = std::vector<double>(plan.samples.values().begin(), plan.samples.values().end());
  j["display_samples_D"] = std::vector<double>(plan.display.values().begin(), plan.display.values().end());
  j["options"] = {{"compensate", opt.compensate},
                  {"bin_width_m", opt.bin_width},
                  {"quantize", opt.quantize},
                  {"left_segment", to_string(opt.left_segment)}};
  j["projector"] = {{"width", projector.width}, {"height", projector.height}, {"bit_depth", 8}};
  j["image_format"] = "8-bit binary PGM; gray level k means radiance k/255";
  j["poses"] = poses;
  return j;
}

/// Replaces the projector images of `fs` with the ones stored for a pose.
inline void load_frame_images(const fs::path& root, const json& pose, render::FrameSet& fs) {
  const fs::path dir = pose.at("dir").get<std::string>().empty() ? root : root / pose["dir"].get<std::string>();
  fs.illumination = read_pgm(dir / pose.at("illumination").get<std::string>());
  for (Eye e : {Eye::Left, Eye::Right}) {
    auto& st = e == Eye::Left ? fs.left : fs.right;
    const auto& slices = pose.at("eyes").at(to_string(e)).at("slices");
    if (slices.size() != st.slices.size()) throw ConfigError("manifest slice count does not match the plan");
    for (std::size_t k = 0; k < slices.size(); ++k) {
      if (slices[k].at("sample_index").get<std::size_t>() != st.slices[k].sample_index ||
          slices[k].at("power_D").get<double>() != st.slices[k].power)
        throw ConfigError("manifest slice order does not match the plan");
      st.slices[k].projection = read_pgm(dir / slices[k].at("file").get<std::string>());
    }
  }
}

inline void write_schedule(const fs::path& dir, const sync::TimingChart& chart, const sync::ValidationReport& rep,
                           const etl::PowerWaveform& waveform) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "chart.csv");
    sync::write_chart_csv(out, chart);
  }
  write_json(dir / "chart.json", sync::chart_to_json(chart, &rep));
  std::ofstream out(dir / "waveform.csv");
  etl::write_waveform_csv(out, waveform);
}

inline etl::PowerWaveform read_schedule_waveform(const fs::path& dir, double period) {
  std::ifstream in(dir / "waveform.csv");
  if (!in) throw ConfigError("cannot open", (dir / "waveform.csv").string());
  try {
    return etl::PowerWaveform(etl::read_waveform_csv(in), period);
  } catch (const FormatError& e) {
    throw ConfigError(e.what(), (dir / "waveform.csv").string(),
                      e.row() == FormatError::npos ? 0 : static_cast<int>(e.row()) + 2);
  }
}

/// Retinal image as an 8-bit PGM scaled to its own peak, plus a sidecar
/// giving the scale and the pixel-to-angle mapping.
inline void write_retinal_image(const fs::path& pgm, const retina::RetinalImage& img) {
  fs::create_directories(pgm.parent_path());
  double peak = 0.0;
  for (double v : img.radiance.data) peak = std::max(peak, v);
  Image<double> scaled = img.radiance;
  if (peak > 0.0)
    for (auto& v : scaled.data) v /= peak;
  write_pgm(pgm, scaled);
  json side;
  side["units"] = units();
  side["accommodation_m"] = img.accommodation;
  side["pupil_diameter_m"] = img.pupil_diameter;
  side["width"] = img.radiance.width;
  side["height"] = img.radiance.height;
  side["focal_px"] = img.focal_px;
  side["cx"] = img.cx;
  side["cy"] = img.cy;
  side["pixel_to_angle"] = "tan(angle_x) = (x + 0.5 - cx) / focal_px, likewise for y";
  side["pixel_angle_rad"] = 1.0 / img.focal_px;
  side["integrated_radiance_per_level"] = peak / 255.0;
  side["energy"] = img.energy();
  side["spilled_energy"] = img.spilled;
  fs::path js = pgm;
  js.replace_extension(".json");
  write_json(js, side);
}

inline json boundary_to_json(const retina::BoundaryEntry& b, const optics::PowerSamples& samples) {
  return {{"lower_sample", b.lower_sample},
          {"upper_sample", b.upper_sample},
          {"lower_power_D", samples[b.lower_sample]},
          {"upper_power_D", samples[b.upper_sample]},
          {"pixel_pairs", b.pairs},
          {"mean_mismatch_px", b.mean_px},
          {"max_abs_mismatch_px", b.max_abs_px},
          {"mean_mismatch_arcmin", b.mean_arcmin},
          {"max_abs_mismatch_arcmin", b.max_abs_arcmin},
          {"pairs_with_predicted_sign", b.predicted_sign_matches}};
}

}  // namespace mfpm::report
