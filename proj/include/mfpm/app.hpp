#pragma once

// Command implementations behind the mfpm tool. Each command returns the
// process exit code: 0 success, 1 the run completed but the result is
// infeasible or failed a check, 2 invalid input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/config.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/render.hpp"
#include "mfpm/report.hpp"
#include "mfpm/retina.hpp"
#include "mfpm/sync.hpp"
#include "mfpm/verify.hpp"

namespace mfpm::app {

namespace fs = std::filesystem;
using nlohmann::json;

/// Command-line overrides on top of the config file.
struct Options {
  std::optional<fs::path> config;
  std::optional<std::string> scene;
  bool no_compensation = false;
  std::optional<double> fixed_power;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::vector<double> accommodations;
  std::optional<fs::path> from;  // simulate: earlier render/schedule output
  std::string fault;             // verify: fault to inject
};

inline RunConfig effective_config(const Options& o) {
  RunConfig c = o.config ? load_config(*o.config) : RunConfig{};
  if (o.scene) {
    c.scene = *o.scene;
    if (o.config && !fixtures::find(*o.scene)) c.base.clear();  // flag paths are relative to the working directory
  }
  if (o.no_compensation) c.compensation = false;
  if (o.fixed_power) c.fixed_power_D = *o.fixed_power;
  if (o.out) c.out = *o.out;
  else if (o.config) c.out = c.resolve(c.out);
  if (o.seed) c.seed = *o.seed;
  if (!o.accommodations.empty()) c.accommodations_m = o.accommodations;
  return c;
}

namespace detail {

inline void print_errors(std::ostream& err, const std::vector<std::string>& errors) {
  for (const auto& e : errors) err << "error: " << e << '\n';
}

inline std::string join(const std::vector<double>& v, int precision = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

inline std::vector<double> to_vector(const optics::PowerSamples& s) { return {s.values().begin(), s.values().end()}; }

struct Schedule {
  sync::TimingChart chart;
  sync::ValidationReport report;
};

inline Schedule schedule(const RunConfig& cfg, const Plan& plan) {
  Schedule s;
  s.chart = sync::build_chart(plan.waveform, plan.display, cfg.delays, cfg.projector, chart_options(cfg));
  s.report = sync::validate_chart(s.chart, plan.waveform, validation_options(cfg));
  return s;
}

inline Plan feasible_plan(const RunConfig& cfg, const ResolvedScene& rs, std::ostream& err) {
  Plan plan = make_plan(cfg, rs.samples);
  for (const auto& w : plan.warnings) err << "warning: " << w << '\n';
  if (!plan.feasible) {
    print_errors(err, plan.errors);
    throw InfeasibleError("the sweep plan is infeasible");
  }
  return plan;
}

/// Accommodation distances to look at when none are requested: the virtual
/// image of every slice over the mean projectable depth, plus the midpoints
/// between neighbours (in diopters).
inline std::vector<double> default_accommodations(const render::SliceStack& st, const optics::PowerSamples& samples,
                                                  double d_e) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < st.projectable_depth.size(); ++i)
    if (st.view.object_depth[i] > 0.0 && st.projectable_depth[i] > 0.0) {
      sum += st.projectable_depth[i];
      ++n;
    }
  if (n == 0) return {0.5 + d_e};
  const double dp = sum / static_cast<double>(n);
  std::vector<double> vergences;
  for (double v : samples.values()) {
    const double w = 1.0 / dp - v;
    if (w > 0.0) vergences.push_back(1.0 / (1.0 / w + d_e));
  }
  std::sort(vergences.begin(), vergences.end());
  std::vector<double> out;
  for (std::size_t k = 0; k < vergences.size(); ++k) {
    out.push_back(1.0 / vergences[k]);
    if (k + 1 < vergences.size()) out.push_back(2.0 / (vergences[k] + vergences[k + 1]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

inline int cmd_plan(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const ResolvedScene rs = resolve_scene(cfg);
  const Plan plan = make_plan(cfg, rs.samples);
  out << "scene: " << rs.name << '\n';
  out << "sweep range: [" << plan.range.v_low.value << ", " << plan.range.v_high.value << "] D\n";
  out << "samples: " << detail::join(detail::to_vector(plan.samples)) << " D\n";
  if (cfg.fixed_power_D) out << "fixed power: " << *cfg.fixed_power_D << " D\n";
  out << "max interval: " << plan.samples.max_interval() << " D (guideline " << plan.samples.guideline_interval()
      << " D)\n";
  out << "frames per period: " << plan.frames << ", slices per eye budget: " << plan.budget << '\n';
  if (plan.has_waveform)
    out << "lens range: [" << plan.lens_range.v_low.value << ", " << plan.lens_range.v_high.value
        << "] D (guard margin " << plan.guard_margin << " D), waveform " << plan.waveform_source << '\n';
  for (const auto& w : plan.warnings) err << "warning: " << w << '\n';
  report::write_json(cfg.out / "plan.json", report::plan_to_json(plan, cfg));
  if (!plan.feasible) {
    detail::print_errors(err, plan.errors);
    return 1;
  }
  return 0;
}

inline int cmd_render(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const ResolvedScene rs = resolve_scene(cfg);
  const Plan plan = detail::feasible_plan(cfg, rs, err);
  const auto opt = render_options(cfg);
  const auto times = rs.times();
  const fs::path root = cfg.out / "render";
  json poses = json::array();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Scene scene = rs.at(times[i]);
    const auto frames = render::render_frame_set(scene, plan.display, opt);
    poses.push_back(report::write_frame_set(root, report::pose_dir(i, times.size()), times[i], frames));
    for (Eye e : {Eye::Left, Eye::Right}) {
      const auto& st = frames.stack(e);
      for (const auto& d : st.view.diagnostics) err << "warning: " << to_string(e) << ": " << d << '\n';
      if (st.dropped > 0)
        err << "warning: " << to_string(e) << ": " << st.dropped << " object pixels have no surface behind them\n";
    }
  }
  report::write_json(root / "manifest.json", report::manifest(rs.name, plan, opt, rs.scene.projector, poses));
  out << "rendered " << plan.display.size() << " slices per eye for " << times.size() << " pose(s) into "
      << root.string() << '\n';
  return 0;
}

inline int cmd_schedule(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const ResolvedScene rs = resolve_scene(cfg);
  const Plan plan = detail::feasible_plan(cfg, rs, err);
  const auto s = detail::schedule(cfg, plan);
  report::write_schedule(cfg.out / "schedule", s.chart, s.report, plan.waveform);
  report::write_json(cfg.out / "schedule" / "plan.json", report::plan_to_json(plan, cfg));
  for (const auto& c : s.report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " (worst " << c.worst << ")\n";
    for (const auto& f : c.failures) err << "  " << c.name << ": " << f << '\n';
  }
  out << s.chart.events.size() << " events over " << s.chart.period * 1e3 << " ms written to "
      << (cfg.out / "schedule").string() << '\n';
  return s.report.passed() ? 0 : 1;
}

inline int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(o);
  const ResolvedScene rs = resolve_scene(cfg);
  const Plan plan = detail::feasible_plan(cfg, rs, err);
  const auto opt = render_options(cfg);
  const auto times = rs.times();

  sync::TimingChart chart;
  etl::PowerWaveform waveform = plan.waveform;
  json manifest;
  if (o.from) {
    chart = sync::chart_from_json(report::read_json(*o.from / "schedule" / "chart.json"));
    waveform = report::read_schedule_waveform(*o.from / "schedule", chart.period);
    manifest = report::read_json(*o.from / "render" / "manifest.json");
    if (manifest.at("display_samples_D").get<std::vector<double>>() != detail::to_vector(plan.display))
      throw ConfigError("rendered samples do not match the plan", (*o.from / "render" / "manifest.json").string());
    if (manifest.at("poses").size() != times.size())
      throw ConfigError("rendered pose count does not match the scene", (*o.from / "render" / "manifest.json").string());
  } else {
    chart = detail::schedule(cfg, plan).chart;
  }
  const auto vchart = sync::ValidatedChart::make(chart, waveform, validation_options(cfg));

  retina::SimOptions sim;
  sim.subsamples = cfg.subsamples;
  sim.bucket = cfg.vergence_bucket_D;

  const fs::path root = cfg.out / "simulate";
  std::vector<double> accs;
  json poses = json::array();
  json sharpest = json::array();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Scene scene = rs.at(times[i]);
    auto frames = render::render_frame_set(scene, plan.display, opt);
    if (o.from) report::load_frame_images(*o.from / "render", manifest["poses"][i], frames);
    if (accs.empty()) {
      if (cfg.accommodations_m) accs = *cfg.accommodations_m;
      else if (rs.accommodations) accs = *rs.accommodations;
      else accs = detail::default_accommodations(frames.left, plan.display, scene.eye_offset);
      for (double a : accs)
        if (!(a > 0.0)) throw ArgumentError("accommodation distances must be > 0");
    }
    const std::string sub = report::pose_dir(i, times.size());
    json pose;
    pose["time_s"] = times[i];
    for (Eye e : {Eye::Left, Eye::Right}) {
      const auto& st = frames.stack(e);
      const auto lf = retina::view_through_etl(frames, scene, vchart, waveform, e, sim);
      json je;
      je["crosstalk"] = retina::crosstalk(lf, e);
      double projected = 0.0;
      double lit = 0.0;
      for (const auto& ev : lf.events)
        (ev.kind == sync::EventKind::IlluminationTrigger ? lit : projected) += ev.energy;
      je["energy"] = {{"total", lf.total_energy()}, {"projected", projected}, {"illumination", lit}};
      const auto vc = retina::virtual_centroid(st, scene);
      je["virtual_centroid_m"] = {vc.world.x(), vc.world.y(), vc.world.z()};

      std::vector<Image<std::uint8_t>> obj_masks;
      for (std::size_t k = 0; k < scene.objects.size(); ++k)
        obj_masks.push_back(retina::object_mask(st.view, static_cast<int>(k)));
      std::vector<std::size_t> lit_surfaces;
      for (std::size_t k = 0; k < scene.surfaces.size(); ++k)
        if (scene.surfaces[k].illuminated) lit_surfaces.push_back(k);
      std::vector<Image<std::uint8_t>> slice_masks;
      for (std::size_t n = 0; n < plan.display.size(); ++n) slice_masks.push_back(retina::slice_mask(st, n));

      std::vector<std::vector<double>> s_obj(scene.objects.size()), s_surf(lit_surfaces.size()),
          s_slice(plan.display.size());
      json images = json::array();
      for (double a : accs) {
        const auto img = lf.focus(retina::eye_model(scene, e, a, cfg.pupil_m));
        const std::string file = (sub.empty() ? "" : sub + "/") + to_string(e) + "_acc_" + report::millimeters(a) + "mm.pgm";
        report::write_retinal_image(root / file, img);
        const auto sp = retina::spread(img.radiance);
        images.push_back({{"accommodation_m", a},
                          {"file", file},
                          {"energy", img.energy()},
                          {"spilled_energy", img.spilled},
                          {"centroid_px", {sp.cx, sp.cy}},
                          {"rms_radius_px", sp.rms}});
        for (std::size_t k = 0; k < obj_masks.size(); ++k)
          s_obj[k].push_back(retina::sharpness(img.radiance, obj_masks[k]));
        for (std::size_t k = 0; k < lit_surfaces.size(); ++k)
          s_surf[k].push_back(retina::sharpness(img.radiance, retina::surface_mask(st.view, static_cast<int>(lit_surfaces[k]))));
        for (std::size_t n = 0; n < slice_masks.size(); ++n)
          s_slice[n].push_back(retina::sharpness(img.radiance, slice_masks[n]));
      }
      je["images"] = images;

      json sh;
      for (std::size_t k = 0; k < s_obj.size(); ++k)
        sh["objects"][scene.objects[k].id] = {{"values", s_obj[k]}, {"best_accommodation_m", accs[detail::argmax(s_obj[k])]}};
      for (std::size_t k = 0; k < lit_surfaces.size(); ++k) {
        const auto& surf = scene.surfaces[lit_surfaces[k]];
        sh["surfaces"][surf.id] = {{"values", s_surf[k]},
                                   {"best_accommodation_m", accs[detail::argmax(s_surf[k])]},
                                   {"center_distance_m", scene.eye(e).to_camera(surf.pose.translation()).z() + scene.eye_offset}};
      }
      json slices = json::array();
      for (std::size_t n = 0; n < s_slice.size(); ++n) {
        const auto& slice = st.for_sample(n);
        std::size_t pixels = 0;
        for (auto m : slice_masks[n].data) pixels += m;
        json js = {{"sample_index", n}, {"power_D", plan.display[n]}, {"pixels", pixels}, {"values", s_slice[n]}};
        const render::Patch* main = nullptr;
        for (const auto& p : slice.compensation.patches)
          if (!main || p.pixels > main->pixels) main = &p;
        if (main && main->reciprocal_virtual > 0.0)
          js["expected_accommodation_m"] = 1.0 / main->reciprocal_virtual + scene.eye_offset;
        if (pixels > 0) js["best_accommodation_m"] = accs[detail::argmax(s_slice[n])];
        slices.push_back(js);
      }
      sh["slices"] = slices;
      je["sharpness"] = sh;

      const auto boundaries =
          retina::boundary_continuity(st, scene, retina::eye_model(scene, e, accs.front(), cfg.pupil_m), plan.display);
      json jb = json::array();
      for (const auto& b : boundaries) jb.push_back(report::boundary_to_json(b, plan.display));
      je["boundaries"] = jb;
      pose["eyes"][to_string(e)] = je;

      for (std::size_t a = 0; a < accs.size() && !s_obj.empty(); ++a) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < s_obj.size(); ++k)
          if (s_obj[k][a] > s_obj[best][a]) best = k;
        sharpest.push_back({{"pose", i}, {"eye", to_string(e)}, {"accommodation_m", accs[a]}, {"object", scene.objects[best].id}});
        if (i == 0) out << to_string(e) << " @ " << std::fixed << std::setprecision(3) << accs[a] << " m: sharpest "
                        << scene.objects[best].id << '\n';
      }
      if (i == 0) out << to_string(e) << " crosstalk " << je["crosstalk"].get<double>() << '\n';
    }
    poses.push_back(pose);
  }

  json rep;
  rep["scene"] = rs.name;
  rep["units"] = report::units();
  rep["display_samples_D"] = detail::to_vector(plan.display);
  rep["accommodations_m"] = accs;
  rep["pupil_m"] = cfg.pupil_m;
  rep["chart_checks"] = sync::report_to_json(vchart.report());
  rep["poses"] = poses;
  rep["sharpest_object"] = sharpest;
  report::write_json(root / "focus_report.json", rep);
  out << "inputs: " << (o.from ? o.from->string() : std::string("rendered and scheduled in process")) << '\n';
  out << "focus report written to " << (root / "focus_report.json").string() << '\n';
  return 0;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream&) {
  const RunConfig cfg = o.config || o.seed ? effective_config(o) : RunConfig{};
  const auto results = verify::run(cfg.seed, o.fault);
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.module << '.' << r.name << "  " << r.detail << '\n';
    ok = ok && r.passed;
  }
  out << (ok ? "all checks passed" : "some checks failed") << '\n';
  return ok ? 0 : 1;
}

/// Runs `command` and maps exceptions to exit codes.
inline int run(const std::string& command, const Options& o, std::ostream& out, std::ostream& err) {
  try {
    if (command == "plan") return cmd_plan(o, out, err);
    if (command == "render") return cmd_render(o, out, err);
    if (command == "schedule") return cmd_schedule(o, out, err);
    if (command == "simulate") return cmd_simulate(o, out, err);
    if (command == "verify") return cmd_verify(o, out, err);
    err << "error: unknown command '" << command << "'\n";
    return 2;
  } catch (const SchedulingConflict& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace mfpm::app
