#pragma once

// Seeded invariant matrix run by `mfpm verify`. Each fault mode breaks one
// piece of the pipeline on purpose; the check listed for it must then fail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "mfpm/config.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/etl.hpp"
#include "mfpm/fixtures.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/render.hpp"
#include "mfpm/retina.hpp"
#include "mfpm/sync.hpp"

namespace mfpm::verify {

struct Result {
  std::string module;
  std::string name;
  bool passed = true;
  std::string detail;
};

struct FaultMode {
  const char* name;
  const char* breaks;  // module.check expected to fail
  const char* description;
};

inline const std::vector<FaultMode>& fault_modes() {
  static const std::vector<FaultMode> modes = {
      {"tie-upper", "optics.assign_slice_oracle", "midpoint ties go to the upper sample"},
      {"naive-filter", "optics.depth_filter_conservation", "both depth-filter shares formed by multiplication"},
      {"no-lead", "sync.default_chart_valid", "projector triggers issued without the projector latency lead"},
      {"open-shutters", "retina.crosstalk_zero", "shutter commands dropped from the replayed chart"},
      {"no-compensation", "render.compensation_boundary", "lens-breathing compensation disabled"},
  };
  return modes;
}

/// Rigid motion of everything in the scene, cameras included.
inline Scene moved(Scene s, const Pose& g) {
  for (auto& x : s.surfaces) x.pose = g * x.pose;
  for (auto& x : s.objects) x.pose = g * x.pose;
  for (auto* c : {&s.left, &s.right, &s.projector}) c->world_to_camera = c->world_to_camera * g.inverse();
  return s;
}

namespace detail {

struct Faults {
  bool tie_upper = false;
  bool naive_filter = false;
  bool no_lead = false;
  bool open_shutters = false;
  bool no_compensation = false;
};

inline Faults parse_fault(const std::string& f) {
  Faults x;
  if (f.empty() || f == "none") return x;
  if (f == "tie-upper") x.tie_upper = true;
  else if (f == "naive-filter") x.naive_filter = true;
  else if (f == "no-lead") x.no_lead = true;
  else if (f == "open-shutters") x.open_shutters = true;
  else if (f == "no-compensation") x.no_compensation = true;
  else throw ArgumentError("unknown fault mode '" + f + "'");
  return x;
}

inline std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

class Runner {
 public:
  Runner(std::uint64_t seed, Faults faults) : rng_(seed), f_(faults) {}

  std::vector<Result> run() {
    optics_checks();
    etl_checks();
    sync_checks();
    render_checks();
    retina_checks();
    return std::move(results_);
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  void add(const char* module, const char* name, bool ok, std::string detail) {
    results_.push_back({module, name, ok, std::move(detail)});
  }

  std::size_t assign(Diopter v, const optics::PowerSamples& s) const {
    std::size_t i = optics::assign_slice(v, s);
    if (f_.tie_upper && i + 1 < s.size() && std::abs(s[i + 1] - v.value) == std::abs(s[i] - v.value)) ++i;
    return i;
  }

  std::pair<double, double> filter(double r, Diopter v, const optics::PowerSamples& s) const {
    const auto w = optics::depth_filter(r, v, s);
    if (f_.naive_filter) return {r * w.weight_lower, r * w.weight_upper};
    return {w.radiance_lower, w.radiance_upper};
  }

  /// Strictly increasing eighth-diopter samples, so midpoints are exact.
  optics::PowerSamples dyadic_samples() {
    std::vector<double> v;
    const int n = uniform_int(2, 10);
    int k = uniform_int(-24, 0);
    for (int i = 0; i < n; ++i) {
      v.push_back(k / 8.0);
      k += uniform_int(1, 6);
    }
    return optics::PowerSamples(v);
  }

  void optics_checks() {
    {
      const auto r = optics::sweep_range(Distance::meters(0.5), Distance::meters(0.167), Distance::infinity());
      const double err = std::max(std::abs(r.v_low.value + 1.0), std::abs(r.v_high.value - 2.0));
      add("optics", "sweep_range_reference", err <= 0.005, fmt("(%.4f, %.4f) D", r.v_low.value, r.v_high.value));
    }
    {
      double worst = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const double dp = uniform(0.1, 5.0);
        const double dv = uniform(0.05, 10.0);
        const Diopter v = optics::required_power(Distance::meters(dp), Distance::meters(dv));
        const double back = optics::virtual_distance(Distance::meters(dp), v).value();
        worst = std::max(worst, std::abs(back - dv) / dv);
      }
      add("optics", "thin_lens_round_trip", worst <= 1e-12, fmt("worst relative error %.3g over 1e4 cases", worst));
    }
    {
      std::size_t bad = 0;
      std::size_t ties = 0;
      for (int i = 0; i < 10000; ++i) {
        const auto s = dyadic_samples();
        double v;
        if (i % 2 == 0 && s.size() > 1) {
          const std::size_t k = static_cast<std::size_t>(uniform_int(0, static_cast<int>(s.size()) - 2));
          v = 0.5 * (s[k] + s[k + 1]);
          ++ties;
        } else {
          v = uniform(s.front() - 1.0, s.back() + 1.0);
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < s.size(); ++k)
          if (std::abs(s[k] - v) < std::abs(s[best] - v)) best = k;
        if (assign(Diopter{v}, s) != best) ++bad;
      }
      add("optics", "assign_slice_oracle", bad == 0,
          std::to_string(bad) + " mismatches against exhaustive argmin (1e4 cases, " + std::to_string(ties) + " ties)");
    }
    {
      std::size_t bad = 0;
      for (int i = 0; i < 10000; ++i) {
        std::vector<double> v;
        double x = uniform(-3.0, 0.0);
        for (int k = uniform_int(1, 8); k > 0; --k) {
          v.push_back(x);
          x += uniform(0.05, 1.0);
        }
        const optics::PowerSamples s(v);
        const double r = uniform(0.0, 1.0);
        const auto [lo, hi] = filter(r, Diopter{uniform(s.front() - 0.5, s.back() + 0.5)}, s);
        if (lo + hi != r || lo < 0.0 || hi < 0.0) ++bad;
      }
      add("optics", "depth_filter_conservation", bad == 0, std::to_string(bad) + " of 1e4 splits not bit-exact");
    }
    {
      double worst = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const auto s = dyadic_samples();
        const double v = uniform(s.front(), s.back());
        const auto w = optics::depth_filter(1.0, Diopter{v}, s);
        const double mean = w.weight_lower * s[w.lower_index] + w.weight_upper * s[w.upper_index];
        worst = std::max(worst, std::abs(mean - v));
      }
      add("optics", "depth_filter_linear", worst <= 1e-12, fmt("weighted bracket mean off by %.3g D", worst));
    }
    {
      double worst = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const double dp = uniform(0.2, 3.0);
        const double v = uniform(-2.0, 0.9 / dp);
        const double de = uniform(0.0, 0.05);
        const double a = optics::breathing_scale(Distance::meters(dp),
                                                 optics::virtual_distance(Distance::meters(dp), Diopter{v}),
                                                 Distance::meters(de));
        const double b = optics::breathing_scale_for_power(Distance::meters(dp), Diopter{v}, Distance::meters(de));
        worst = std::max(worst, std::abs(a - b) / b);
      }
      add("optics", "breathing_scale_forms_agree", worst <= 1e-12, fmt("worst relative gap %.3g", worst));
    }
  }

  void etl_checks() {
    const auto lti = etl::default_plant();
    {
      double worst = 0.0;
      for (int i = 0; i < 20; ++i) {
        const double lo = uniform(-4.0, 1.0);
        const optics::SweepRange target{Diopter{lo}, Diopter{lo + uniform(0.5, 5.0)}};
        const auto w = etl::simulate_response(etl::calibrate_drive(target, lti, 60.0), lti);
        worst = std::max({worst, std::abs(w.min_power() - target.v_low.value),
                          std::abs(w.max_power() - target.v_high.value)});
      }
      add("etl", "calibrate_closed_loop", worst <= 0.01, fmt("worst range error %.3g D over 20 targets", worst));
    }
    {
      const auto w = etl::simulate_response(etl::DriveWaveform{}, lti);
      double worst = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const Diopter v{uniform(w.min_power(), w.max_power())};
        const auto seg = i % 2 ? etl::Segment::Up : etl::Segment::Down;
        worst = std::max(worst, std::abs(w.power_at(w.phase_for_power(v, seg)).value - v.value));
      }
      add("etl", "phase_power_round_trip", worst <= 1e-4, fmt("worst %.3g D over 1e4 cases", worst));
    }
    {
      // Superposition: the response to the sum of two drives is the sum of
      // the responses, measured about the rest power.
      etl::DriveWaveform a{0.001, 0.01, 60.0};
      etl::DriveWaveform b{0.002, 0.015, 60.0};
      etl::DriveWaveform ab{a.offset + b.offset, a.amplitude + b.amplitude, 60.0};
      const auto wa = etl::simulate_response(a, lti);
      const auto wb = etl::simulate_response(b, lti);
      const auto wab = etl::simulate_response(ab, lti);
      double worst = 0.0;
      for (std::size_t k = 0; k < wab.size(); ++k) {
        const double sum = (wa.samples()[k].power - lti.rest_power) + (wb.samples()[k].power - lti.rest_power);
        worst = std::max(worst, std::abs(wab.samples()[k].power - lti.rest_power - sum));
      }
      add("etl", "lti_superposition", worst <= 1e-9, fmt("worst deviation %.3g D", worst));
    }
  }

  void sync_checks() {
    RunConfig cfg;
    const Plan plan = make_plan(cfg, fixtures::bunnies().samples);
    sync::DeviceDelays assumed = cfg.delays;
    if (f_.no_lead) assumed.projector = 0.0;
    const auto built = sync::build_chart(plan.waveform, plan.display, assumed, cfg.projector, chart_options(cfg));
    const auto actual = sync::retime(built, cfg.delays);
    const auto rep = sync::validate_chart(actual, plan.waveform, validation_options(cfg));
    std::string failed;
    for (const auto& c : rep.checks)
      if (!c.passed) failed += " " + c.name;
    add("sync", "default_chart_valid", rep.passed(),
        rep.passed() ? fmt("all checks pass, worst trigger error %.4f D", rep.check("trigger_power").worst)
                     : "failed:" + failed);

    const auto again = sync::build_chart(plan.waveform, plan.display, cfg.delays, cfg.projector, chart_options(cfg));
    const auto once = sync::build_chart(plan.waveform, plan.display, cfg.delays, cfg.projector, chart_options(cfg));
    add("sync", "chart_deterministic", sync::chart_to_json(again).dump() == sync::chart_to_json(once).dump(),
        "two builds compared byte for byte");

    std::size_t detected = 0;
    for (int k = 0; k < 3; ++k) {
      sync::DeviceDelays d = cfg.delays;
      (k == 0 ? d.projector : k == 1 ? d.shutter_close : d.shutter_open) += 1e-3;
      if (!sync::validate_chart(sync::retime(once, d), plan.waveform, validation_options(cfg)).passed()) ++detected;
    }
    add("sync", "delay_perturbation_detected", detected == 3,
        std::to_string(detected) + " of 3 +1 ms delay errors detected");

    RunConfig slow = cfg;
    slow.frequency_hz = 45.0;
    const Plan sp = make_plan(slow, fixtures::bunnies().samples);
    bool flagged = !sp.feasible;
    if (sp.feasible) {
      try {
        const auto c = sync::build_chart(sp.waveform, sp.display, slow.delays, slow.projector, chart_options(slow));
        flagged = !sync::validate_chart(c, sp.waveform, validation_options(slow)).check("sweep_above_cff").passed;
      } catch (const std::exception&) {
        flagged = true;
      }
    }
    add("sync", "below_cff_rejected", flagged, "45 Hz sweep against a 60 Hz threshold");
  }

  void render_checks() {
    const auto bunnies = fixtures::bunnies();
    const Scene scene = fixtures::scene(bunnies);
    const optics::PowerSamples samples(bunnies.samples);
    render::RenderOptions exact;
    exact.quantize = false;
    const auto fs = render::render_frame_set(scene, samples, exact);
    {
      std::size_t bad = 0;
      for (const auto* st : {&fs.left, &fs.right})
        for (std::size_t i = 0; i < st->view.color.size(); ++i) {
          double sum = 0.0;
          for (std::size_t n = 0; n < samples.size(); ++n) sum += st->for_sample(n).observer[i];
          const double want = st->uncovered[i] ? 0.0 : st->view.color[i];
          if (sum != want) ++bad;
        }
      add("render", "radiance_conservation", bad == 0, std::to_string(bad) + " pixels differ from the observer render");
    }
    {
      const auto base = render::render_frame_set(scene, samples);
      const Pose g = make_pose(Eigen::Quaterniond(Eigen::AngleAxisd(uniform(-1.0, 1.0), Vec3(uniform(-1, 1), 1, uniform(-1, 1)).normalized())),
                               Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)));
      const auto other = render::render_frame_set(moved(scene, g), samples);
      std::size_t diff = 0;
      for (Eye e : {Eye::Left, Eye::Right})
        for (std::size_t k = 0; k < samples.size(); ++k)
          for (std::size_t i = 0; i < base.stack(e).slices[k].projection.size(); ++i)
            diff += base.stack(e).slices[k].projection[i] != other.stack(e).slices[k].projection[i];
      for (std::size_t i = 0; i < base.illumination.size(); ++i) diff += base.illumination[i] != other.illumination[i];
      add("render", "pose_equivariance", diff == 0, std::to_string(diff) + " projector pixels changed under a rigid motion");
    }
    {
      Scene mono = scene;
      mono.eye_separation = 0.0;
      place_eyes(mono, mono.left.world_to_camera, mono.left.vfov, mono.left.width, mono.left.height);
      const auto m = render::render_frame_set(mono, samples);
      std::size_t diff = 0;
      for (std::size_t n = 0; n < samples.size(); ++n)
        for (std::size_t i = 0; i < m.left.for_sample(n).projection.size(); ++i)
          diff += m.left.for_sample(n).projection[i] != m.right.for_sample(n).projection[i];
      add("render", "zero_disparity_symmetry", diff == 0, std::to_string(diff) + " pixels differ between eyes");
    }
    {
      const auto checker = fixtures::slanted_checker();
      const Scene cs = fixtures::scene(checker);
      const optics::PowerSamples s6(checker.samples);
      render::RenderOptions opt;
      opt.compensate = !f_.no_compensation;
      const auto c = render::render_frame_set(cs, s6, opt);
      const auto eye = retina::eye_model(cs, Eye::Left, checker.accommodations.front());
      const auto b = retina::boundary_continuity(c.left, cs, eye, s6);
      double worst = 0.0;
      for (const auto& e : b) worst = std::max(worst, e.max_abs_px);
      add("render", "compensation_boundary", !b.empty() && worst < 1.0,
          fmt("max boundary mismatch %.3g px over %.0f boundaries", worst, static_cast<double>(b.size())));
    }
  }

  void retina_checks() {
    RunConfig cfg;
    const auto bunnies = fixtures::bunnies();
    const Scene scene = fixtures::scene(bunnies);
    const Plan plan = make_plan(cfg, bunnies.samples);
    const auto fs = render::render_frame_set(scene, plan.display);
    auto chart = sync::build_chart(plan.waveform, plan.display, cfg.delays, cfg.projector, chart_options(cfg));
    retina::SimOptions sim;
    sim.subsamples = 4;
    sync::ValidatedChart vchart = sync::ValidatedChart::make(chart, plan.waveform);
    if (f_.open_shutters) {
      std::erase_if(chart.events, [](const sync::Event& e) { return e.kind == sync::EventKind::ShutterCommand; });
      vchart = sync::ValidatedChart::unchecked(chart);
      sim.allow_unchecked = true;
    }
    const auto lf = retina::view_through_etl(fs, scene, vchart, plan.waveform, Eye::Left, sim);
    const double x = retina::crosstalk(lf, Eye::Left);
    add("retina", "crosstalk_zero", x == 0.0, fmt("left-eye crosstalk %.3g", x));

    const auto img = lf.focus(retina::eye_model(scene, Eye::Left, 0.52));
    const double total = lf.total_energy();
    const double rel = std::abs(img.energy() + img.spilled - total) / total;
    add("retina", "energy_accounted", rel <= 1e-9, fmt("relative energy gap %.3g", rel));

    const auto p1 = lf.focus(retina::eye_model(scene, Eye::Left, 0.35, 0.0));
    const auto p2 = lf.focus(retina::eye_model(scene, Eye::Left, 1.02, 0.0));
    add("retina", "pinhole_focus_independent", p1.radiance.data == p2.radiance.data,
        "zero pupil images at 0.35 m and 1.02 m compared");

    std::vector<double> s;
    const auto mask = retina::object_mask(fs.left.view, 1);  // bunny at 500 mm
    for (double a : {0.52, 0.6, 0.75, 1.0}) s.push_back(retina::sharpness(lf.focus(retina::eye_model(scene, Eye::Left, a)).radiance, mask));
    const bool falling = std::is_sorted(s.rbegin(), s.rend()) && s.front() > s.back();
    add("retina", "defocus_monotone", falling,
        fmt("bunny-mid sharpness %.4f at 0.52 m, %.4f at 1.0 m", s.front(), s.back()));
  }

  std::mt19937_64 rng_;
  Faults f_;
  std::vector<Result> results_;
};

}  // namespace detail

inline std::vector<Result> run(std::uint64_t seed = 0, const std::string& fault = {}) {
  return detail::Runner(seed, detail::parse_fault(fault)).run();
}

}  // namespace mfpm::verify
