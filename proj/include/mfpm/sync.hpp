#pragma once

// One-period timing chart for the projector, the two LC shutters and the
// white surface illumination, plus a self-check against the lens waveform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/etl.hpp"
#include "mfpm/optics.hpp"

namespace mfpm::sync {

using etl::PowerWaveform;
using etl::Segment;

enum class Eye { Left, Right };
inline const char* to_string(Eye e) { return e == Eye::Left ? "left" : "right"; }
inline Eye other(Eye e) { return e == Eye::Left ? Eye::Right : Eye::Left; }

struct DeviceDelays {
  double projector = 0.15e-3;      // trigger to light output
  double shutter_close = 0.1e-3;   // open -> closed transition
  double shutter_open = 3.0e-3;    // closed -> open transition

  void validate() const {
    if (!(projector >= 0.0) || !(shutter_close >= 0.0) || !(shutter_open >= 0.0))
      throw ArgumentError("device delays must be >= 0");
  }
};

struct ProjectorSpec {
  double fps = 2000.0;
  int bit_depth = 8;
  bool grayscale = true;

  double frame_duration() const { return 1.0 / fps; }
};

inline std::size_t frames_per_period(const ProjectorSpec& spec, double f) {
  if (!(f > 0.0)) throw ArgumentError("sweep frequency must be > 0");
  if (!(spec.fps > 0.0)) throw ArgumentError("projector fps must be > 0");
  return static_cast<std::size_t>(std::floor(spec.fps / f));
}

/// Frames available to one eye for slices; one slot per half-period stays
/// reserved for the illumination pulse.
inline std::size_t slice_budget_per_eye(std::size_t frames) { return frames / 2 >= 1 ? frames / 2 - 1 : 0; }

enum class EventKind { ProjectorTrigger, ShutterCommand, IlluminationTrigger };
enum class ShutterAction { Open, Close };

struct Event {
  EventKind kind = EventKind::ProjectorTrigger;
  Eye eye = Eye::Left;
  std::size_t slice = 0;       // sample index (projector triggers)
  double target_power = 0.0;   // D (projector triggers; 0 for illumination)
  ShutterAction action = ShutterAction::Open;
  double command_time = 0.0;   // s, in [0, period)
  double effect_time = 0.0;    // s, in [0, period)
  bool shared_frame = false;   // illumination composited into a 0 D slice frame

  bool is_exposure() const { return kind != EventKind::ShutterCommand; }
};

enum class IlluminationCrossings { Both, Up, Down };

struct ChartOptions {
  Segment left_segment = Segment::Up;
  IlluminationCrossings illumination = IlluminationCrossings::Both;
  double share_tolerance = 0.02;  // D; a slice this close to 0 D carries the illumination pulse
};

/// Events for one sweep period, sorted by effect time. Projector and
/// illumination effect times mark the middle of the frame exposure; shutter
/// effect times mark the end of the transition that the command starts.
struct TimingChart {
  double period = 1.0 / 60.0;
  double frame_duration = 1.0 / 2000.0;
  DeviceDelays delays;
  Segment left_segment = Segment::Up;
  std::vector<Event> events;

  double frequency() const { return 1.0 / period; }
  Segment segment_of(Eye e) const {
    const bool left_up = left_segment == Segment::Up;
    return (e == Eye::Left) == left_up ? Segment::Up : Segment::Down;
  }
  Eye eye_of(Segment s) const { return segment_of(Eye::Left) == s ? Eye::Left : Eye::Right; }

  std::vector<const Event*> of_kind(EventKind k) const {
    std::vector<const Event*> out;
    for (const auto& e : events)
      if (e.kind == k) out.push_back(&e);
    return out;
  }
};

namespace detail {

inline double wrap_time(double t, double period) {
  double w = t - period * std::floor(t / period);
  if (w >= period) w -= period;
  if (w < 0.0) w = 0.0;
  return w;
}

/// Does the cyclic interval [a, a+wa] overlap [b, b+wb] with positive length?
inline bool cyclic_overlap(double a, double wa, double b, double wb, double period) {
  return wrap_time(b - a, period) < wa || wrap_time(a - b, period) < wb;
}

inline void sort_events(std::vector<Event>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& x, const Event& y) { return x.effect_time < y.effect_time; });
}

}  // namespace detail

/// Transmission of one eye's shutter over the period, from its commands.
/// An eye without shutter commands is treated as always open.
class ShutterTimeline {
 public:
  struct Transition {
    ShutterAction action;
    double start;
    double duration;
  };

  ShutterTimeline(const TimingChart& chart, Eye eye) : period_(chart.period) {
    for (const auto& e : chart.events) {
      if (e.kind != EventKind::ShutterCommand || e.eye != eye) continue;
      const double dur = e.action == ShutterAction::Open ? chart.delays.shutter_open : chart.delays.shutter_close;
      transitions_.push_back({e.action, e.command_time, dur});
    }
  }

  bool always_open() const { return transitions_.empty(); }
  const std::vector<Transition>& transitions() const { return transitions_; }

  /// Fraction of light passed at time `t`, linear during transitions.
  double transmission(double t) const {
    if (transitions_.empty()) return 1.0;
    const double tw = detail::wrap_time(t, period_);
    const Transition* last = nullptr;
    double last_age = 0.0;
    for (const auto& tr : transitions_) {
      const double since = detail::wrap_time(tw - tr.start, period_);
      if (since < tr.duration) {
        const double x = tr.duration > 0.0 ? since / tr.duration : 1.0;
        return tr.action == ShutterAction::Open ? x : 1.0 - x;
      }
      const double age = since - tr.duration;
      if (!last || age < last_age) {
        last = &tr;
        last_age = age;
      }
    }
    return last->action == ShutterAction::Open ? 1.0 : 0.0;
  }

  bool fully_open(double start, double width) const { return steady(start, width, 1.0); }
  bool fully_closed(double start, double width) const { return steady(start, width, 0.0); }

 private:
  bool steady(double start, double width, double level) const {
    if (transitions_.empty()) return level == 1.0;
    for (const auto& tr : transitions_)
      if (detail::cyclic_overlap(start, width, tr.start, tr.duration, period_)) return false;
    return transmission(start + 0.5 * width) == level;
  }

  double period_;
  std::vector<Transition> transitions_;
};

/// Extra sweep on both ends so each shutter finishes opening, plus half a
/// frame, before the first slice of its segment. Assumes a sinusoidal
/// waveform whose samples span a half-range of `half_extent` diopters.
inline double guard_margin(double half_extent, const DeviceDelays& delays, const ProjectorSpec& projector, double f,
                           double pad = 0.05e-3) {
  const double dt = 0.5 * delays.shutter_open + 0.5 * projector.frame_duration() + pad;
  const double dphi = etl::kTwoPi * f * dt;
  const double c = std::cos(dphi);
  if (!(c > 0.0)) throw InfeasibleError("shutter transition longer than a quarter sweep period");
  return half_extent * (1.0 - c) / c;
}

/// Builds the timing chart for `samples` displayed on each eye's segment of
/// `waveform`. Throws RangeError for unreachable samples, InfeasibleError
/// when the frame budget is exceeded, and SchedulingConflict when a shutter
/// transition or another frame collides with an exposure.
inline TimingChart build_chart(const PowerWaveform& waveform, const optics::PowerSamples& samples,
                               const DeviceDelays& delays, const ProjectorSpec& projector,
                               const ChartOptions& options = {}) {
  delays.validate();
  const double f = waveform.frequency();
  const std::size_t frames = frames_per_period(projector, f);
  const std::size_t budget = slice_budget_per_eye(frames);
  if (samples.size() > budget)
    throw InfeasibleError(std::to_string(samples.size()) + " slices per eye exceed the budget of " +
                          std::to_string(budget) + " (" + std::to_string(frames) + " frames per period)");

  TimingChart chart;
  chart.period = waveform.period();
  chart.frame_duration = projector.frame_duration();
  chart.delays = delays;
  chart.left_segment = options.left_segment;
  const double T = chart.period;
  auto wrap = [T](double t) { return detail::wrap_time(t, T); };

  for (Eye eye : {Eye::Left, Eye::Right}) {
    const Segment seg = chart.segment_of(eye);
    for (std::size_t n = 0; n < samples.size(); ++n) {
      Event e;
      e.kind = EventKind::ProjectorTrigger;
      e.eye = eye;
      e.slice = n;
      e.target_power = samples[n];
      e.effect_time = wrap(waveform.time_for_power(samples.at(n), seg));
      e.command_time = wrap(e.effect_time - delays.projector);
      chart.events.push_back(e);
    }
  }

  const double t_min = waveform.min_phase() / etl::kTwoPi * T;
  const double t_max = waveform.max_phase() / etl::kTwoPi * T;
  for (Eye eye : {Eye::Left, Eye::Right}) {
    const bool up = chart.segment_of(eye) == Segment::Up;
    const double t_open = up ? t_min : t_max;
    const double t_close = up ? t_max : t_min;
    Event open;
    open.kind = EventKind::ShutterCommand;
    open.eye = eye;
    open.action = ShutterAction::Open;
    open.command_time = wrap(t_open - 0.5 * delays.shutter_open);
    open.effect_time = wrap(open.command_time + delays.shutter_open);
    Event close = open;
    close.action = ShutterAction::Close;
    close.command_time = wrap(t_close - 0.5 * delays.shutter_close);
    close.effect_time = wrap(close.command_time + delays.shutter_close);
    chart.events.push_back(open);
    chart.events.push_back(close);
  }

  std::vector<std::string> conflicts;
  const double fd = chart.frame_duration;
  if (waveform.min_power() <= 0.0 && waveform.max_power() >= 0.0) {
    for (Segment seg : {Segment::Up, Segment::Down}) {
      if (options.illumination == IlluminationCrossings::Up && seg != Segment::Up) continue;
      if (options.illumination == IlluminationCrossings::Down && seg != Segment::Down) continue;
      Event e;
      e.kind = EventKind::IlluminationTrigger;
      e.eye = chart.eye_of(seg);
      e.effect_time = wrap(waveform.time_for_power(Diopter{0.0}, seg));
      double nearest = options.share_tolerance;
      for (const auto& p : chart.events) {
        if (p.kind != EventKind::ProjectorTrigger || p.eye != e.eye) continue;
        if (std::abs(p.target_power) <= nearest) {
          nearest = std::abs(p.target_power);
          e.effect_time = p.effect_time;
          e.shared_frame = true;
        }
      }
      e.command_time = wrap(e.effect_time - delays.projector);
      chart.events.push_back(e);
    }
  }

  // Frame slots must not collide (illumination riding in a 0 D frame is fine).
  std::vector<const Event*> exposures;
  for (const auto& e : chart.events)
    if (e.is_exposure() && !e.shared_frame) exposures.push_back(&e);
  auto describe = [](const Event& e) {
    if (e.kind == EventKind::IlluminationTrigger) return std::string("illumination (") + to_string(e.eye) + ")";
    return std::string(to_string(e.eye)) + " slice " + std::to_string(e.slice) + " (" +
           std::to_string(e.target_power) + " D)";
  };
  for (std::size_t i = 0; i < exposures.size(); ++i)
    for (std::size_t j = i + 1; j < exposures.size(); ++j)
      if (detail::cyclic_overlap(exposures[i]->effect_time - 0.5 * fd, fd, exposures[j]->effect_time - 0.5 * fd, fd,
                                 T))
        conflicts.push_back("frame of " + describe(*exposures[i]) + " overlaps frame of " +
                            describe(*exposures[j]));

  for (Eye eye : {Eye::Left, Eye::Right}) {
    const ShutterTimeline shutter(chart, eye);
    for (const auto& e : chart.events) {
      if (!e.is_exposure() || e.eye != eye) continue;
      if (!shutter.fully_open(e.effect_time - 0.5 * fd, fd))
        conflicts.push_back(std::string(to_string(eye)) + " shutter is not fully open during the frame of " +
                            describe(e) + " at t=" + std::to_string(e.effect_time * 1e3) + " ms");
    }
  }
  if (!conflicts.empty()) throw SchedulingConflict(conflicts);

  detail::sort_events(chart.events);
  return chart;
}

/// Recomputes effect times from the chart's command times as the devices
/// would actually respond with `actual` delays.
inline TimingChart retime(const TimingChart& chart, const DeviceDelays& actual) {
  TimingChart out = chart;
  out.delays = actual;
  for (auto& e : out.events) {
    double d = actual.projector;
    if (e.kind == EventKind::ShutterCommand)
      d = e.action == ShutterAction::Open ? actual.shutter_open : actual.shutter_close;
    e.effect_time = detail::wrap_time(e.command_time + d, out.period);
  }
  detail::sort_events(out.events);
  return out;
}

struct Check {
  std::string name;
  std::string description;
  bool passed = true;
  double worst = 0.0;  // largest observed violation measure, in the check's unit
  std::vector<std::string> failures;
};

struct ValidationReport {
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  const Check& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw ArgumentError("no check named " + name);
  }
};

struct ValidationOptions {
  double power_tolerance = 0.02;  // D
  double cff = 60.0;              // Hz
};

/// Checks the chart against the waveform; never throws on a bad chart.
inline ValidationReport validate_chart(const TimingChart& chart, const PowerWaveform& waveform,
                                       const ValidationOptions& opt = {}) {
  ValidationReport rep;
  const double fd = chart.frame_duration;
  const double tol = opt.power_tolerance;
  char buf[256];

  Check trig{"trigger_power", "projected power matches each slice's target", true, 0.0, {}};
  Check own{"own_shutter_open", "each frame is shown only while its eye's shutter is fully open", true, 0.0, {}};
  Check illum{"illumination_zero_power", "illumination fires at zero lens power", true, 0.0, {}};
  Check cff{"sweep_above_cff", "sweep frequency is at or above the flicker fusion threshold", true, 0.0, {}};
  Check ext{"shutter_at_extrema", "shutter transitions are centered on the power extrema", true, 0.0, {}};
  Check slot{"frame_slots_disjoint", "no two projector frames overlap", true, 0.0, {}};
  Check cross{"other_shutter_closed", "the other eye's shutter is fully closed during each frame", true, 0.0, {}};

  const ShutterTimeline left(chart, Eye::Left);
  const ShutterTimeline right(chart, Eye::Right);
  auto timeline = [&](Eye e) -> const ShutterTimeline& { return e == Eye::Left ? left : right; };

  std::vector<const Event*> slots;
  for (const auto& e : chart.events) {
    if (e.kind == EventKind::ProjectorTrigger) {
      const double p = waveform.power_at_time(e.effect_time).value;
      const double err = std::abs(p - e.target_power);
      trig.worst = std::max(trig.worst, err);
      if (err > tol) {
        trig.passed = false;
        std::snprintf(buf, sizeof buf, "%s slice %zu: power %.4f D vs target %.4f D (error %.4f D)", to_string(e.eye),
                      e.slice, p, e.target_power, err);
        trig.failures.push_back(buf);
      }
    }
    if (e.kind == EventKind::IlluminationTrigger) {
      const double p = std::abs(waveform.power_at_time(e.effect_time).value);
      illum.worst = std::max(illum.worst, p);
      if (p > tol) {
        illum.passed = false;
        std::snprintf(buf, sizeof buf, "illumination at t=%.4f ms: |power| %.4f D", e.effect_time * 1e3, p);
        illum.failures.push_back(buf);
      }
    }
    if (e.is_exposure()) {
      const double start = e.effect_time - 0.5 * fd;
      if (!timeline(e.eye).fully_open(start, fd)) {
        own.passed = false;
        own.worst += 1.0;
        std::snprintf(buf, sizeof buf, "%s frame at t=%.4f ms: own shutter not fully open", to_string(e.eye),
                      e.effect_time * 1e3);
        own.failures.push_back(buf);
      }
      if (!timeline(other(e.eye)).fully_closed(start, fd)) {
        cross.passed = false;
        cross.worst += 1.0;
        std::snprintf(buf, sizeof buf, "%s frame at t=%.4f ms: %s shutter not fully closed", to_string(e.eye),
                      e.effect_time * 1e3, to_string(other(e.eye)));
        cross.failures.push_back(buf);
      }
      if (!e.shared_frame) slots.push_back(&e);
    }
    if (e.kind == EventKind::ShutterCommand) {
      const double dur = e.action == ShutterAction::Open ? chart.delays.shutter_open : chart.delays.shutter_close;
      const double mid = e.command_time + 0.5 * dur;
      const bool up = chart.segment_of(e.eye) == Segment::Up;
      const bool at_min = (e.action == ShutterAction::Open) == up;
      const double want = at_min ? waveform.min_power() : waveform.max_power();
      const double err = std::abs(waveform.power_at_time(mid).value - want);
      ext.worst = std::max(ext.worst, err);
      if (err > tol) {
        ext.passed = false;
        std::snprintf(buf, sizeof buf, "%s shutter %s transition midpoint is %.4f D from the %s", to_string(e.eye),
                      e.action == ShutterAction::Open ? "open" : "close", err, at_min ? "minimum" : "maximum");
        ext.failures.push_back(buf);
      }
    }
  }
  for (std::size_t i = 0; i < slots.size(); ++i)
    for (std::size_t j = i + 1; j < slots.size(); ++j)
      if (detail::cyclic_overlap(slots[i]->effect_time - 0.5 * fd, fd, slots[j]->effect_time - 0.5 * fd, fd,
                                 chart.period)) {
        slot.passed = false;
        slot.worst += 1.0;
        std::snprintf(buf, sizeof buf, "frames at t=%.4f ms and t=%.4f ms overlap", slots[i]->effect_time * 1e3,
                      slots[j]->effect_time * 1e3);
        slot.failures.push_back(buf);
      }

  const double f = chart.frequency();
  cff.worst = f;
  if (f < opt.cff) {
    cff.passed = false;
    std::snprintf(buf, sizeof buf, "sweep frequency %.3f Hz below threshold %.3f Hz", f, opt.cff);
    cff.failures.push_back(buf);
  }

  rep.checks = {trig, own, illum, cff, ext, slot, cross};
  return rep;
}

/// A chart paired with the report that admitted it. Consumers that replay a
/// chart take this type so unvalidated charts are refused by construction;
/// `unchecked` exists for fault-injection experiments only.
class ValidatedChart {
 public:
  static ValidatedChart make(TimingChart chart, const PowerWaveform& waveform, const ValidationOptions& opt = {}) {
    ValidatedChart v;
    v.report_ = validate_chart(chart, waveform, opt);
    if (!v.report_.passed()) {
      std::vector<std::string> all;
      for (const auto& c : v.report_.checks)
        for (const auto& f : c.failures) all.push_back(c.name + ": " + f);
      throw SchedulingConflict(all);
    }
    v.chart_ = std::move(chart);
    v.checked_ = true;
    return v;
  }
  static ValidatedChart unchecked(TimingChart chart) {
    ValidatedChart v;
    v.chart_ = std::move(chart);
    return v;
  }

  const TimingChart& chart() const { return chart_; }
  const ValidationReport& report() const { return report_; }
  bool checked() const { return checked_; }

 private:
  TimingChart chart_;
  ValidationReport report_;
  bool checked_ = false;
};

inline const char* kind_name(const Event& e) {
  switch (e.kind) {
    case EventKind::ProjectorTrigger: return "projector";
    case EventKind::IlluminationTrigger: return "illumination";
    case EventKind::ShutterCommand: return e.action == ShutterAction::Open ? "shutter_open" : "shutter_close";
  }
  return "?";
}

inline void write_chart_csv(std::ostream& out, const TimingChart& chart) {
  out << "kind,eye,slice,command_time_s,effect_time_s,target_power_D\n";
  char buf[64];
  for (const auto& e : chart.events) {
    out << kind_name(e) << ',' << to_string(e.eye) << ',';
    if (e.kind == EventKind::ProjectorTrigger) out << e.slice;
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,", e.command_time, e.effect_time);
    out << buf;
    if (e.kind != EventKind::ShutterCommand) {
      std::snprintf(buf, sizeof buf, "%.17g", e.target_power);
      out << buf;
    }
    out << '\n';
  }
}

inline nlohmann::json report_to_json(const ValidationReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name},
                      {"description", c.description},
                      {"passed", c.passed},
                      {"worst", c.worst},
                      {"failures", c.failures}});
  return {{"passed", rep.passed()}, {"checks", checks}};
}

inline nlohmann::json chart_to_json(const TimingChart& chart, const ValidationReport* rep = nullptr) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : chart.events) {
    nlohmann::json j = {{"kind", kind_name(e)},
                        {"eye", to_string(e.eye)},
                        {"command_time_s", e.command_time},
                        {"effect_time_s", e.effect_time}};
    if (e.kind == EventKind::ProjectorTrigger) {
      j["slice"] = e.slice;
      j["target_power_D"] = e.target_power;
    }
    if (e.kind == EventKind::IlluminationTrigger) j["shared_frame"] = e.shared_frame;
    events.push_back(j);
  }
  nlohmann::json out = {{"period_s", chart.period},
                        {"frame_duration_s", chart.frame_duration},
                        {"left_segment", etl::to_string(chart.left_segment)},
                        {"delays_s",
                         {{"projector", chart.delays.projector},
                          {"shutter_close", chart.delays.shutter_close},
                          {"shutter_open", chart.delays.shutter_open}}},
                        {"events", events}};
  if (rep) out["diagnostics"] = report_to_json(*rep);
  return out;
}

inline TimingChart chart_from_json(const nlohmann::json& j) {
  try {
    TimingChart c;
    c.period = j.at("period_s").get<double>();
    c.frame_duration = j.at("frame_duration_s").get<double>();
    c.left_segment = j.at("left_segment").get<std::string>() == "down" ? Segment::Down : Segment::Up;
    const auto& d = j.at("delays_s");
    c.delays = {d.at("projector").get<double>(), d.at("shutter_close").get<double>(),
                d.at("shutter_open").get<double>()};
    for (const auto& je : j.at("events")) {
      Event e;
      const auto kind = je.at("kind").get<std::string>();
      e.eye = je.at("eye").get<std::string>() == "right" ? Eye::Right : Eye::Left;
      e.command_time = je.at("command_time_s").get<double>();
      e.effect_time = je.at("effect_time_s").get<double>();
      if (kind == "projector") {
        e.kind = EventKind::ProjectorTrigger;
        e.slice = je.at("slice").get<std::size_t>();
        e.target_power = je.at("target_power_D").get<double>();
      } else if (kind == "illumination") {
        e.kind = EventKind::IlluminationTrigger;
        e.shared_frame = je.value("shared_frame", false);
      } else if (kind == "shutter_open" || kind == "shutter_close") {
        e.kind = EventKind::ShutterCommand;
        e.action = kind == "shutter_open" ? ShutterAction::Open : ShutterAction::Close;
      } else {
        throw FormatError("unknown event kind '" + kind + "'");
      }
      c.events.push_back(e);
    }
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed timing chart: ") + ex.what());
  }
}

}  // namespace mfpm::sync
