#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mfpm/config.hpp"
#include "mfpm/fixtures.hpp"
#include "mfpm/sync.hpp"

using namespace mfpm;
using namespace mfpm::sync;

namespace {

struct Default {
  RunConfig cfg;
  Plan plan = make_plan(cfg, fixtures::bunnies().samples);
  TimingChart chart = build_chart(plan.waveform, plan.display, cfg.delays, cfg.projector, chart_options(cfg));
};

std::size_t count(const TimingChart& c, EventKind k, Eye e) {
  std::size_t n = 0;
  for (const auto& ev : c.events) n += ev.kind == k && ev.eye == e;
  return n;
}

}  // namespace

TEST(FrameBudget, ReferenceValues) {
  EXPECT_EQ(frames_per_period(ProjectorSpec{}, 60.0), 33u);
  EXPECT_EQ(frames_per_period(ProjectorSpec{}, 2000.0), 1u);
  EXPECT_EQ(slice_budget_per_eye(33), 15u);
  EXPECT_EQ(slice_budget_per_eye(1), 0u);
  EXPECT_THROW(frames_per_period(ProjectorSpec{}, 0.0), ArgumentError);
}

TEST(BuildChart, DefaultChartPassesEveryCheck) {
  Default d;
  const auto rep = validate_chart(d.chart, d.plan.waveform, validation_options(d.cfg));
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name;
  EXPECT_EQ(rep.checks.size(), 7u);
  EXPECT_LE(rep.check("trigger_power").worst, 0.02);
  EXPECT_LE(rep.check("illumination_zero_power").worst, 0.02);
}

TEST(BuildChart, EventCountsPerEye) {
  Default d;
  for (Eye e : {Eye::Left, Eye::Right}) {
    EXPECT_EQ(count(d.chart, EventKind::ProjectorTrigger, e), d.plan.display.size());
    EXPECT_EQ(count(d.chart, EventKind::ShutterCommand, e), 2u);
    EXPECT_EQ(count(d.chart, EventKind::IlluminationTrigger, e), 1u);
  }
}

TEST(BuildChart, EventsSortedByEffectTime) {
  Default d;
  for (std::size_t i = 1; i < d.chart.events.size(); ++i)
    EXPECT_LE(d.chart.events[i - 1].effect_time, d.chart.events[i].effect_time);
}

TEST(BuildChart, ProjectorLeadIsTheLatency) {
  Default d;
  for (const auto& e : d.chart.events) {
    if (e.kind != EventKind::ProjectorTrigger) continue;
    const double lead = sync::detail::wrap_time(e.effect_time - e.command_time, d.chart.period);
    EXPECT_NEAR(lead, 0.15e-3, 1e-12);
    EXPECT_NEAR(etl::kTwoPi * 60.0 * lead, 0.0565, 5e-5);
  }
}

TEST(BuildChart, ZeroLatencyCommandsAtEffect) {
  Default d;
  DeviceDelays none = d.cfg.delays;
  none.projector = 0.0;
  const auto c = build_chart(d.plan.waveform, d.plan.display, none, d.cfg.projector, chart_options(d.cfg));
  for (const auto& e : c.events)
    if (e.kind == EventKind::ProjectorTrigger) EXPECT_EQ(e.command_time, e.effect_time);
}

TEST(BuildChart, EyesUseOppositeSegments) {
  Default d;
  EXPECT_EQ(d.chart.segment_of(Eye::Left), Segment::Up);
  EXPECT_EQ(d.chart.segment_of(Eye::Right), Segment::Down);
  ChartOptions flipped = chart_options(d.cfg);
  flipped.left_segment = Segment::Down;
  const auto c = build_chart(d.plan.waveform, d.plan.display, d.cfg.delays, d.cfg.projector, flipped);
  EXPECT_TRUE(validate_chart(c, d.plan.waveform).passed());
  EXPECT_EQ(c.segment_of(Eye::Left), Segment::Down);
}

TEST(BuildChart, SingleCrossingIllumination) {
  Default d;
  ChartOptions opt = chart_options(d.cfg);
  opt.illumination = IlluminationCrossings::Up;
  const auto c = build_chart(d.plan.waveform, d.plan.display, d.cfg.delays, d.cfg.projector, opt);
  EXPECT_EQ(c.of_kind(EventKind::IlluminationTrigger).size(), 1u);
  EXPECT_EQ(c.of_kind(EventKind::IlluminationTrigger).front()->eye, Eye::Left);
}

TEST(BuildChart, IlluminationSharesNearZeroFrame) {
  Default d;
  const optics::PowerSamples s({-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0});
  const auto c = build_chart(d.plan.waveform, s, d.cfg.delays, d.cfg.projector, chart_options(d.cfg));
  for (const auto* e : c.of_kind(EventKind::IlluminationTrigger)) {
    EXPECT_TRUE(e->shared_frame);
    bool matched = false;
    for (const auto* p : c.of_kind(EventKind::ProjectorTrigger))
      matched |= p->eye == e->eye && p->target_power == 0.0 && p->effect_time == e->effect_time;
    EXPECT_TRUE(matched);
  }
  EXPECT_TRUE(validate_chart(c, d.plan.waveform).passed());
}

TEST(BuildChart, OverBudgetIsInfeasible) {
  Default d;
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(-1.0 + 3.0 * i / 19.0);
  EXPECT_THROW(build_chart(d.plan.waveform, optics::PowerSamples(v), d.cfg.delays, d.cfg.projector), InfeasibleError);
}

TEST(BuildChart, UnreachableSampleIsRangeError) {
  Default d;
  EXPECT_THROW(build_chart(d.plan.waveform, optics::PowerSamples({0.0, 5.0}), d.cfg.delays, d.cfg.projector),
               RangeError);
}

TEST(BuildChart, Deterministic) {
  Default a, b;
  EXPECT_EQ(chart_to_json(a.chart).dump(), chart_to_json(b.chart).dump());
}

TEST(Validate, DetectsEachDelayPerturbation) {
  Default d;
  for (int k = 0; k < 3; ++k) {
    DeviceDelays actual = d.cfg.delays;
    (k == 0 ? actual.projector : k == 1 ? actual.shutter_close : actual.shutter_open) += 1e-3;
    EXPECT_FALSE(validate_chart(retime(d.chart, actual), d.plan.waveform).passed()) << k;
  }
  EXPECT_TRUE(validate_chart(retime(d.chart, d.cfg.delays), d.plan.waveform).passed());
}

TEST(Validate, MissingLeadFailsTriggerPower) {
  Default d;
  DeviceDelays assumed = d.cfg.delays;
  assumed.projector = 0.0;
  const auto built = build_chart(d.plan.waveform, d.plan.display, assumed, d.cfg.projector, chart_options(d.cfg));
  const auto rep = validate_chart(retime(built, d.cfg.delays), d.plan.waveform);
  EXPECT_FALSE(rep.check("trigger_power").passed);
}

TEST(Validate, OpenShuttersFailCrosstalkCheck) {
  Default d;
  auto c = d.chart;
  std::erase_if(c.events, [](const Event& e) { return e.kind == EventKind::ShutterCommand; });
  const auto rep = validate_chart(c, d.plan.waveform);
  EXPECT_FALSE(rep.check("other_shutter_closed").passed);
  EXPECT_TRUE(rep.check("own_shutter_open").passed);
  EXPECT_THROW(ValidatedChart::make(c, d.plan.waveform), SchedulingConflict);
  EXPECT_FALSE(ValidatedChart::unchecked(c).checked());
}

TEST(Validate, BelowFlickerThreshold) {
  RunConfig cfg;
  cfg.frequency_hz = 45.0;
  const Plan p = make_plan(cfg, fixtures::bunnies().samples);
  ASSERT_TRUE(p.feasible);
  const auto c = build_chart(p.waveform, p.display, cfg.delays, cfg.projector, chart_options(cfg));
  EXPECT_FALSE(validate_chart(c, p.waveform, validation_options(cfg)).check("sweep_above_cff").passed);
}

TEST(Validate, UnknownCheckName) {
  ValidationReport r;
  EXPECT_THROW(r.check("nope"), ArgumentError);
}

TEST(ShutterTimeline, NoCommandsMeansOpen) {
  TimingChart c;
  const ShutterTimeline t(c, Eye::Left);
  EXPECT_TRUE(t.always_open());
  EXPECT_EQ(t.transmission(0.003), 1.0);
  EXPECT_TRUE(t.fully_open(0.0, 0.001));
  EXPECT_FALSE(t.fully_closed(0.0, 0.001));
}

TEST(ShutterTimeline, EyesAreComplementary) {
  Default d;
  const ShutterTimeline l(d.chart, Eye::Left), r(d.chart, Eye::Right);
  for (int k = 0; k < 200; ++k) {
    const double t = d.chart.period * k / 200.0;
    const double a = l.transmission(t), b = r.transmission(t);
    if ((a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0)) EXPECT_LE(a + b, 1.0) << t;
  }
}

TEST(ChartJson, RoundTrip) {
  Default d;
  const auto j = chart_to_json(d.chart);
  const auto back = chart_from_json(j);
  EXPECT_EQ(chart_to_json(back).dump(), j.dump());
  EXPECT_THROW(chart_from_json(nlohmann::json{{"period_s", 1.0}}), FormatError);
}

TEST(ChartCsv, OneRowPerEvent) {
  Default d;
  std::stringstream ss;
  write_chart_csv(ss, d.chart);
  std::size_t lines = 0;
  for (std::string line; std::getline(ss, line);) ++lines;
  EXPECT_EQ(lines, d.chart.events.size() + 1);
}
