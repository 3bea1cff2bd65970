#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfpm/optics.hpp"
#include "mfpm/units.hpp"

using namespace mfpm;
using namespace mfpm::optics;

TEST(Units, DistanceRejectsNegativeAndNaN) {
  EXPECT_THROW(Distance::meters(-0.1), DomainError);
  EXPECT_THROW(Distance::meters(std::nan("")), DomainError);
  EXPECT_EQ(Distance::infinity().reciprocal(), 0.0);
  EXPECT_TRUE(Distance::from_reciprocal(0.0).is_infinite());
  EXPECT_DOUBLE_EQ((500.0_mm).value(), 0.5);
}

TEST(Units, DiopterBound) {
  EXPECT_TRUE(Diopter{10.0}.within(kDefaultPowerBound));
  EXPECT_FALSE(Diopter{-10.5}.within(kDefaultPowerBound));
  EXPECT_FALSE(Diopter{std::nan("")}.within(kDefaultPowerBound));
}

TEST(RequiredPower, ReferenceValues) {
  EXPECT_NEAR(required_power(0.5_m, Distance::meters(1.0 / 3.0)).value, -1.0, 1e-12);
  EXPECT_EQ(required_power(0.7_m, 0.7_m).value, 0.0);
  EXPECT_NEAR(required_power(2.5_m, 0.4_m).value, -2.1, 1e-12);
  EXPECT_NEAR(required_power(2.5_m, 0.5_m).value, -1.6, 1e-12);
  EXPECT_NEAR(required_power(0.5_m, 1.0_m).value, 1.0, 1e-12);
  EXPECT_NEAR(required_power(0.5_m, Distance::infinity()).value, 2.0, 1e-12);
}

TEST(RequiredPower, RejectsNonPositive) {
  EXPECT_THROW(required_power(Distance::meters(0.0), 0.5_m), DomainError);
  EXPECT_THROW(required_power(0.5_m, Distance::meters(0.0)), DomainError);
}

TEST(VirtualDistance, ReferenceValues) {
  EXPECT_DOUBLE_EQ(virtual_distance(0.5_m, 0.0_D).value(), 0.5);
  EXPECT_TRUE(virtual_distance(0.5_m, 2.0_D).is_infinite());
  EXPECT_NEAR(virtual_distance(0.5_m, -1.0_D).value(), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(virtual_distance(0.5_m, 2.5_D), RealImageError);
}

TEST(VirtualDistance, RoundTripMatchesThinLens) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dp(0.1, 5.0), dv(0.05, 10.0);
  for (int i = 0; i < 10000; ++i) {
    const double p = dp(rng);
    const double v = dv(rng);
    const Diopter power = required_power(Distance::meters(p), Distance::meters(v));
    // Thin-lens oracle: 1/d_v = 1/d_p - v
    EXPECT_NEAR(1.0 / (1.0 / p - power.value), v, 1e-12 * v);
    EXPECT_NEAR(virtual_distance(Distance::meters(p), power).value(), v, 1e-12 * v);
  }
}

TEST(SweepRange, ReferenceValues) {
  const auto r = sweep_range(0.5_m, 0.167_m, Distance::infinity());
  EXPECT_NEAR(r.v_low.value, -1.0, 0.005);
  EXPECT_NEAR(r.v_high.value, 2.0, 1e-12);
  const auto s = sweep_range(Distance::meters(1.0 / 3.0), Distance::meters(1.0 / 6.0), 2.5_m);
  EXPECT_NEAR(s.v_low.value, -3.0, 1e-12);
  EXPECT_NEAR(s.v_high.value, 3.0 - 1.0 / (1.0 / 3.0 + 2.5), 1e-12);
  EXPECT_NEAR(s.v_high.value, 2.647, 5e-4);
}

TEST(SweepRange, DegenerateExtentIsZeroWidth) {
  const auto r = sweep_range(0.5_m, Distance::meters(0.0), Distance::meters(0.0));
  EXPECT_EQ(r.v_low.value, 0.0);
  EXPECT_EQ(r.v_high.value, 0.0);
  EXPECT_THROW(sweep_range(0.5_m, 0.6_m, Distance::infinity()), DomainError);
}

TEST(SamplePowers, SevenSamples) {
  const auto s = sample_powers({Diopter{-1.0}, Diopter{2.0}}, 7);
  ASSERT_EQ(s.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(s[i], -1.0 + 0.5 * i, 1e-15);
  EXPECT_NEAR(s.max_interval(), 0.5, 1e-15);
  EXPECT_TRUE(s.warnings().empty());
}

TEST(SamplePowers, SparseSamplesWarn) {
  const auto s = sample_powers({Diopter{-1.0}, Diopter{2.0}}, 4);
  EXPECT_NEAR(s.max_interval(), 1.0, 1e-15);
  EXPECT_FALSE(s.meets_guideline());
  EXPECT_EQ(s.warnings().size(), 1u);
}

TEST(SamplePowers, SingleSampleDegenerate) {
  const auto s = sample_powers({Diopter{0.0}, Diopter{0.0}}, 1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_THROW(sample_powers({Diopter{0.0}, Diopter{0.0}}, 3), ArgumentError);
  EXPECT_THROW(sample_powers({Diopter{0.0}, Diopter{1.0}}, 0), ArgumentError);
}

TEST(PowerSamples, MustIncreaseStrictly) {
  EXPECT_THROW(PowerSamples(std::vector<double>{0.0, 0.0}), ArgumentError);
  EXPECT_THROW(PowerSamples(std::vector<double>{}), ArgumentError);
  EXPECT_THROW(PowerSamples(std::vector<double>{1.0, 0.5}), ArgumentError);
}

TEST(AssignSlice, ReferenceValues) {
  const PowerSamples six({-1.0, -0.5, 0.0, 0.5, 1.0, 1.5});
  EXPECT_EQ(assign_slice(0.2_D, six), 2u);
  for (std::size_t n = 0; n < six.size(); ++n) EXPECT_EQ(assign_slice(Diopter{six[n]}, six), n);
  EXPECT_EQ(assign_slice(0.25_D, PowerSamples({0.0, 0.5})), 0u);
  EXPECT_EQ(assign_slice(-5.0_D, six), 0u);
  EXPECT_EQ(assign_slice(5.0_D, six), 5u);
}

TEST(AssignSlice, MatchesExhaustiveArgmin) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 12), step(1, 5), start(-40, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> v;
    int k = start(rng);
    for (int n = count(rng); n > 0; --n) {
      v.push_back(k / 8.0);
      k += step(rng);
    }
    const PowerSamples s(v);
    // Half the cases are exact midpoints to exercise the tie rule.
    double x;
    if (i % 2 == 0 && v.size() > 1) {
      const std::size_t j = static_cast<std::size_t>(unit(rng) * (v.size() - 1));
      x = 0.5 * (v[j] + v[j + 1]);
    } else {
      x = v.front() - 1.0 + unit(rng) * (v.back() - v.front() + 2.0);
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < v.size(); ++j)
      if (std::abs(v[j] - x) < std::abs(v[best] - x)) best = j;
    ASSERT_EQ(assign_slice(Diopter{x}, s), best) << "x=" << x;
  }
}

TEST(DepthFilter, ReferenceValues) {
  const PowerSamples s({0.0, 0.5, 1.0});
  auto w = depth_filter(1.0, 0.5_D, s);
  EXPECT_EQ(w.radiance_lower + w.radiance_upper, 1.0);
  EXPECT_EQ(w.lower_index == 1 ? w.radiance_lower : w.radiance_upper, 1.0);

  w = depth_filter(1.0, 0.25_D, s);
  EXPECT_EQ(w.radiance_lower, 0.5);
  EXPECT_EQ(w.radiance_upper, 0.5);

  w = depth_filter(0.8, 0.1_D, s);
  EXPECT_EQ(w.lower_index, 0u);
  EXPECT_NEAR(w.radiance_lower, 0.64, 1e-15);
  EXPECT_NEAR(w.radiance_upper, 0.16, 1e-15);
}

TEST(DepthFilter, OnSampleGivesFullWeight) {
  const PowerSamples s({-1.0, -0.5, 0.0, 0.5});
  const auto w = depth_filter(1.0, -1.0_D, s);
  EXPECT_EQ(w.lower_index, 0u);
  EXPECT_EQ(w.radiance_lower, 1.0);
  EXPECT_EQ(w.radiance_upper, 0.0);
}

TEST(DepthFilter, ClampsOutsideRange) {
  const PowerSamples s({0.0, 1.0});
  EXPECT_EQ(depth_filter(0.7, -3.0_D, s).radiance_lower, 0.7);
  EXPECT_EQ(depth_filter(0.7, 3.0_D, s).radiance_upper, 0.7);
  EXPECT_EQ(depth_filter(0.7, 3.0_D, PowerSamples({0.0})).radiance_lower, 0.7);
  EXPECT_THROW(depth_filter(-0.1, 0.0_D, s), ArgumentError);
}

TEST(DepthFilter, ConservesRadianceBitExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> v;
    double x = -3.0 * unit(rng);
    for (int n = 1 + static_cast<int>(unit(rng) * 8); n > 0; --n) {
      v.push_back(x);
      x += 0.05 + unit(rng);
    }
    const PowerSamples s(v);
    const double r = unit(rng);
    const auto w = depth_filter(r, Diopter{v.front() - 0.5 + unit(rng) * (v.back() - v.front() + 1.0)}, s);
    ASSERT_EQ(w.radiance_lower + w.radiance_upper, r);
    ASSERT_GE(w.radiance_lower, 0.0);
    ASSERT_GE(w.radiance_upper, 0.0);
  }
}

TEST(DepthFilter, ContinuousAcrossSamples) {
  const PowerSamples s({0.0, 0.5, 1.0});
  const double eps = 1e-9;
  const auto below = depth_filter(1.0, Diopter{0.5 - eps}, s);
  const auto above = depth_filter(1.0, Diopter{0.5 + eps}, s);
  EXPECT_NEAR(below.radiance_upper, 1.0, 1e-8);
  EXPECT_NEAR(above.radiance_lower, 1.0, 1e-8);
}

TEST(BreathingScale, ReferenceValues) {
  EXPECT_DOUBLE_EQ(breathing_scale(0.5_m, 0.5_m, 0.02_m), 1.0);
  EXPECT_DOUBLE_EQ(breathing_scale(0.5_m, 0.8_m, Distance::meters(0.0)), 1.0);
  const double k = breathing_scale(0.5_m, Distance::meters(1.0 / 3.0), 0.02_m);
  EXPECT_NEAR(k, 0.5 * (1.0 / 3.0 + 0.02) / ((1.0 / 3.0) * 0.52), 1e-15);
  EXPECT_NEAR(k, 1.0192, 1e-4);
  EXPECT_EQ(breathing_scale_for_power(0.5_m, 0.0_D, 0.02_m), 1.0);
}

TEST(BreathingScale, PowerFormMatchesDistanceForm) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double p = 0.2 + 2.8 * unit(rng);
    const double v = -2.0 + (0.9 / p + 2.0) * unit(rng);
    const double e = 0.05 * unit(rng);
    const double a = breathing_scale(Distance::meters(p), virtual_distance(Distance::meters(p), Diopter{v}),
                                     Distance::meters(e));
    EXPECT_NEAR(a, breathing_scale_for_power(Distance::meters(p), Diopter{v}, Distance::meters(e)), 1e-12 * a);
  }
}

TEST(FovScale, ReferenceValues) {
  EXPECT_DOUBLE_EQ(fov_scale(0.1_m, 1.0, 0.02_m, 0.5_m), 1.0);
  EXPECT_NEAR(fov_scale(Distance::meters(1e-9), 1.03, 0.02_m, 0.5_m), 1.03, 1e-12);
  const double f = fov_scale(0.1_m, 1.0193, 0.02_m, 0.5_m);
  EXPECT_NEAR(f, std::atan(0.10193 / 0.52) / std::atan(0.1 / 0.52), 1e-12);
  EXPECT_GT(f, 1.0);
  EXPECT_LT(f, 1.0193);
}
