#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mfpm/fixtures.hpp"
#include "mfpm/render.hpp"
#include "mfpm/retina.hpp"
#include "mfpm/verify.hpp"

using namespace mfpm;
using namespace mfpm::render;

namespace {

std::vector<double> values_where(const Image<double>& img, auto pred) {
  std::vector<double> out;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (pred(i)) out.push_back(img[i]);
  return out;
}

Scene flat_screen() {
  auto doc = fixtures::bunnies().document;
  doc["surfaces"] = nlohmann::json::array({{{"id", "screen"}, {"mesh", {{"quad", {2.0, 2.0}}}},
                                            {"pose", {{"position", {0, 0, 0.5}}}}}});
  return scene_from_json(doc);
}

}  // namespace

TEST(ObserverView, FlatScreenDepthIsConstant) {
  const Scene s = flat_screen();
  const auto v = render_observer_view(s, Eye::Left);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < v.surface_depth.size(); ++i) {
    ASSERT_GT(v.surface_depth[i], 0.0);
    EXPECT_NEAR(v.surface_depth[i], 0.5, 1e-9);
    ++hits;
  }
  EXPECT_EQ(hits, v.surface_depth.size());
}

TEST(ObserverView, StepSurfaceIsBimodal) {
  const Scene s = fixtures::scene(fixtures::step());
  const auto v = render_observer_view(s, Eye::Left);
  std::size_t front = 0, back = 0;
  for (std::size_t i = 0; i < v.surface_depth.size(); ++i) {
    const double d = v.surface_depth[i];
    if (d == 0.0) continue;
    if (std::abs(d - 0.45) < 1e-9) ++front;
    else if (std::abs(d - 0.8) < 1e-9) ++back;
    else ADD_FAILURE() << "depth " << d;
  }
  EXPECT_GT(front, 1000u);
  EXPECT_GT(back, 1000u);
}

TEST(ObserverView, CornerObjectsFormTwoDepthGroups) {
  const Scene s = fixtures::scene(fixtures::corner());
  const auto v = render_observer_view(s, Eye::Left);
  std::size_t near = 0, far = 0;
  for (std::size_t i = 0; i < v.object_depth.size(); ++i) {
    if (v.object_id[i] < 0) continue;
    const double d = v.object_depth[i];
    if (v.object_id[i] == 0) {
      EXPECT_NEAR(d, 0.42, 0.06);
      ++near;
    } else {
      EXPECT_NEAR(d, 0.9, 0.08);
      ++far;
    }
  }
  EXPECT_GT(near, 0u);
  EXPECT_GT(far, 0u);
}

TEST(SliceAndFilter, EverythingAtTheSurfaceIsOneSlice) {
  Image<double> color(4, 4, 0.7), d_obj(4, 4, 0.5), d_surf(4, 4, 0.5);
  const optics::PowerSamples s({-1.0, -0.5, 0.0, 0.5, 1.0});
  const auto f = slice_and_filter(color, d_obj, d_surf, s);
  for (std::size_t n = 0; n < s.size(); ++n)
    for (double v : f.slices[n].data) EXPECT_EQ(v, n == 2 ? 0.7 : 0.0);
  EXPECT_EQ(f.dropped, 0u);
}

TEST(SliceAndFilter, UncoveredPixelsAreDropped) {
  Image<double> color(2, 1, 0.5), d_obj(2, 1, 0.4), d_surf(2, 1, 0.5);
  d_surf[1] = 0.0;
  const auto f = slice_and_filter(color, d_obj, d_surf, optics::PowerSamples({-1.0, 0.0}));
  EXPECT_EQ(f.dropped, 1u);
  EXPECT_EQ(f.uncovered[1], 1);
  EXPECT_EQ(f.slices[0][1] + f.slices[1][1], 0.0);
  EXPECT_EQ(f.slices[0][0] + f.slices[1][0], 0.5);
  EXPECT_THROW(slice_and_filter(color, d_obj, Image<double>(3, 1), optics::PowerSamples({0.0})), ArgumentError);
}

TEST(Compensation, ZeroPowerIsIdentity) {
  const Scene s = flat_screen();
  Image<double> slice(8, 8, 1.0), d(8, 8, 0.5);
  const auto clusters = cluster_map(d, 0.05);
  const auto c = plan_compensation(slice, d, clusters, 0.0, s.left, 0.02, true);
  ASSERT_EQ(c.patches.size(), 1u);
  EXPECT_EQ(c.patches[0].scale, 1.0);
  EXPECT_EQ(c.patches[0].fov_factor, 1.0);
  EXPECT_EQ(c.patches[0].bin, 10);
  const auto off = plan_compensation(slice, d, clusters, -1.0, s.left, 0.02, false);
  EXPECT_EQ(off.patches[0].fov_factor, 1.0);
  const auto on = plan_compensation(slice, d, clusters, -1.0, s.left, 0.02, true);
  EXPECT_NEAR(on.patches[0].scale, optics::breathing_scale_for_power(0.5_m, Diopter{-1.0}, 0.02_m), 1e-15);
  EXPECT_GT(on.patches[0].fov_factor, 1.0);
}

TEST(DepthBin, RoundsToNearest) {
  EXPECT_EQ(depth_bin(0.5, 0.05), 10);
  EXPECT_EQ(depth_bin(0.474, 0.05), 9);
  EXPECT_EQ(depth_bin(0.476, 0.05), 10);
}

TEST(RenderFrameSet, CheckerUsesSixSlices) {
  const auto fx = fixtures::slanted_checker();
  const auto fs = render_frame_set(fixtures::scene(fx), optics::PowerSamples(fx.samples));
  for (Eye e : {Eye::Left, Eye::Right}) {
    ASSERT_EQ(fs.stack(e).slices.size(), 6u);
    for (const auto& sl : fs.stack(e).slices) {
      const double sum = std::accumulate(sl.projection.data.begin(), sl.projection.data.end(), 0.0);
      EXPECT_GT(sum, 0.0) << "slice at " << sl.power << " D";
    }
  }
}

TEST(RenderFrameSet, DisplayOrderFollowsSegment) {
  const auto fx = fixtures::slanted_checker();
  const auto fs = render_frame_set(fixtures::scene(fx), optics::PowerSamples(fx.samples));
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(fs.left.slices[k].sample_index, k);
    EXPECT_EQ(fs.right.slices[k].sample_index, 5 - k);
  }
  EXPECT_THROW(fs.left.for_sample(9), RangeError);
}

TEST(RenderFrameSet, BunniesLandInTheirOwnSlices) {
  const auto fx = fixtures::bunnies();
  const optics::PowerSamples s(fx.samples);
  const auto fs = render_frame_set(fixtures::scene(fx), s);
  const double expected[3] = {-1.0, 0.0, 1.0};
  for (Eye e : {Eye::Left, Eye::Right}) {
    const auto& st = fs.stack(e);
    for (int id = 0; id < 3; ++id) {
      std::map<std::size_t, double> per_slice;
      for (std::size_t n = 0; n < s.size(); ++n)
        for (std::size_t i = 0; i < st.view.object_id.size(); ++i)
          if (st.view.object_id[i] == id) per_slice[n] += st.for_sample(n).observer[i];
      double total = 0.0;
      for (auto& [n, v] : per_slice) total += v;
      ASSERT_GT(total, 0.0);
      const std::size_t want = optics::assign_slice(Diopter{expected[id]}, s);
      EXPECT_NEAR(per_slice[want], total, 1e-9 * total) << "bunny " << id;
    }
  }
}

TEST(RenderFrameSet, PlacementPowers) {
  EXPECT_NEAR(optics::required_power(0.5_m, Distance::meters(1.0 / 3.0)).value, -1.0, 5e-4);
  EXPECT_NEAR(optics::required_power(0.5_m, 0.5_m).value, 0.0, 5e-4);
  EXPECT_NEAR(optics::required_power(0.5_m, 1.0_m).value, 1.0, 5e-4);
}

TEST(RenderFrameSet, ConservesRadianceExactly) {
  RenderOptions exact;
  exact.quantize = false;
  for (const auto& fx : {fixtures::slanted_checker(), fixtures::bunnies(), fixtures::corner()}) {
    const optics::PowerSamples s(fx.samples);
    const auto fs = render_frame_set(fixtures::scene(fx), s, exact);
    for (Eye e : {Eye::Left, Eye::Right}) {
      const auto& st = fs.stack(e);
      std::size_t bad = 0;
      for (std::size_t i = 0; i < st.view.color.size(); ++i) {
        double sum = 0.0;
        for (std::size_t n = 0; n < s.size(); ++n) sum += st.for_sample(n).observer[i];
        bad += sum != (st.uncovered[i] ? 0.0 : st.view.color[i]);
      }
      EXPECT_EQ(bad, 0u) << fx.name;
    }
  }
}

TEST(RenderFrameSet, ZeroSeparationEyesMatch) {
  const auto fx = fixtures::bunnies();
  Scene s = fixtures::scene(fx);
  s.eye_separation = 0.0;
  place_eyes(s, s.left.world_to_camera, s.left.vfov, s.left.width, s.left.height);
  const optics::PowerSamples samples(fx.samples);
  const auto fs = render_frame_set(s, samples);
  for (std::size_t n = 0; n < samples.size(); ++n)
    EXPECT_EQ(fs.left.for_sample(n).projection, fs.right.for_sample(n).projection);
}

TEST(RenderFrameSet, RigidMotionLeavesProjectorImagesUnchanged) {
  const auto fx = fixtures::bunnies();
  const Scene s = fixtures::scene(fx);
  const optics::PowerSamples samples(fx.samples);
  const auto a = render_frame_set(s, samples);
  const Pose g = make_pose(Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Vec3(0.3, 1, -0.2).normalized())),
                           Vec3(0.4, -0.3, 1.2));
  const auto b = render_frame_set(verify::moved(s, g), samples);
  for (Eye e : {Eye::Left, Eye::Right})
    for (std::size_t k = 0; k < samples.size(); ++k)
      EXPECT_EQ(a.stack(e).slices[k].projection, b.stack(e).slices[k].projection);
  EXPECT_EQ(a.illumination, b.illumination);
}

TEST(RenderFrameSet, IlluminationOnlyOnLitSurfaces) {
  const auto fx = fixtures::bunnies();
  const auto fs = render_frame_set(fixtures::scene(fx), optics::PowerSamples(fx.samples));
  const double lit = std::accumulate(fs.illumination.data.begin(), fs.illumination.data.end(), 0.0);
  EXPECT_GT(lit, 0.0);
  const auto doc = [&] {
    auto d = fx.document;
    for (auto& s : d["surfaces"]) s["illuminated"] = false;
    return d;
  }();
  const auto dark = render_frame_set(scene_from_json(doc), optics::PowerSamples(fx.samples));
  EXPECT_EQ(std::accumulate(dark.illumination.data.begin(), dark.illumination.data.end(), 0.0), 0.0);
}
