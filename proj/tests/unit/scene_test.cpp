#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfpm/fixtures.hpp"
#include "mfpm/image.hpp"
#include "mfpm/mesh.hpp"
#include "mfpm/scene.hpp"

using namespace mfpm;
namespace fs = std::filesystem;

namespace {

const fs::path kScenes = fs::path(MFPM_SOURCE_DIR) / "scenes";

nlohmann::json read(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

fs::path temp_file(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("mfpm_scene_test_" + name);
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(SceneFiles, MatchFixtureDocuments) {
  for (const auto& name : fixtures::names()) {
    const auto f = fixtures::find(name);
    ASSERT_TRUE(f) << name;
    EXPECT_EQ(read(kScenes / (name + ".json")), f->document) << name;
  }
  EXPECT_FALSE(fixtures::find("nope"));
}

TEST(SceneFiles, AllLoad) {
  for (const auto& name : fixtures::names()) {
    const auto sf = load_scene(kScenes / (name + ".json"));
    EXPECT_FALSE(sf.scene.surfaces.empty()) << name;
    EXPECT_FALSE(sf.scene.objects.empty()) << name;
  }
}

TEST(SceneFiles, MovingTimelineMatchesFixture) {
  const auto sf = load_scene(kScenes / "moving-bunny.json");
  const auto fx = fixtures::moving_bunny();
  ASSERT_EQ(sf.timeline.times().size(), 20u);
  EXPECT_EQ(sf.timeline.times(), fx.timeline.times());
  for (double t : fx.timeline.times())
    EXPECT_TRUE(sf.timeline.pose_at("screen", t).isApprox(fx.timeline.pose_at("screen", t), 1e-15));
  EXPECT_NEAR(sf.timeline.pose_at("screen", 0.0).translation().z(), 0.3, 1e-15);
  EXPECT_NEAR(sf.timeline.pose_at("screen", 0.95).translation().z(), 0.5, 1e-15);
}

TEST(PlaceEyes, SeparationAndOffset) {
  const Scene s = fixtures::scene(fixtures::bunnies());
  EXPECT_NEAR((s.left.position() - s.right.position()).norm(), 0.064, 1e-15);
  EXPECT_NEAR(s.eye_offset, 0.02, 0.0);
  EXPECT_EQ(s.left.width, 800);
}

TEST(PoseTimeline, InterpolatesAndClamps) {
  PoseTimeline tl;
  tl.add({0.0, "s", translation(Vec3(0, 0, 0.3))});
  tl.add({1.0, "s", make_pose(Eigen::Quaterniond(Eigen::AngleAxisd(0.4, Vec3::UnitY())), Vec3(0, 0, 0.5))});
  const Pose mid = tl.pose_at("s", 0.5);
  EXPECT_NEAR(mid.translation().z(), 0.4, 1e-15);
  EXPECT_NEAR(Eigen::AngleAxisd(mid.linear()).angle(), 0.2, 1e-12);
  EXPECT_NEAR(tl.pose_at("s", -1.0).translation().z(), 0.3, 0.0);
  EXPECT_NEAR(tl.pose_at("s", 5.0).translation().z(), 0.5, 0.0);
  EXPECT_THROW(tl.pose_at("other", 0.0), ArgumentError);
  EXPECT_THROW(tl.add({0.5, "s", Pose::Identity()}), FormatError);
}

TEST(PoseTimeline, CsvRoundTrip) {
  const auto fx = fixtures::moving_bunny();
  std::stringstream ss;
  fx.timeline.write_csv(ss);
  const auto back = PoseTimeline::read_csv(ss);
  EXPECT_EQ(back.record_count(), 20u);
  for (double t : fx.timeline.times())
    EXPECT_TRUE(back.pose_at("screen", t).isApprox(fx.timeline.pose_at("screen", t), 0.0));
}

TEST(PoseTimeline, CsvErrorsCarryRow) {
  std::stringstream ss("time_s,surface_id,tx,ty,tz,qx,qy,qz,qw\n0,s,0,0,0,0,0,0,1\n1,s,0,0,x,0,0,0,1\n");
  try {
    PoseTimeline::read_csv(ss);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
  std::stringstream empty("");
  EXPECT_THROW(PoseTimeline::read_csv(empty), FormatError);
}

TEST(LoadScene, ErrorsNameTheFile) {
  EXPECT_THROW(load_scene("/nonexistent/scene.json"), ConfigError);
  const auto bad = temp_file("bad.json", "{\n  \"name\": \"x\",\n  oops\n}\n");
  try {
    load_scene(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.file(), bad.string());
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  auto doc = fixtures::bunnies().document;
  doc["surfaces"] = nlohmann::json::array();
  const auto none = temp_file("none.json", doc.dump());
  EXPECT_THROW(load_scene(none), ConfigError);
}

TEST(Mesh, QuadAndBox) {
  const Mesh q = make_quad(0.2, 0.1);
  EXPECT_EQ(q.triangles.size(), 2u);
  const Mesh b = make_box(0.1, 0.1, 0.1);
  EXPECT_EQ(b.triangles.size(), 12u);
}

TEST(Mesh, ObjParsing) {
  std::stringstream ok("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n");
  const Mesh m = read_obj(ok);
  EXPECT_EQ(m.positions.size(), 3u);
  EXPECT_EQ(m.triangles.size(), 1u);
  std::stringstream bad("v 0 0 0\nf 1 2 3\n");
  EXPECT_THROW(read_obj(bad), std::exception);
}

TEST(Texture, CheckerAlternates) {
  const Texture t = Texture::checker(2, 2, 0.1, 0.9);
  EXPECT_EQ(t.sample(Vec2(0.25, 0.25)), 0.9);
  EXPECT_EQ(t.sample(Vec2(0.75, 0.25)), 0.1);
  EXPECT_EQ(Texture::constant(0.5).sample(Vec2(0.3, 0.7)), 0.5);
}

TEST(Image, PgmRoundTrip) {
  Image<double> img(5, 3, 0.0);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 14.0;
  const fs::path p = fs::temp_directory_path() / "mfpm_scene_test.pgm";
  write_pgm(p, img);
  const auto back = read_pgm(p);
  ASSERT_EQ(back.width, 5);
  ASSERT_EQ(back.height, 3);
  EXPECT_EQ(back.data, quantized(img).data);
}

TEST(Image, Quantize) {
  EXPECT_EQ(quantize8(0.0), 0);
  EXPECT_EQ(quantize8(1.0), 255);
  EXPECT_EQ(quantize8(2.0), 255);
  EXPECT_EQ(dequantize8(quantize8(0.5)), 128.0 / 255.0);
}
