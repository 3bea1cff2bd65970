#pragma once

// Built-in demo scenes. Each one is a scene document (the same schema the
// scene loader reads) plus the powers it is meant to be shown with and the
// accommodation distances worth looking at.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/scene.hpp"

namespace mfpm::fixtures {

using nlohmann::json;

struct Fixture {
  std::string name;
  json document;                     // scene file contents
  std::vector<double> samples;       // sweep samples, D
  std::vector<double> accommodations;  // eye to focus plane, m
  PoseTimeline timeline;             // empty for static scenes
};

namespace detail {

inline json pose_at(double x, double y, double z) { return {{"position", {x, y, z}}}; }

inline json base(const std::string& name, const json& projector) {
  json j;
  j["name"] = name;
  j["eye_offset_m"] = 0.02;
  j["eye_separation_m"] = 0.064;
  j["head"] = {{"position", {0, 0, 0}}, {"look_at", {0, 0, 1}}, {"vfov_deg", 40.0}, {"width", 800}, {"height", 600}};
  j["projector"] = projector;
  j["surfaces"] = json::array();
  j["objects"] = json::array();
  return j;
}

inline std::vector<double> steps(double lo, double hi, double step) {
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  for (int k = 0; k <= n; ++k) out.push_back(lo + k * step);
  return out;
}

inline std::vector<double> with_eye(std::vector<double> depths, double d_e = 0.02) {
  for (auto& d : depths) d += d_e;
  return depths;
}

}  // namespace detail

/// Flat screen at 500 mm behind a slanted checkerboard that runs from 333 mm
/// to 1666 mm, cut into six slices.
inline Fixture slanted_checker() {
  using detail::base;
  Fixture f;
  f.name = "slanted-checker";
  json j = base(f.name, {{"position", {0, -0.1, -0.1}}, {"look_at", {0, 0, 0.5}}, {"vfov_deg", 45.0}});
  j["surfaces"].push_back({{"id", "screen"}, {"mesh", {{"quad", {0.7, 0.5}}}}, {"pose", detail::pose_at(0, 0, 0.5)}});
  // Vertical plane x = s (z - 0.5); rows spread with depth so the board
  // keeps a constant angular height.
  const double s = 0.6;
  const double zn = 1.0 / 3.0;
  const double zf = 5.0 / 3.0;
  const double k = 0.25;
  json verts = json::array();
  for (auto [z, y] : {std::pair{zn, -1.0}, {zf, -1.0}, {zf, 1.0}, {zn, 1.0}})
    verts.push_back({s * (z - 0.5), y * k * (z + 0.02), z});
  j["objects"].push_back({{"id", "checker"},
                          {"mesh", {{"vertices", verts}, {"uvs", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}}, {"indices", {{0, 1, 2}, {0, 2, 3}}}}},
                          {"texture", {{"checker", {12, 4}}, {"low", 0.1}, {"high", 0.9}}}});
  f.document = j;
  f.samples = detail::steps(-1.0, 1.5, 0.5);
  f.accommodations = detail::with_eye({0.5});
  f.document["samples_D"] = f.samples;
  f.document["accommodations_m"] = f.accommodations;
  return f;
}

/// Three bunnies placed at 333, 500 and 1000 mm by the lens (the screen is
/// at 500 mm), next to three lit checker boxes at the same distances.
inline Fixture bunnies() {
  using detail::base;
  Fixture f;
  f.name = "bunnies";
  json j = base(f.name, {{"position", {0, -0.02, -0.05}}, {"look_at", {0, 0, 1}}, {"vfov_deg", 48.0}});
  j["surfaces"].push_back({{"id", "screen"},
                           {"mesh", {{"quad", {0.34, 0.3}}}},
                           {"pose", detail::pose_at(0.12, 0, 0.5)},
                           {"projection", true}});
  const double depths[3] = {1.0 / 3.0, 0.5, 1.0};
  const char* names[3] = {"near", "mid", "far"};
  const double box_y[3] = {0.2, 0.0, -0.2};
  for (int i = 0; i < 3; ++i) {
    const double d = depths[i];
    const double r = d + 0.02;  // eye distance of the front face
    const double a = 0.1 * r;
    j["surfaces"].push_back({{"id", std::string("box-") + names[i]},
                             {"mesh", {{"box", {a, a, a}}}},
                             {"pose", detail::pose_at(-0.3 * r, box_y[i] * r, d + 0.5 * a)},
                             {"texture", {{"checker", {6, 6}}, {"low", 0.15}, {"high", 0.95}}},
                             {"projection", false},
                             {"illuminated", true}});
  }
  const double tx[3] = {0.07, 0.22, 0.37};
  for (int i = 0; i < 3; ++i) {
    const double d = depths[i];
    const double r = d + 0.02;
    j["objects"].push_back({{"id", std::string("bunny-") + names[i]},
                            {"mesh", {{"quad", {0.13 * r, 0.11 * r}}}},
                            {"pose", detail::pose_at(tx[i] * r, 0.0, d)},
                            {"texture", {{"noise", {24, 20}}, {"low", 0.1}, {"high", 0.95}, {"seed", 43}}},
                            {"silhouette", "bunny"}});
  }
  f.document = j;
  f.samples = detail::steps(-1.0, 2.0, 0.5);
  f.accommodations = detail::with_eye({1.0 / 3.0, 0.5, 1.0});
  f.document["samples_D"] = f.samples;
  f.document["accommodations_m"] = f.accommodations;
  return f;
}

/// Step surface with planes at 450 mm (left) and 800 mm (right) and a
/// textured card at 450 mm spanning both, lit from about 2 m.
inline Fixture step() {
  using detail::base;
  Fixture f;
  f.name = "step";
  json j = base(f.name, {{"position", {0.05, -0.1, -1.4}}, {"look_at", {0.03, 0, 0.6}}, {"vfov_deg", 10.0}, {"width", 2048}, {"height", 1536}});
  j["surfaces"].push_back({{"id", "front"}, {"mesh", {{"quad", {0.2, 0.3}}}}, {"pose", detail::pose_at(-0.1, 0, 0.45)}});
  j["surfaces"].push_back({{"id", "back"}, {"mesh", {{"quad", {0.35, 0.3}}}}, {"pose", detail::pose_at(0.075, 0, 0.8)}});
  j["objects"].push_back({{"id", "card"},
                          {"mesh", {{"quad", {0.2, 0.15}}}},
                          {"pose", detail::pose_at(0.0, 0, 0.45)},
                          {"texture", {{"noise", {140, 105}}, {"low", 0.1}, {"high", 0.95}, {"seed", 44}}}});
  f.document = j;
  f.samples = {-1.0, -0.5, 0.0, 0.5};
  f.accommodations = detail::with_eye({0.45, 0.8});
  f.document["samples_D"] = f.samples;
  f.document["accommodations_m"] = f.accommodations;
  return f;
}

/// A screen carried from 300 mm to 500 mm over 20 tracked poses while the
/// bunny stays at 450 mm.
inline Fixture moving_bunny() {
  using detail::base;
  Fixture f;
  f.name = "moving-bunny";
  json j = base(f.name, {{"position", {0, -0.08, -0.3}}, {"look_at", {0, 0, 0.4}}, {"vfov_deg", 32.0}});
  j["surfaces"].push_back({{"id", "screen"}, {"mesh", {{"quad", {0.5, 0.4}}}}, {"pose", detail::pose_at(0, 0, 0.3)}});
  j["objects"].push_back({{"id", "bunny"},
                          {"mesh", {{"quad", {0.12, 0.1}}}},
                          {"pose", detail::pose_at(0.02, 0.0, 0.45)},
                          {"texture", {{"noise", {48, 40}}, {"low", 0.1}, {"high", 0.95}, {"seed", 45}}},
                          {"silhouette", "bunny"}});
  j["timeline"] = "moving-bunny-poses.csv";
  f.document = j;
  for (int k = 0; k < 20; ++k) {
    const double z = 0.3 + 0.2 * k / 19.0;
    f.timeline.add({0.05 * k, "screen", translation(Vec3(0, 0, z))});
  }
  f.samples = detail::steps(-0.5, 1.5, 0.5);
  f.accommodations = detail::with_eye({0.45});
  f.document["samples_D"] = f.samples;
  f.document["accommodations_m"] = f.accommodations;
  return f;
}

/// Corner-shaped screen with two cuboids floating in front of it.
inline Fixture corner() {
  using detail::base;
  Fixture f;
  f.name = "corner";
  json j = base(f.name, {{"position", {0, -0.1, -0.1}}, {"look_at", {0, 0, 0.7}}, {"vfov_deg", 40.0}});
  const double c = std::sqrt(0.5);
  // Two walls meeting at x = 0, z = 0.75, opening toward the viewer.
  j["surfaces"].push_back({{"id", "wall-left"},
                           {"mesh", {{"quad", {0.5, 0.5}}}},
                           {"pose", {{"position", {-0.25 * c, 0, 0.75 - 0.25 * c}}, {"rotation_xyzw", {0, std::sin(std::numbers::pi / 8), 0, std::cos(std::numbers::pi / 8)}}}}});
  j["surfaces"].push_back({{"id", "wall-right"},
                           {"mesh", {{"quad", {0.5, 0.5}}}},
                           {"pose", {{"position", {0.25 * c, 0, 0.75 - 0.25 * c}}, {"rotation_xyzw", {0, -std::sin(std::numbers::pi / 8), 0, std::cos(std::numbers::pi / 8)}}}}});
  j["objects"].push_back({{"id", "cuboid-near"},
                          {"mesh", {{"box", {0.06, 0.1, 0.06}}}},
                          {"pose", {{"position", {-0.06, 0.02, 0.42}}, {"rotation_xyzw", {0, std::sin(std::numbers::pi / 12), 0, std::cos(std::numbers::pi / 12)}}}},
                          {"texture", {{"checker", {4, 4}}, {"low", 0.2}, {"high", 0.9}}}});
  j["objects"].push_back({{"id", "cuboid-far"},
                          {"mesh", {{"box", {0.08, 0.06, 0.08}}}},
                          {"pose", {{"position", {0.08, -0.03, 0.9}}, {"rotation_xyzw", {0, -std::sin(std::numbers::pi / 10), 0, std::cos(std::numbers::pi / 10)}}}},
                          {"texture", {{"checker", {4, 4}}, {"low", 0.2}, {"high", 0.9}}}});
  f.document = j;
  f.samples = detail::steps(-1.0, 2.0, 0.5);
  f.accommodations = detail::with_eye({0.42, 0.6, 0.9});
  f.document["samples_D"] = f.samples;
  f.document["accommodations_m"] = f.accommodations;
  return f;
}

inline std::vector<std::string> names() {
  return {"slanted-checker", "bunnies", "step", "moving-bunny", "corner"};
}

inline std::optional<Fixture> find(const std::string& name) {
  if (name == "slanted-checker") return slanted_checker();
  if (name == "bunnies") return bunnies();
  if (name == "step") return step();
  if (name == "moving-bunny") return moving_bunny();
  if (name == "corner") return corner();
  return std::nullopt;
}

/// Scene of a fixture, ignoring the timeline reference in the document.
inline Scene scene(const Fixture& f) {
  json j = f.document;
  j.erase("timeline");
  return scene_from_json(j);
}

}  // namespace mfpm::fixtures
