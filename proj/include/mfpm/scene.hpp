#pragma once

// Projection surfaces, the virtual target object, observer eyes and the
// projector, with JSON scene files and CSV surface-pose timelines.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/geometry.hpp"
#include "mfpm/mesh.hpp"
#include "mfpm/raster.hpp"
#include "mfpm/sync.hpp"

namespace mfpm {

using sync::Eye;

struct Surface {
  std::string id;
  Mesh mesh;
  Pose pose = Pose::Identity();  // local -> world
  Texture albedo;
  bool projection = true;   // receives projected slices
  bool illuminated = false; // lit by the white illumination pulse
};

struct TargetObject {
  std::string id;
  Mesh mesh;
  Pose pose = Pose::Identity();
  Texture texture;
  Silhouette silhouette;
};

struct Scene {
  std::string name;
  std::vector<Surface> surfaces;
  std::vector<TargetObject> objects;
  PinholeCamera left;   // origin at the left lens center
  PinholeCamera right;
  PinholeCamera projector;
  double eye_offset = 0.02;      // d_e: eye behind the lens
  double eye_separation = 0.064;

  const PinholeCamera& eye(Eye e) const { return e == Eye::Left ? left : right; }

  void validate() const {
    if (!(eye_offset >= 0.0)) throw ArgumentError("eye offset must be >= 0");
    if (!(eye_separation >= 0.0)) throw ArgumentError("eye separation must be >= 0");
    left.validate();
    right.validate();
    projector.validate();
    for (const auto& s : surfaces) s.mesh.validate(s.id);
    for (const auto& o : objects) o.mesh.validate(o.id);
    if (surfaces.empty()) throw ArgumentError("scene has no surfaces");
  }

  std::vector<RasterTriangle> surface_triangles() const {
    std::vector<RasterTriangle> out;
    for (std::size_t s = 0; s < surfaces.size(); ++s) {
      const auto& m = surfaces[s].mesh;
      for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        RasterTriangle rt;
        for (int k = 0; k < 3; ++k) rt.world[k] = surfaces[s].pose * m.positions[m.triangles[t][k]];
        rt.owner = static_cast<std::uint32_t>(s);
        rt.local = static_cast<std::uint32_t>(t);
        out.push_back(rt);
      }
    }
    return out;
  }

  std::vector<RasterTriangle> object_triangles() const {
    std::vector<RasterTriangle> out;
    for (std::size_t s = 0; s < objects.size(); ++s) {
      const auto& m = objects[s].mesh;
      for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        RasterTriangle rt;
        for (int k = 0; k < 3; ++k) rt.world[k] = objects[s].pose * m.positions[m.triangles[t][k]];
        rt.owner = static_cast<std::uint32_t>(s);
        rt.local = static_cast<std::uint32_t>(t);
        out.push_back(rt);
      }
    }
    return out;
  }

  std::size_t surface_index(const std::string& id) const {
    for (std::size_t i = 0; i < surfaces.size(); ++i)
      if (surfaces[i].id == id) return i;
    throw ArgumentError("no surface named '" + id + "'");
  }
};

/// Left and right lens-center cameras for a head whose world-to-camera
/// transform is `head`; the eyes sit on the head's x axis.
inline void place_eyes(Scene& scene, const Pose& head, double vfov, int width, int height) {
  const double h = 0.5 * scene.eye_separation;
  for (Eye e : {Eye::Left, Eye::Right}) {
    PinholeCamera c;
    c.vfov = vfov;
    c.width = width;
    c.height = height;
    c.world_to_camera = translation(Vec3(e == Eye::Left ? h : -h, 0, 0)) * head;
    (e == Eye::Left ? scene.left : scene.right) = c;
  }
}

/// Rigid surface poses over time, interpolated linearly in translation and
/// spherically in rotation, clamped outside the recorded span.
class PoseTimeline {
 public:
  struct Record {
    double time;
    std::string surface;
    Pose pose;
  };

  void add(const Record& r, std::size_t row = FormatError::npos) {
    auto& list = tracks_[r.surface];
    if (!list.empty() && !(r.time > list.back().time))
      throw FormatError("times must be strictly increasing for surface '" + r.surface + "'", row);
    list.push_back(r);
    if (std::find(times_.begin(), times_.end(), r.time) == times_.end()) times_.push_back(r.time);
  }

  bool empty() const { return tracks_.empty(); }
  bool has(const std::string& surface) const { return tracks_.count(surface) > 0; }
  const std::vector<double>& times() const { return times_; }
  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : tracks_) n += v.size();
    return n;
  }

  Pose pose_at(const std::string& surface, double t) const {
    const auto it = tracks_.find(surface);
    if (it == tracks_.end()) throw ArgumentError("timeline has no surface '" + surface + "'");
    const auto& list = it->second;
    if (t <= list.front().time) return list.front().pose;
    if (t >= list.back().time) return list.back().pose;
    const auto hi = std::upper_bound(list.begin(), list.end(), t,
                                     [](double x, const Record& r) { return x < r.time; });
    const auto& b = *hi;
    const auto& a = *(hi - 1);
    if (t == a.time) return a.pose;
    const double s = (t - a.time) / (b.time - a.time);
    const Eigen::Quaterniond qa(a.pose.linear());
    const Eigen::Quaterniond qb(b.pose.linear());
    return make_pose(qa.slerp(s, qb), a.pose.translation() + s * (b.pose.translation() - a.pose.translation()));
  }

  /// Copy of `scene` with every tracked surface moved to its pose at `t`.
  Scene apply(const Scene& scene, double t) const {
    Scene out = scene;
    for (auto& s : out.surfaces)
      if (has(s.id)) s.pose = pose_at(s.id, t);
    return out;
  }

  /// CSV: time_s,surface_id,tx,ty,tz,qx,qy,qz,qw (header optional).
  static PoseTimeline read_csv(std::istream& in) {
    PoseTimeline tl;
    std::string line;
    std::size_t row = 0;
    bool first = true;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      if (first) {
        first = false;
        if (line.find("time") != std::string::npos) continue;
      }
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
      if (cols.size() != 9) throw FormatError("expected 9 columns", row);
      double v[8];
      try {
        v[0] = std::stod(cols[0]);
        for (int k = 0; k < 7; ++k) v[k + 1] = std::stod(cols[k + 2]);
      } catch (const std::exception&) {
        throw FormatError("non-numeric field", row);
      }
      const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
      if (!(q.norm() > 0.0)) throw FormatError("zero quaternion", row);
      tl.add({v[0], cols[1], make_pose(q, Vec3(v[1], v[2], v[3]))}, row);
      ++row;
    }
    if (tl.empty()) throw FormatError("empty pose timeline");
    return tl;
  }

  void write_csv(std::ostream& out) const {
    out << "time_s,surface_id,tx,ty,tz,qx,qy,qz,qw\n";
    char buf[256];
    for (const auto& [id, list] : tracks_)
      for (const auto& r : list) {
        const Eigen::Quaterniond q(r.pose.linear());
        const Vec3 t = r.pose.translation();
        std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.time, id.c_str(),
                      t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
        out << buf;
      }
  }

 private:
  std::map<std::string, std::vector<Record>> tracks_;
  std::vector<double> times_;
};

namespace detail {

using nlohmann::json;

inline Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ArgumentError("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Pose parse_pose(const json& j) {
  Pose p = Pose::Identity();
  if (j.contains("position")) p.translation() = vec3(j.at("position"));
  if (j.contains("rotation_xyzw")) {
    const auto& q = j.at("rotation_xyzw");
    p.linear() = Eigen::Quaterniond(q.at(3).get<double>(), q.at(0).get<double>(), q.at(1).get<double>(),
                                    q.at(2).get<double>())
                     .normalized()
                     .toRotationMatrix();
  }
  return p;
}

/// Camera entries give a center plus either a look-at target or a
/// camera-to-world rotation quaternion.
inline Pose parse_camera_pose(const json& j) {
  const Vec3 pos = j.contains("position") ? vec3(j.at("position")) : Vec3::Zero();
  if (j.contains("look_at")) {
    const Vec3 down = j.contains("down") ? vec3(j.at("down")) : Vec3(0, 1, 0);
    return look_at(pos, vec3(j.at("look_at")), down);
  }
  return parse_pose(j).inverse();
}

inline PinholeCamera parse_camera(const json& j, int default_w, int default_h, double default_vfov_deg) {
  PinholeCamera c;
  c.world_to_camera = parse_camera_pose(j);
  c.vfov = deg2rad(j.value("vfov_deg", default_vfov_deg));
  c.width = j.value("width", default_w);
  c.height = j.value("height", default_h);
  c.validate();
  return c;
}

inline Mesh parse_mesh(const json& j, const std::filesystem::path& base) {
  if (j.contains("quad")) return make_quad(j["quad"].at(0).get<double>(), j["quad"].at(1).get<double>());
  if (j.contains("box"))
    return make_box(j["box"].at(0).get<double>(), j["box"].at(1).get<double>(), j["box"].at(2).get<double>());
  if (j.contains("obj")) return load_obj(base / j["obj"].get<std::string>());
  Mesh m;
  for (const auto& v : j.at("vertices")) m.positions.push_back(vec3(v));
  if (j.contains("uvs"))
    for (const auto& t : j["uvs"]) m.uvs.emplace_back(t.at(0).get<double>(), t.at(1).get<double>());
  for (const auto& t : j.at("indices"))
    m.triangles.push_back({t.at(0).get<std::uint32_t>(), t.at(1).get<std::uint32_t>(), t.at(2).get<std::uint32_t>()});
  return m;
}

inline Texture parse_texture(const json& j, const std::filesystem::path& base) {
  if (j.is_number()) return Texture::constant(j.get<double>());
  if (j.contains("constant")) return Texture::constant(j["constant"].get<double>());
  const double low = j.value("low", 0.0);
  const double high = j.value("high", 1.0);
  if (j.contains("checker")) return Texture::checker(j["checker"].at(0), j["checker"].at(1), low, high);
  if (j.contains("noise"))
    return Texture::noise(j["noise"].at(0), j["noise"].at(1), low, high, j.value("seed", std::uint64_t{0}));
  if (j.contains("pgm")) return Texture::image(read_pgm(base / j["pgm"].get<std::string>()));
  throw ArgumentError("unknown texture");
}

inline Silhouette parse_silhouette(const std::string& s) {
  if (s == "bunny") return {Silhouette::Kind::Bunny};
  if (s == "disc") return {Silhouette::Kind::Disc};
  if (s == "none" || s.empty()) return {};
  throw ArgumentError("unknown silhouette '" + s + "'");
}

/// 1-based line of a byte offset in `text`.
inline int line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(
                                                                       std::min(byte, text.size())),
                                         '\n'));
}

}  // namespace detail

/// Parses a scene document. `base` resolves relative mesh/texture paths.
inline Scene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  using detail::json;
  Scene s;
  s.name = j.value("name", std::string("scene"));
  s.eye_offset = j.value("eye_offset_m", 0.02);
  s.eye_separation = j.value("eye_separation_m", 0.064);
  const auto& head = j.at("head");
  const Pose hp = detail::parse_camera_pose(head);
  place_eyes(s, hp, deg2rad(head.value("vfov_deg", 40.0)), head.value("width", 800), head.value("height", 600));
  s.projector = detail::parse_camera(j.at("projector"), 1024, 768, 30.0);
  for (const auto& js : j.at("surfaces")) {
    Surface sf;
    sf.id = js.at("id").get<std::string>();
    sf.mesh = detail::parse_mesh(js.at("mesh"), base);
    if (js.contains("pose")) sf.pose = detail::parse_pose(js["pose"]);
    if (js.contains("texture")) sf.albedo = detail::parse_texture(js["texture"], base);
    sf.projection = js.value("projection", true);
    sf.illuminated = js.value("illuminated", false);
    s.surfaces.push_back(std::move(sf));
  }
  if (j.contains("objects"))
    for (const auto& jo : j["objects"]) {
      TargetObject o;
      o.id = jo.at("id").get<std::string>();
      o.mesh = detail::parse_mesh(jo.at("mesh"), base);
      if (jo.contains("pose")) o.pose = detail::parse_pose(jo["pose"]);
      if (jo.contains("texture")) o.texture = detail::parse_texture(jo["texture"], base);
      o.silhouette = detail::parse_silhouette(jo.value("silhouette", std::string()));
      s.objects.push_back(std::move(o));
    }
  s.validate();
  return s;
}

struct SceneFile {
  Scene scene;
  PoseTimeline timeline;  // empty when the scene is static
};

/// Loads a scene file; errors carry the file name and, for syntax errors,
/// the line.
inline SceneFile load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what(), path.string(), detail::line_of(text, e.byte));
  }
  SceneFile out;
  try {
    out.scene = scene_from_json(j, path.parent_path());
    if (j.contains("timeline")) {
      const auto tpath = path.parent_path() / j["timeline"].get<std::string>();
      std::ifstream tin(tpath);
      if (!tin) throw ConfigError("cannot open timeline", tpath.string());
      try {
        out.timeline = PoseTimeline::read_csv(tin);
      } catch (const FormatError& e) {
        throw ConfigError(e.what(), tpath.string(), e.row() == FormatError::npos ? 0 : static_cast<int>(e.row()) + 2);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), path.string());
  }
  return out;
}

}  // namespace mfpm
