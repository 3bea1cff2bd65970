#pragma once

// Triangle meshes with texture coordinates, a few primitives, OBJ input,
// and procedural grayscale textures.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mfpm/errors.hpp"
#include "mfpm/geometry.hpp"
#include "mfpm/image.hpp"

namespace mfpm {

struct Mesh {
  std::vector<Vec3> positions;
  std::vector<Vec2> uvs;  // empty or one per position
  std::vector<std::array<std::uint32_t, 3>> triangles;

  void validate(const std::string& name = "mesh") const {
    if (triangles.empty()) throw ArgumentError(name + ": no triangles");
    if (!uvs.empty() && uvs.size() != positions.size()) throw ArgumentError(name + ": uv count mismatch");
    for (const auto& t : triangles) {
      for (auto i : t)
        if (i >= positions.size()) throw ArgumentError(name + ": triangle index out of range");
      const Vec3 n = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
      if (!(n.norm() > 0.0)) throw ArgumentError(name + ": degenerate triangle");
    }
  }

  Vec2 uv(std::size_t tri, double b0, double b1, double b2) const {
    if (uvs.empty()) return Vec2::Zero();
    const auto& t = triangles[tri];
    return b0 * uvs[t[0]] + b1 * uvs[t[1]] + b2 * uvs[t[2]];
  }
};

/// Rectangle in the local z = 0 plane centered on the origin; u runs along
/// +x and v along +y (downward in a camera facing +z).
inline Mesh make_quad(double width, double height) {
  Mesh m;
  const double hw = 0.5 * width;
  const double hh = 0.5 * height;
  m.positions = {{-hw, -hh, 0}, {hw, -hh, 0}, {hw, hh, 0}, {-hw, hh, 0}};
  m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

/// Axis-aligned box centered on the origin; each face carries its own
/// [0,1]² texture coordinates.
inline Mesh make_box(double sx, double sy, double sz) {
  Mesh m;
  const Vec3 h(0.5 * sx, 0.5 * sy, 0.5 * sz);
  auto face = [&](Vec3 o, Vec3 du, Vec3 dv) {
    const auto base = static_cast<std::uint32_t>(m.positions.size());
    m.positions.push_back(o);
    m.positions.push_back(o + du);
    m.positions.push_back(o + du + dv);
    m.positions.push_back(o + dv);
    m.uvs.insert(m.uvs.end(), {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    m.triangles.push_back({base, base + 1, base + 2});
    m.triangles.push_back({base, base + 2, base + 3});
  };
  face({-h.x(), -h.y(), -h.z()}, {sx, 0, 0}, {0, sy, 0});  // front (-z)
  face({h.x(), -h.y(), h.z()}, {-sx, 0, 0}, {0, sy, 0});   // back
  face({-h.x(), -h.y(), h.z()}, {0, 0, -sz}, {0, sy, 0});  // left
  face({h.x(), -h.y(), -h.z()}, {0, 0, sz}, {0, sy, 0});   // right
  face({-h.x(), -h.y(), h.z()}, {sx, 0, 0}, {0, 0, -sz});  // top
  face({-h.x(), h.y(), -h.z()}, {sx, 0, 0}, {0, 0, sz});   // bottom
  return m;
}

/// Wavefront OBJ subset: v, vt, f (polygons fan-triangulated). Texture
/// coordinates are kept only when every face vertex references one and the
/// reference agrees with the position index.
inline Mesh read_obj(std::istream& in, const std::string& name = "obj") {
  Mesh m;
  std::vector<Vec2> vts;
  bool uv_ok = true;
  std::vector<long> vt_of_v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw ConfigError("bad vertex", name, lineno);
      m.positions.push_back(p);
      vt_of_v.push_back(-1);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ls >> t.x() >> t.y())) throw ConfigError("bad texture coordinate", name, lineno);
      vts.push_back(t);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const auto s1 = tok.find('/');
        long vi = 0;
        long ti = 0;
        try {
          vi = std::stol(tok.substr(0, s1));
          if (s1 != std::string::npos && s1 + 1 < tok.size() && tok[s1 + 1] != '/')
            ti = std::stol(tok.substr(s1 + 1, tok.find('/', s1 + 1) - s1 - 1));
        } catch (const std::exception&) {
          throw ConfigError("bad face token '" + tok + "'", name, lineno);
        }
        if (vi < 0) vi += static_cast<long>(m.positions.size()) + 1;
        if (vi < 1 || vi > static_cast<long>(m.positions.size())) throw ConfigError("face index out of range", name, lineno);
        if (ti < 0) ti += static_cast<long>(vts.size()) + 1;
        if (ti == 0 || ti > static_cast<long>(vts.size())) {
          uv_ok = false;
        } else {
          long& slot = vt_of_v[vi - 1];
          if (slot != -1 && slot != ti) uv_ok = false;
          slot = ti;
        }
        idx.push_back(static_cast<std::uint32_t>(vi - 1));
      }
      if (idx.size() < 3) throw ConfigError("face with fewer than 3 vertices", name, lineno);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (uv_ok && !vts.empty()) {
    m.uvs.resize(m.positions.size(), Vec2::Zero());
    for (std::size_t i = 0; i < m.positions.size(); ++i)
      if (vt_of_v[i] > 0) m.uvs[i] = vts[static_cast<std::size_t>(vt_of_v[i] - 1)];
  }
  return m;
}

inline Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh", path.string());
  return read_obj(in, path.string());
}

/// Grayscale albedo over texture coordinates in [0,1]².
struct Texture {
  enum class Kind { Constant, Checker, Noise, Bitmap };
  Kind kind = Kind::Constant;
  double value = 1.0;
  double low = 0.0;
  double high = 1.0;
  int cells_u = 8;
  int cells_v = 8;
  std::uint64_t seed = 0;
  std::shared_ptr<const Image<double>> bitmap;
  std::vector<double> table;  // noise cell values

  static Texture constant(double v) {
    Texture t;
    t.value = v;
    return t;
  }
  static Texture checker(int cu, int cv, double low, double high) {
    Texture t;
    t.kind = Kind::Checker;
    t.cells_u = cu;
    t.cells_v = cv;
    t.low = low;
    t.high = high;
    return t;
  }
  /// Cells of independent uniform gray levels in [low, high].
  static Texture noise(int cu, int cv, double low, double high, std::uint64_t seed) {
    Texture t = checker(cu, cv, low, high);
    t.kind = Kind::Noise;
    t.seed = seed;
    std::mt19937_64 rng(seed);
    t.table.resize(static_cast<std::size_t>(cu) * cv);
    for (auto& x : t.table) x = low + (high - low) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    return t;
  }
  static Texture image(Image<double> img) {
    Texture t;
    t.kind = Kind::Bitmap;
    t.bitmap = std::make_shared<const Image<double>>(std::move(img));
    return t;
  }

  double sample(const Vec2& uv) const {
    switch (kind) {
      case Kind::Constant: return value;
      case Kind::Checker: {
        const auto [i, j] = cell(uv);
        return ((i + j) % 2 == 0) ? high : low;
      }
      case Kind::Noise: {
        const auto [i, j] = cell(uv);
        return table[static_cast<std::size_t>(j) * cells_u + i];
      }
      case Kind::Bitmap:
        return bilinear(*bitmap, uv.x() * bitmap->width, uv.y() * bitmap->height);
    }
    return 0.0;
  }

 private:
  std::pair<int, int> cell(const Vec2& uv) const {
    const int i = std::clamp(static_cast<int>(std::floor(uv.x() * cells_u)), 0, cells_u - 1);
    const int j = std::clamp(static_cast<int>(std::floor(uv.y() * cells_v)), 0, cells_v - 1);
    return {i, j};
  }
};

/// Cut-out applied to a textured quad in texture space.
struct Silhouette {
  enum class Kind { None, Bunny, Disc };
  Kind kind = Kind::None;

  bool inside(const Vec2& uv) const {
    switch (kind) {
      case Kind::None: return true;
      case Kind::Disc: return (uv - Vec2(0.5, 0.5)).squaredNorm() <= 0.25;
      case Kind::Bunny: {
        struct E {
          double cx, cy, rx, ry;
        };
        static constexpr E parts[] = {{0.56, 0.68, 0.33, 0.26},   // body
                                      {0.28, 0.44, 0.17, 0.15},   // head
                                      {0.20, 0.20, 0.055, 0.17},  // ears
                                      {0.33, 0.17, 0.055, 0.16},
                                      {0.90, 0.62, 0.08, 0.08}};  // tail
        for (const auto& e : parts) {
          const double dx = (uv.x() - e.cx) / e.rx;
          const double dy = (uv.y() - e.cy) / e.ry;
          if (dx * dx + dy * dy <= 1.0) return true;
        }
        return false;
      }
    }
    return true;
  }
};

}  // namespace mfpm
