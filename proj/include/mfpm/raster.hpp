#pragma once

// Z-buffered triangle rasterizer over an arbitrary 3x4 projective map.
// Coverage is tested at pixel centers; the smallest projective depth wins
// and equal depths keep the earlier triangle.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "mfpm/geometry.hpp"

namespace mfpm {

struct RasterTriangle {
  std::array<Vec3, 3> world;
  std::uint32_t owner = 0;  // mesh / surface index
  std::uint32_t local = 0;  // triangle index within the owner
};

struct Fragment {
  double w = std::numeric_limits<double>::infinity();
  std::int32_t tri = -1;
  double b1 = 0.0;
  double b2 = 0.0;

  bool hit() const { return tri >= 0; }
  double b0() const { return 1.0 - b1 - b2; }
};

struct FragmentBuffer {
  int width = 0;
  int height = 0;
  std::vector<Fragment> frags;

  FragmentBuffer(int w, int h) : width(w), height(h), frags(static_cast<std::size_t>(w) * h) {}
  Fragment& at(int x, int y) { return frags[static_cast<std::size_t>(y) * width + x]; }
  const Fragment& at(int x, int y) const { return frags[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return frags.size(); }
  const Fragment& operator[](std::size_t i) const { return frags[i]; }
};

/// Return false to discard a fragment (texture cut-outs).
using FragmentFilter = std::function<bool(std::size_t tri, double b0, double b1, double b2)>;

namespace detail {

struct ClipVertex {
  Vec3 clip;  // (u·w, v·w, w)
  Vec3 bary;
};

}  // namespace detail

/// Rasterizes `tris` through `proj` into `buf`. Geometry with w below
/// `near_w` is clipped away in homogeneous space.
inline void rasterize(FragmentBuffer& buf, const std::vector<RasterTriangle>& tris, const Mat34& proj,
                      double near_w = 1e-4, const FragmentFilter& filter = {}) {
  using detail::ClipVertex;
  std::vector<ClipVertex> poly;
  std::vector<ClipVertex> next;
  for (std::size_t ti = 0; ti < tris.size(); ++ti) {
    const auto& t = tris[ti];
    poly.clear();
    for (int k = 0; k < 3; ++k) {
      Vec3 b = Vec3::Zero();
      b[k] = 1.0;
      poly.push_back({proj * t.world[k].homogeneous(), b});
    }
    // Sutherland-Hodgman against w >= near_w
    next.clear();
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const auto& a = poly[k];
      const auto& c = poly[(k + 1) % poly.size()];
      const bool ain = a.clip.z() >= near_w;
      const bool cin = c.clip.z() >= near_w;
      if (ain) next.push_back(a);
      if (ain != cin) {
        const double s = (near_w - a.clip.z()) / (c.clip.z() - a.clip.z());
        next.push_back({a.clip + s * (c.clip - a.clip), a.bary + s * (c.bary - a.bary)});
      }
    }
    if (next.size() < 3) continue;

    for (std::size_t k = 1; k + 1 < next.size(); ++k) {
      const ClipVertex* v[3] = {&next[0], &next[k], &next[k + 1]};
      double sx[3], sy[3], iw[3];
      for (int i = 0; i < 3; ++i) {
        iw[i] = 1.0 / v[i]->clip.z();
        sx[i] = v[i]->clip.x() * iw[i];
        sy[i] = v[i]->clip.y() * iw[i];
      }
      const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
      if (!(std::abs(area) > 0.0) || !std::isfinite(area)) continue;
      const double lo_x = std::min({sx[0], sx[1], sx[2]});
      const double hi_x = std::max({sx[0], sx[1], sx[2]});
      const double lo_y = std::min({sy[0], sy[1], sy[2]});
      const double hi_y = std::max({sy[0], sy[1], sy[2]});
      const int x0 = std::max(0, static_cast<int>(std::ceil(lo_x - 0.5)));
      const int x1 = std::min(buf.width - 1, static_cast<int>(std::floor(hi_x - 0.5)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(lo_y - 0.5)));
      const int y1 = std::min(buf.height - 1, static_cast<int>(std::floor(hi_y - 0.5)));
      const double inv_area = 1.0 / area;
      for (int y = y0; y <= y1; ++y) {
        const double py = y + 0.5;
        for (int x = x0; x <= x1; ++x) {
          const double px = x + 0.5;
          const double l0 = ((sx[1] - px) * (sy[2] - py) - (sx[2] - px) * (sy[1] - py)) * inv_area;
          const double l1 = ((sx[2] - px) * (sy[0] - py) - (sx[0] - px) * (sy[2] - py)) * inv_area;
          const double l2 = 1.0 - l0 - l1;
          if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
          const double inv_w = l0 * iw[0] + l1 * iw[1] + l2 * iw[2];
          const double w = 1.0 / inv_w;
          Fragment& f = buf.at(x, y);
          if (!(w < f.w)) continue;
          const Vec3 b = (l0 * iw[0] * v[0]->bary + l1 * iw[1] * v[1]->bary + l2 * iw[2] * v[2]->bary) * w;
          if (filter && !filter(ti, b[0], b[1], b[2])) continue;
          f.w = w;
          f.tri = static_cast<std::int32_t>(ti);
          f.b1 = b[1];
          f.b2 = b[2];
        }
      }
    }
  }
}

inline Vec3 fragment_point(const std::vector<RasterTriangle>& tris, const Fragment& f) {
  const auto& t = tris[static_cast<std::size_t>(f.tri)];
  return f.b0() * t.world[0] + f.b1 * t.world[1] + f.b2 * t.world[2];
}

}  // namespace mfpm
