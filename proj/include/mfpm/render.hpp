#pragma once

// Two-pass slice rendering: the target object is rendered from each eye,
// split into depth-filtered slices by the power that places it at its
// intended depth, resized against lens breathing, projectively textured
// onto the surfaces from the eye, and captured from the projector.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mfpm/errors.hpp"
#include "mfpm/geometry.hpp"
#include "mfpm/image.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/raster.hpp"
#include "mfpm/scene.hpp"

namespace mfpm::render {

using etl::Segment;

/// Depth tolerance when testing whether a surface point is the one a camera
/// actually sees.
inline constexpr double kVisibilityTolerance = 0.005;

struct ObserverView {
  Image<double> color;          // object radiance, 0 where there is no object
  Image<double> object_depth;   // axial distance from the lens plane, 0 = empty
  Image<double> surface_depth;  // nearest surface, same convention
  Image<int> object_id;         // index into Scene::objects, -1 = empty
  Image<int> surface_id;        // index into Scene::surfaces, -1 = empty
  std::size_t object_pixels = 0;
  std::vector<std::string> diagnostics;
};

/// Renders the object (radiance and depth) and the surfaces (depth only)
/// as seen from the eye, which sits d_e behind the lens-center camera.
inline ObserverView render_observer_view(const Scene& scene, Eye eye) {
  const PinholeCamera& cam = scene.eye(eye);
  const Mat34 proj = cam.projection(1.0, scene.eye_offset);
  ObserverView v;
  v.color = Image<double>(cam.width, cam.height, 0.0);
  v.object_depth = Image<double>(cam.width, cam.height, 0.0);
  v.surface_depth = Image<double>(cam.width, cam.height, 0.0);
  v.object_id = Image<int>(cam.width, cam.height, -1);
  v.surface_id = Image<int>(cam.width, cam.height, -1);

  const auto stris = scene.surface_triangles();
  FragmentBuffer sbuf(cam.width, cam.height);
  rasterize(sbuf, stris, proj);
  for (std::size_t i = 0; i < sbuf.size(); ++i) {
    const auto& f = sbuf[i];
    if (!f.hit()) continue;
    v.surface_depth[i] = cam.to_camera(fragment_point(stris, f)).z();
    v.surface_id[i] = static_cast<int>(stris[static_cast<std::size_t>(f.tri)].owner);
  }

  const auto otris = scene.object_triangles();
  FragmentBuffer obuf(cam.width, cam.height);
  rasterize(obuf, otris, proj, 1e-4, [&](std::size_t t, double b0, double b1, double b2) {
    const auto& o = scene.objects[otris[t].owner];
    return o.silhouette.inside(o.mesh.uv(otris[t].local, b0, b1, b2));
  });
  for (std::size_t i = 0; i < obuf.size(); ++i) {
    const auto& f = obuf[i];
    if (!f.hit()) continue;
    const auto& rt = otris[static_cast<std::size_t>(f.tri)];
    const auto& o = scene.objects[rt.owner];
    v.object_depth[i] = cam.to_camera(fragment_point(otris, f)).z();
    v.object_id[i] = static_cast<int>(rt.owner);
    v.color[i] = o.texture.sample(o.mesh.uv(rt.local, f.b0(), f.b1, f.b2));
    ++v.object_pixels;
  }
  if (v.object_pixels == 0 && !scene.objects.empty())
    v.diagnostics.push_back(std::string(to_string(eye)) + " eye: target object is entirely outside the view");
  return v;
}

struct FilteredSlices {
  std::vector<Image<double>> slices;  // one per sample, observer space
  Image<std::uint8_t> uncovered;      // object pixels with no surface behind them
  std::size_t dropped = 0;
};

/// Splits the object radiance across the sampled powers. A pixel whose
/// object depth is d_v over a surface at d_p needs 1/d_p - 1/d_v; its
/// radiance goes to the two bracketing samples. Pixels without a surface
/// (d_surf == 0) are dropped and flagged.
inline FilteredSlices slice_and_filter(const Image<double>& color, const Image<double>& d_obj,
                                       const Image<double>& d_surf, const optics::PowerSamples& samples) {
  if (color.width != d_obj.width || color.height != d_obj.height || color.width != d_surf.width ||
      color.height != d_surf.height)
    throw ArgumentError("slice_and_filter: image sizes differ");
  FilteredSlices out;
  out.slices.assign(samples.size(), Image<double>(color.width, color.height, 0.0));
  out.uncovered = Image<std::uint8_t>(color.width, color.height, 0);
  for (std::size_t i = 0; i < color.size(); ++i) {
    if (!(d_obj[i] > 0.0)) continue;
    if (!(d_surf[i] > 0.0)) {
      out.uncovered[i] = 1;
      ++out.dropped;
      continue;
    }
    const Diopter v = optics::required_power(Distance::meters(d_surf[i]), Distance::meters(d_obj[i]));
    const auto w = optics::depth_filter(color[i], v, samples);
    out.slices[w.lower_index][i] = w.radiance_lower;
    if (w.upper_index != w.lower_index) out.slices[w.upper_index][i] = w.radiance_upper;
  }
  return out;
}

/// A planar-enough surface region of one slice and its resize factor.
struct Patch {
  int bin = 0;                  // surface depth / bin width, rounded
  double surface_depth = 0.0;   // representative d_p: mean over the slice's pixels in the bin
  double reciprocal_virtual = 0.0;  // 1/d_v for the slice power; <= 0 means no finite virtual image
  double scale = 1.0;           // lens-breathing resize factor
  double fov_factor = 1.0;      // multiplier on the virtual projector FOV
  double tan_scale = 1.0;       // the same resize expressed on image-plane coordinates
  std::size_t pixels = 0;
};

struct Compensation {
  std::vector<Patch> patches;

  const Patch* find(int bin) const {
    for (const auto& p : patches)
      if (p.bin == bin) return &p;
    return nullptr;
  }
  /// FOV factor of the patch with the most pixels (1 without content).
  double dominant_fov_factor() const {
    const Patch* best = nullptr;
    for (const auto& p : patches)
      if (!best || p.pixels > best->pixels) best = &p;
    return best ? best->fov_factor : 1.0;
  }
};

/// Bins are centered on multiples of the width so that surfaces at round
/// distances do not straddle a bin edge.
inline int depth_bin(double depth, double bin_width) {
  return static_cast<int>(std::floor(depth / bin_width + 0.5));
}

/// Per-pixel depth bin of the projectable surface, -1 where there is none.
inline Image<int> cluster_map(const Image<double>& d_surf, double bin_width) {
  Image<int> out(d_surf.width, d_surf.height, -1);
  for (std::size_t i = 0; i < d_surf.size(); ++i)
    if (d_surf[i] > 0.0) out[i] = depth_bin(d_surf[i], bin_width);
  return out;
}

/// Groups the slice's pixels by surface depth bin and gives each group the
/// virtual-projector FOV that cancels lens breathing at the slice's power.
inline Compensation plan_compensation(const Image<double>& slice, const Image<double>& d_surf,
                                      const Image<int>& clusters, double power, const PinholeCamera& eye, double d_e,
                                      bool enabled) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    if (!(slice[i] > 0.0) || clusters[i] < 0) continue;
    auto& a = acc[clusters[i]];
    a.first += d_surf[i];
    ++a.second;
  }
  Compensation c;
  const double half = 0.5 * eye.vfov;
  for (const auto& [bin, a] : acc) {
    Patch p;
    p.bin = bin;
    p.pixels = a.second;
    p.surface_depth = a.first / static_cast<double>(a.second);
    p.reciprocal_virtual = 1.0 / p.surface_depth - power;
    if (enabled) {
      const Distance dp = Distance::meters(p.surface_depth);
      const Distance de = Distance::meters(d_e);
      p.scale = optics::breathing_scale_for_power(dp, Diopter{power}, de);
      const double h = (d_e + p.surface_depth) * std::tan(half);
      p.fov_factor = optics::fov_scale(Distance::meters(h), p.scale, de, dp);
      p.tan_scale = p.fov_factor == 1.0 ? 1.0 : std::tan(p.fov_factor * half) / std::tan(half);
    }
    c.patches.push_back(p);
  }
  return c;
}

/// Surface geometry as seen by the projector, shared by every slice.
struct ProjectorGeometry {
  std::vector<RasterTriangle> tris;
  FragmentBuffer frags{0, 0};
  Image<double> depth;  // camera-frame z, +inf where nothing is hit
};

inline ProjectorGeometry projector_geometry(const Scene& scene) {
  ProjectorGeometry g;
  const auto& cam = scene.projector;
  g.tris = scene.surface_triangles();
  g.frags = FragmentBuffer(cam.width, cam.height);
  rasterize(g.frags, g.tris, cam.projection());
  g.depth = Image<double>(cam.width, cam.height, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < g.frags.size(); ++i)
    if (g.frags[i].hit()) g.depth[i] = g.frags[i].w;
  return g;
}

/// Bilinear lookup that only uses taps in cluster `bin`, renormalized over
/// the taps it keeps.
inline double cluster_bilinear(const Image<double>& img, const Image<int>& clusters, int bin, double u, double v) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  if (!(fx >= -1.0 && fy >= -1.0 && fx < img.width && fy < img.height)) return 0.0;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const double wts[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  double sum = 0.0;
  double wsum = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!img.inside(xs[k], ys[k]) || clusters.at(xs[k], ys[k]) != bin || wts[k] == 0.0) continue;
    sum += wts[k] * img.at(xs[k], ys[k]);
    wsum += wts[k];
  }
  return wsum > 0.0 ? sum / wsum : 0.0;
}

/// Textures the projection surfaces with one observer-space slice (through
/// the per-patch virtual projector at the eye) and captures them from the
/// projector.
inline Image<double> render_projector_view(const Scene& scene, const ProjectorGeometry& geo, Eye eye,
                                           const Image<double>& slice, const Image<int>& clusters,
                                           const Image<double>& d_surf, const Compensation& comp,
                                           double bin_width) {
  const auto& cam = scene.eye(eye);
  const double f = cam.focal_px();
  const double cx = cam.cx();
  const double cy = cam.cy();
  const double de = scene.eye_offset;
  Image<double> out(scene.projector.width, scene.projector.height, 0.0);
  if (comp.patches.empty()) return out;
  for (std::size_t i = 0; i < geo.frags.size(); ++i) {
    const auto& fr = geo.frags[i];
    if (!fr.hit()) continue;
    const auto& rt = geo.tris[static_cast<std::size_t>(fr.tri)];
    if (!scene.surfaces[rt.owner].projection) continue;
    const Vec3 q = cam.to_camera(fragment_point(geo.tris, fr));
    const double w = q.z() + de;
    if (!(w > 0.0)) continue;
    const double tx = q.x() / w;
    const double ty = q.y() / w;
    const double px = std::floor(f * tx + cx);
    const double py = std::floor(f * ty + cy);
    if (!(px >= 0 && py >= 0 && px < cam.width && py < cam.height)) continue;
    const double seen = d_surf.at(static_cast<int>(px), static_cast<int>(py));
    if (!(std::abs(seen - q.z()) <= kVisibilityTolerance)) continue;
    const int bin = depth_bin(q.z(), bin_width);
    const Patch* p = comp.find(bin);
    if (!p) continue;
    out[i] = cluster_bilinear(slice, clusters, bin, f * tx / p->tan_scale + cx, f * ty / p->tan_scale + cy);
  }
  return out;
}

/// Projector image that lights every illuminated surface with full white.
inline Image<double> render_illumination(const Scene& scene, const ProjectorGeometry& geo) {
  Image<double> out(scene.projector.width, scene.projector.height, 0.0);
  for (std::size_t i = 0; i < geo.frags.size(); ++i) {
    const auto& fr = geo.frags[i];
    if (fr.hit() && scene.surfaces[geo.tris[static_cast<std::size_t>(fr.tri)].owner].illuminated) out[i] = 1.0;
  }
  return out;
}

struct Slice {
  std::size_t sample_index = 0;
  double power = 0.0;
  Image<double> observer;    // depth-filtered radiance before compensation
  Compensation compensation;
  Image<double> projection;  // projector image
  double fov_factor = 1.0;
};

struct SliceStack {
  Eye eye = Eye::Left;
  std::vector<Slice> slices;  // in display order along the eye's sweep segment
  ObserverView view;
  Image<double> projectable_depth;  // surface depth where the surface takes projection, else 0
  Image<int> clusters;
  Image<std::uint8_t> uncovered;
  std::size_t dropped = 0;

  const Slice& for_sample(std::size_t n) const {
    for (const auto& s : slices)
      if (s.sample_index == n) return s;
    throw RangeError("no slice for sample " + std::to_string(n));
  }
};

struct RenderOptions {
  bool compensate = true;
  double bin_width = 0.05;  // m
  bool quantize = true;     // round projector images to 8-bit levels
  Segment left_segment = Segment::Up;
};

struct FrameSet {
  optics::PowerSamples samples;
  SliceStack left;
  SliceStack right;
  Image<double> illumination;
  RenderOptions options;

  const SliceStack& stack(Eye e) const { return e == Eye::Left ? left : right; }
};

inline SliceStack render_stack(const Scene& scene, const ProjectorGeometry& geo, Eye eye,
                               const optics::PowerSamples& samples, const RenderOptions& opt) {
  SliceStack st;
  st.eye = eye;
  st.view = render_observer_view(scene, eye);
  st.projectable_depth = st.view.surface_depth;
  for (std::size_t i = 0; i < st.projectable_depth.size(); ++i) {
    const int s = st.view.surface_id[i];
    if (s >= 0 && !scene.surfaces[static_cast<std::size_t>(s)].projection) st.projectable_depth[i] = 0.0;
  }
  auto filtered = slice_and_filter(st.view.color, st.view.object_depth, st.projectable_depth, samples);
  st.uncovered = std::move(filtered.uncovered);
  st.dropped = filtered.dropped;
  st.clusters = cluster_map(st.projectable_depth, opt.bin_width);

  const bool up = (eye == Eye::Left) == (opt.left_segment == Segment::Up);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const std::size_t n = up ? k : samples.size() - 1 - k;
    Slice s;
    s.sample_index = n;
    s.power = samples[n];
    s.observer = std::move(filtered.slices[n]);
    s.compensation = plan_compensation(s.observer, st.projectable_depth, st.clusters, s.power, scene.eye(eye),
                                       scene.eye_offset, opt.compensate);
    s.fov_factor = s.compensation.dominant_fov_factor();
    s.projection = render_projector_view(scene, geo, eye, s.observer, st.clusters, st.projectable_depth,
                                         s.compensation, opt.bin_width);
    if (opt.quantize) s.projection = quantized(s.projection);
    st.slices.push_back(std::move(s));
  }
  return st;
}

/// Full pipeline for both eyes plus the white illumination image.
inline FrameSet render_frame_set(const Scene& scene, const optics::PowerSamples& samples,
                                 const RenderOptions& opt = {}) {
  scene.validate();
  FrameSet fs;
  fs.samples = samples;
  fs.options = opt;
  const auto geo = projector_geometry(scene);
  fs.left = render_stack(scene, geo, Eye::Left, samples, opt);
  fs.right = render_stack(scene, geo, Eye::Right, samples, opt);
  fs.illumination = render_illumination(scene, geo);
  return fs;
}

}  // namespace mfpm::render
