#pragma once

// Verification eye: replays a timing chart through the swept lens, bins the
// light reaching each retinal pixel by the vergence it arrives with, and
// focuses the bins with a finite pupil. Also the focus, continuity and
// crosstalk measures taken on the result.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfpm/errors.hpp"
#include "mfpm/etl.hpp"
#include "mfpm/geometry.hpp"
#include "mfpm/image.hpp"
#include "mfpm/optics.hpp"
#include "mfpm/raster.hpp"
#include "mfpm/render.hpp"
#include "mfpm/scene.hpp"
#include "mfpm/sync.hpp"

namespace mfpm::retina {

struct EyeModel {
  double pupil_diameter = 0.004;  // A, m
  double accommodation = 0.52;    // eye to in-focus plane, m
  double d_e = 0.02;              // eye behind the lens, m
  PinholeCamera retina;           // angular sampling; pose unused

  double pixel_angle() const { return 1.0 / retina.focal_px(); }
  void validate() const {
    if (!(pupil_diameter >= 0.0)) throw ArgumentError("pupil diameter must be >= 0");
    if (!(accommodation > 0.0)) throw ArgumentError("accommodation distance must be > 0");
    retina.validate();
  }
};

inline EyeModel eye_model(const Scene& scene, Eye e, double accommodation, double pupil = 0.004) {
  EyeModel m;
  m.pupil_diameter = pupil;
  m.accommodation = accommodation;
  m.d_e = scene.eye_offset;
  m.retina = scene.eye(e);
  return m;
}

/// Angular diameter of the blur circle of a virtual image at `d_v` from the
/// lens: pupil times dioptric defocus (small-angle).
inline double blur_diameter(Distance d_v, const EyeModel& eye) {
  const double vergence = d_v.is_infinite() ? 0.0 : 1.0 / (d_v.value() + eye.d_e);
  return eye.pupil_diameter * std::abs(vergence - 1.0 / eye.accommodation);
}

struct RetinalImage {
  Image<double> radiance;
  double focal_px = 1.0;  // tan(angle) = (pixel center - c) / focal_px
  double cx = 0.0;
  double cy = 0.0;
  double accommodation = 0.0;
  double pupil_diameter = 0.0;
  double spilled = 0.0;  // energy blurred past the image border

  double energy() const {
    double s = 0.0;
    for (double v : radiance.data) s += v;
    return s;
  }
};

struct EventEnergy {
  std::size_t event = 0;  // index into the chart's events
  sync::EventKind kind = sync::EventKind::ProjectorTrigger;
  Eye eye = Eye::Left;
  std::size_t slice = 0;
  double energy = 0.0;
};

/// Normalized anti-aliased disc, radius in pixels.
struct DiscKernel {
  int reach = 0;
  std::vector<double> weights;  // (2 reach + 1)^2, row-major

  explicit DiscKernel(double radius) {
    if (!(radius >= 0.5)) {
      weights = {1.0};
      return;
    }
    reach = static_cast<int>(std::ceil(radius + 0.5));
    const int n = 2 * reach + 1;
    weights.assign(static_cast<std::size_t>(n) * n, 0.0);
    double sum = 0.0;
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) {
        const double d = std::sqrt(static_cast<double>(dx * dx + dy * dy));
        const double w = std::clamp(radius + 0.5 - d, 0.0, 1.0);
        weights[static_cast<std::size_t>(dy + reach) * n + (dx + reach)] = w;
        sum += w;
      }
    for (auto& w : weights) w /= sum;
  }
};

/// Light collected on the retina over one period, binned by vergence so it
/// can be focused for any accommodation afterwards.
struct LightField {
  int width = 0;
  int height = 0;
  double focal_px = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double d_e = 0.02;
  double bucket = 1.0 / 64.0;  // D per vergence bin
  struct Layer {
    std::vector<std::uint32_t> index;
    std::vector<double> value;
  };
  std::map<std::int64_t, Layer> layers;
  std::vector<EventEnergy> events;

  double total_energy() const {
    double s = 0.0;
    for (const auto& e : events) s += e.energy;
    return s;
  }

  /// Retinal image for the eye's accommodation and pupil.
  RetinalImage focus(const EyeModel& eye) const {
    RetinalImage out;
    out.radiance = Image<double>(width, height, 0.0);
    out.focal_px = focal_px;
    out.cx = cx;
    out.cy = cy;
    out.accommodation = eye.accommodation;
    out.pupil_diameter = eye.pupil_diameter;
    Image<double> scratch(width, height, 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& [key, layer] : layers) {
      const double vergence = static_cast<double>(key) * bucket;
      const double diameter = eye.pupil_diameter * std::abs(vergence - 1.0 / eye.accommodation);
      const DiscKernel k(0.5 * diameter * focal_px);
      touched.clear();
      for (std::size_t i = 0; i < layer.index.size(); ++i) {
        const auto idx = layer.index[i];
        if (scratch[idx] == 0.0) touched.push_back(idx);
        scratch[idx] += layer.value[i];
      }
      std::sort(touched.begin(), touched.end());
      const int n = 2 * k.reach + 1;
      for (auto idx : touched) {
        const double v = scratch[idx];
        scratch[idx] = 0.0;
        const int x = static_cast<int>(idx % static_cast<std::uint32_t>(width));
        const int y = static_cast<int>(idx / static_cast<std::uint32_t>(width));
        for (int dy = -k.reach; dy <= k.reach; ++dy)
          for (int dx = -k.reach; dx <= k.reach; ++dx) {
            const double w = k.weights[static_cast<std::size_t>(dy + k.reach) * n + (dx + k.reach)];
            if (w == 0.0) continue;
            if (out.radiance.inside(x + dx, y + dy))
              out.radiance.at(x + dx, y + dy) += w * v;
            else
              out.spilled += w * v;
          }
      }
    }
    return out;
  }
};

struct SimOptions {
  int subsamples = 8;            // waveform samples per projector frame
  double bucket = 1.0 / 64.0;    // vergence bin width, D
  bool allow_unchecked = false;  // accept charts that were never validated
};

namespace detail {

struct SurfaceShade {
  const Scene* scene;
  const render::ProjectorGeometry* geo;

  /// Light leaving surface point `x` on surface `s` for projector image `img`.
  double operator()(const Image<double>& img, const Vec3& x, std::size_t s, const Vec2& uv) const {
    const auto& cam = scene->projector;
    const Vec3 q = cam.to_camera(x);
    if (!(q.z() > 0.0)) return 0.0;
    const double f = cam.focal_px();
    const double u = f * q.x() / q.z() + cam.cx();
    const double v = f * q.y() / q.z() + cam.cy();
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    if (!(fu >= 0 && fv >= 0 && fu < cam.width && fv < cam.height)) return 0.0;
    const double seen = geo->depth.at(static_cast<int>(fu), static_cast<int>(fv));
    if (!(std::abs(seen - q.z()) <= render::kVisibilityTolerance)) return 0.0;
    const double l = bilinear(img, u, v);
    if (l == 0.0) return 0.0;
    return l * scene->surfaces[s].albedo.sample(uv);
  }
};

}  // namespace detail

/// Integrates what eye `which` sees over one period: every exposure in the
/// chart lights the surfaces with its projector image, the surface is seen
/// through the lens at the instantaneous power, gated by the eye's shutter.
inline LightField view_through_etl(const render::FrameSet& frames, const Scene& scene,
                                   const sync::ValidatedChart& vchart, const etl::PowerWaveform& waveform, Eye which,
                                   const SimOptions& opt = {}) {
  if (!vchart.checked() && !opt.allow_unchecked) throw ArgumentError("refusing to replay an unvalidated chart");
  if (opt.subsamples < 1) throw ArgumentError("subsamples must be >= 1");
  const auto& chart = vchart.chart();
  const PinholeCamera& eye = scene.eye(which);
  const double de = scene.eye_offset;

  LightField lf;
  lf.width = eye.width;
  lf.height = eye.height;
  lf.focal_px = eye.focal_px();
  lf.cx = eye.cx();
  lf.cy = eye.cy();
  lf.d_e = de;
  lf.bucket = opt.bucket;

  const auto geo = render::projector_geometry(scene);
  const auto tris = scene.surface_triangles();
  const detail::SurfaceShade shade{&scene, &geo};
  const sync::ShutterTimeline shutter(chart, which);
  const double fd = chart.frame_duration;
  const double dt = fd / opt.subsamples;

  for (std::size_t ei = 0; ei < chart.events.size(); ++ei) {
    const auto& ev = chart.events[ei];
    if (!ev.is_exposure()) continue;
    const Image<double>* img = nullptr;
    if (ev.kind == sync::EventKind::IlluminationTrigger)
      img = &frames.illumination;
    else
      img = &frames.stack(ev.eye).for_sample(ev.slice).projection;
    EventEnergy rec{ei, ev.kind, ev.eye, ev.slice, 0.0};
    for (int s = 0; s < opt.subsamples; ++s) {
      const double t = ev.effect_time - 0.5 * fd + (s + 0.5) * dt;
      const double tr = shutter.transmission(t);
      if (tr == 0.0) continue;
      const double weight = tr * dt;
      const double power = waveform.power_at_time(t).value;
      FragmentBuffer buf(eye.width, eye.height);
      rasterize(buf, tris, eye.projection(1.0 - power * de, de));
      for (std::size_t i = 0; i < buf.size(); ++i) {
        const auto& fr = buf[i];
        if (!fr.hit()) continue;
        const auto& rt = tris[static_cast<std::size_t>(fr.tri)];
        const Vec3 x = fragment_point(tris, fr);
        const auto& surf = scene.surfaces[rt.owner];
        const double l = shade(*img, x, rt.owner, surf.mesh.uv(rt.local, fr.b0(), fr.b1, fr.b2));
        if (l == 0.0) continue;
        const double z = eye.to_camera(x).z();
        const double w = 1.0 / z - power;
        const double vergence = w / (1.0 + de * w);
        auto& layer = lf.layers[std::llround(vergence / opt.bucket)];
        layer.index.push_back(static_cast<std::uint32_t>(i));
        layer.value.push_back(l * weight);
        rec.energy += l * weight;
      }
    }
    lf.events.push_back(rec);
  }
  return lf;
}

/// Share of projected-slice energy that came from the other eye's frames.
inline double crosstalk(const LightField& lf, Eye which) {
  double own = 0.0;
  double foreign = 0.0;
  for (const auto& e : lf.events) {
    if (e.kind != sync::EventKind::ProjectorTrigger) continue;
    (e.eye == which ? own : foreign) += e.energy;
  }
  const double total = own + foreign;
  return total > 0.0 ? foreign / total : 0.0;
}

/// Mean gradient magnitude (forward differences) over the masked pixels,
/// divided by the mean radiance there so that objects of different
/// brightness compare on focus alone.
inline double sharpness(const Image<double>& img, const Image<std::uint8_t>& mask) {
  double sum = 0.0;
  double level = 0.0;
  std::size_t n = 0;
  for (int y = 0; y + 1 < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x) {
      if (!mask.at(x, y)) continue;
      const double gx = img.at(x + 1, y) - img.at(x, y);
      const double gy = img.at(x, y + 1) - img.at(x, y);
      sum += std::sqrt(gx * gx + gy * gy);
      level += img.at(x, y);
      ++n;
    }
  return level > 0.0 ? sum / level : 0.0;
}

/// Pixels of object `id` in the observer view (its intended retinal footprint).
inline Image<std::uint8_t> object_mask(const render::ObserverView& view, int id) {
  Image<std::uint8_t> m(view.object_id.width, view.object_id.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = view.object_id[i] == id;
  return m;
}

/// Pixels where surface `id` is seen directly and no object covers it.
inline Image<std::uint8_t> surface_mask(const render::ObserverView& view, int id) {
  Image<std::uint8_t> m(view.surface_id.width, view.surface_id.height, 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = view.surface_id[i] == id && view.object_id[i] < 0;
  return m;
}

/// Pixels whose object radiance lands mostly in sample `n`.
inline Image<std::uint8_t> slice_mask(const render::SliceStack& st, std::size_t n) {
  const auto& view = st.view;
  Image<std::uint8_t> m(view.color.width, view.color.height, 0);
  const auto& mine = st.for_sample(n).observer;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(mine[i] > 0.0)) continue;
    bool best = true;
    for (const auto& s : st.slices)
      if (s.observer[i] > mine[i]) best = false;
    m[i] = best;
  }
  return m;
}

/// Energy-weighted centroid and RMS radius (pixels) of an image.
struct Spread {
  double cx = 0.0;
  double cy = 0.0;
  double rms = 0.0;
  double energy = 0.0;
};

inline Spread spread(const Image<double>& img) {
  Spread s;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(x, y);
      s.energy += v;
      s.cx += v * (x + 0.5);
      s.cy += v * (y + 0.5);
    }
  if (!(s.energy > 0.0)) return s;
  s.cx /= s.energy;
  s.cy /= s.energy;
  double m2 = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double dx = x + 0.5 - s.cx;
      const double dy = y + 0.5 - s.cy;
      m2 += img.at(x, y) * (dx * dx + dy * dy);
    }
  s.rms = std::sqrt(m2 / s.energy);
  return s;
}

/// Energy-weighted centroid of the virtual image formed by the projected
/// slices of `st`, in world coordinates. Every surface point the eye sees is
/// lit by each slice's projector image; through the lens at that slice's
/// power the point moves along its lens-center ray to 1/(1/z - v). Vergences
/// are averaged per point (depth filtering is linear in diopters), then the
/// points are averaged with their total light.
struct VirtualCentroid {
  Vec3 world = Vec3::Zero();
  double energy = 0.0;
};

inline VirtualCentroid virtual_centroid(const render::SliceStack& st, const Scene& scene) {
  const PinholeCamera& cam = scene.eye(st.eye);
  const auto geo = render::projector_geometry(scene);
  const auto tris = scene.surface_triangles();
  const detail::SurfaceShade shade{&scene, &geo};
  FragmentBuffer buf(cam.width, cam.height);
  rasterize(buf, tris, cam.projection(1.0, scene.eye_offset));
  const Pose c2w = cam.world_to_camera.inverse();
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto& fr = buf[i];
    if (!fr.hit()) continue;
    const auto& rt = tris[static_cast<std::size_t>(fr.tri)];
    const Vec3 x = fragment_point(tris, fr);
    const Vec2 uv = scene.surfaces[rt.owner].mesh.uv(rt.local, fr.b0(), fr.b1, fr.b2);
    const Vec3 q = cam.to_camera(x);
    double e = 0.0;
    double w = 0.0;
    for (const auto& s : st.slices) {
      const double l = shade(s.projection, x, rt.owner, uv);
      if (l == 0.0) continue;
      e += l;
      w += l * (1.0 / q.z() - s.power);
    }
    if (!(e > 0.0) || !(w > 0.0)) continue;
    const double d_v = e / w;
    acc += e * (c2w * (q * (d_v / q.z())));
    total += e;
  }
  VirtualCentroid out;
  out.energy = total;
  if (total > 0.0) out.world = acc / total;
  return out;
}

/// Nearest surface hit along the ray from `origin` in direction `dir`
/// (camera frame of `cam`); returns the camera-frame point.
inline std::optional<Vec3> cast_ray(const std::vector<RasterTriangle>& tris, const PinholeCamera& cam,
                                    const Vec3& origin, const Vec3& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : tris) {
    const Vec3 a = cam.to_camera(t.world[0]);
    const Vec3 e1 = cam.to_camera(t.world[1]) - a;
    const Vec3 e2 = cam.to_camera(t.world[2]) - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-18) continue;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = s.dot(p) * inv;
    if (u < -1e-12 || u > 1.0 + 1e-12) continue;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
    const double t_hit = e2.dot(q) * inv;
    if (t_hit > 0.0 && t_hit < best) best = t_hit;
  }
  if (!std::isfinite(best)) return std::nullopt;
  return origin + best * dir;
}

struct BoundaryEntry {
  std::size_t lower_sample = 0;  // the pair of adjacent samples meeting here
  std::size_t upper_sample = 0;
  std::size_t pairs = 0;
  double mean_px = 0.0;      // signed radial mismatch, inner minus outer; > 0 is overlap
  double max_abs_px = 0.0;
  double mean_arcmin = 0.0;
  double max_abs_arcmin = 0.0;
  std::size_t predicted_sign_matches = 0;  // pairs whose sign follows the inner/outer power order
};

/// Angular mismatch where neighbouring slices meet on the retina: for each
/// pair of adjacent pixels assigned to adjacent samples, the boundary
/// content of each side is followed through its virtual projector onto the
/// surface and then through the lens at the slice power to the eye.
inline std::vector<BoundaryEntry> boundary_continuity(const render::SliceStack& st, const Scene& scene,
                                                      const EyeModel& eye, const optics::PowerSamples& samples) {
  const auto& view = st.view;
  const PinholeCamera& cam = scene.eye(st.eye);
  const double f = cam.focal_px();
  const double cx = cam.cx();
  const double cy = cam.cy();
  const double de = eye.d_e;
  const auto tris = [&] {
    std::vector<RasterTriangle> out;
    for (const auto& t : scene.surface_triangles())
      if (scene.surfaces[t.owner].projection) out.push_back(t);
    return out;
  }();

  Image<int> assigned(view.color.width, view.color.height, -1);
  for (std::size_t i = 0; i < assigned.size(); ++i) {
    if (!(view.object_depth[i] > 0.0) || !(st.projectable_depth[i] > 0.0)) continue;
    const Diopter v = optics::required_power(Distance::meters(st.projectable_depth[i]),
                                             Distance::meters(view.object_depth[i]));
    assigned[i] = static_cast<int>(optics::assign_slice(v, samples));
  }

  std::map<std::size_t, BoundaryEntry> entries;
  const Vec3 eye_point(0, 0, -de);
  auto retinal = [&](std::size_t n, const Vec2& tb, int bin_hint) -> std::optional<Vec2> {
    const auto& slice = st.for_sample(n);
    const render::Patch* p = slice.compensation.find(bin_hint);
    const double k = p ? p->tan_scale : 1.0;
    const Vec2 tx = k * tb;
    const auto hit = cast_ray(tris, cam, eye_point, Vec3(tx.x(), tx.y(), 1.0));
    if (!hit) return std::nullopt;
    const double z = hit->z();
    const double denom = (1.0 - slice.power * de) * z + de;
    return Vec2(hit->x() / denom, hit->y() / denom);
  };

  for (int y = 0; y < assigned.height; ++y)
    for (int x = 0; x < assigned.width; ++x) {
      const int a = assigned.at(x, y);
      if (a < 0) continue;
      for (int dir = 0; dir < 2; ++dir) {
        const int x2 = x + (dir == 0);
        const int y2 = y + (dir == 1);
        if (!assigned.inside(x2, y2)) continue;
        const int b = assigned.at(x2, y2);
        if (b < 0 || std::abs(a - b) != 1) continue;
        const Vec2 pa((x + 0.5 - cx) / f, (y + 0.5 - cy) / f);
        const Vec2 pb((x2 + 0.5 - cx) / f, (y2 + 0.5 - cy) / f);
        if (pa.norm() == pb.norm()) continue;
        const bool a_inner = pa.norm() < pb.norm();
        const Vec2 tb = 0.5 * (pa + pb);
        if (!(tb.norm() > 0.0)) continue;
        const Vec2 er = tb.normalized();
        const int ia = st.clusters.at(x, y);
        const int ib = st.clusters.at(x2, y2);
        const auto ra = retinal(static_cast<std::size_t>(a), tb, ia);
        const auto rb = retinal(static_cast<std::size_t>(b), tb, ib);
        if (!ra || !rb) continue;
        const double signed_tan = (a_inner ? (*ra - *rb) : (*rb - *ra)).dot(er);
        const double px = signed_tan * f;
        const double arcmin = signed_tan / (1.0 + tb.squaredNorm()) * (180.0 * 60.0 / std::numbers::pi);
        const int inner = a_inner ? a : b;
        const int outer = a_inner ? b : a;
        const bool predicted_overlap = samples[static_cast<std::size_t>(inner)] > samples[static_cast<std::size_t>(outer)];
        auto& e = entries[static_cast<std::size_t>(std::min(a, b))];
        e.lower_sample = static_cast<std::size_t>(std::min(a, b));
        e.upper_sample = e.lower_sample + 1;
        ++e.pairs;
        e.mean_px += px;
        e.mean_arcmin += arcmin;
        e.max_abs_px = std::max(e.max_abs_px, std::abs(px));
        e.max_abs_arcmin = std::max(e.max_abs_arcmin, std::abs(arcmin));
        if ((signed_tan > 0.0) == predicted_overlap && signed_tan != 0.0) ++e.predicted_sign_matches;
      }
    }
  std::vector<BoundaryEntry> out;
  for (auto& [k, e] : entries) {
    e.mean_px /= static_cast<double>(e.pairs);
    e.mean_arcmin /= static_cast<double>(e.pairs);
    out.push_back(e);
  }
  return out;
}

}  // namespace mfpm::retina
