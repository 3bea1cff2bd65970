#pragma once

// Rigid poses and pinhole cameras. Camera frames are x right, y down,
// z forward; the origin of an eye camera is the lens center.

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "mfpm/errors.hpp"

namespace mfpm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Pose = Eigen::Isometry3d;

inline Pose make_pose(const Eigen::Quaterniond& q, const Vec3& t) {
  Pose p = Pose::Identity();
  p.linear() = q.normalized().toRotationMatrix();
  p.translation() = t;
  return p;
}

inline Pose translation(const Vec3& t) {
  Pose p = Pose::Identity();
  p.translation() = t;
  return p;
}

/// World-to-camera transform of a camera at `eye` looking at `target`, with
/// image rows running along `down`.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& down = Vec3(0, 1, 0)) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = down.cross(z).normalized();
  if (!z.allFinite() || !x.allFinite()) throw ArgumentError("degenerate look-at frame");
  const Vec3 y = z.cross(x);
  Pose w2c = Pose::Identity();
  w2c.linear().row(0) = x.transpose();
  w2c.linear().row(1) = y.transpose();
  w2c.linear().row(2) = z.transpose();
  w2c.translation() = -(w2c.linear() * eye);
  return w2c;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

struct PinholeCamera {
  Pose world_to_camera = Pose::Identity();
  double vfov = deg2rad(40.0);
  int width = 800;
  int height = 600;

  double aspect() const { return static_cast<double>(width) / height; }
  double focal_px() const { return 0.5 * height / std::tan(0.5 * vfov); }
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
  Vec3 position() const { return world_to_camera.inverse().translation(); }
  Vec3 to_camera(const Vec3& world) const { return world_to_camera * world; }

  /// Homogeneous projection of world points to (u·w, v·w, w) with the
  /// projective depth w = a·z + b of the camera-frame point. (a, b) = (1, 0)
  /// is the ordinary camera; (1, d) moves the center of projection d behind
  /// the camera origin.
  Mat34 projection(double a = 1.0, double b = 0.0) const {
    const double f = focal_px();
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    k(0, 0) = f;
    k(0, 2) = cx() * a;
    k(0, 3) = cx() * b;
    k(1, 1) = f;
    k(1, 2) = cy() * a;
    k(1, 3) = cy() * b;
    k(2, 2) = a;
    k(2, 3) = b;
    k(3, 3) = 1.0;
    return (k * world_to_camera.matrix()).topRows<3>();
  }

  void validate() const {
    if (!(vfov > 0.0 && vfov < std::numbers::pi)) throw ArgumentError("camera fov must be in (0, pi)");
    if (width < 1 || height < 1) throw ArgumentError("camera image size must be >= 1");
  }
};

}  // namespace mfpm
