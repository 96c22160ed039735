/// @file
/// @brief Small vector/quaternion toolkit used by the pose and blend code.
///
/// Rotations are unit quaternions (w, x, y, z). Euler angles follow the BVH
/// convention: channels listed left to right are applied as intrinsic
/// rotations, so "Zrotation Xrotation Yrotation" means R = Rz * Rx * Ry.

#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace fusion {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  double length() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double length() const { return std::sqrt(x * x + y * y + z * z); }
};

inline Vec3 lerp(Vec3 a, Vec3 b, double t) { return a + (b - a) * t; }

struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static constexpr Quat identity() { return {}; }

  friend bool operator==(const Quat&, const Quat&) = default;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat conjugate() const { return {w, -x, -y, -z}; }
};

inline double dot(const Quat& a, const Quat& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Quat operator*(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat normalized(const Quat& q) {
  const double n = q.norm();
  if (n == 0.0) return Quat::identity();
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

/// Inverse of a unit quaternion.
inline Quat inverse(const Quat& q) { return q.conjugate(); }

inline Quat from_axis_angle(Vec3 axis, double radians) {
  const double len = axis.length();
  if (len == 0.0) return Quat::identity();
  const double s = std::sin(radians * 0.5) / len;
  return {std::cos(radians * 0.5), axis.x * s, axis.y * s, axis.z * s};
}

/// Rotation angle (radians, in [0, pi]) separating two orientations,
/// independent of quaternion sign.
inline double angle_between(const Quat& a, const Quat& b) {
  // atan2 of the relative rotation stays accurate near zero, unlike acos
  const Quat r = normalized(a).conjugate() * normalized(b);
  const double v = std::sqrt(r.x * r.x + r.y * r.y + r.z * r.z);
  return 2.0 * std::atan2(v, std::fabs(r.w));
}

inline Vec3 rotate(const Quat& q, Vec3 v) {
  const Quat p{0.0, v.x, v.y, v.z};
  const Quat r = q * p * q.conjugate();
  return {r.x, r.y, r.z};
}

/// Shortest-arc spherical interpolation. Endpoints are returned verbatim.
inline Quat slerp(const Quat& a, const Quat& b, double t) {
  if (t <= 0.0) return a;
  if (t >= 1.0) return b;
  Quat end = b;
  double cos_theta = dot(a, b);
  if (cos_theta < 0.0) {
    cos_theta = -cos_theta;
    end = {-b.w, -b.x, -b.y, -b.z};
  }
  double wa;
  double wb;
  if (cos_theta > 1.0 - 1e-12) {
    wa = 1.0 - t;
    wb = t;
  } else {
    const double theta = std::acos(cos_theta);
    const double sin_theta = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / sin_theta;
    wb = std::sin(t * theta) / sin_theta;
  }
  return normalized({wa * a.w + wb * end.w, wa * a.x + wb * end.x,
                     wa * a.y + wb * end.y, wa * a.z + wb * end.z});
}

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

enum class Axis { X, Y, Z };

inline Quat axis_rotation(Axis axis, double radians) {
  const double c = std::cos(radians * 0.5);
  const double s = std::sin(radians * 0.5);
  switch (axis) {
    case Axis::X: return {c, s, 0.0, 0.0};
    case Axis::Y: return {c, 0.0, s, 0.0};
    case Axis::Z: return {c, 0.0, 0.0, s};
  }
  return Quat::identity();
}

/// Composes intrinsic rotations in the listed order (BVH semantics).
inline Quat euler_to_quat(const std::array<Axis, 3>& order, const std::array<double, 3>& radians) {
  Quat q = axis_rotation(order[0], radians[0]) * axis_rotation(order[1], radians[1]);
  return normalized(q * axis_rotation(order[2], radians[2]));
}

/// Euler angles (radians) with R = Rz(z) * Rx(x) * Ry(y), returned as {z, x, y}.
///
/// At gimbal lock (|x| = 90 degrees) the dependent Y angle is zeroed and the
/// remaining rotation is carried entirely by Z.
inline std::array<double, 3> quat_to_euler_zxy(const Quat& q_in) {
  const Quat q = normalized(q_in);
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  const double r00 = 1.0 - 2.0 * (y * y + z * z);
  const double r01 = 2.0 * (x * y - w * z);
  const double r10 = 2.0 * (x * y + w * z);
  const double r11 = 1.0 - 2.0 * (x * x + z * z);
  const double r20 = 2.0 * (x * z - w * y);
  const double r21 = 2.0 * (y * z + w * x);
  const double r22 = 1.0 - 2.0 * (x * x + y * y);

  const double sx = std::fmax(-1.0, std::fmin(1.0, r21));
  const double ax = std::asin(sx);
  if (std::fabs(sx) > 1.0 - 1e-12) {
    return {std::atan2(r10, r00), ax, 0.0};
  }
  return {std::atan2(-r01, r11), ax, std::atan2(-r20, r22)};
}

/// Degrees triple {x, y, z} applied in ZXY order, the convention used by the
/// profile and viseme config files.
inline Quat euler_deg_zxy(double x_deg, double y_deg, double z_deg) {
  return euler_to_quat({Axis::Z, Axis::X, Axis::Y},
                       {deg_to_rad(z_deg), deg_to_rad(x_deg), deg_to_rad(y_deg)});
}

}  // namespace fusion
