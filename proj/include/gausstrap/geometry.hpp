#pragma once

// Small fixed-size linear algebra and the pinhole camera model.
//
// Camera convention: world-to-camera extrinsics, +x right, +y down, +z
// forward. A world point p maps to camera space as t = R_w2c * p + T_w2c.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace gausstrap {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  Vec3& operator+=(Vec3 b) {
    x += b.x;
    y += b.y;
    z += b.z;
    return *this;
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

/// 3x3 matrix, row-major storage.
struct Mat3 {
  std::array<double, 9> m{};

  static constexpr Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
  static constexpr Mat3 diagonal(Vec3 d) { return Mat3{{d.x, 0, 0, 0, d.y, 0, 0, 0, d.z}}; }
  static constexpr Mat3 from_rows(Vec3 r0, Vec3 r1, Vec3 r2) {
    return Mat3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
  }

  constexpr double operator()(int r, int c) const { return m[r * 3 + c]; }
  constexpr double& operator()(int r, int c) { return m[r * 3 + c]; }

  constexpr Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
  constexpr Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

  constexpr Mat3 transposed() const {
    Mat3 t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  constexpr double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
    return out;
  }
  friend constexpr Vec3 operator*(const Mat3& a, Vec3 v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
  }
  friend constexpr Mat3 operator+(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int i = 0; i < 9; ++i) out.m[i] = a.m[i] + b.m[i];
    return out;
  }
  friend constexpr Mat3 operator*(double s, const Mat3& a) {
    Mat3 out;
    for (int i = 0; i < 9; ++i) out.m[i] = s * a.m[i];
    return out;
  }
  friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

/// Largest |(R^T R - I)_ij|; used to check rotation candidates.
inline double orthogonality_error(const Mat3& r) {
  const Mat3 rtr = r.transposed() * r;
  const Mat3 id = Mat3::identity();
  double worst = 0.0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(rtr.m[i] - id.m[i]));
  return worst;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return orthogonality_error(r) <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// 2x3 projection Jacobian, row-major.
using Mat23 = std::array<double, 6>;

struct Vec2 {
  double x = 0.0, y = 0.0;
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double kDefaultNear = 0.01;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Camera {
  int width = 1;
  int height = 1;
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::identity();  // R_w2c
  Vec3 translation;                  // T_w2c
  double near = kDefaultNear;

  Vec3 to_camera(Vec3 p_world) const { return rotation * p_world + translation; }
  Vec3 center() const { return -(rotation.transposed() * translation); }

  friend bool operator==(const Camera&, const Camera&) = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
inline void validate(const Camera& cam) {
  if (cam.width < 1 || cam.height < 1) throw std::invalid_argument("camera: image size must be >= 1");
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw std::invalid_argument("camera: focal lengths must be > 0");
  if (!(cam.near > 0.0)) throw std::invalid_argument("camera: near plane must be > 0");
  if (!is_rotation(cam.rotation)) throw std::invalid_argument("camera: R_w2c is not a rotation");
}

inline Mat3 rot_x(double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("rot_x: angle must be finite");
  const double c = std::cos(angle), s = std::sin(angle);
  return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}

inline Mat3 rot_y(double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("rot_y: angle must be finite");
  const double c = std::cos(angle), s = std::sin(angle);
  return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

/// R' = rot_x(pitch) * rot_y(yaw) * R_w2c with T_w2c and intrinsics kept.
///
/// Because T_w2c is held fixed, the world origin keeps its camera-space
/// position, so for a camera aimed at the origin this orbits the camera
/// around the origin rather than turning it in place.
inline Camera perturb_camera(const Camera& cam, double pitch, double yaw) {
  validate(cam);
  Camera out = cam;
  if (pitch == 0.0 && yaw == 0.0) return out;
  out.rotation = rot_x(pitch) * rot_y(yaw) * cam.rotation;
  return out;
}

struct Projection {
  Vec2 uv;
  double depth = 0.0;
};

/// Pinhole projection; std::nullopt when the point is at or behind the near plane.
inline std::optional<Projection> project_point(const Camera& cam, Vec3 p_world) {
  const Vec3 t = cam.to_camera(p_world);
  if (!(t.z > cam.near)) return std::nullopt;
  return Projection{{cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy}, t.z};
}

inline Mat23 projection_jacobian(const Camera& cam, Vec3 t) {
  if (!(t.z > cam.near)) throw std::domain_error("projection_jacobian: depth must exceed near plane");
  const double iz = 1.0 / t.z;
  const double iz2 = iz * iz;
  return {cam.fx * iz, 0.0, -cam.fx * t.x * iz2, 0.0, cam.fy * iz, -cam.fy * t.y * iz2};
}

/// Camera at `center` looking at `target`, with world +z as the up hint.
inline Camera look_at_camera(Vec3 center, Vec3 target, int width, int height, double fx, double fy,
                             Vec3 up = {0, 0, 1}) {
  const Vec3 forward = normalized(target - center);
  Vec3 right = cross(forward, up);
  if (norm(right) < 1e-12) right = cross(forward, Vec3{0, 1, 0});
  right = normalized(right);
  const Vec3 down = cross(forward, right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation = Mat3::from_rows(right, down, forward);
  cam.translation = -(cam.rotation * center);
  return cam;
}

/// Focal length in pixels from a horizontal field of view.
inline double focal_from_fov(double fov_x, int width) { return 0.5 * width / std::tan(0.5 * fov_x); }

// Unit quaternions stored (w, x, y, z).
using Quat = std::array<double, 4>;

inline Mat3 rotation_from_unit_quat(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
               2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

}  // namespace gausstrap
