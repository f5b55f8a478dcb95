#include "pointloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "pointloc/errors.hpp"

namespace pointloc {

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "quaternion must be finite and nonzero");
  }
  w /= n, x /= n, y /= n, z /= n;
  const double first = w != 0.0 ? w : x != 0.0 ? x : y != 0.0 ? y : z;
  const double s = first < 0.0 ? -1.0 : 1.0;
  w_ = s * w, x_ = s * x, y_ = s * y, z_ = s * z;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double radians) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(0.5 * radians);
  return {std::cos(0.5 * radians), s * a.x(), s * a.y(), s * a.z()};
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& m) {
  const Eigen::Quaterniond q(m);
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 UnitQuaternion::matrix() const {
  return Eigen::Quaterniond(w_, x_, y_, z_).toRotationMatrix();
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const {
  // v' = v + 2 q_v x (q_v x v + w v)
  const Vec3 qv(x_, y_, z_);
  const Vec3 t = 2.0 * qv.cross(v);
  return v + w_ * t + qv.cross(t);
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& o) const {
  return {w_ * o.w_ - x_ * o.x_ - y_ * o.y_ - z_ * o.z_,
          w_ * o.x_ + x_ * o.w_ + y_ * o.z_ - z_ * o.y_,
          w_ * o.y_ - x_ * o.z_ + y_ * o.w_ + z_ * o.x_,
          w_ * o.z_ + x_ * o.y_ - y_ * o.x_ + z_ * o.w_};
}

Pose Pose::from_matrix(const Mat4& m) {
  return {UnitQuaternion::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

Pose inverse(const Pose& p) {
  const UnitQuaternion r = p.rotation.conjugate();
  return {r, -r.rotate(p.translation)};
}

Vec3 transform_point(const Pose& p, const Vec3& x) { return p.rotation.rotate(x) + p.translation; }

double translation_error(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

double rotation_error(const Pose& a, const Pose& b) {
  // Equal to 2 acos(|<qa, qb>|); the atan2 form keeps precision near zero.
  const UnitQuaternion rel = a.rotation.conjugate() * b.rotation;
  const double v = std::sqrt(rel.x() * rel.x() + rel.y() * rel.y() + rel.z() * rel.z());
  return 2.0 * std::atan2(v, std::abs(rel.w())) * 180.0 / std::numbers::pi;
}

Pose upright_camera_pose(const Vec3& position, double yaw) {
  const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Vec3 down(0.0, 0.0, -1.0);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return {UnitQuaternion::from_matrix(r), position};
}

double camera_yaw(const Pose& p) {
  const Vec3 f = p.rotation.rotate(Vec3::UnitZ());
  return std::atan2(f.y(), f.x());
}

CameraIntrinsics intrinsics_from_fov(double fov_degrees, int width, int height) {
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) {
    throw Error(ErrorCode::kInvalidArgument, "field of view must lie in (0, 180) degrees");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  const double half = 0.5 * fov_degrees * std::numbers::pi / 180.0;
  const double f = 0.5 * width / std::tan(half);
  return {f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
}

Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) throw Error(ErrorCode::kInvalidDepth, "depth must be positive");
  return {depth * (pixel.x() - k.cx) / k.fx, depth * (pixel.y() - k.cy) / k.fy, depth};
}

Vec2 project(const Vec3& point, const CameraIntrinsics& k) {
  return {k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy};
}

std::string format_pose(const Pose& p) {
  char buf[256];
  const auto& t = p.translation;
  const auto& q = p.rotation;
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", t.x(), t.y(), t.z(),
                q.w(), q.x(), q.y(), q.z());
  return buf;
}

Pose parse_pose(std::string_view text) {
  std::istringstream in{std::string(text)};
  double v[7];
  for (double& x : v) {
    if (!(in >> x)) throw Error(ErrorCode::kFormatError, "pose line needs 7 numbers");
  }
  std::string rest;
  if (in >> rest) throw Error(ErrorCode::kFormatError, "trailing data after pose");
  try {
    return {UnitQuaternion(v[3], v[4], v[5], v[6]), Vec3(v[0], v[1], v[2])};
  } catch (const Error&) {
    throw Error(ErrorCode::kFormatError, "pose quaternion is zero or non-finite");
  }
}

}  // namespace pointloc
