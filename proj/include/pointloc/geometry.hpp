#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace pointloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Unit quaternion kept on the canonical hemisphere: the first nonzero
/// component of (w, x, y, z) is positive, so q and -q store identically.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Normalizes and canonicalizes. Throws invalid-argument on a zero or
  /// non-finite input.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double radians);
  /// Nearest rotation to `m` is not computed; `m` must already be a rotation.
  static UnitQuaternion from_matrix(const Mat3& m);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Mat3 matrix() const;
  Vec3 rotate(const Vec3& v) const;
  UnitQuaternion conjugate() const { return {w_, -x_, -y_, -z_}; }
  UnitQuaternion operator*(const UnitQuaternion& o) const;

  bool operator==(const UnitQuaternion&) const = default;

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

/// Rigid transform x -> R x + t. Frame poses are camera-to-world.
struct Pose {
  UnitQuaternion rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  Mat4 matrix() const;

  bool operator==(const Pose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

/// a * b: applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
Vec3 transform_point(const Pose& p, const Vec3& x);

/// Euclidean distance between the translations, meters.
double translation_error(const Pose& a, const Pose& b);
/// Geodesic angle of the relative rotation, degrees in [0, 180].
double rotation_error(const Pose& a, const Pose& b);

/// Upright camera at `position` looking along world heading `yaw` (radians,
/// counter-clockwise from +x). World z is up; camera axes are +x right,
/// +y down, +z forward.
Pose upright_camera_pose(const Vec3& position, double yaw);
/// Heading of the camera's optical axis projected on the world xy-plane.
double camera_yaw(const Pose& p);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool operator==(const CameraIntrinsics&) const = default;
};

CameraIntrinsics intrinsics_from_fov(double fov_degrees, int width, int height);

/// Lifts a pixel with z-depth `depth` (meters, not ray length) into the
/// camera frame. Throws invalid-depth for depth <= 0.
Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k);
Vec2 project(const Vec3& point, const CameraIntrinsics& k);

/// One line `tx ty tz qw qx qy qz`, 17 significant digits.
std::string format_pose(const Pose& p);
/// Throws format-error on malformed input.
Pose parse_pose(std::string_view text);

}  // namespace pointloc
