#include <cmath>
#include <numbers>

#include "gtest/gtest.h"

#include "pointloc/errors.hpp"
#include "pointloc/geometry.hpp"
#include "test_util.hpp"

using namespace pointloc;
using pointloc::test::random_pose;

namespace {

// Oracles below work on plain 4x4 homogeneous matrices built straight from
// the quaternion formula, independent of Pose's own composition code.
Mat4 homogeneous(const Pose& p) {
  const double w = p.rotation.w(), x = p.rotation.x(), y = p.rotation.y(), z = p.rotation.z();
  Mat4 m = Mat4::Identity();
  m(0, 0) = 1 - 2 * (y * y + z * z);
  m(0, 1) = 2 * (x * y - w * z);
  m(0, 2) = 2 * (x * z + w * y);
  m(1, 0) = 2 * (x * y + w * z);
  m(1, 1) = 1 - 2 * (x * x + z * z);
  m(1, 2) = 2 * (y * z - w * x);
  m(2, 0) = 2 * (x * z - w * y);
  m(2, 1) = 2 * (y * z + w * x);
  m(2, 2) = 1 - 2 * (x * x + y * y);
  m(0, 3) = p.translation.x();
  m(1, 3) = p.translation.y();
  m(2, 3) = p.translation.z();
  return m;
}

void expect_matrix_near(const Mat4& a, const Mat4& b, double tol) {
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(a(r, c), b(r, c), tol) << "(" << r << "," << c << ")";
}

}  // namespace

TEST(Quaternion, CanonicalHemisphere) {
  const UnitQuaternion a(0.5, 0.5, -0.5, 0.5);
  const UnitQuaternion b(-0.5, -0.5, 0.5, -0.5);
  EXPECT_EQ(a, b);
  EXPECT_GE(a.w(), 0.0);
  const UnitQuaternion c(0.0, -1.0, 0.0, 0.0);
  const UnitQuaternion d(0.0, 1.0, 0.0, 0.0);
  EXPECT_EQ(c, d);
}

TEST(Quaternion, NormalizedAfterConstruction) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    EXPECT_NEAR(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z(), 1.0, 1e-9);
    EXPECT_GE(q.w(), 0.0);
    const Mat3 r = q.matrix();
    EXPECT_NEAR((r * r.transpose() - Mat3::Identity()).norm(), 0.0, 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  }
}

TEST(Quaternion, ZeroIsRejected) {
  EXPECT_THROW(UnitQuaternion(0, 0, 0, 0), Error);
}

TEST(Pose, ComposeIdentity) {
  EXPECT_EQ(compose(Pose::identity(), Pose::identity()), Pose::identity());
}

TEST(Pose, ComposeMatchesMatrixProduct) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    expect_matrix_near(homogeneous(compose(a, b)), homogeneous(a) * homogeneous(b), 1e-12);
  }
}

TEST(Pose, InverseOfIdentityAndTranslation) {
  EXPECT_EQ(inverse(Pose::identity()), Pose::identity());
  const Pose p{UnitQuaternion::identity(), Vec3(1, 2, 3)};
  const Pose inv = inverse(p);
  EXPECT_DOUBLE_EQ(inv.translation.x(), -1);
  EXPECT_DOUBLE_EQ(inv.translation.y(), -2);
  EXPECT_DOUBLE_EQ(inv.translation.z(), -3);
  EXPECT_EQ(inv.rotation, UnitQuaternion::identity());
}

TEST(Pose, InverseMatchesMatrixInverse) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const Pose p = random_pose(rng);
    expect_matrix_near(homogeneous(inverse(p)), homogeneous(p).inverse(), 1e-12);
  }
}

TEST(Pose, GroupInverseProperty) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng, 50.0);
    for (const Pose& e : {compose(p, inverse(p)), compose(inverse(p), p)}) {
      EXPECT_LT(e.translation.norm(), 1e-9);
      EXPECT_LT(rotation_error(e, Pose::identity()), 1e-7);
    }
  }
}

TEST(Pose, TransformPoint) {
  const Vec3 x(0.3, -2, 7);
  EXPECT_EQ(transform_point(Pose::identity(), x), x);
  const Pose t{UnitQuaternion::identity(), Vec3(1, 2, 3)};
  EXPECT_EQ(transform_point(t, x), x + Vec3(1, 2, 3));
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    const Eigen::Vector4d h = homogeneous(p) * Eigen::Vector4d(x.x(), x.y(), x.z(), 1.0);
    EXPECT_NEAR((transform_point(p, x) - h.head<3>()).norm(), 0.0, 1e-12);
  }
}

TEST(Errors, TranslationError) {
  const Pose a{}, b{UnitQuaternion::identity(), Vec3(3, 4, 0)};
  EXPECT_EQ(translation_error(a, a), 0.0);
  EXPECT_DOUBLE_EQ(translation_error(a, b), 5.0);
  Rng rng(15);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng), q = random_pose(rng);
    double ss = 0;
    for (int c = 0; c < 3; ++c) {
      const double d = p.translation[c] - q.translation[c];
      ss += d * d;
    }
    EXPECT_NEAR(translation_error(p, q), std::sqrt(ss), 1e-12);
    EXPECT_EQ(translation_error(p, q), translation_error(q, p));
  }
}

TEST(Errors, RotationError) {
  const Pose id{};
  EXPECT_EQ(rotation_error(id, id), 0.0);
  const Pose rz{UnitQuaternion::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2), Vec3::Zero()};
  EXPECT_NEAR(rotation_error(id, rz), 90.0, 1e-6);

  Rng rng(16);
  for (int i = 0; i < 500; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Mat3 rel = a.rotation.matrix().transpose() * b.rotation.matrix();
    const double oracle =
        std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / std::numbers::pi;
    EXPECT_NEAR(rotation_error(a, b), oracle, 1e-6);
    EXPECT_NEAR(rotation_error(a, b), rotation_error(b, a), 1e-12);
    EXPECT_GE(rotation_error(a, b), 0.0);
    EXPECT_LE(rotation_error(a, b), 180.0);
  }
}

TEST(Errors, RotationTriangleInequality) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    EXPECT_LE(rotation_error(a, c), rotation_error(a, b) + rotation_error(b, c) + 1e-6);
  }
}

TEST(Camera, IntrinsicsFromFov) {
  const auto k = intrinsics_from_fov(90, 256, 256);
  EXPECT_NEAR(k.fx, 128.0, 1e-12);
  EXPECT_NEAR(k.fy, 128.0, 1e-12);
  EXPECT_EQ(k.cx, 127.5);
  EXPECT_EQ(k.cy, 127.5);
  EXPECT_NEAR(intrinsics_from_fov(90, 512, 512).fx, 256.0, 1e-12);
  // 128 / tan(30 deg) = 128 * sqrt(3)
  EXPECT_NEAR(intrinsics_from_fov(60, 256, 256).fx, 128.0 * std::sqrt(3.0), 1e-9);
  EXPECT_NEAR(intrinsics_from_fov(60, 256, 256).fx, 221.70, 5e-3);
  EXPECT_THROW(intrinsics_from_fov(0, 256, 256), Error);
  EXPECT_THROW(intrinsics_from_fov(180, 256, 256), Error);
  EXPECT_THROW(intrinsics_from_fov(-10, 256, 256), Error);
}

TEST(Camera, Backproject) {
  const auto k = intrinsics_from_fov(90, 256, 256);
  const Vec3 c = backproject(Vec2(k.cx, k.cy), 2.0, k);
  EXPECT_EQ(c, Vec3(0, 0, 2));
  const Vec3 r = backproject(Vec2(k.cx + k.fx, k.cy), 1.0, k);
  EXPECT_NEAR((r - Vec3(1, 0, 1)).norm(), 0.0, 1e-12);
  try {
    backproject(Vec2(10, 10), 0.0, k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidDepth);
  }
  EXPECT_THROW(backproject(Vec2(10, 10), -1.0, k), Error);
}

TEST(Camera, ProjectRoundTrip) {
  const auto k = intrinsics_from_fov(90, 256, 256);
  Rng rng(18);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 px(rng.uniform(0, 256), rng.uniform(0, 256));
    const double depth = rng.uniform(0.1 + 1e-9, 10.0);
    // Forward projection oracle written out directly.
    const Vec3 p = backproject(px, depth, k);
    const Vec2 back(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
    EXPECT_LT((back - px).norm(), 1e-6);
    EXPECT_LT((project(p, k) - px).norm(), 1e-6);
  }
}

TEST(Camera, UprightPoseAxes) {
  const Pose p = upright_camera_pose(Vec3(1, 2, 1.25), std::numbers::pi / 2);
  const Mat3 r = p.rotation.matrix();
  EXPECT_NEAR((r.col(2) - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);  // forward
  EXPECT_NEAR((r.col(1) - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);  // down
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  EXPECT_NEAR(camera_yaw(p), std::numbers::pi / 2, 1e-12);
}

TEST(PoseText, RoundTripIsExact) {
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    const Pose q = parse_pose(format_pose(p));
    EXPECT_EQ(p.translation, q.translation);
    EXPECT_NEAR(rotation_error(p, q), 0.0, 1e-12);
  }
  EXPECT_THROW(parse_pose("1 2 3"), Error);
  EXPECT_THROW(parse_pose("1 2 3 0 0 0 0"), Error);
  EXPECT_THROW(parse_pose("1 2 3 1 0 0 0 9"), Error);
}
