#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pointloc/geometry.hpp"
#include "pointloc/image.hpp"
#include "pointloc/scene.hpp"

namespace pointloc {

/// Normalized depth 1.0 corresponds to this many meters.
inline constexpr double kDepthMaxMeters = 10.0;

struct Frame {
  RgbImage rgb;
  DepthImage depth;          // z-depth / 10 m, clamped to [0, 1]
  InstanceImage instances;   // 0 = background or beyond max depth
  Pose pose;                 // camera-to-world
  int point_id = 0;
  int frame_id = 0;
  bool is_database = false;
};

/// Database frame ids are dense: 6 per point.
inline int database_frame_id(int point_id, int k) { return 6 * point_id + k; }
/// Query ids leave room for up to 1000 queries per point.
inline constexpr int kMaxQueriesPerPoint = 1000;
inline int query_frame_id(int point_id, int k) { return kMaxQueriesPerPoint * point_id + k; }

struct PointGroup {
  int point_id = 0;
  Vec3 center = Vec3::Zero();
  std::vector<Frame> database_frames;  // exactly 6
  std::vector<Frame> query_frames;
};

struct RayHit {
  double z_depth = 0.0;  // meters along the camera's optical axis
  int box_index = -1;
  int axis = 0;          // entry face axis
  int side = 0;          // 0: min face, 1: max face
};

/// Nearest box hit along the ray origin + s * direction with s > 0.
std::optional<RayHit> cast_ray(const SceneModel& scene, const Vec3& origin, const Vec3& direction);

/// Raycasts every pixel center. Pixels whose nearest hit is at or beyond
/// 10 m (or that hit nothing) get depth 1.0 and instance 0.
Frame render(const SceneModel& scene, const Pose& pose, const CameraIntrinsics& k);

/// v <- clamp(v + round(255 * factor * n), 0, 255), n ~ N(0, 1) per channel.
void add_rgb_noise(Frame& frame, double factor, std::uint64_t seed);

struct GenerationParams {
  double grid_spacing = 2.0;
  int queries_per_point = 50;
  double query_radius = 0.5;
  double noise_factor = 0.02;
  double fov_degrees = 90.0;
  int width = 256;
  int height = 256;
  double camera_height = 1.25;
  double depth_max = kDepthMaxMeters;

  CameraIntrinsics intrinsics() const { return intrinsics_from_fov(fov_degrees, width, height); }
  bool operator==(const GenerationParams&) const = default;
};

/// Six database frames at the key pose's yaw plus k * 60 degrees, and up to
/// `queries_per_point` query frames sampled uniformly in the xy-disk of
/// `query_radius` with uniform yaw. Candidates outside free space are
/// discarded, not resampled. Throws invalid-key-pose when the key pose
/// collides.
PointGroup generate_point_frames(const SceneModel& scene, const KeyPose& key,
                                 const GenerationParams& params, std::uint64_t seed,
                                 bool render_frames = true);

}  // namespace pointloc
