#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pointloc/geometry.hpp"

namespace pointloc {

/// Category ids used by the procedural generator.
namespace category {
inline constexpr int kFloor = 1;
inline constexpr int kCeiling = 2;
inline constexpr int kWall = 3;
inline constexpr int kTable = 4;
inline constexpr int kCabinet = 5;
inline constexpr int kPillar = 6;
inline constexpr int kShelf = 7;
inline constexpr int kCrate = 8;
inline constexpr int kPartition = 9;
inline constexpr int kPicture = 10;
}  // namespace category

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  int instance_id = 0;
  int category_id = 0;
  std::array<double, 3> albedo{1.0, 1.0, 1.0};

  /// Closed-box containment.
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool operator==(const Box&) const = default;
};

struct SceneModel {
  std::uint64_t seed = 0;
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  double wall_height = 2.8;
  std::vector<Box> obstacles;

  bool operator==(const SceneModel&) const = default;
};

struct SceneParams {
  double extent_x = 12.0;
  double extent_y = 12.0;
  double wall_height = 2.8;
  double wall_thickness = 0.1;
  /// Furniture count (walls, floor, ceiling and wall pictures excluded) is
  /// drawn from [min_obstacles, max_obstacles].
  int min_obstacles = 10;
  int max_obstacles = 16;
  double camera_height = 1.25;
};

/// Deterministic for a fixed seed. Throws invalid-argument for a floor
/// smaller than 6 x 6 m.
SceneModel generate_scene(std::uint64_t seed, const SceneParams& params = {});

/// True when a camera (treated as a point) at `p` is inside the room and
/// not inside any box.
bool is_free(const SceneModel& scene, const Vec3& p);

struct KeyPose {
  int point_id = 0;
  Pose pose;
  int status = 1;
};

/// Regular grid of key poses at `camera_height`, nodes at
/// x_min + i * spacing (closed interval). Nodes inside a box, or closer than
/// `clearance` to one horizontally, are dropped: a node pressed against a
/// face would see nothing but that face from some of its six views. Each
/// surviving node gets a sequential point id and a base yaw drawn from the
/// stream keyed by (scene seed, point id).
std::vector<KeyPose> generate_point_grid(const SceneModel& scene, double spacing = 2.0,
                                         double camera_height = 1.25, double clearance = 0.3);

}  // namespace pointloc
