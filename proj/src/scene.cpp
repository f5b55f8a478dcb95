#include "pointloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pointloc/errors.hpp"
#include "pointloc/rng.hpp"

namespace pointloc {
namespace {

constexpr std::uint64_t kFurnitureStream = 1;
constexpr std::uint64_t kPictureStream = 2;
constexpr std::uint64_t kBaseYawStream = 3;

std::array<double, 3> random_albedo(Rng& rng) {
  return {rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
}

struct FurnitureShape {
  int category;
  double min_w, max_w;  // footprint side lengths
  double min_d, max_d;
  double min_h, max_h;
};

// Heights <= 0 mean "full height" (floor to ceiling).
constexpr FurnitureShape kShapes[] = {
    {category::kTable, 0.6, 1.6, 0.6, 1.2, 0.70, 0.80},
    {category::kCabinet, 0.4, 1.0, 0.4, 1.2, 1.6, 2.2},
    {category::kPillar, 0.3, 0.6, 0.3, 0.6, -1, -1},
    {category::kShelf, 0.25, 0.4, 1.0, 2.0, 1.7, 2.0},
    {category::kCrate, 0.4, 0.9, 0.4, 0.9, 0.3, 1.0},
    {category::kPartition, 0.1, 0.12, 1.5, 3.0, -1, -1},
};

}  // namespace

SceneModel generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.extent_x < 6.0 || params.extent_y < 6.0) {
    throw Error(ErrorCode::kInvalidArgument, "floor extent must be at least 6 x 6 m");
  }
  if (params.min_obstacles < 0 || params.max_obstacles < params.min_obstacles) {
    throw Error(ErrorCode::kInvalidArgument, "obstacle count range is empty");
  }
  SceneModel scene;
  scene.seed = seed;
  scene.x_min = 0.0;
  scene.y_min = 0.0;
  scene.x_max = params.extent_x;
  scene.y_max = params.extent_y;
  scene.wall_height = params.wall_height;

  const double x0 = scene.x_min, x1 = scene.x_max, y0 = scene.y_min, y1 = scene.y_max;
  const double h = params.wall_height, wt = params.wall_thickness;
  int next_id = 1;
  Rng rng = Rng::stream(seed, {kFurnitureStream});
  auto add = [&](Vec3 lo, Vec3 hi, int cat) {
    scene.obstacles.push_back({lo, hi, next_id++, cat, random_albedo(rng)});
  };

  add({x0, y0, -0.1}, {x1, y1, 0.0}, category::kFloor);
  add({x0, y0, h}, {x1, y1, h + 0.1}, category::kCeiling);
  add({x0, y0, 0.0}, {x0 + wt, y1, h}, category::kWall);
  add({x1 - wt, y0, 0.0}, {x1, y1, h}, category::kWall);
  add({x0, y0, 0.0}, {x1, y0 + wt, h}, category::kWall);
  add({x0, y1 - wt, 0.0}, {x1, y1, h}, category::kWall);

  const Vec3 center(0.5 * (x0 + x1), 0.5 * (y0 + y1), params.camera_height);
  const int count = params.min_obstacles +
                    static_cast<int>(rng.below(params.max_obstacles - params.min_obstacles + 1));
  int placed = 0;
  for (int attempt = 0; placed < count && attempt < 100 * (count + 1); ++attempt) {
    const FurnitureShape& s = kShapes[rng.below(std::size(kShapes))];
    double w = rng.uniform(s.min_w, s.max_w);
    double d = rng.uniform(s.min_d, s.max_d);
    if (rng.uniform() < 0.5) std::swap(w, d);
    const double top = s.min_h > 0 ? rng.uniform(s.min_h, s.max_h) : h;
    const double lo_x = x0 + wt, hi_x = x1 - wt - w;
    const double lo_y = y0 + wt, hi_y = y1 - wt - d;
    const double bx = rng.uniform(lo_x, hi_x), by = rng.uniform(lo_y, hi_y);
    Box box{{bx, by, 0.0}, {bx + w, by + d, top}, 0, s.category, random_albedo(rng)};
    // Keeps at least the room center free at camera height.
    if (box.contains(center)) continue;
    box.instance_id = next_id++;
    scene.obstacles.push_back(box);
    ++placed;
  }

  // Thin textured panels on the walls around eye level.
  Rng pictures = Rng::stream(seed, {kPictureStream});
  const double depth = 0.03;
  for (int wall = 0; wall < 4; ++wall) {
    const bool along_x = wall >= 2;
    const double span_lo = (along_x ? x0 : y0) + wt + 0.3;
    const double span_hi = (along_x ? x1 : y1) - wt - 0.3;
    const int n = 2 + static_cast<int>(pictures.below(3));
    for (int i = 0; i < n; ++i) {
      const double width = pictures.uniform(0.5, 1.5);
      const double a = pictures.uniform(span_lo, span_hi - width);
      const double z_lo = pictures.uniform(0.6, 1.2);
      const double z_hi = z_lo + pictures.uniform(0.5, 1.0);
      Vec3 lo, hi;
      switch (wall) {
        case 0: lo = {x0 + wt, a, z_lo}, hi = {x0 + wt + depth, a + width, z_hi}; break;
        case 1: lo = {x1 - wt - depth, a, z_lo}, hi = {x1 - wt, a + width, z_hi}; break;
        case 2: lo = {a, y0 + wt, z_lo}, hi = {a + width, y0 + wt + depth, z_hi}; break;
        default: lo = {a, y1 - wt - depth, z_lo}, hi = {a + width, y1 - wt, z_hi}; break;
      }
      scene.obstacles.push_back({lo, hi, next_id++, category::kPicture, random_albedo(pictures)});
    }
  }
  return scene;
}

bool is_free(const SceneModel& scene, const Vec3& p) {
  if (p.x() < scene.x_min || p.x() > scene.x_max || p.y() < scene.y_min || p.y() > scene.y_max) {
    return false;
  }
  for (const Box& b : scene.obstacles) {
    if (b.contains(p)) return false;
  }
  return true;
}

namespace {

// Horizontal gap between `p` and the footprint of any box spanning its
// height; walls included.
bool has_clearance(const SceneModel& scene, const Vec3& p, double clearance) {
  for (const Box& b : scene.obstacles) {
    if (p.z() < b.min.z() || p.z() > b.max.z()) continue;
    const double dx = std::max({b.min.x() - p.x(), 0.0, p.x() - b.max.x()});
    const double dy = std::max({b.min.y() - p.y(), 0.0, p.y() - b.max.y()});
    if (dx * dx + dy * dy < clearance * clearance) return false;
  }
  return true;
}

}  // namespace

std::vector<KeyPose> generate_point_grid(const SceneModel& scene, double spacing,
                                         double camera_height, double clearance) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid spacing must be positive");
  if (!(clearance >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid clearance must be non-negative");
  std::vector<KeyPose> out;
  const double eps = 1e-9;
  const int nx = static_cast<int>(std::floor((scene.x_max - scene.x_min) / spacing + eps)) + 1;
  const int ny = static_cast<int>(std::floor((scene.y_max - scene.y_min) / spacing + eps)) + 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec3 p(scene.x_min + i * spacing, scene.y_min + j * spacing, camera_height);
      if (!is_free(scene, p) || !has_clearance(scene, p, clearance)) continue;
      const int id = static_cast<int>(out.size());
      Rng rng = Rng::stream(scene.seed, {kBaseYawStream, static_cast<std::uint64_t>(id)});
      const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
      out.push_back({id, upright_camera_pose(p, yaw), 1});
    }
  }
  return out;
}

}  // namespace pointloc
