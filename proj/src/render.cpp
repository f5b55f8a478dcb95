#include "pointloc/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pointloc/errors.hpp"
#include "pointloc/rng.hpp"

namespace pointloc {
namespace {

constexpr std::uint64_t kQueryStream = 10;
constexpr std::uint64_t kNoiseStream = 11;

double cell_value(std::uint64_t key, double u, double v, double cell) {
  const auto iu = static_cast<std::int64_t>(std::floor(u / cell));
  const auto iv = static_cast<std::int64_t>(std::floor(v / cell));
  const std::uint64_t h =
      splitmix64(key ^ splitmix64(static_cast<std::uint64_t>(iu) * 0x9e3779b97f4a7c15ULL +
                                  static_cast<std::uint64_t>(iv)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Each face gets its own pattern family and scale (random cells, stripes,
// checkers or dots) keyed by instance and face, with a fine random-cell layer
// on top so every surface stays corner-rich. Varying the statistics between
// surfaces is what lets word histograms tell places apart.
double texture(const Box& box, int axis, int side, const Vec3& hit) {
  const int a = (axis + 1) % 3, b = (axis + 2) % 3;
  std::uint64_t key = splitmix64(static_cast<std::uint64_t>(box.instance_id) * 8 + axis * 2 + side);
  if (box.category_id == category::kWall) {
    // Walls are split into vertical panels 1.2-2.8 m wide, each with its own
    // pattern, so the view along a wall changes with position.
    const double along = a == 2 ? hit[b] : hit[a];
    const double width = 1.2 + 1.6 * (static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53);
    key = splitmix64(key ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(along / width))));
  }
  const auto param = [&](int i) { return static_cast<double>(splitmix64(key + 101 * i) >> 11) * 0x1.0p-53; };
  const double u = hit[a], v = hit[b];
  const bool picture = box.category_id == category::kPicture;
  const double scale = picture ? 0.06 + 0.1 * param(1) : 0.12 + 0.5 * param(1);
  double base = 0;
  switch (static_cast<int>(param(2) * 4)) {
    case 0:
      base = cell_value(key, u, v, scale);
      break;
    case 1: {
      const double theta = std::numbers::pi / 4 * std::floor(param(3) * 4);
      const double s = u * std::cos(theta) + v * std::sin(theta);
      const double stripe = std::floor(s / scale);
      base = 0.5 * (std::fmod(std::abs(stripe), 2.0)) + 0.5 * cell_value(key, stripe, 0.0, 1.0);
      break;
    }
    case 2: {
      const double iu = std::floor(u / scale), iv = std::floor(v / scale);
      base = std::fmod(std::abs(iu + iv), 2.0) == 0 ? 0.15 + 0.3 * cell_value(key, u, v, scale)
                                                    : 0.65 + 0.35 * cell_value(key, u, v, scale);
      break;
    }
    default: {
      const double fu = u / scale - std::floor(u / scale) - 0.5;
      const double fv = v / scale - std::floor(v / scale) - 0.5;
      base = fu * fu + fv * fv < 0.09 + 0.06 * param(4) ? 0.9 : 0.2 + 0.2 * cell_value(key, u, v, scale);
      break;
    }
  }
  const double fine = cell_value(key ^ 0x5bd1e995ULL, u, v, picture ? 0.05 : 0.15);
  const double pattern = 0.6 * base + 0.4 * fine;
  // Floors and ceilings are faint, like real ones; otherwise their corners
  // would dominate every view regardless of where the camera is.
  if (box.category_id == category::kFloor || box.category_id == category::kCeiling) return 0.78 + 0.04 * pattern;
  return 0.2 + 0.8 * pattern;
}

double shading(int axis, int side) {
  static const Vec3 light = Vec3(0.3, 0.5, 0.8).normalized();
  Vec3 n = Vec3::Zero();
  n[axis] = side == 1 ? 1.0 : -1.0;
  return 0.6 + 0.4 * std::max(0.0, n.dot(light));
}

}  // namespace

std::optional<RayHit> cast_ray(const SceneModel& scene, const Vec3& origin, const Vec3& direction) {
  std::optional<RayHit> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.obstacles.size(); ++i) {
    const Box& box = scene.obstacles[i];
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int axis = 0, side = 0;
    bool miss = false;
    for (int c = 0; c < 3 && !miss; ++c) {
      const double o = origin[c], d = direction[c];
      if (d == 0.0) {
        miss = o < box.min[c] || o > box.max[c];
        continue;
      }
      double t0 = (box.min[c] - o) / d;
      double t1 = (box.max[c] - o) / d;
      int enter_side = 0;
      if (t0 > t1) {
        std::swap(t0, t1);
        enter_side = 1;
      }
      if (t0 > t_near) {
        t_near = t0;
        axis = c;
        side = enter_side;
      }
      t_far = std::min(t_far, t1);
      miss = t_near > t_far;
    }
    if (miss || !(t_near > 0.0) || t_near >= best_t) continue;
    best_t = t_near;
    best = RayHit{t_near, static_cast<int>(i), axis, side};
  }
  return best;
}

Frame render(const SceneModel& scene, const Pose& pose, const CameraIntrinsics& k) {
  Frame frame;
  frame.pose = pose;
  frame.rgb = RgbImage(k.width, k.height, 3);
  frame.depth = DepthImage(k.width, k.height, 1, 1.0f);
  frame.instances = InstanceImage(k.width, k.height, 1, 0);
  const Mat3 r = pose.rotation.matrix();
  const Vec3& origin = pose.translation;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // Unit z component in the camera frame, so the ray parameter is z-depth.
      const Vec3 d_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Vec3 d = r * d_cam;
      const auto hit = cast_ray(scene, origin, d);
      if (!hit) continue;
      const Box& box = scene.obstacles[hit->box_index];
      if (hit->z_depth < kDepthMaxMeters) {
        frame.depth.at(u, v) = static_cast<float>(hit->z_depth / kDepthMaxMeters);
        frame.instances.at(u, v) = static_cast<std::uint16_t>(box.instance_id);
      }
      const Vec3 p = origin + hit->z_depth * d;
      const double g = texture(box, hit->axis, hit->side, p) * shading(hit->axis, hit->side);
      for (int c = 0; c < 3; ++c) {
        const double value = std::round(255.0 * box.albedo[c] * g);
        frame.rgb.at(u, v, c) = static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
      }
    }
  }
  return frame;
}

void add_rgb_noise(Frame& frame, double factor, std::uint64_t seed) {
  if (factor < 0.0) throw Error(ErrorCode::kInvalidArgument, "noise factor must be >= 0");
  if (factor == 0.0) return;
  Rng rng(seed);
  for (auto& value : frame.rgb.data) {
    const double noisy = value + std::round(255.0 * factor * rng.normal());
    value = static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
  }
}

PointGroup generate_point_frames(const SceneModel& scene, const KeyPose& key,
                                 const GenerationParams& params, std::uint64_t seed,
                                 bool render_frames) {
  const Vec3 center = key.pose.translation;
  if (!is_free(scene, center)) {
    throw Error(ErrorCode::kInvalidKeyPose, "key pose of point " + std::to_string(key.point_id) +
                                                " is not in free space");
  }
  if (params.queries_per_point < 0 || params.queries_per_point > kMaxQueriesPerPoint) {
    throw Error(ErrorCode::kInvalidArgument, "queries per point must lie in [0, 1000]");
  }
  const CameraIntrinsics k = params.intrinsics();
  const auto pid = static_cast<std::uint64_t>(key.point_id);
  auto make = [&](const Pose& pose, int frame_id, bool is_db, std::uint64_t noise_key) {
    Frame f;
    if (render_frames) {
      f = render(scene, pose, k);
      add_rgb_noise(f, params.noise_factor, Rng::stream(seed, {kNoiseStream, pid, noise_key}).next());
    }
    f.pose = pose;
    f.point_id = key.point_id;
    f.frame_id = frame_id;
    f.is_database = is_db;
    return f;
  };

  PointGroup group;
  group.point_id = key.point_id;
  group.center = center;
  const double base_yaw = camera_yaw(key.pose);
  for (int i = 0; i < 6; ++i) {
    const double yaw = base_yaw + i * std::numbers::pi / 3.0;
    group.database_frames.push_back(make(upright_camera_pose(center, yaw),
                                         database_frame_id(key.point_id, i), true, i));
  }

  Rng rng = Rng::stream(seed, {kQueryStream, pid});
  const double r = params.query_radius;
  for (int i = 0; i < params.queries_per_point; ++i) {
    double dx, dy;
    do {
      dx = rng.uniform(-r, r);
      dy = rng.uniform(-r, r);
    } while (dx * dx + dy * dy > r * r);
    const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec3 p(center.x() + dx, center.y() + dy, center.z());
    if (!is_free(scene, p)) continue;
    const int k_index = static_cast<int>(group.query_frames.size());
    group.query_frames.push_back(make(upright_camera_pose(p, yaw),
                                      query_frame_id(key.point_id, k_index), false,
                                      100 + static_cast<std::uint64_t>(i)));
  }
  return group;
}

}  // namespace pointloc
