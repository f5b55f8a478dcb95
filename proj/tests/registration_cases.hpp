#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "pointloc/registration.hpp"
#include "pointloc/render.hpp"
#include "pointloc/scene.hpp"
#include "test_util.hpp"

namespace pointloc::test {

/// n pairs under ground truth `gt`: query points uniform in a 10 m cube,
/// db points gt * p + N(0, noise^2); round(outlier_fraction * n) randomly
/// chosen pairs get an independent uniform db point in the same cube.
inline std::vector<Correspondence3D> corrupted_set(Rng& rng, const Pose& gt, int n,
                                                   double outlier_fraction, double noise,
                                                   std::vector<bool>* is_outlier = nullptr) {
  const auto cube = [&] { return Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)); };
  std::vector<Correspondence3D> out(n);
  for (auto& c : out) {
    c.p_query = cube();
    c.p_db = transform_point(gt, c.p_query) + noise * Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const int outliers = static_cast<int>(std::lround(outlier_fraction * n));
  if (is_outlier) is_outlier->assign(n, false);
  for (int k = 0; k < outliers; ++k) {
    out[order[k]].p_db = cube();
    if (is_outlier) (*is_outlier)[order[k]] = true;
  }
  return out;
}

/// Back-projected cloud of `count` random valid pixels of a rendered frame
/// (scene seed 1, camera near the room centre).
inline std::vector<Vec3> rendered_cloud(int count, std::uint64_t seed) {
  const SceneModel scene = generate_scene(1);
  const CameraIntrinsics k = intrinsics_from_fov(90, 256, 256);
  const Frame f = render(scene, upright_camera_pose(
      Vec3(0.5 * (scene.x_min + scene.x_max), 0.5 * (scene.y_min + scene.y_max), 1.25), 0.7), k);
  std::vector<Vec2> valid;
  for (int y = 0; y < f.depth.height; ++y)
    for (int x = 0; x < f.depth.width; ++x) {
      const float d = f.depth.at(x, y);
      if (d > 0 && d < 0.999f) valid.emplace_back(x, y);
    }
  Rng rng(seed);
  std::vector<Vec3> cloud;
  for (int i = 0; i < count; ++i) {
    const Vec2 px = valid[rng.below(valid.size())];
    const double depth = kDepthMaxMeters * f.depth.at(static_cast<int>(px.x()), static_cast<int>(px.y()));
    cloud.push_back(backproject(px, depth, k));
  }
  return cloud;
}

/// Rigid perturbation of exactly `angle_deg` about a random axis and
/// `translation` meters along a random direction.
inline Pose perturbation(Rng& rng, double angle_deg, double translation) {
  return {UnitQuaternion::from_axis_angle(random_unit(rng), rad(angle_deg)), translation * random_unit(rng)};
}

}  // namespace pointloc::test
