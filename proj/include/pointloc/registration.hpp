#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pointloc/geometry.hpp"

namespace pointloc {

/// A matched keypoint lifted into both camera frames.
struct Correspondence3D {
  Vec3 p_query = Vec3::Zero();
  Vec3 p_db = Vec3::Zero();
};

struct RegistrationResult {
  Pose pose;  // query-camera coordinates -> db-camera coordinates
  std::vector<int> inlier_indices;
  int iterations = 0;
  bool converged = false;
  double mean_inlier_residual = 0;
  /// Per-iteration objective: trimmed mean residual for ICP, truncated
  /// least-squares cost for GNC. Empty for the other solvers.
  std::vector<double> cost_trace;
};

double residual(const Pose& pose, const Correspondence3D& c);
double sum_squared_residual(const Pose& pose, std::span<const Correspondence3D> corrs);

/// Closed-form least-squares rigid transform (no scale). Throws
/// insufficient-points below 3 pairs and degenerate-configuration when either
/// side is collinear or coincident.
Pose umeyama(std::span<const Correspondence3D> corrs);
/// Same with non-negative per-pair weights; pairs with weight 0 are ignored.
Pose weighted_umeyama(std::span<const Correspondence3D> corrs, std::span<const double> weights);

struct RansacParams {
  double inlier_threshold = 0.05;
  int max_iters = 1000;
  std::uint64_t seed = 0;
  double early_exit_fraction = 0.9;
};

/// Minimal 3-point hypotheses, consensus = residual < threshold, best
/// hypothesis (lowest index among equal consensus) refit on its inliers.
/// Throws insufficient-points (< 3 pairs) or registration-failed (no
/// hypothesis with 3 inliers).
RegistrationResult ransac_register(std::span<const Correspondence3D> corrs,
                                   const RansacParams& params = {});

struct IcpParams {
  int max_iters = 50;
  double tol = 1e-7;
  double trim_factor = 2.0;
};

/// Point-to-point ICP with nearest neighbours from the transformed query
/// cloud into db_cloud, gated at trim_factor x median residual. The trimmed
/// mean never increases: a step that would raise it is undone and the loop
/// stops. Throws invalid-argument on an empty cloud or non-finite init.
RegistrationResult icp_refine(std::span<const Vec3> query_cloud, std::span<const Vec3> db_cloud,
                              const Pose& init, const IcpParams& params = {});

struct GncParams {
  double noise_bound = 0.05;
  double factor = 1.4;
  int max_outer_iters = 1000;
};

/// Graduated non-convexity over the truncated least-squares cost
/// sum_j min(r_j^2 / c^2, 1). Each outer step solves a weighted umeyama, then
/// updates the weights in closed form and shrinks the control parameter by
/// `factor`; a step that would raise the truncated cost keeps the previous
/// pose. Inliers are weight > 0.5, refit, and filtered to r <= noise_bound.
/// Throws invalid-argument (noise_bound <= 0), insufficient-points, or
/// registration-failed (< 3 inliers survive).
RegistrationResult gnc_tls_register(std::span<const Correspondence3D> corrs,
                                    const GncParams& params = {});

/// Exact nearest neighbour over a fixed point set; ties go to the lower index.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);
  int nearest(const Vec3& q, double* squared_distance = nullptr) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi);
  void search(int node, const Vec3& q, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Debug dump: one `p_q.x p_q.y p_q.z p_db.x p_db.y p_db.z` line per pair.
void write_correspondences(std::span<const Correspondence3D> corrs, const std::filesystem::path& file);
std::vector<Correspondence3D> read_correspondences(const std::filesystem::path& file);

}  // namespace pointloc
