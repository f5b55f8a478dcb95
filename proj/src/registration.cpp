#include "pointloc/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "pointloc/errors.hpp"
#include "pointloc/rng.hpp"

namespace pointloc {

namespace {

// Relative rank test on the cross-covariance: the second singular value
// vanishes exactly when one side is collinear (or everything coincides).
constexpr double kRankEpsilon = 1e-10;

bool is_finite(const Pose& p) {
  return std::isfinite(p.rotation.w()) && std::isfinite(p.rotation.x()) &&
         std::isfinite(p.rotation.y()) && std::isfinite(p.rotation.z()) &&
         p.translation.allFinite();
}

double tls_cost(const std::vector<double>& r2, double c2) {
  double cost = 0;
  for (double v : r2) cost += std::min(v / c2, 1.0);
  return cost;
}

std::vector<double> squared_residuals(const Pose& pose, std::span<const Correspondence3D> corrs) {
  const Mat3 r = pose.rotation.matrix();
  std::vector<double> out(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i)
    out[i] = (r * corrs[i].p_query + pose.translation - corrs[i].p_db).squaredNorm();
  return out;
}

double mean_residual(const Pose& pose, std::span<const Correspondence3D> corrs,
                     std::span<const int> idx) {
  if (idx.empty()) return 0;
  double s = 0;
  for (int i : idx) s += residual(pose, corrs[i]);
  return s / static_cast<double>(idx.size());
}

std::vector<Correspondence3D> subset(std::span<const Correspondence3D> corrs, std::span<const int> idx) {
  std::vector<Correspondence3D> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(corrs[i]);
  return out;
}

}  // namespace

double residual(const Pose& pose, const Correspondence3D& c) {
  return (transform_point(pose, c.p_query) - c.p_db).norm();
}

double sum_squared_residual(const Pose& pose, std::span<const Correspondence3D> corrs) {
  const auto r2 = squared_residuals(pose, corrs);
  return std::accumulate(r2.begin(), r2.end(), 0.0);
}

Pose weighted_umeyama(std::span<const Correspondence3D> corrs, std::span<const double> weights) {
  if (weights.size() != corrs.size())
    throw Error(ErrorCode::kInvalidArgument, "weights and correspondences differ in length");
  int used = 0;
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "weights must be finite and >= 0");
    used += w > 0;
    total += w;
  }
  if (used < 3) throw Error(ErrorCode::kInsufficientPoints, "need at least 3 correspondences");

  Vec3 mq = Vec3::Zero(), md = Vec3::Zero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    mq += weights[i] * corrs[i].p_query;
    md += weights[i] * corrs[i].p_db;
  }
  mq /= total;
  md /= total;
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (weights[i] == 0) continue;
    h += weights[i] * (corrs[i].p_query - mq) * (corrs[i].p_db - md).transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(0) > 0) || s(1) <= kRankEpsilon * s(0))
    throw Error(ErrorCode::kDegenerateConfiguration, "correspondences are collinear or coincident");
  const Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  Pose out;
  out.rotation = UnitQuaternion::from_matrix(v * d * u.transpose());
  out.translation = md - out.rotation.matrix() * mq;
  return out;
}

Pose umeyama(std::span<const Correspondence3D> corrs) {
  const std::vector<double> ones(corrs.size(), 1.0);
  return weighted_umeyama(corrs, ones);
}

RegistrationResult ransac_register(std::span<const Correspondence3D> corrs, const RansacParams& params) {
  const int n = static_cast<int>(corrs.size());
  if (n < 3) throw Error(ErrorCode::kInsufficientPoints, "need at least 3 correspondences");
  if (!(params.inlier_threshold > 0) || params.max_iters < 1)
    throw Error(ErrorCode::kInvalidArgument, "ransac needs threshold > 0 and max_iters >= 1");

  Rng rng(params.seed);
  const auto consensus = [&](const Pose& p) {
    const auto r2 = squared_residuals(p, corrs);
    const double t2 = params.inlier_threshold * params.inlier_threshold;
    std::vector<int> in;
    for (int i = 0; i < n; ++i)
      if (r2[i] < t2) in.push_back(i);
    return in;
  };

  Pose best;
  std::vector<int> best_inliers;
  int iters = 0;
  for (; iters < params.max_iters;) {
    ++iters;
    int s[3];
    s[0] = static_cast<int>(rng.below(n));
    do s[1] = static_cast<int>(rng.below(n)); while (s[1] == s[0]);
    do s[2] = static_cast<int>(rng.below(n)); while (s[2] == s[0] || s[2] == s[1]);
    const Correspondence3D sample[3] = {corrs[s[0]], corrs[s[1]], corrs[s[2]]};
    Pose hyp;
    try {
      hyp = umeyama(sample);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration) continue;
      throw;
    }
    auto in = consensus(hyp);
    if (in.size() > best_inliers.size()) {
      best = hyp;
      best_inliers = std::move(in);
      if (static_cast<double>(best_inliers.size()) >= params.early_exit_fraction * n) break;
    }
  }
  if (best_inliers.size() < 3) throw Error(ErrorCode::kRegistrationFailed, "no hypothesis with 3 inliers");

  RegistrationResult out;
  out.pose = best;
  out.inlier_indices = best_inliers;
  try {
    const auto inlier_corrs = subset(corrs, best_inliers);
    const Pose refit = umeyama(inlier_corrs);
    auto in = consensus(refit);
    if (in.size() >= best_inliers.size()) {
      out.pose = refit;
      out.inlier_indices = std::move(in);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateConfiguration) throw;
  }
  out.iterations = iters;
  out.converged = true;
  out.mean_inlier_residual = mean_residual(out.pose, corrs, out.inlier_indices);
  return out;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()));
}

int KdTree::build(std::vector<int>& idx, int lo, int hi) {
  if (lo >= hi) return -1;
  Vec3 mn = points_[idx[lo]], mx = mn;
  for (int i = lo + 1; i < hi; ++i) {
    mn = mn.cwiseMin(points_[idx[i]]);
    mx = mx.cwiseMax(points_[idx[i]]);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
    const double pa = points_[a](axis), pb = points_[b](axis);
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid);
  const int right = build(idx, mid + 1, hi);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void KdTree::search(int node, const Vec3& q, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& nd = nodes_[node];
  const double d2 = (points_[nd.point] - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && nd.point < best)) {
    best = nd.point;
    best_d2 = d2;
  }
  const double diff = q(nd.axis) - points_[nd.point](nd.axis);
  const int near = diff < 0 ? nd.left : nd.right;
  const int far = diff < 0 ? nd.right : nd.left;
  search(near, q, best, best_d2);
  // <= so that an equally distant point with a lower index is still found.
  if (diff * diff <= best_d2) search(far, q, best, best_d2);
}

int KdTree::nearest(const Vec3& q, double* squared_distance) const {
  if (root_ < 0) throw Error(ErrorCode::kInvalidArgument, "nearest neighbour in an empty cloud");
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, q, best, best_d2);
  if (squared_distance) *squared_distance = best_d2;
  return best;
}

RegistrationResult icp_refine(std::span<const Vec3> query_cloud, std::span<const Vec3> db_cloud,
                              const Pose& init, const IcpParams& params) {
  if (query_cloud.empty() || db_cloud.empty())
    throw Error(ErrorCode::kInvalidArgument, "icp needs two nonempty clouds");
  if (!is_finite(init)) throw Error(ErrorCode::kInvalidArgument, "icp initial pose is not finite");

  const KdTree tree(db_cloud);
  const std::size_t n = query_cloud.size();

  struct Association {
    std::vector<Correspondence3D> pairs;
    std::vector<int> indices;
    double trimmed_mean = 0;
    double gate = 0;
  };
  const auto associate = [&](const Pose& pose) {
    std::vector<double> r(n);
    std::vector<int> nn(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0;
      nn[i] = tree.nearest(transform_point(pose, query_cloud[i]), &d2);
      r[i] = std::sqrt(d2);
    }
    std::vector<double> sorted = r;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    Association a;
    a.gate = params.trim_factor * sorted[n / 2];
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] > a.gate) continue;
      a.pairs.push_back({query_cloud[i], db_cloud[nn[i]]});
      a.indices.push_back(static_cast<int>(i));
      sum += r[i];
    }
    a.trimmed_mean = sum / static_cast<double>(a.indices.size());
    return a;
  };

  RegistrationResult out;
  Pose pose = init, previous = init;
  for (int it = 0; it < params.max_iters; ++it) {
    const Association a = associate(pose);
    if (!out.cost_trace.empty() && a.trimmed_mean > out.cost_trace.back()) {
      // Re-association made things worse; undo the last step.
      pose = previous;
      out.converged = true;
      break;
    }
    out.cost_trace.push_back(a.trimmed_mean);
    Pose candidate;
    try {
      candidate = umeyama(a.pairs);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration || e.code() == ErrorCode::kInsufficientPoints) break;
      throw;
    }
    double after = 0;
    for (const auto& c : a.pairs) after += residual(candidate, c);
    after /= static_cast<double>(a.pairs.size());
    out.iterations = it + 1;
    const double improvement = a.trimmed_mean - after;
    if (improvement >= 0) {
      previous = pose;
      pose = candidate;
    }
    if (improvement < params.tol) {
      out.converged = true;
      break;
    }
  }
  out.pose = pose;
  const Association final_assoc = associate(pose);
  out.inlier_indices = final_assoc.indices;
  out.mean_inlier_residual = final_assoc.trimmed_mean;
  return out;
}

RegistrationResult gnc_tls_register(std::span<const Correspondence3D> corrs, const GncParams& params) {
  if (!(params.noise_bound > 0)) throw Error(ErrorCode::kInvalidArgument, "noise_bound must be > 0");
  if (!(params.factor > 1)) throw Error(ErrorCode::kInvalidArgument, "gnc factor must be > 1");
  const int n = static_cast<int>(corrs.size());
  if (n < 3) throw Error(ErrorCode::kInsufficientPoints, "need at least 3 correspondences");

  const double c2 = params.noise_bound * params.noise_bound;
  std::vector<double> w(n, 1.0);
  Pose pose = umeyama(corrs);
  std::vector<double> r2 = squared_residuals(pose, corrs);
  double cost = tls_cost(r2, c2);

  // kappa is the reciprocal of the usual GNC-TLS mu: large kappa is the
  // convex surrogate, kappa = 1 the truncated cost this loop anneals towards.
  const auto update_weights = [&](double kappa) {
    const double mu = 1.0 / kappa;
    const double lo = mu / (mu + 1) * c2, hi = (mu + 1) / mu * c2;
    const double k = std::sqrt(mu * (mu + 1)) * params.noise_bound;
    for (int i = 0; i < n; ++i) {
      if (r2[i] <= lo) w[i] = 1;
      else if (r2[i] >= hi) w[i] = 0;
      else w[i] = k / std::sqrt(r2[i]) - mu;
    }
  };

  RegistrationResult out;
  out.cost_trace.push_back(cost);
  double kappa = (2 * *std::max_element(r2.begin(), r2.end()) - c2) / c2;
  while (kappa > 1 && out.iterations < params.max_outer_iters) {
    update_weights(kappa);
    try {
      const Pose candidate = weighted_umeyama(corrs, w);
      const auto cand_r2 = squared_residuals(candidate, corrs);
      const double cand_cost = tls_cost(cand_r2, c2);
      if (cand_cost <= cost) {
        pose = candidate;
        r2 = cand_r2;
        cost = cand_cost;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateConfiguration && e.code() != ErrorCode::kInsufficientPoints) throw;
    }
    out.cost_trace.push_back(cost);
    kappa /= params.factor;
    ++out.iterations;
  }
  out.converged = kappa <= 1;
  update_weights(1.0);

  std::vector<int> inliers;
  for (int i = 0; i < n; ++i)
    if (w[i] > 0.5) inliers.push_back(i);
  for (int round = 0; round < 10; ++round) {
    if (inliers.size() < 3) throw Error(ErrorCode::kRegistrationFailed, "fewer than 3 inliers survive");
    try {
      pose = umeyama(subset(corrs, inliers));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateConfiguration)
        throw Error(ErrorCode::kRegistrationFailed, "inliers are degenerate");
      throw;
    }
    r2 = squared_residuals(pose, corrs);
    std::vector<int> next;
    for (int i = 0; i < n; ++i)
      if (r2[i] <= c2) next.push_back(i);
    const bool stable = next == inliers;
    inliers = std::move(next);
    if (stable) break;
  }
  if (inliers.size() < 3) throw Error(ErrorCode::kRegistrationFailed, "fewer than 3 inliers survive");
  out.pose = pose;
  out.inlier_indices = inliers;
  out.mean_inlier_residual = mean_residual(pose, corrs, inliers);
  return out;
}

void write_correspondences(std::span<const Correspondence3D> corrs, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  char buf[256];
  for (const auto& c : corrs) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g\n", c.p_query.x(), c.p_query.y(),
                  c.p_query.z(), c.p_db.x(), c.p_db.y(), c.p_db.z());
    out << buf;
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::vector<Correspondence3D> read_correspondences(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + file.string());
  std::vector<Correspondence3D> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Correspondence3D c;
    ss >> c.p_query.x() >> c.p_query.y() >> c.p_query.z() >> c.p_db.x() >> c.p_db.y() >> c.p_db.z();
    std::string extra;
    if (!ss || (ss >> extra))
      throw Error(ErrorCode::kFormatError, file.string() + ":" + std::to_string(line_no) + ": expected 6 numbers");
    out.push_back(c);
  }
  return out;
}

}  // namespace pointloc
