#include <filesystem>

#include "gtest/gtest.h"

#include "pointloc/errors.hpp"
#include "pointloc/registration.hpp"
#include "registration_cases.hpp"

using namespace pointloc;
using namespace pointloc::test;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

void expect_orthonormal(const Pose& p) {
  const Mat3 r = p.rotation.matrix();
  EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
}

}  // namespace

TEST(Umeyama, TrivialCases) {
  Rng rng(1);
  std::vector<Correspondence3D> same, shifted;
  for (int i = 0; i < 10; ++i) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 5));
    same.push_back({p, p});
    shifted.push_back({p, p + Vec3(1, 2, 3)});
  }
  const Pose id = umeyama(same);
  EXPECT_LT(translation_error(id, Pose::identity()), 1e-12);
  EXPECT_LT(rotation_error(id, Pose::identity()), 1e-9);
  const Pose t = umeyama(shifted);
  EXPECT_LT((t.translation - Vec3(1, 2, 3)).norm(), 1e-12);
  EXPECT_LT(rotation_error(t, Pose::identity()), 1e-9);
}

TEST(Umeyama, RecoversRandomTransforms) {
  Rng rng(2);
  double worst_t = 0, worst_r = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose gt = random_pose(rng);
    const auto corrs = corrupted_set(rng, gt, 50, 0.0, 0.0);
    const Pose est = umeyama(corrs);
    worst_t = std::max(worst_t, translation_error(est, gt));
    worst_r = std::max(worst_r, rotation_error(est, gt));
    if (trial % 100 == 0) expect_orthonormal(est);
  }
  EXPECT_LT(worst_t, 1e-9);
  EXPECT_LT(worst_r, 1e-7);
}

TEST(Umeyama, CoplanarPointsNeedSignCorrection) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose gt = random_pose(rng);
    std::vector<Correspondence3D> corrs;
    for (int i = 0; i < 4; ++i) {
      const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), 3.0);
      corrs.push_back({p, transform_point(gt, p)});
    }
    const Pose est = umeyama(corrs);
    EXPECT_LT(translation_error(est, gt), 1e-9);
    EXPECT_LT(rotation_error(est, gt), 1e-7);
  }
}

TEST(Umeyama, Errors) {
  const std::vector<Correspondence3D> two{{Vec3(0, 0, 1), Vec3(0, 0, 1)}, {Vec3(1, 0, 1), Vec3(1, 0, 1)}};
  EXPECT_EQ(code_of([&] { umeyama(two); }), ErrorCode::kInsufficientPoints);
  std::vector<Correspondence3D> line;
  for (int i = 0; i < 5; ++i) line.push_back({Vec3(i, 2.0 * i, 1 + i), Vec3(i, 2.0 * i, 1 + i)});
  EXPECT_EQ(code_of([&] { umeyama(line); }), ErrorCode::kDegenerateConfiguration);
  const std::vector<Correspondence3D> point(4, {Vec3(1, 1, 1), Vec3(2, 2, 2)});
  EXPECT_EQ(code_of([&] { umeyama(point); }), ErrorCode::kDegenerateConfiguration);
}

TEST(Umeyama, LeftInvariance) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose gt = random_pose(rng);
    const Pose g = random_pose(rng);
    const auto corrs = corrupted_set(rng, gt, 30, 0.0, 0.05);
    auto moved = corrs;
    for (auto& c : moved) {
      c.p_query = transform_point(g, c.p_query);
      c.p_db = transform_point(g, c.p_db);
    }
    const Pose p = umeyama(corrs);
    const Pose expected = compose(compose(g, p), inverse(g));
    const Pose got = umeyama(moved);
    EXPECT_LT(translation_error(got, expected), 1e-6);
    EXPECT_LT(rotation_error(got, expected), 1e-6);
  }
}

TEST(Umeyama, GlobalOptimalitySpotCheck) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose gt = random_pose(rng);
    const auto corrs = corrupted_set(rng, gt, 40, 0.2, 0.1);
    const Pose best = umeyama(corrs);
    const double cost = sum_squared_residual(best, corrs);
    for (int i = 0; i < 100; ++i) EXPECT_LE(cost, sum_squared_residual(random_pose(rng), corrs));
    // Small perturbations of the optimum probe the neighbourhood too.
    for (int i = 0; i < 100; ++i)
      EXPECT_LE(cost, sum_squared_residual(compose(perturbation(rng, 0.01, 1e-3), best), corrs));
  }
}

TEST(Umeyama, IntegerWeightsEqualDuplication) {
  Rng rng(6);
  const auto corrs = corrupted_set(rng, random_pose(rng), 12, 0.3, 0.1);
  std::vector<double> w;
  std::vector<Correspondence3D> dup;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const int k = static_cast<int>(i % 4);
    w.push_back(k);
    for (int j = 0; j < k; ++j) dup.push_back(corrs[i]);
  }
  const Pose a = weighted_umeyama(corrs, w);
  const Pose b = umeyama(dup);
  EXPECT_LT(translation_error(a, b), 1e-9);
  EXPECT_LT(rotation_error(a, b), 1e-7);
}

TEST(Ransac, NoOutliersEqualsUmeyama) {
  Rng rng(7);
  const auto corrs = corrupted_set(rng, random_pose(rng), 100, 0.0, 0.0);
  const auto res = ransac_register(corrs, {.seed = 3});
  const Pose ref = umeyama(corrs);
  EXPECT_LT(translation_error(res.pose, ref), 1e-9);
  EXPECT_LT(rotation_error(res.pose, ref), 1e-7);
  EXPECT_EQ(res.inlier_indices.size(), 100u);
  EXPECT_EQ(res.iterations, 1);
}

TEST(Ransac, SixtyPercentOutliers) {
  Rng rng(8);
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Pose gt = random_pose(rng);
    const auto corrs = corrupted_set(rng, gt, 100, 0.6, 0.0);
    const auto res = ransac_register(corrs, {.inlier_threshold = 0.05, .max_iters = 1000, .seed = seed});
    passed += translation_error(res.pose, gt) <= 0.01 && rotation_error(res.pose, gt) <= 0.5;
    for (int i : res.inlier_indices) EXPECT_LT(residual(res.pose, corrs[i]), 0.05);
    expect_orthonormal(res.pose);
  }
  EXPECT_EQ(passed, 20);
}

TEST(Ransac, DeterministicAndErrors) {
  Rng rng(9);
  const auto corrs = corrupted_set(rng, random_pose(rng), 60, 0.5, 0.01);
  const auto a = ransac_register(corrs, {.seed = 42});
  const auto b = ransac_register(corrs, {.seed = 42});
  EXPECT_EQ(a.pose, b.pose);
  EXPECT_EQ(a.inlier_indices, b.inlier_indices);
  EXPECT_EQ(a.iterations, b.iterations);
  const std::vector<Correspondence3D> two(corrs.begin(), corrs.begin() + 2);
  EXPECT_EQ(code_of([&] { ransac_register(two); }), ErrorCode::kInsufficientPoints);
  std::vector<Correspondence3D> line;
  for (int i = 0; i < 10; ++i) line.push_back({Vec3(i, 0, 1), Vec3(0, i, 1)});
  EXPECT_EQ(code_of([&] { ransac_register(line); }), ErrorCode::kRegistrationFailed);
}

TEST(Gnc, InliersOnlyEqualsUmeyama) {
  Rng rng(10);
  const auto corrs = corrupted_set(rng, random_pose(rng), 50, 0.0, 0.0);
  const auto res = gnc_tls_register(corrs, {.noise_bound = 0.05});
  const Pose ref = umeyama(corrs);
  EXPECT_LT(translation_error(res.pose, ref), 1e-9);
  EXPECT_LT(rotation_error(res.pose, ref), 1e-7);
  EXPECT_EQ(res.inlier_indices.size(), 50u);
}

TEST(Gnc, SeventyPercentOutliers) {
  Rng rng(11);
  int passed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose gt = random_pose(rng);
    const auto corrs = corrupted_set(rng, gt, 100, 0.7, 0.01);
    const auto res = gnc_tls_register(corrs, {.noise_bound = 0.05});
    passed += translation_error(res.pose, gt) <= 0.02 && rotation_error(res.pose, gt) <= 1.0;
    for (std::size_t i = 1; i < res.cost_trace.size(); ++i)
      EXPECT_LE(res.cost_trace[i], res.cost_trace[i - 1]);
    for (int i : res.inlier_indices) EXPECT_LE(residual(res.pose, corrs[i]), 0.05);
    EXPECT_TRUE(res.converged);
    expect_orthonormal(res.pose);
  }
  EXPECT_GE(passed, 19);
}

TEST(Gnc, Errors) {
  Rng rng(12);
  const auto corrs = corrupted_set(rng, random_pose(rng), 20, 0.0, 0.0);
  EXPECT_EQ(code_of([&] { gnc_tls_register(corrs, {.noise_bound = 0.0}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { gnc_tls_register(corrs, {.noise_bound = -1.0}); }), ErrorCode::kInvalidArgument);
  const std::vector<Correspondence3D> two(corrs.begin(), corrs.begin() + 2);
  EXPECT_EQ(code_of([&] { gnc_tls_register(two); }), ErrorCode::kInsufficientPoints);
}

TEST(KdTree, MatchesLinearScan) {
  Rng rng(13);
  std::vector<Vec3> pts;
  // Integer lattice points make exact distance ties common.
  for (int i = 0; i < 400; ++i)
    pts.emplace_back(static_cast<double>(rng.below(8)), static_cast<double>(rng.below(8)), static_cast<double>(rng.below(8)));
  const KdTree tree(pts);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 q = i % 2 ? Vec3(rng.below(9) - 0.5, rng.below(9) - 0.5, rng.below(9) - 0.5)
                         : Vec3(rng.uniform(-1, 9), rng.uniform(-1, 9), rng.uniform(-1, 9));
    int best = 0;
    for (int j = 1; j < static_cast<int>(pts.size()); ++j)
      if ((pts[j] - q).squaredNorm() < (pts[best] - q).squaredNorm()) best = j;
    double d2 = 0;
    EXPECT_EQ(tree.nearest(q, &d2), best);
    EXPECT_EQ(d2, (pts[best] - q).squaredNorm());
  }
}

TEST(Icp, IdenticalCloudsConvergeImmediately) {
  const auto cloud = rendered_cloud(500, 1);
  const auto res = icp_refine(cloud, cloud, Pose::identity());
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_LT(translation_error(res.pose, Pose::identity()), 1e-12);
  EXPECT_LT(rotation_error(res.pose, Pose::identity()), 1e-9);
}

TEST(Icp, RecoversSmallPerturbation) {
  Rng rng(14);
  const auto cloud = rendered_cloud(500, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose g = perturbation(rng, 5.0, 0.1);
    std::vector<Vec3> moved;
    for (const auto& p : cloud) moved.push_back(transform_point(g, p));
    const auto res = icp_refine(cloud, moved, Pose::identity(), {.max_iters = 200, .tol = 1e-10});
    EXPECT_LT(translation_error(res.pose, g), 1e-3) << trial;
    EXPECT_LT(rotation_error(res.pose, g), 0.1) << trial;
    for (std::size_t i = 1; i < res.cost_trace.size(); ++i) EXPECT_LE(res.cost_trace[i], res.cost_trace[i - 1]);
    expect_orthonormal(res.pose);
  }
}

TEST(Icp, Errors) {
  const std::vector<Vec3> cloud{Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1)};
  EXPECT_EQ(code_of([&] { icp_refine({}, cloud, Pose::identity()); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { icp_refine(cloud, {}, Pose::identity()); }), ErrorCode::kInvalidArgument);
  Pose bad;
  bad.translation = Vec3(std::nan(""), 0, 0);
  EXPECT_EQ(code_of([&] { icp_refine(cloud, cloud, bad); }), ErrorCode::kInvalidArgument);
}

TEST(CorrespondenceDump, RoundTrip) {
  Rng rng(15);
  const auto corrs = corrupted_set(rng, random_pose(rng), 25, 0.2, 0.01);
  const auto file = std::filesystem::temp_directory_path() / "pointloc_corrs.txt";
  write_correspondences(corrs, file);
  const auto back = read_correspondences(file);
  ASSERT_EQ(back.size(), corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    EXPECT_EQ(back[i].p_query, corrs[i].p_query);
    EXPECT_EQ(back[i].p_db, corrs[i].p_db);
  }
}
