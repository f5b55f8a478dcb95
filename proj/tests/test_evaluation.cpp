#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gtest/gtest.h"

#include "pointloc/errors.hpp"
#include "pointloc/evaluation.hpp"
#include "pointloc/rng.hpp"

using namespace pointloc;
namespace fs = std::filesystem;

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

// Estimate offset from the ground truth by `meters` along x and `degrees`
// about the vertical.
EvaluatedQuery query_with_error(double meters, double degrees) {
  EvaluatedQuery q;
  q.ground_truth = upright_camera_pose(Vec3(3, 4, 1.25), 0.3);
  q.result.pose = upright_camera_pose(Vec3(3 + meters, 4, 1.25), 0.3 + degrees * std::numbers::pi / 180);
  return q;
}

std::vector<EvaluatedQuery> random_queries(Rng& rng, int n) {
  std::vector<EvaluatedQuery> out;
  for (int i = 0; i < n; ++i) {
    // Errors drawn on a coarse lattice so many land exactly on thresholds.
    const double m = 0.25 * static_cast<double>(rng.below(25));
    const double d = static_cast<double>(rng.below(25));
    out.push_back(query_with_error(m, d));
    out.back().result.query_id = i;
  }
  return out;
}

}  // namespace

TEST(Recall, ThresholdOrderAndLabels) {
  const char* expected[] = {"(5m,20°)", "(1m,10°)", "(0.5m,5°)", "(0.25m,2°)", "(5m)", "(1m)", "(0.5m)", "(0.25m)"};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(kRecallThresholds[i].label(), expected[i]);
}

TEST(Recall, ExactEstimatesScoreOne) {
  std::vector<EvaluatedQuery> q(5, query_with_error(0, 0));
  const RecallRow row = recall_at(q, "exact");
  for (double r : row.recall) EXPECT_EQ(r, 1.0);
  EXPECT_EQ(row.queries, 5);
  EXPECT_EQ(row.name, "exact");
}

TEST(Recall, HandEvaluatedSingleQuery) {
  const std::vector<EvaluatedQuery> q = {query_with_error(0.3, 1.0)};
  const RecallRow row = recall_at(q, "one");
  // (5m,20°) (1m,10°) (0.5m,5°) (0.25m,2°) (5m) (1m) (0.5m) (0.25m)
  const std::array<double, 8> expected = {1, 1, 1, 0, 1, 1, 1, 0};
  EXPECT_EQ(row.recall, expected);
}

TEST(Recall, ThresholdsAreInclusive) {
  const std::vector<EvaluatedQuery> q = {query_with_error(1.0, 10.0 - 1e-9)};
  const RecallRow row = recall_at(q, "edge");
  EXPECT_EQ(row.recall[1], 1.0);
  EXPECT_EQ(row.recall[5], 1.0);
  EXPECT_EQ(row.recall[2], 0.0);
}

TEST(Recall, MatchesRecountAndIsPermutationInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = random_queries(rng, 1 + static_cast<int>(rng.below(200)));
    const RecallRow row = recall_at(q, "r", 3);
    for (int t = 0; t < 8; ++t) {
      const auto& th = kRecallThresholds[t];
      int count = 0;
      for (const auto& e : q) {
        const double te = translation_error(e.result.pose, e.ground_truth);
        const double re = rotation_error(e.result.pose, e.ground_truth);
        if (th.translation_only() ? te <= th.meters : te <= th.meters && re <= th.degrees) ++count;
      }
      EXPECT_EQ(row.recall[t], static_cast<double>(count) / q.size());
    }
    EXPECT_TRUE(recall_is_consistent(row));
    std::reverse(q.begin(), q.end());
    std::rotate(q.begin(), q.begin() + q.size() / 3, q.end());
    EXPECT_EQ(recall_at(q, "r", 1), row);
  }
}

TEST(Recall, ConsistencyCheck) {
  RecallRow row;
  row.recall = {0.9, 0.8, 0.7, 0.6, 0.95, 0.85, 0.75, 0.65};
  EXPECT_TRUE(recall_is_consistent(row));
  row.recall[2] = 0.85;  // tighter threshold above a looser one
  EXPECT_FALSE(recall_is_consistent(row));
  row.recall = {0.9, 0.8, 0.7, 0.6, 0.95, 0.85, 0.75, 0.55};  // combined above translation-only
  EXPECT_FALSE(recall_is_consistent(row));
  row.recall = {1.5, 0, 0, 0, 1.5, 0, 0, 0};
  EXPECT_FALSE(recall_is_consistent(row));
}

TEST(Recall, EmptyInput) {
  EXPECT_EQ(code_of([] { recall_at({}, "none"); }), ErrorCode::kInvalidArgument);
}

TEST(Timing, MeansAndRecount) {
  LocalizationResult a, b;
  a.timings = {0.01, 0.002, 0.001, 0.02, 0.1, 0.133};
  b.timings = {0.03, 0.004, 0.003, 0.04, 0.3, 0.377};
  const std::vector<LocalizationResult> one = {a};
  const TimingReport t1 = timing_report(one, "rig");
  EXPECT_EQ(t1.feature_extraction, 0.01);
  EXPECT_EQ(t1.pose_optimization, 0.1);
  EXPECT_EQ(t1.overall, 0.133);
  EXPECT_EQ(t1.hardware, "rig");
  const std::vector<LocalizationResult> two = {a, b};
  const TimingReport t2 = timing_report(two, "");
  EXPECT_DOUBLE_EQ(t2.feature_extraction, 0.02);
  EXPECT_DOUBLE_EQ(t2.embedding_extraction, 0.003);
  EXPECT_DOUBLE_EQ(t2.embedding_matching, 0.002);
  EXPECT_DOUBLE_EQ(t2.feature_matching, 0.03);
  EXPECT_DOUBLE_EQ(t2.pose_optimization, 0.2);
  EXPECT_DOUBLE_EQ(t2.overall, 0.255);
  EXPECT_EQ(t2.queries, 2);
  EXPECT_EQ(code_of([] { timing_report({}, ""); }), ErrorCode::kInvalidArgument);
}

TEST(Report, MarkdownLayout) {
  RecallRow a{"vlad gnc", {0.9, 0.8, 0.7, 0.6, 0.95, 0.85, 0.75, 0.65}, 10};
  RecallRow b{"bow none", {0.5, 0.4, 0.3, 0.01, 0.5, 0.4, 0.3, 0.02}, 10};
  const std::vector<RecallRow> table = {a, b};
  std::istringstream md(format_report(table, nullptr, ReportFormat::kMarkdown));
  std::vector<std::string> rows;
  for (std::string line; std::getline(md, line);)
    if (line.rfind("|---", 0) != 0) rows.push_back(line);
  ASSERT_EQ(rows.size(), 3u);  // header + one per configuration
  EXPECT_EQ(rows[0],
            "| Configuration | (5m,20°) | (1m,10°) | (0.5m,5°) | (0.25m,2°) | (5m) | (1m) | (0.5m) | (0.25m) | "
            "Queries |");
  EXPECT_EQ(rows[2], "| bow none | 0.500 | 0.400 | 0.300 | 0.010 | 0.500 | 0.400 | 0.300 | 0.020 | 10 |");
}

TEST(Report, CsvRoundTripAndColumnOrder) {
  RecallRow a{"vlad, gnc", {0.9, 0.8, 1.0 / 3, 0.6, 0.95, 0.85, 0.75, 2.0 / 3}, 3};
  const std::vector<RecallRow> table = {a};
  TimingReport t;
  t.overall = 0.5;
  t.hardware = "1 core";
  const fs::path p = fs::temp_directory_path() / "pointloc_test_report.csv";
  emit_report(table, &t, ReportFormat::kCsv, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header,
            "configuration,\"(5m,20°)\",\"(1m,10°)\",\"(0.5m,5°)\",\"(0.25m,2°)\",\"(5m)\",\"(1m)\",\"(0.5m)\","
            "\"(0.25m)\",queries");
  const auto back = read_recall_csv(p);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], a);
}

TEST(Report, Errors) {
  const std::vector<RecallRow> table = {RecallRow{}};
  EXPECT_EQ(code_of([&] { emit_report(table, nullptr, ReportFormat::kCsv, "/nonexistent_dir/x/report.csv"); }),
            ErrorCode::kIoError);
  EXPECT_EQ(code_of([] { parse_report_format("html"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { read_recall_csv("/nonexistent_dir/report.csv"); }), ErrorCode::kFormatError);
}

TEST(GroundTruth, AttachesByQueryId) {
  PointGroup g;
  g.point_id = 2;
  g.query_frames.resize(2);
  g.query_frames[0].frame_id = query_frame_id(2, 0);
  g.query_frames[0].pose = upright_camera_pose(Vec3(1, 2, 1.25), 0.1);
  g.query_frames[1].frame_id = query_frame_id(2, 1);
  g.query_frames[1].pose = upright_camera_pose(Vec3(2, 2, 1.25), 0.2);
  std::vector<LocalizationResult> r(1);
  r[0].query_id = query_frame_id(2, 1);
  const auto e = attach_ground_truth(r, {g});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].ground_truth, g.query_frames[1].pose);
  r[0].query_id = 77;
  EXPECT_EQ(code_of([&] { attach_ground_truth(r, {g}); }), ErrorCode::kFormatError);
}
