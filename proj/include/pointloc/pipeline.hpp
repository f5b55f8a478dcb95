#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pointloc/features.hpp"
#include "pointloc/registration.hpp"
#include "pointloc/render.hpp"
#include "pointloc/retrieval.hpp"

namespace pointloc {

enum class RegistrationMethod { kNone, kUmeyama, kRansac, kRansacIcp, kGnc };

const char* to_string(RegistrationMethod m);
/// none | umeyama | ransac | ransac+icp | gnc; throws invalid-argument.
RegistrationMethod parse_registration_method(const std::string& s);

struct PipelineConfig {
  EmbeddingVariant variant = EmbeddingVariant::kVlad;
  MatchParams matcher;
  RegistrationMethod method = RegistrationMethod::kGnc;
  int min_matches = 3;
  int fast_threshold = 20;
  int max_keypoints = 1000;
  /// Normalized depth at or above this counts as "no hit".
  double max_valid_depth = 0.999;
  RansacParams ransac;
  IcpParams icp;
  /// Pixel stride of the depth grids ICP aligns.
  int icp_stride = 4;
  GncParams gnc;
  /// Worker threads for batch localization; 0 picks the hardware count.
  int threads = 0;
  /// With false every stage duration is reported as 0, which makes result
  /// files byte-comparable between runs.
  bool record_timings = true;
  std::string hardware;

  bool operator==(const PipelineConfig& o) const;
};

/// `key = value` lines, `#` comments. Unknown keys and bad values throw
/// invalid-argument; missing keys keep their defaults.
PipelineConfig parse_config(const std::string& text);
PipelineConfig read_config(const std::filesystem::path& file);
std::string format_config(const PipelineConfig& config);

struct DatabaseFrame {
  int frame_id = 0;
  int point_id = 0;
  Pose pose;  // camera-to-world
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  DepthImage depth;  // 16-bit quantized, as stored on disk
};

struct LocalizationDatabase {
  Vocabulary vocabulary;
  CameraIntrinsics intrinsics;
  DetectorParams detector;
  std::vector<DatabaseFrame> frames;  // ascending frame id
  RetrievalIndex index{EmbeddingVariant::kBow};

  /// Throws invalid-argument for an unknown id.
  const DatabaseFrame& frame(int frame_id) const;
};

/// Keypoints and descriptors as the pipeline extracts them.
DescribedFeatures extract_features(const RgbImage& rgb, const DetectorParams& detector);
DetectorParams detector_params(const PipelineConfig& config);

/// Uses only the database frames of each group. Throws invalid-argument when
/// there are none.
LocalizationDatabase build_database(const std::vector<PointGroup>& groups, const Vocabulary& vocab,
                                    const CameraIntrinsics& intrinsics, const PipelineConfig& config);

struct StageTimings {
  double feature_extraction = 0;
  double embedding_extraction = 0;
  double embedding_matching = 0;
  double feature_matching = 0;
  double pose_optimization = 0;
  double total = 0;

  /// Retrieval column of the results file: everything before matching.
  double retrieval() const { return feature_extraction + embedding_extraction + embedding_matching; }
};

struct LocalizationResult {
  int query_id = 0;
  int point_id = 0;  // ground-truth point of the query
  int top1_frame_id = 0;
  Pose pose;  // estimated camera-to-world
  int match_count = 0;
  int inlier_count = 0;
  bool fallback = true;
  StageTimings timings;
};

/// Final pose P_q = P_top1 * P_rel, where P_rel maps query-camera points into
/// top-1 camera coordinates and P_top1 is camera-to-world.
Pose query_pose(const Pose& top1_pose, const Pose& relative);

/// Retrieval, matching, back-projection, registration and query_pose. Any failure after retrieval falls back to the
/// retrieved frame's pose. Throws empty-index for an empty database.
LocalizationResult localize(const LocalizationDatabase& db, const Frame& query, const PipelineConfig& config);
/// Pose of the top-1 frame, no matching or registration.
LocalizationResult retrieval_only_localize(const LocalizationDatabase& db, const Frame& query,
                                           const PipelineConfig& config);
/// Every query frame of every group, in (point id, frame id) order; runs
/// config.threads workers.
std::vector<LocalizationResult> localize_all(const LocalizationDatabase& db,
                                             const std::vector<PointGroup>& groups,
                                             const PipelineConfig& config);

/// Matched keypoints lifted with each frame's own depth at the rounded pixel;
/// matches with invalid depth on either side are dropped.
std::vector<Correspondence3D> backproject_matches(std::span<const Match> matches,
                                                  std::span<const Keypoint> query_kps, const DepthImage& query_depth,
                                                  std::span<const Keypoint> db_kps, const DepthImage& db_depth,
                                                  const CameraIntrinsics& k, double max_valid_depth);

/// Self-contained big-endian database file.
void write_database(const LocalizationDatabase& db, const std::filesystem::path& file);
LocalizationDatabase read_database(const std::filesystem::path& file);

/// One line per result:
/// query_id,point_id,top1_frame_id,fallback,tx,ty,tz,qw,qx,qy,qz,t_retr,t_match,t_reg
void write_results(const std::vector<LocalizationResult>& results, const std::filesystem::path& file);
/// Poses and the three timing columns come back: t_retr lands in
/// embedding_matching (so retrieval() returns it), total is the column sum.
std::vector<LocalizationResult> read_results(const std::filesystem::path& file);

}  // namespace pointloc
