#include "pointloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pointloc/dataset.hpp"
#include "pointloc/errors.hpp"
#include "pointloc/parallel.hpp"

namespace pointloc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

bool valid_depth(float d, double max_valid) { return d > 0.0f && d < max_valid; }

std::vector<Vec3> depth_cloud(const DepthImage& depth, const CameraIntrinsics& k, int stride, double max_valid) {
  std::vector<Vec3> cloud;
  for (int y = 0; y < depth.height; y += stride)
    for (int x = 0; x < depth.width; x += stride) {
      const float d = depth.at(x, y);
      if (valid_depth(d, max_valid)) cloud.push_back(backproject(Vec2(x, y), kDepthMaxMeters * d, k));
    }
  return cloud;
}

// Relative pose query camera -> db camera, or nothing when registration
// cannot produce one.
bool register_pair(std::span<const Correspondence3D> corrs, const Frame& query, const DatabaseFrame& top,
                   const CameraIntrinsics& k, const PipelineConfig& config, Pose& rel, int& inliers) {
  try {
    switch (config.method) {
      case RegistrationMethod::kNone:
        return false;
      case RegistrationMethod::kUmeyama:
        rel = umeyama(corrs);
        inliers = static_cast<int>(corrs.size());
        return true;
      case RegistrationMethod::kRansac: {
        const auto r = ransac_register(corrs, config.ransac);
        rel = r.pose;
        inliers = static_cast<int>(r.inlier_indices.size());
        return true;
      }
      case RegistrationMethod::kRansacIcp: {
        const auto r = ransac_register(corrs, config.ransac);
        const auto qc = depth_cloud(query.depth, k, config.icp_stride, config.max_valid_depth);
        const auto dc = depth_cloud(top.depth, k, config.icp_stride, config.max_valid_depth);
        rel = r.pose;
        if (!qc.empty() && !dc.empty()) rel = icp_refine(qc, dc, r.pose, config.icp).pose;
        inliers = static_cast<int>(r.inlier_indices.size());
        return true;
      }
      case RegistrationMethod::kGnc: {
        const auto r = gnc_tls_register(corrs, config.gnc);
        rel = r.pose;
        inliers = static_cast<int>(r.inlier_indices.size());
        return true;
      }
    }
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::kInsufficientPoints:
      case ErrorCode::kDegenerateConfiguration:
      case ErrorCode::kRegistrationFailed:
        return false;
      default:
        throw;
    }
  }
  return false;
}

struct Retrieved {
  DescribedFeatures features;
  const DatabaseFrame* top = nullptr;
};

Retrieved retrieve(const LocalizationDatabase& db, const Frame& query, LocalizationResult& out,
                   std::vector<Clock::time_point>& marks) {
  if (db.index.size() == 0) throw Error(ErrorCode::kEmptyIndex, "localization database is empty");
  Retrieved r;
  r.features = extract_features(query.rgb, db.detector);
  marks.push_back(Clock::now());
  const GlobalEmbedding e = embed(db.index.variant(), r.features.descriptors, db.vocabulary);
  marks.push_back(Clock::now());
  const RetrievalHit hit = db.index.query_top1(e);
  marks.push_back(Clock::now());
  r.top = &db.frame(hit.frame_id);
  out.query_id = query.frame_id;
  out.point_id = query.point_id;
  out.top1_frame_id = hit.frame_id;
  out.pose = r.top->pose;
  out.fallback = true;
  return r;
}

void fill_timings(LocalizationResult& out, const std::vector<Clock::time_point>& marks, bool record) {
  if (!record) return;
  double* stages[] = {&out.timings.feature_extraction, &out.timings.embedding_extraction,
                      &out.timings.embedding_matching, &out.timings.feature_matching,
                      &out.timings.pose_optimization};
  for (std::size_t i = 1; i < marks.size() && i <= 5; ++i) *stages[i - 1] = seconds(marks[i - 1], marks[i]);
  out.timings.total = seconds(marks.front(), marks.back());
}

}  // namespace

const DatabaseFrame& LocalizationDatabase::frame(int frame_id) const {
  const auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                                   [](const DatabaseFrame& f, int id) { return f.frame_id < id; });
  if (it == frames.end() || it->frame_id != frame_id)
    throw Error(ErrorCode::kInvalidArgument, "no database frame " + std::to_string(frame_id));
  return *it;
}

Pose query_pose(const Pose& top1_pose, const Pose& relative) { return compose(top1_pose, relative); }

DetectorParams detector_params(const PipelineConfig& config) {
  DetectorParams p;
  p.threshold = config.fast_threshold;
  p.max_keypoints = config.max_keypoints;
  p.border = kDescriptorBorder;
  return p;
}

DescribedFeatures extract_features(const RgbImage& rgb, const DetectorParams& detector) {
  const GrayImage gray = to_grayscale(rgb);
  const auto kps = detect(gray, detector);
  return describe(gray, kps);
}

LocalizationDatabase build_database(const std::vector<PointGroup>& groups, const Vocabulary& vocab,
                                    const CameraIntrinsics& intrinsics, const PipelineConfig& config) {
  std::vector<const Frame*> source;
  for (const auto& g : groups)
    for (const auto& f : g.database_frames) source.push_back(&f);
  if (source.empty()) throw Error(ErrorCode::kInvalidArgument, "no database frames to build from");
  std::sort(source.begin(), source.end(), [](const Frame* a, const Frame* b) { return a->frame_id < b->frame_id; });
  for (std::size_t i = 1; i < source.size(); ++i)
    if (source[i]->frame_id == source[i - 1]->frame_id)
      throw Error(ErrorCode::kInvalidArgument, "duplicate database frame " + std::to_string(source[i]->frame_id));

  LocalizationDatabase db;
  db.vocabulary = vocab;
  db.intrinsics = intrinsics;
  db.detector = detector_params(config);
  db.index = RetrievalIndex(config.variant);
  db.frames.resize(source.size());
  std::vector<GlobalEmbedding> embeddings(source.size());
  const int threads = config.threads > 0 ? config.threads : default_thread_count();
  parallel_for(source.size(), threads, [&](std::size_t i) {
    const Frame& f = *source[i];
    DatabaseFrame& out = db.frames[i];
    out.frame_id = f.frame_id;
    out.point_id = f.point_id;
    out.pose = f.pose;
    auto feats = extract_features(f.rgb, db.detector);
    out.keypoints = std::move(feats.keypoints);
    out.descriptors = std::move(feats.descriptors);
    out.depth = f.depth;
    for (float& d : out.depth.data) d = quantize_depth(d);
    embeddings[i] = embed(config.variant, out.descriptors, vocab);
  });
  for (std::size_t i = 0; i < source.size(); ++i) db.index.add(db.frames[i].frame_id, std::move(embeddings[i]));
  return db;
}

std::vector<Correspondence3D> backproject_matches(std::span<const Match> matches,
                                                  std::span<const Keypoint> query_kps, const DepthImage& query_depth,
                                                  std::span<const Keypoint> db_kps, const DepthImage& db_depth,
                                                  const CameraIntrinsics& k, double max_valid_depth) {
  const auto lift = [&](const Keypoint& kp, const DepthImage& depth, Vec3& out) {
    const int x = static_cast<int>(std::lround(kp.x));
    const int y = static_cast<int>(std::lround(kp.y));
    if (x < 0 || y < 0 || x >= depth.width || y >= depth.height) return false;
    const float d = depth.at(x, y);
    if (!valid_depth(d, max_valid_depth)) return false;
    out = backproject(Vec2(kp.x, kp.y), kDepthMaxMeters * d, k);
    return true;
  };
  std::vector<Correspondence3D> out;
  for (const Match& m : matches) {
    Correspondence3D c;
    if (lift(query_kps[m.query_index], query_depth, c.p_query) && lift(db_kps[m.db_index], db_depth, c.p_db))
      out.push_back(c);
  }
  return out;
}

LocalizationResult localize(const LocalizationDatabase& db, const Frame& query, const PipelineConfig& config) {
  LocalizationResult out;
  std::vector<Clock::time_point> marks{Clock::now()};
  const Retrieved r = retrieve(db, query, out, marks);
  if (config.method == RegistrationMethod::kNone) {
    fill_timings(out, marks, config.record_timings);
    return out;
  }
  const auto matches = match(r.features.descriptors, r.top->descriptors, config.matcher);
  marks.push_back(Clock::now());
  out.match_count = static_cast<int>(matches.size());
  const auto corrs = backproject_matches(matches, r.features.keypoints, query.depth, r.top->keypoints,
                                         r.top->depth, db.intrinsics, config.max_valid_depth);
  Pose rel;
  int inliers = 0;
  if (static_cast<int>(corrs.size()) >= std::max(3, config.min_matches) &&
      register_pair(corrs, query, *r.top, db.intrinsics, config, rel, inliers)) {
    out.pose = query_pose(r.top->pose, rel);
    out.inlier_count = inliers;
    out.fallback = false;
  }
  marks.push_back(Clock::now());
  fill_timings(out, marks, config.record_timings);
  return out;
}

LocalizationResult retrieval_only_localize(const LocalizationDatabase& db, const Frame& query,
                                           const PipelineConfig& config) {
  LocalizationResult out;
  std::vector<Clock::time_point> marks{Clock::now()};
  retrieve(db, query, out, marks);
  fill_timings(out, marks, config.record_timings);
  return out;
}

std::vector<LocalizationResult> localize_all(const LocalizationDatabase& db,
                                             const std::vector<PointGroup>& groups,
                                             const PipelineConfig& config) {
  std::vector<const Frame*> queries;
  for (const auto& g : groups)
    for (const auto& f : g.query_frames) queries.push_back(&f);
  std::sort(queries.begin(), queries.end(), [](const Frame* a, const Frame* b) {
    return std::pair(a->point_id, a->frame_id) < std::pair(b->point_id, b->frame_id);
  });
  std::vector<LocalizationResult> out(queries.size());
  const int threads = config.threads > 0 ? config.threads : default_thread_count();
  parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = localize(db, *queries[i], config); });
  return out;
}

}  // namespace pointloc
