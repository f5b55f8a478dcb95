#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "pointloc/render.hpp"
#include "pointloc/scene.hpp"

namespace pointloc {

/// Summary columns matching the usual dataset table: Points, Poses,
/// Categories, Instances, Maps. Poses counts every frame (database + query).
struct DatasetSummary {
  int points = 0;
  int poses = 0;
  int categories = 0;
  int instances = 0;
  int maps = 0;

  bool operator==(const DatasetSummary&) const = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  DatasetSummary summary;
  int database_frames = 0;
  int query_frames = 0;
  GenerationParams params;

  bool operator==(const DatasetManifest&) const = default;
};

/// Incremental version of dataset_stats for streaming generation.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(const SceneModel& scene);
  void add(const PointGroup& group);
  DatasetSummary summary() const;
  int database_frames() const { return database_frames_; }
  int query_frames() const { return query_frames_; }

 private:
  const SceneModel* scene_;
  int points_ = 0;
  int database_frames_ = 0;
  int query_frames_ = 0;
  std::set<int> instances_;
};

/// Instances are the distinct nonzero ids over all instance rasters;
/// categories are those instances' category ids. An empty group list is an
/// all-zero summary.
DatasetSummary dataset_stats(const SceneModel& scene, const std::vector<PointGroup>& groups);

struct Dataset {
  SceneModel scene;
  DatasetManifest manifest;
  std::vector<PointGroup> groups;
};

struct LoadOptions {
  bool rasters = true;
  bool queries = true;
};

// On-disk layout of one scene directory:
//   manifest.txt, scene.txt,
//   points/<point_id>/db_<k>.{rgb,depth,inst,pose},
//   queries/<point_id>/q_<k>.{rgb,depth,inst,pose}.
// rgb is binary P6; depth and inst are 16-bit big-endian P5 (depth stores
// round(normalized * 65535)); pose is one text line.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);
void write_scene(const SceneModel& scene, const std::filesystem::path& file);
SceneModel read_scene(const std::filesystem::path& file);
void write_point_group(const PointGroup& group, const std::filesystem::path& dir);
PointGroup read_point_group(const std::filesystem::path& dir, int point_id,
                            const LoadOptions& options = {});

void write_dataset(const SceneModel& scene, const std::vector<PointGroup>& groups,
                   const DatasetManifest& manifest, const std::filesystem::path& dir);
/// Throws format-error naming the offending file when something is missing,
/// malformed, or disagrees with the manifest counts.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});
/// Generates scene `seed` with its point grid and writes it to `dir`, a few
/// point groups at a time so rasters never pile up in memory. Output does not
/// depend on `threads`.
DatasetManifest generate_dataset(std::uint64_t seed, const GenerationParams& params,
                                 const SceneParams& scene_params, const std::filesystem::path& dir,
                                 int threads = 1);

/// Point ids present under points/, ascending.
std::vector<int> list_point_ids(const std::filesystem::path& dir);

/// 16-bit depth codec used on disk: round(clamp(d, 0, 1) * 65535).
std::uint16_t encode_depth(float d);
float decode_depth(std::uint16_t v);
/// decode(encode(d)): what a depth value becomes after a disk round trip.
float quantize_depth(float d);

// Raster containers, exposed for tools and tests.
void write_rgb(const RgbImage& image, const std::filesystem::path& file);
RgbImage read_rgb(const std::filesystem::path& file);
void write_depth(const DepthImage& image, const std::filesystem::path& file);
DepthImage read_depth(const std::filesystem::path& file);
void write_instances(const InstanceImage& image, const std::filesystem::path& file);
InstanceImage read_instances(const std::filesystem::path& file);

}  // namespace pointloc
