#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pointloc/image.hpp"

namespace pointloc {

struct Keypoint {
  float x = 0, y = 0;
  float response = 0;   // sum of absolute differences over the contiguous arc
  float angle = 0;      // radians, intensity-centroid orientation

  bool operator==(const Keypoint&) const = default;
};

struct BinaryDescriptor {
  static constexpr int kBits = 256;
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(int i, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (i & 63);
    words[i >> 6] = v ? (words[i >> 6] | mask) : (words[i >> 6] & ~mask);
  }
  bool operator==(const BinaryDescriptor&) const = default;
  auto operator<=>(const BinaryDescriptor&) const = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  return std::popcount(a.words[0] ^ b.words[0]) + std::popcount(a.words[1] ^ b.words[1]) +
         std::popcount(a.words[2] ^ b.words[2]) + std::popcount(a.words[3] ^ b.words[3]);
}

struct Match {
  int query_index = 0;
  int db_index = 0;
  int distance = 0;

  bool operator==(const Match&) const = default;
};

GrayImage to_grayscale(const RgbImage& rgb);

struct DetectorParams {
  int threshold = 20;        // intensity levels
  int arc_length = 9;        // of the 16-pixel Bresenham circle
  int max_keypoints = 1000;
  /// Minimum distance to the image border; 3 is the segment test's own
  /// reach. The pipeline passes 16 so every keypoint can be described.
  int border = 3;
};

/// FAST segment-test corners, 3x3 non-maximum suppression on response,
/// strongest `max_keypoints` kept (ties by row then column), orientation from
/// the intensity centroid of a radius-15 disk. Throws invalid-argument for
/// rasters smaller than 32 x 32.
std::vector<Keypoint> detect(const GrayImage& gray, const DetectorParams& params = {});

/// Segment-test response at (x, y), or 0 when it is not a corner.
int corner_score(const GrayImage& gray, int x, int y, int threshold, int arc_length);

inline constexpr int kDescriptorBorder = 16;
inline constexpr int kOrientationBins = 30;

struct DescribedFeatures {
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  /// Index of each surviving keypoint in the input list.
  std::vector<int> source_index;
};

/// Rotated BRIEF: 256 fixed point pairs, rotated by the keypoint orientation
/// quantized to 30 bins, compared on a 5x5 box-smoothed raster. Keypoints
/// closer than 16 px to the border are dropped.
DescribedFeatures describe(const GrayImage& gray, std::span<const Keypoint> keypoints);

struct MatchParams {
  double ratio = 0.8;
  bool mutual = true;
};

/// Nearest-neighbor Hamming matching with a ratio test. With `mutual` the
/// pair must be each side's best and pass the ratio test from both sides,
/// which makes the result symmetric under swapping a and b. Sorted by
/// distance, then query index, then db index.
std::vector<Match> match(std::span<const BinaryDescriptor> a, std::span<const BinaryDescriptor> b,
                         const MatchParams& params = {});

/// Binary dump: u32 count, u32 bits (=256), then count x 32 bytes with bit i
/// stored in byte i / 8 at position i % 8. Multi-byte integers big-endian.
void write_descriptors(std::span<const BinaryDescriptor> descriptors,
                       const std::filesystem::path& file);
std::vector<BinaryDescriptor> read_descriptors(const std::filesystem::path& file);

}  // namespace pointloc
