#include "pointloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "pointloc/binary_io.hpp"
#include "pointloc/errors.hpp"
#include "pointloc/rng.hpp"

namespace pointloc {
namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},
                                {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

constexpr int kOrientationRadius = 15;
constexpr int kPatternRadius = 13;
constexpr int kSmoothHalf = 2;  // 5x5 box

struct PointPair {
  int ax, ay, bx, by;
};
using Pattern = std::array<PointPair, BinaryDescriptor::kBits>;

// Fixed sampling table: isotropic Gaussian pairs clipped to the pattern
// radius, drawn once from a constant seed, then rotated per orientation bin.
const std::array<Pattern, kOrientationBins>& rotated_patterns() {
  static const auto patterns = [] {
    struct Pair {
      double ax, ay, bx, by;
    };
    std::array<Pair, BinaryDescriptor::kBits> base{};
    Rng rng(0x0b1e5eedULL);
    auto sample = [&](double& x, double& y) {
      do {
        x = rng.normal() * 31.0 / 5.0;
        y = rng.normal() * 31.0 / 5.0;
      } while (x * x + y * y > kPatternRadius * kPatternRadius);
    };
    for (auto& p : base) {
      do {
        sample(p.ax, p.ay);
        sample(p.bx, p.by);
      } while (std::hypot(p.ax - p.bx, p.ay - p.by) < 2.0);
    }
    std::array<Pattern, kOrientationBins> out{};
    for (int b = 0; b < kOrientationBins; ++b) {
      const double a = 2.0 * std::numbers::pi * b / kOrientationBins;
      const double c = std::cos(a), s = std::sin(a);
      for (std::size_t i = 0; i < base.size(); ++i) {
        const Pair& p = base[i];
        out[b][i] = {static_cast<int>(std::lround(c * p.ax - s * p.ay)),
                     static_cast<int>(std::lround(s * p.ax + c * p.ay)),
                     static_cast<int>(std::lround(c * p.bx - s * p.by)),
                     static_cast<int>(std::lround(s * p.bx + c * p.by))};
      }
    }
    return out;
  }();
  return patterns;
}

float orientation(const GrayImage& gray, int cx, int cy) {
  double m01 = 0, m10 = 0;
  for (int dy = -kOrientationRadius; dy <= kOrientationRadius; ++dy) {
    const int y = cy + dy;
    if (y < 0 || y >= gray.height) continue;
    for (int dx = -kOrientationRadius; dx <= kOrientationRadius; ++dx) {
      const int x = cx + dx;
      if (x < 0 || x >= gray.width || dx * dx + dy * dy > kOrientationRadius * kOrientationRadius) {
        continue;
      }
      const double v = gray.at(x, y);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  return static_cast<float>(std::atan2(m01, m10));
}

int orientation_bin(float angle) {
  const double step = 2.0 * std::numbers::pi / kOrientationBins;
  const long b = std::lround(angle / step);
  return static_cast<int>(((b % kOrientationBins) + kOrientationBins) % kOrientationBins);
}

// Summed-area table with one row/column of zero padding.
class IntegralImage {
 public:
  explicit IntegralImage(const GrayImage& g) : w_(g.width), h_(g.height), sums_((w_ + 1) * (h_ + 1), 0) {
    for (int y = 0; y < h_; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < w_; ++x) {
        row += g.at(x, y);
        sums_[(y + 1) * (w_ + 1) + x + 1] = sums_[y * (w_ + 1) + x + 1] + row;
      }
    }
  }

  /// Sum over the 5x5 box centered at (x, y), clipped to the raster.
  std::int64_t box(int x, int y) const {
    const int x0 = std::clamp(x - kSmoothHalf, 0, w_), x1 = std::clamp(x + kSmoothHalf + 1, 0, w_);
    const int y0 = std::clamp(y - kSmoothHalf, 0, h_), y1 = std::clamp(y + kSmoothHalf + 1, 0, h_);
    return sums_[y1 * (w_ + 1) + x1] - sums_[y0 * (w_ + 1) + x1] - sums_[y1 * (w_ + 1) + x0] +
           sums_[y0 * (w_ + 1) + x0];
  }

 private:
  int w_, h_;
  std::vector<std::int64_t> sums_;
};

}  // namespace

GrayImage to_grayscale(const RgbImage& rgb) {
  if (rgb.channels == 1) return rgb;
  if (rgb.channels != 3) throw Error(ErrorCode::kInvalidArgument, "expected a 3-channel raster");
  GrayImage gray(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    const double v = 0.299 * rgb.data[3 * i] + 0.587 * rgb.data[3 * i + 1] + 0.114 * rgb.data[3 * i + 2];
    gray.data[i] = static_cast<std::uint8_t>(std::min(255.0, std::round(v)));
  }
  return gray;
}

int corner_score(const GrayImage& gray, int x, int y, int threshold, int arc_length) {
  const int c = gray.at(x, y);
  int diff[16];
  int kind[16];  // +1 brighter, -1 darker, 0 similar
  for (int i = 0; i < 16; ++i) {
    const int p = gray.at(x + kCircle[i][0], y + kCircle[i][1]);
    diff[i] = p - c;
    kind[i] = diff[i] > threshold ? 1 : diff[i] < -threshold ? -1 : 0;
  }
  int best = 0;
  for (int sign : {1, -1}) {
    // Longest circular run of `sign`; the run is scored by its total
    // absolute difference.
    for (int start = 0; start < 16; ++start) {
      if (kind[start] != sign || kind[(start + 15) % 16] == sign) continue;
      int len = 0, sum = 0;
      while (len < 16 && kind[(start + len) % 16] == sign) {
        sum += std::abs(diff[(start + len) % 16]);
        ++len;
      }
      if (len >= arc_length) best = std::max(best, sum);
    }
    // Whole circle of one kind has no run start.
    if (std::all_of(kind, kind + 16, [&](int k) { return k == sign; }) && arc_length <= 16) {
      int sum = 0;
      for (int d : diff) sum += std::abs(d);
      best = std::max(best, sum);
    }
  }
  return best;
}

std::vector<Keypoint> detect(const GrayImage& gray, const DetectorParams& params) {
  if (gray.width < 32 || gray.height < 32 || gray.channels != 1) {
    throw Error(ErrorCode::kInvalidArgument, "detector needs a single-channel raster of at least 32x32");
  }
  const int border = std::max(3, params.border);
  const int w = gray.width, h = gray.height;
  std::vector<int> score(static_cast<std::size_t>(w) * h, 0);
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      score[y * w + x] = corner_score(gray, x, y, params.threshold, params.arc_length);
    }
  }
  std::vector<Keypoint> kps;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const int s = score[y * w + x];
      if (s == 0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int n = score[(y + dy) * w + x + dx];
          // Earlier raster neighbors must be strictly weaker; later ones may tie.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (earlier ? n >= s : n > s) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) kps.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(s), 0.f});
    }
  }
  std::stable_sort(kps.begin(), kps.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (static_cast<int>(kps.size()) > params.max_keypoints) {
    kps.resize(static_cast<std::size_t>(std::max(0, params.max_keypoints)));
  }
  for (Keypoint& k : kps) k.angle = orientation(gray, static_cast<int>(k.x), static_cast<int>(k.y));
  return kps;
}

DescribedFeatures describe(const GrayImage& gray, std::span<const Keypoint> keypoints) {
  DescribedFeatures out;
  if (keypoints.empty()) return out;
  const IntegralImage integral(gray);
  const auto& patterns = rotated_patterns();
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const Keypoint& k = keypoints[i];
    const int x = static_cast<int>(std::lround(k.x)), y = static_cast<int>(std::lround(k.y));
    if (x < kDescriptorBorder || y < kDescriptorBorder || x >= gray.width - kDescriptorBorder ||
        y >= gray.height - kDescriptorBorder) {
      continue;
    }
    const Pattern& pattern = patterns[orientation_bin(k.angle)];
    BinaryDescriptor d;
    for (int b = 0; b < BinaryDescriptor::kBits; ++b) {
      const PointPair& p = pattern[b];
      d.set_bit(b, integral.box(x + p.ax, y + p.ay) < integral.box(x + p.bx, y + p.by));
    }
    out.keypoints.push_back(k);
    out.descriptors.push_back(d);
    out.source_index.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

struct Nearest {
  int index = -1;
  int best = std::numeric_limits<int>::max();
  int second = std::numeric_limits<int>::max();
};

std::vector<Nearest> nearest_neighbors(std::span<const BinaryDescriptor> from,
                                       std::span<const BinaryDescriptor> to) {
  std::vector<Nearest> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    Nearest& n = out[i];
    for (std::size_t j = 0; j < to.size(); ++j) {
      const int d = hamming(from[i], to[j]);
      if (d < n.best) {
        n.second = n.best;
        n.best = d;
        n.index = static_cast<int>(j);
      } else if (d < n.second) {
        n.second = d;
      }
    }
  }
  return out;
}

bool passes_ratio(const Nearest& n, double ratio) {
  return n.second == std::numeric_limits<int>::max() || n.best < ratio * n.second;
}

}  // namespace

std::vector<Match> match(std::span<const BinaryDescriptor> a, std::span<const BinaryDescriptor> b,
                         const MatchParams& params) {
  std::vector<Match> out;
  if (a.empty() || b.empty()) return out;
  const auto forward = nearest_neighbors(a, b);
  std::vector<Nearest> backward;
  if (params.mutual) backward = nearest_neighbors(b, a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest& n = forward[i];
    if (!passes_ratio(n, params.ratio)) continue;
    if (params.mutual) {
      const Nearest& r = backward[n.index];
      if (r.index != static_cast<int>(i) || !passes_ratio(r, params.ratio)) continue;
    }
    out.push_back({static_cast<int>(i), n.index, n.best});
  }
  std::sort(out.begin(), out.end(), [](const Match& x, const Match& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.query_index != y.query_index) return x.query_index < y.query_index;
    return x.db_index < y.db_index;
  });
  return out;
}

void write_descriptors(std::span<const BinaryDescriptor> descriptors,
                       const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  bin::write_u32(out, static_cast<std::uint32_t>(descriptors.size()));
  bin::write_u32(out, BinaryDescriptor::kBits);
  for (const auto& d : descriptors) {
    for (int byte = 0; byte < 32; ++byte) {
      bin::write_u8(out, static_cast<std::uint8_t>(d.words[byte / 8] >> (8 * (byte % 8))));
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::vector<BinaryDescriptor> read_descriptors(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormatError, file.string() + ": missing or unreadable");
  const std::string what = file.string();
  const std::uint32_t count = bin::read_u32(in, what);
  if (bin::read_u32(in, what) != BinaryDescriptor::kBits) {
    throw Error(ErrorCode::kFormatError, what + ": descriptor width must be 256 bits");
  }
  std::vector<BinaryDescriptor> out(count);
  for (auto& d : out) {
    for (int byte = 0; byte < 32; ++byte) {
      d.words[byte / 8] |= std::uint64_t{bin::read_u8(in, what)} << (8 * (byte % 8));
    }
  }
  return out;
}

}  // namespace pointloc
