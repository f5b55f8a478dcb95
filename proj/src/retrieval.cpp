#include "pointloc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "pointloc/binary_io.hpp"
#include "pointloc/errors.hpp"
#include "pointloc/rng.hpp"

namespace pointloc {
namespace {

std::vector<int> assign_all(const std::vector<BinaryDescriptor>& data, const Vocabulary& vocab) {
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = vocab.nearest_word(data[i]);
  return out;
}

void normalize(std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  if (n == 0.0) return;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

}  // namespace

int Vocabulary::nearest_word(const BinaryDescriptor& d) const {
  int best = 0, best_d = BinaryDescriptor::kBits + 1;
  for (int w = 0; w < size(); ++w) {
    const int dist = hamming(d, centroids[w]);
    if (dist < best_d) {
      best_d = dist;
      best = w;
    }
  }
  return best;
}

Vocabulary train_vocabulary(std::span<const std::vector<BinaryDescriptor>> frames, int k,
                            std::uint64_t seed, int max_iters) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "vocabulary size must be >= 1");
  std::vector<BinaryDescriptor> data;
  for (const auto& f : frames) data.insert(data.end(), f.begin(), f.end());
  if (static_cast<int>(data.size()) < k) {
    throw Error(ErrorCode::kInsufficientData, "need at least k descriptors to train a vocabulary");
  }
  if (static_cast<int>(std::set<BinaryDescriptor>(data.begin(), data.end()).size()) < k) {
    throw Error(ErrorCode::kInsufficientData, "need at least k distinct descriptors");
  }

  Vocabulary vocab;
  vocab.training_seed = seed;
  Rng rng(seed);

  // Seeding: first centre uniform, the rest with probability proportional to
  // the squared Hamming distance to the nearest chosen centre.
  std::vector<std::uint64_t> d2(data.size(), std::numeric_limits<std::uint64_t>::max());
  std::size_t pick = rng.below(data.size());
  for (int c = 0; c < k; ++c) {
    vocab.centroids.push_back(data[pick]);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto d = static_cast<std::uint64_t>(hamming(data[i], data[pick]));
      d2[i] = std::min(d2[i], d * d);
      total += d2[i];
    }
    if (c + 1 == k) break;
    std::uint64_t r = rng.below(total);
    pick = 0;
    while (r >= d2[pick]) r -= d2[pick++];
  }

  std::vector<int> assignment;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<int> next = assign_all(data, vocab);
    if (next == assignment) break;
    assignment = std::move(next);

    std::vector<std::array<int, BinaryDescriptor::kBits>> ones(k);
    std::vector<int> members(k, 0), first(k, -1);
    for (auto& o : ones) o.fill(0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int w = assignment[i];
      if (first[w] < 0) first[w] = static_cast<int>(i);
      ++members[w];
      for (int b = 0; b < BinaryDescriptor::kBits; ++b) ones[w][b] += data[i].bit(b);
    }
    std::vector<BinaryDescriptor> updated = vocab.centroids;
    for (int w = 0; w < k; ++w) {
      if (members[w] == 0) continue;
      for (int b = 0; b < BinaryDescriptor::kBits; ++b) {
        const int twice = 2 * ones[w][b];
        const bool v = twice == members[w] ? data[first[w]].bit(b) : twice > members[w];
        updated[w].set_bit(b, v);
      }
    }
    // Keep centroids distinct: a collapsed word keeps its previous value.
    std::set<BinaryDescriptor> seen;
    for (int w = 0; w < k; ++w) {
      if (!seen.insert(updated[w]).second) updated[w] = vocab.centroids[w];
      seen.insert(updated[w]);
    }
    vocab.centroids = std::move(updated);
  }

  const double n_frames = static_cast<double>(frames.size());
  std::vector<int> frames_with_word(k, 0);
  for (const auto& f : frames) {
    std::set<int> words;
    for (const auto& d : f) words.insert(vocab.nearest_word(d));
    for (int w : words) ++frames_with_word[w];
  }
  vocab.idf.resize(k);
  for (int w = 0; w < k; ++w) {
    vocab.idf[w] = std::max(0.0, std::log(n_frames / (1.0 + frames_with_word[w])));
  }
  return vocab;
}

const char* to_string(EmbeddingVariant v) { return v == EmbeddingVariant::kBow ? "bow" : "vlad"; }

EmbeddingVariant parse_embedding_variant(const std::string& s) {
  if (s == "bow") return EmbeddingVariant::kBow;
  if (s == "vlad") return EmbeddingVariant::kVlad;
  throw Error(ErrorCode::kInvalidArgument, "unknown retrieval variant '" + s + "'");
}

bool GlobalEmbedding::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

GlobalEmbedding embed_bow(std::span<const BinaryDescriptor> descriptors, const Vocabulary& vocab) {
  GlobalEmbedding e{EmbeddingVariant::kBow, std::vector<double>(vocab.size(), 0.0)};
  for (const auto& d : descriptors) e.values[vocab.nearest_word(d)] += 1.0;
  for (int w = 0; w < vocab.size(); ++w) e.values[w] *= vocab.idf[w];
  normalize(e.values);
  return e;
}

GlobalEmbedding embed_vlad(std::span<const BinaryDescriptor> descriptors, const Vocabulary& vocab) {
  constexpr int kBits = BinaryDescriptor::kBits;
  GlobalEmbedding e{EmbeddingVariant::kVlad,
                    std::vector<double>(static_cast<std::size_t>(vocab.size()) * kBits, 0.0)};
  for (const auto& d : descriptors) {
    const int w = vocab.nearest_word(d);
    const BinaryDescriptor& c = vocab.centroids[w];
    double* block = e.values.data() + static_cast<std::size_t>(w) * kBits;
    for (int b = 0; b < kBits; ++b) {
      // (+-1 descriptor) - (+-1 centroid)
      block[b] += (d.bit(b) ? 1.0 : -1.0) - (c.bit(b) ? 1.0 : -1.0);
    }
  }
  for (int w = 0; w < vocab.size(); ++w) {
    double* block = e.values.data() + static_cast<std::size_t>(w) * kBits;
    double n = 0;
    for (int b = 0; b < kBits; ++b) n += block[b] * block[b];
    if (n == 0.0) continue;
    n = std::sqrt(n);
    for (int b = 0; b < kBits; ++b) block[b] /= n;
  }
  normalize(e.values);
  return e;
}

GlobalEmbedding embed(EmbeddingVariant variant, std::span<const BinaryDescriptor> descriptors,
                      const Vocabulary& vocab) {
  return variant == EmbeddingVariant::kBow ? embed_bow(descriptors, vocab)
                                           : embed_vlad(descriptors, vocab);
}

double embedding_distance(const GlobalEmbedding& a, const GlobalEmbedding& b) {
  if (a.variant != b.variant || a.values.size() != b.values.size()) {
    throw Error(ErrorCode::kInvalidArgument, "embedding variant or length mismatch");
  }
  if (a.is_zero() || b.is_zero()) return 2.0;
  double s = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s;
}

void RetrievalIndex::add(int frame_id, GlobalEmbedding embedding) {
  if (embedding.variant != variant_) {
    throw Error(ErrorCode::kInvalidArgument, "embedding variant does not match the index");
  }
  if (!embeddings_.empty() && embedding.values.size() != embeddings_.front().values.size()) {
    throw Error(ErrorCode::kInvalidArgument, "embedding length does not match the index");
  }
  ids_.push_back(frame_id);
  embeddings_.push_back(std::move(embedding));
}

void RetrievalIndex::check_query(const GlobalEmbedding& q) const {
  if (ids_.empty()) throw Error(ErrorCode::kEmptyIndex, "retrieval index is empty");
  if (q.variant != variant_ || q.values.size() != embeddings_.front().values.size()) {
    throw Error(ErrorCode::kInvalidArgument, "query embedding does not match the index");
  }
}

namespace {

struct Ranked {
  bool zero;
  double distance;
  int id;
  bool operator<(const Ranked& o) const {
    if (zero != o.zero) return !zero;
    if (distance != o.distance) return distance < o.distance;
    return id < o.id;
  }
};

}  // namespace

RetrievalHit RetrievalIndex::query_top1(const GlobalEmbedding& q) const {
  check_query(q);
  Ranked best{true, 0, 0};
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const Ranked r{embeddings_[i].is_zero(), embedding_distance(q, embeddings_[i]), ids_[i]};
    if (i == 0 || r < best) best = r;
  }
  return {best.id, best.distance};
}

std::vector<RetrievalHit> RetrievalIndex::query_topk(const GlobalEmbedding& q, std::size_t k) const {
  check_query(q);
  std::vector<Ranked> all;
  all.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    all.push_back({embeddings_[i].is_zero(), embedding_distance(q, embeddings_[i]), ids_[i]});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
  std::vector<RetrievalHit> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({all[i].id, all[i].distance});
  return out;
}

void write_vocabulary(const Vocabulary& vocab, std::ostream& out) {
  bin::write_u32(out, static_cast<std::uint32_t>(vocab.size()));
  bin::write_u32(out, BinaryDescriptor::kBits);
  bin::write_u64(out, vocab.training_seed);
  for (const auto& c : vocab.centroids) {
    for (int byte = 0; byte < 32; ++byte) {
      bin::write_u8(out, static_cast<std::uint8_t>(c.words[byte / 8] >> (8 * (byte % 8))));
    }
  }
  for (double v : vocab.idf) bin::write_f64(out, v);
}

Vocabulary read_vocabulary(std::istream& in, const std::string& what) {
  Vocabulary v;
  const std::uint32_t k = bin::read_u32(in, what);
  if (bin::read_u32(in, what) != BinaryDescriptor::kBits) {
    throw Error(ErrorCode::kFormatError, what + ": vocabulary must use 256-bit words");
  }
  if (k == 0 || k > (1u << 20)) throw Error(ErrorCode::kFormatError, what + ": bad vocabulary size");
  v.training_seed = bin::read_u64(in, what);
  v.centroids.resize(k);
  for (auto& c : v.centroids) {
    for (int byte = 0; byte < 32; ++byte) {
      c.words[byte / 8] |= std::uint64_t{bin::read_u8(in, what)} << (8 * (byte % 8));
    }
  }
  v.idf.resize(k);
  for (double& x : v.idf) {
    x = bin::read_f64(in, what);
    if (!std::isfinite(x)) throw Error(ErrorCode::kFormatError, what + ": non-finite idf");
  }
  return v;
}

void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  write_vocabulary(vocab, out);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

Vocabulary read_vocabulary(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormatError, file.string() + ": missing or unreadable");
  return read_vocabulary(in, file.string());
}

void write_embeddings(std::span<const GlobalEmbedding> embeddings, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  const std::size_t dim = embeddings.empty() ? 0 : embeddings.front().values.size();
  bin::write_u32(out, static_cast<std::uint32_t>(embeddings.size()));
  bin::write_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& e : embeddings) {
    if (e.values.size() != dim) throw Error(ErrorCode::kInvalidArgument, "embeddings differ in length");
    for (double v : e.values) bin::write_f64(out, v);
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::vector<std::vector<double>> read_embeddings(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormatError, file.string() + ": missing or unreadable");
  const std::string what = file.string();
  const std::uint32_t count = bin::read_u32(in, what);
  const std::uint32_t dim = bin::read_u32(in, what);
  std::vector<std::vector<double>> out(count, std::vector<double>(dim));
  for (auto& row : out)
    for (double& v : row) v = bin::read_f64(in, what);
  return out;
}

}  // namespace pointloc
