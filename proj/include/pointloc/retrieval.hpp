#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "pointloc/features.hpp"

namespace pointloc {

/// Flat visual vocabulary in Hamming space.
struct Vocabulary {
  std::vector<BinaryDescriptor> centroids;
  std::vector<double> idf;
  std::uint64_t training_seed = 0;

  int size() const { return static_cast<int>(centroids.size()); }
  /// Nearest centroid, ties to the lowest word index.
  int nearest_word(const BinaryDescriptor& d) const;

  bool operator==(const Vocabulary&) const = default;
};

/// k-medians over the union of all frames' descriptors: k-means++-style
/// seeding from the seeded stream, nearest-centroid assignment, bitwise
/// majority update (ties take the bit of the cluster's lowest-index member).
/// Stops after max_iters or when no assignment changes. idf_w is
/// max(0, ln(N / (1 + n_w))) over the N supplied frames. Throws
/// insufficient-data when there are fewer than k distinct descriptors.
Vocabulary train_vocabulary(std::span<const std::vector<BinaryDescriptor>> frames, int k,
                            std::uint64_t seed, int max_iters = 20);

enum class EmbeddingVariant { kBow, kVlad };

const char* to_string(EmbeddingVariant v);
/// Accepts "bow" or "vlad"; throws invalid-argument otherwise.
EmbeddingVariant parse_embedding_variant(const std::string& s);

struct GlobalEmbedding {
  EmbeddingVariant variant = EmbeddingVariant::kBow;
  std::vector<double> values;  // unit L2 norm, or all zero

  bool is_zero() const;
  bool operator==(const GlobalEmbedding&) const = default;
};

/// idf-weighted word histogram, L2-normalized.
GlobalEmbedding embed_bow(std::span<const BinaryDescriptor> descriptors, const Vocabulary& vocab);
/// Residuals of +-1-mapped descriptors to their word centroids, summed per
/// word, intra-normalized per word block, then globally L2-normalized.
/// Length 256 * k.
GlobalEmbedding embed_vlad(std::span<const BinaryDescriptor> descriptors, const Vocabulary& vocab);
GlobalEmbedding embed(EmbeddingVariant variant, std::span<const BinaryDescriptor> descriptors,
                      const Vocabulary& vocab);

/// Squared Euclidean distance; 2.0 whenever either side is the zero vector.
double embedding_distance(const GlobalEmbedding& a, const GlobalEmbedding& b);

struct RetrievalHit {
  int frame_id = 0;
  double distance = 0;

  bool operator==(const RetrievalHit&) const = default;
};

/// Exhaustive nearest-embedding search. Ordering is (zero-vector entries
/// last, distance ascending, frame id ascending), so results do not depend on
/// insertion order and zero vectors only win when nothing else is stored.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(EmbeddingVariant variant) : variant_(variant) {}

  /// Throws invalid-argument on a variant or length mismatch.
  void add(int frame_id, GlobalEmbedding embedding);

  EmbeddingVariant variant() const { return variant_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<int>& frame_ids() const { return ids_; }
  const GlobalEmbedding& embedding(std::size_t i) const { return embeddings_[i]; }

  /// Throws empty-index or invalid-argument (variant mismatch).
  RetrievalHit query_top1(const GlobalEmbedding& q) const;
  std::vector<RetrievalHit> query_topk(const GlobalEmbedding& q, std::size_t k) const;

 private:
  void check_query(const GlobalEmbedding& q) const;

  EmbeddingVariant variant_;
  std::vector<int> ids_;
  std::vector<GlobalEmbedding> embeddings_;
};

/// Vocabulary file: u32 k, u32 bits, u64 seed, k x 32 centroid bytes (same bit
/// layout as the descriptor dump), then k big-endian f64 idf values.
void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& file);
Vocabulary read_vocabulary(const std::filesystem::path& file);
void write_vocabulary(const Vocabulary& vocab, std::ostream& out);
Vocabulary read_vocabulary(std::istream& in, const std::string& what);

/// Embedding dump: u32 count, u32 dim, then row-major big-endian f64.
void write_embeddings(std::span<const GlobalEmbedding> embeddings, const std::filesystem::path& file);
std::vector<std::vector<double>> read_embeddings(const std::filesystem::path& file);

}  // namespace pointloc
