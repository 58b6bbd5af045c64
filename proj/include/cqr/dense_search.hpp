// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cqr/http_transport.hpp"
#include "cqr/scored_doc.hpp"

namespace cqr::dense {

using Vector = std::vector<float>;

inline constexpr std::size_t kDefaultDimension = 768;
inline constexpr std::size_t kDefaultShardCount = 8;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Raw vectors, one per text, in order. Use embed() for checked, normalized output.
  virtual std::vector<Vector> encode(const std::vector<std::string>& texts) = 0;
};

/// Encodes through `provider`, checks dimension and finiteness, and
/// L2-normalizes every vector.
std::vector<Vector> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider);

/// Deterministic offline provider: feature hashing of analyzed tokens onto
/// seeded pseudo-random directions. Texts sharing tokens get similar vectors.
class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dimension = kDefaultDimension, std::uint64_t seed = 42);
  std::string name() const override { return "hash"; }
  std::size_t dimension() const override { return dim_; }
  std::vector<Vector> encode(const std::vector<std::string>& texts) override;

 private:
  Vector direction(const std::string& key) const;
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Vectors looked up by sha256(text) in a JSON-lines file of {"hash", "vector"}.
class PrecomputedEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit PrecomputedEmbeddingProvider(const std::filesystem::path& path);
  std::string name() const override { return "precomputed"; }
  std::size_t dimension() const override { return dim_; }
  std::vector<Vector> encode(const std::vector<std::string>& texts) override;

 private:
  std::unordered_map<std::string, Vector> table_;
  std::size_t dim_ = 0;
};

/// Embedding endpoint speaking {"model", "input": [...]} -> {"data": [{"embedding": [...]}]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::shared_ptr<Transport> transport, std::string path, std::string model,
                        std::size_t dimension);
  std::string name() const override { return "http:" + model_; }
  std::size_t dimension() const override { return dim_; }
  std::vector<Vector> encode(const std::vector<std::string>& texts) override;

 private:
  std::shared_ptr<Transport> transport_;
  std::string path_;
  std::string model_;
  std::size_t dim_;
};

/// Row-major block of unit vectors with their passage ids.
struct VectorShard {
  std::size_t shard_no = 0;
  std::size_t dimension = 0;
  std::vector<std::string> passage_ids;
  std::vector<float> matrix;  // passage_ids.size() * dimension

  std::size_t rows() const { return passage_ids.size(); }
  const float* row(std::size_t r) const { return matrix.data() + r * dimension; }
};

/// Splits rows into `n_shards` contiguous, near-equal shards.
std::vector<VectorShard> make_shards(const std::vector<std::string>& ids, const std::vector<Vector>& vectors,
                                     std::size_t n_shards);

/// Throws InputError on dimension mismatches, repeated ids or non-unit rows.
void validate_shards(const std::vector<VectorShard>& shards);

/// Writes shard_<n>.bin (magic, version, rows, dim, float32 rows) and
/// shard_<n>.ids.json per shard into `dir`.
void save_shards(const std::filesystem::path& dir, const std::vector<VectorShard>& shards);
std::vector<VectorShard> load_shards(const std::filesystem::path& dir);

/// Exact top-k by inner product over all shards: per-shard top-k searched
/// concurrently, then merged. Ties go to the smaller passage id.
std::vector<ScoredDoc> search_dense(const Vector& query, const std::vector<VectorShard>& shards, std::size_t k);

/// Cosine similarity; symmetric in its arguments.
double cosine(const Vector& u, const Vector& v);

}  // namespace cqr::dense
