// SPDX-License-Identifier: Apache-2.0
#include "cqr/dense_search.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <random>
#include <unordered_set>

#include "cqr/error.hpp"
#include "cqr/simd/kernels.hpp"
#include "cqr/text_analysis.hpp"
#include "cqr/util.hpp"

namespace cqr::dense {

std::vector<Vector> embed(const std::vector<std::string>& texts, EmbeddingProvider& provider) {
  auto vectors = provider.encode(texts);
  if (vectors.size() != texts.size()) {
    throw Error("provider " + provider.name() + " returned " + std::to_string(vectors.size()) +
                " vectors for " + std::to_string(texts.size()) + " texts");
  }
  for (auto& v : vectors) {
    if (v.size() != provider.dimension()) {
      throw Error("dimension mismatch: expected " + std::to_string(provider.dimension()) + ", got " +
                  std::to_string(v.size()));
    }
    double sq = 0.0;
    for (float x : v) {
      if (!std::isfinite(x)) throw Error("provider " + provider.name() + " returned a non-finite component");
      sq += static_cast<double>(x) * x;
    }
    if (sq == 0.0) throw Error("provider " + provider.name() + " returned a zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& x : v) x = static_cast<float>(x * inv);
  }
  return vectors;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dim_(dimension), seed_(seed) {
  if (dim_ == 0) throw Error("embedding dimension must be positive");
}

Vector HashEmbeddingProvider::direction(const std::string& key) const {
  const std::string digest = sha256_hex(std::to_string(seed_) + '\x1f' + key);
  std::mt19937_64 rng(std::stoull(digest.substr(0, 16), nullptr, 16));
  Vector v(dim_);
  for (auto& x : v) {
    // 24 random bits -> [-1, 1)
    x = static_cast<float>(static_cast<double>(rng() >> 40) / 8388608.0 - 1.0);
  }
  return v;
}

std::vector<Vector> HashEmbeddingProvider::encode(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto tokens = text::analyze(t);
    Vector acc(dim_, 0.0f);
    if (tokens.empty()) {
      acc = direction(std::string("\x01") + t);
    }
    for (const auto& tok : tokens) {
      const auto d = direction(tok);
      for (std::size_t i = 0; i < dim_; ++i) acc[i] += d[i];
    }
    out.push_back(std::move(acc));
  }
  return out;
}

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(const std::filesystem::path& path) {
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    if (!j.contains("hash") || !j.contains("vector")) {
      throw InputError(path.string() + ": line " + std::to_string(line) + ": expected {hash, vector}");
    }
    auto v = j.at("vector").get<Vector>();
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) {
      throw InputError(path.string() + ": line " + std::to_string(line) + ": dimension mismatch");
    }
    table_[j.at("hash").get<std::string>()] = std::move(v);
  });
}

std::vector<Vector> PrecomputedEmbeddingProvider::encode(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto h = sha256_hex(t);
    auto it = table_.find(h);
    if (it == table_.end()) throw InputError("no precomputed vector for text hash " + h);
    out.push_back(it->second);
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::shared_ptr<Transport> transport, std::string path,
                                             std::string model, std::size_t dimension)
    : transport_(std::move(transport)), path_(std::move(path)), model_(std::move(model)), dim_(dimension) {}

std::vector<Vector> HttpEmbeddingProvider::encode(const std::vector<std::string>& texts) {
  const json req = {{"model", model_}, {"input", texts}};
  const auto res = transport_->post(path_, req.dump());
  if (res.status != 200) throw HttpError(res.status, res.body);
  std::vector<Vector> out;
  try {
    const auto body = json::parse(res.body);
    for (const auto& item : body.at("data")) out.push_back(item.at("embedding").get<Vector>());
  } catch (const json::exception& e) {
    throw Error(std::string("malformed embedding response: ") + e.what());
  }
  return out;
}

std::vector<VectorShard> make_shards(const std::vector<std::string>& ids, const std::vector<Vector>& vectors,
                                     std::size_t n_shards) {
  if (ids.size() != vectors.size()) throw Error("ids and vectors differ in length");
  if (n_shards == 0) throw Error("shard count must be positive");
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  std::vector<VectorShard> shards(n_shards);
  const std::size_t n = ids.size();
  for (std::size_t s = 0; s < n_shards; ++s) {
    const std::size_t begin = n * s / n_shards;
    const std::size_t end = n * (s + 1) / n_shards;
    auto& shard = shards[s];
    shard.shard_no = s;
    shard.dimension = dim;
    shard.matrix.reserve((end - begin) * dim);
    for (std::size_t i = begin; i < end; ++i) {
      if (vectors[i].size() != dim) throw Error("dimension mismatch at row " + std::to_string(i));
      shard.passage_ids.push_back(ids[i]);
      shard.matrix.insert(shard.matrix.end(), vectors[i].begin(), vectors[i].end());
    }
  }
  return shards;
}

void validate_shards(const std::vector<VectorShard>& shards) {
  if (shards.empty()) throw InputError("no vector shards");
  const std::size_t dim = shards.front().dimension;
  std::unordered_set<std::string> seen;
  for (const auto& s : shards) {
    if (s.dimension != dim) throw InputError("shard " + std::to_string(s.shard_no) + ": dimension mismatch");
    if (s.matrix.size() != s.rows() * dim) throw InputError("shard " + std::to_string(s.shard_no) + ": bad matrix size");
    for (std::size_t r = 0; r < s.rows(); ++r) {
      if (!seen.insert(s.passage_ids[r]).second) {
        throw InputError("passage id '" + s.passage_ids[r] + "' appears in more than one row");
      }
      double sq = 0.0;
      for (std::size_t i = 0; i < dim; ++i) sq += static_cast<double>(s.row(r)[i]) * s.row(r)[i];
      if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
        throw InputError("shard " + std::to_string(s.shard_no) + " row " + std::to_string(r) + " is not unit-norm");
      }
    }
  }
}

namespace {

constexpr char kShardMagic[8] = {'C', 'Q', 'R', 'V', 'E', 'C', '\0', '\n'};
constexpr std::uint32_t kShardVersion = 1;

std::string shard_stem(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard_%03zu", n);
  return buf;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

struct Hit {
  float score;
  std::uint32_t row;
  const VectorShard* shard;

  const std::string& id() const { return shard->passage_ids[row]; }
};

bool hit_before(const Hit& a, const Hit& b) { return ranks_before(a.score, a.id(), b.score, b.id()); }

std::vector<Hit> shard_top_k(const Vector& query, const VectorShard& shard, std::size_t k) {
  std::vector<float> scores(shard.rows());
  simd::active_kernels().dot_rows(shard.matrix.data(), shard.rows(), shard.dimension, query.data(), scores.data());
  std::vector<Hit> hits;
  hits.reserve(shard.rows());
  for (std::uint32_t r = 0; r < shard.rows(); ++r) hits.push_back({scores[r], r, &shard});
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), hit_before);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), hit_before);
  }
  return hits;
}

}  // namespace

void save_shards(const std::filesystem::path& dir, const std::vector<VectorShard>& shards) {
  std::filesystem::create_directories(dir);
  for (const auto& s : shards) {
    std::string bin(kShardMagic, sizeof kShardMagic);
    for (int i = 0; i < 4; ++i) bin.push_back(static_cast<char>(kShardVersion >> (8 * i)));
    put_u64(bin, s.rows());
    put_u64(bin, s.dimension);
    // float32 little-endian rows
    const auto* bytes = reinterpret_cast<const char*>(s.matrix.data());
    bin.append(bytes, s.matrix.size() * sizeof(float));
    write_file(dir / (shard_stem(s.shard_no) + ".bin"), bin);
    write_file(dir / (shard_stem(s.shard_no) + ".ids.json"), json(s.passage_ids).dump() + "\n");
  }
}

std::vector<VectorShard> load_shards(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("shard directory not found: " + dir.string());
  std::vector<VectorShard> shards;
  for (std::size_t n = 0;; ++n) {
    const auto bin_path = dir / (shard_stem(n) + ".bin");
    if (!std::filesystem::exists(bin_path)) break;
    const std::string bin = read_file(bin_path);
    constexpr std::size_t kHeader = sizeof kShardMagic + 4 + 16;
    if (bin.size() < kHeader || std::memcmp(bin.data(), kShardMagic, sizeof kShardMagic) != 0) {
      throw InputError(bin_path.string() + ": not a vector shard");
    }
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) {
      version |= static_cast<std::uint32_t>(static_cast<unsigned char>(bin[sizeof kShardMagic + i])) << (8 * i);
    }
    if (version != kShardVersion) throw InputError(bin_path.string() + ": unsupported shard version");
    VectorShard s;
    s.shard_no = n;
    const auto rows = get_u64(bin, sizeof kShardMagic + 4);
    s.dimension = get_u64(bin, sizeof kShardMagic + 12);
    if (bin.size() != kHeader + rows * s.dimension * sizeof(float)) {
      throw InputError(bin_path.string() + ": size does not match header");
    }
    s.matrix.resize(rows * s.dimension);
    std::memcpy(s.matrix.data(), bin.data() + kHeader, s.matrix.size() * sizeof(float));
    const auto ids_path = dir / (shard_stem(n) + ".ids.json");
    try {
      s.passage_ids = json::parse(read_file(ids_path)).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw InputError(ids_path.string() + ": " + e.what());
    }
    if (s.passage_ids.size() != rows) throw InputError(ids_path.string() + ": id count does not match shard rows");
    shards.push_back(std::move(s));
  }
  if (shards.empty()) throw InputError("no shard files in " + dir.string());
  return shards;
}

std::vector<ScoredDoc> search_dense(const Vector& query, const std::vector<VectorShard>& shards, std::size_t k) {
  if (shards.empty()) throw InputError("no vector shards");
  for (const auto& s : shards) {
    if (s.dimension != query.size()) {
      throw InputError("query dimension " + std::to_string(query.size()) + " does not match shard dimension " +
                       std::to_string(s.dimension));
    }
  }
  if (k == 0) return {};

  std::vector<std::vector<Hit>> per_shard(shards.size());
  if (shards.size() == 1) {
    per_shard[0] = shard_top_k(query, shards[0], k);
  } else {
    std::vector<std::future<std::vector<Hit>>> jobs;
    jobs.reserve(shards.size());
    for (const auto& s : shards) {
      jobs.push_back(std::async(std::launch::async, [&query, &s, k] { return shard_top_k(query, s, k); }));
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) per_shard[i] = jobs[i].get();
  }

  std::vector<Hit> merged;
  for (auto& hits : per_shard) merged.insert(merged.end(), hits.begin(), hits.end());
  std::sort(merged.begin(), merged.end(), hit_before);
  if (merged.size() > k) merged.resize(k);

  std::vector<ScoredDoc> out;
  out.reserve(merged.size());
  for (const auto& h : merged) out.push_back({h.id(), static_cast<double>(h.score), 0});
  assign_ranks(out);
  return out;
}

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw Error("cosine of vectors with different dimensions");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

}  // namespace cqr::dense
