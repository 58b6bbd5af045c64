// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqr/corpus.hpp"
#include "cqr/scored_doc.hpp"
#include "cqr/text_analysis.hpp"

namespace cqr::sparse {

struct Bm25Params {
  double k1 = 0.82;
  double b = 0.68;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Immutable BM25 inverted index. Safe for concurrent searches.
///
/// score(d, q) = sum over analyzed query tokens t (as a multiset) of
///   idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * len(d) / avgdl))
/// idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
class Bm25Index {
 public:
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avg_doc_len() const noexcept { return avg_doc_len_; }
  std::uint32_t doc_len(std::uint32_t doc) const { return doc_lens_.at(doc); }
  const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
  const Bm25Params& params() const noexcept { return params_; }
  const text::Analyzer& analyzer() const noexcept { return analyzer_; }
  std::size_t term_count() const noexcept { return postings_.size(); }

  /// Postings of an analyzed term sorted by ordinal; empty if unindexed.
  const std::vector<Posting>& postings(std::string_view term) const;
  std::size_t doc_freq(std::string_view term) const { return postings(term).size(); }
  double idf(std::string_view term) const;

  /// Scores one document for already-analyzed query tokens.
  double score(std::uint32_t doc, const std::vector<std::string>& query_terms) const;

  /// Top-k documents with non-zero score, ordered by score desc then passage id asc.
  std::vector<ScoredDoc> search(std::string_view query, std::size_t k) const;
  std::vector<ScoredDoc> search_terms(const std::vector<std::string>& query_terms, std::size_t k) const;

  /// Versioned binary format, postings delta + varint encoded.
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

  bool operator==(const Bm25Index& other) const;

 private:
  friend class Bm25Builder;

  double term_weight(std::uint32_t tf, std::uint32_t doc_len, double idf) const;

  Bm25Params params_;
  text::Analyzer analyzer_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lens_;
  double avg_doc_len_ = 0.0;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::string> terms_;
  std::vector<std::vector<Posting>> postings_;
};

/// Streams passages into an index.
class Bm25Builder {
 public:
  explicit Bm25Builder(text::Analyzer analyzer = {}, Bm25Params params = {});

  /// Throws InputError on a duplicate passage id.
  void add(const corpus::Passage& passage);
  /// Throws InputError("empty collection") if nothing was added.
  Bm25Index finish() &&;

 private:
  Bm25Index index_;
  std::unordered_map<std::string, std::uint32_t> seen_;
};

Bm25Index build_index(const std::vector<corpus::Passage>& passages, const text::Analyzer& analyzer = {},
                      Bm25Params params = {});

}  // namespace cqr::sparse
