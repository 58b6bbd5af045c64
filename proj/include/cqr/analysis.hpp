// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/corpus.hpp"
#include "cqr/rewriter.hpp"

namespace cqr::analysis {

/// Lowercase, ASCII punctuation removed, whitespace split.
std::vector<std::string> tokens(std::string_view text);

/// 100 * |set(human) ∩ set(rewrite)| / |set(human)|; nullopt when the human
/// side has no tokens.
std::optional<double> overlap_pct(std::string_view human, std::string_view rewrite);

/// Unigram F1 with clipped counts, in [0, 1]. 0 when either side is empty.
double rouge1(std::string_view candidate, std::string_view reference);

struct RewriteStats {
  std::string method;
  std::string subset;
  std::size_t records = 0;
  double avg_tokens = 0.0;
  std::optional<double> overlap_pct;
  /// Mean ROUGE-1 F1 against the human rewrite, scaled to 0-100 like OT.
  std::optional<double> rouge1;
  std::optional<double> mean_latency_ms;
  std::size_t overlap_records = 0;
};

json to_json(const RewriteStats& s);

/// Stats per (method, subset) plus a per-method "ALL" row. `humans` maps
/// query id to human rewrite; `subset_of` maps query id to its subset.
/// Throws InputError on an empty record list.
std::vector<RewriteStats> rewrite_stats(const std::vector<rewriter::RewriteRecord>& records,
                                        const rewriter::RewriteMap& humans,
                                        const std::map<std::string, corpus::Subset>& subset_of);

struct LatencyStats {
  std::string method;
  std::size_t timed = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;  // nearest rank
};

/// Only records carrying a latency count. Throws InputError when none do.
std::vector<LatencyStats> latency_stats(const std::vector<rewriter::RewriteRecord>& records);

json to_json(const LatencyStats& s);

/// Methods as rows, one AT/OT column pair per subset.
std::string render_stats_table(const std::vector<RewriteStats>& stats);
/// "<mean> (ms/q)" per method.
std::string render_latency_table(const std::vector<LatencyStats>& stats);

}  // namespace cqr::analysis
