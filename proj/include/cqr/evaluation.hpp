// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cqr/scored_doc.hpp"
#include "cqr/util.hpp"

namespace cqr {

/// TREC run: query id -> ranked documents (rank 1 first).
struct RunFile {
  std::string tag = "cqr";
  std::map<std::string, std::vector<ScoredDoc>> entries;

  bool operator==(const RunFile&) const = default;
};

/// Six-column "qid Q0 docid rank score tag" lines. Ranks must run 1, 2, ...
/// per query in line order and scores must not increase.
RunFile parse_run(std::istream& in, const std::string& source_name = "<run>");
RunFile read_run(const std::filesystem::path& path);
void write_run(std::ostream& out, const RunFile& run);
void write_run(const std::filesystem::path& path, const RunFile& run);

class Qrels {
 public:
  void set(const std::string& qid, const std::string& docid, int grade);
  /// Grade of a judged document, 0 when unjudged.
  int grade(const std::string& qid, const std::string& docid) const;
  /// Sorted ids with grade >= 1.
  std::vector<std::string> relevant(const std::string& qid) const;
  bool has_relevant(const std::string& qid) const;
  const std::map<std::string, int>* judgments(const std::string& qid) const;
  const std::map<std::string, std::map<std::string, int>>& all() const { return judgments_; }
  bool empty() const { return judgments_.empty(); }

 private:
  std::map<std::string, std::map<std::string, int>> judgments_;
};

/// "qid 0 docid grade" lines.
Qrels parse_qrels(std::istream& in, const std::string& source_name = "<qrels>");
/// TREC text format, or a JSON object {qid: {docid: grade}} when the file starts with '{'.
Qrels read_qrels(const std::filesystem::path& path);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

using MetricMap = std::map<std::string, double>;

struct MetricConfig {
  std::vector<int> recall_cutoffs{5, 10, 20, 30, 100};
  int ndcg_cutoff = 3;
  /// When set, these are the evaluated queries: any of them with relevant
  /// judgments but absent from the run scores zero on every metric.
  /// When unset, only queries present in the run are evaluated.
  std::optional<std::set<std::string>> query_universe;
};

/// Metric names in report order: MRR, MAP, R@k..., NDCG@k.
std::vector<std::string> metric_names(const MetricConfig& config);

/// Per-query metrics of one ranked list against one query's judgments.
MetricMap score_ranking(const std::vector<ScoredDoc>& ranking, const std::map<std::string, int>& judged,
                        const MetricConfig& config);

inline const std::string kAllSubset = "ALL";

struct MetricReport {
  std::map<std::string, MetricMap> per_query;
  std::map<std::string, MetricMap> aggregate;  // subset -> mean metrics; always has "ALL"
  std::map<std::string, std::size_t> query_counts;
  std::vector<std::string> excluded_not_in_qrels;  // run queries without relevant judgments
  std::vector<std::string> missing_from_run;       // universe queries scored as zero

  json to_json() const;
  static MetricReport from_json(const json& j);
};

/// `subset_of` maps query id -> subset name for per-subset aggregates.
MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const MetricConfig& config = {},
                          const std::map<std::string, std::string>& subset_of = {});

struct WinTie {
  double win = 0.0;
  double tie = 0.0;  // 1 - (win + loss), so (win + loss) + tie == 1 exactly
  double loss = 0.0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;
  std::size_t queries = 0;
};

/// Per-query reciprocal-rank comparison of A against B over their common,
/// judged queries. Throws InputError if the judged query sets differ.
WinTie pairwise_win_tie(const RunFile& a, const RunFile& b, const Qrels& qrels);

/// Table with one row per named report and MRR/MAP/R@10 per subset block.
std::string render_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                                const std::vector<std::string>& metrics = {"MRR", "MAP", "R@10"});

}  // namespace cqr
