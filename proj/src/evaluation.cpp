// SPDX-License-Identifier: Apache-2.0
#include "cqr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "cqr/error.hpp"

namespace cqr {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

RunFile parse_run(std::istream& in, const std::string& source_name) {
  RunFile run;
  bool tag_set = false;
  std::map<std::string, std::unordered_set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = source_name + ": line " + std::to_string(line_no);
    const auto cols = split_ws(line);
    if (cols.size() != 6) throw InputError(where + ": expected 6 columns, got " + std::to_string(cols.size()));
    const std::string& qid = cols[0];
    const std::string& docid = cols[2];
    int rank = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      rank = std::stoi(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument("rank");
      score = std::stod(cols[4], &used);
      if (used != cols[4].size()) throw std::invalid_argument("score");
    } catch (const std::exception&) {
      throw InputError(where + ": non-numeric rank or score");
    }
    if (!std::isfinite(score)) throw InputError(where + ": non-finite score");
    auto& docs = run.entries[qid];
    if (rank != static_cast<int>(docs.size()) + 1) {
      throw InputError(where + ": rank " + std::to_string(rank) + " where " +
                       std::to_string(docs.size() + 1) + " expected");
    }
    if (!docs.empty() && score > docs.back().score) {
      throw InputError(where + ": score increases with rank");
    }
    if (!seen[qid].insert(docid).second) {
      throw InputError(where + ": duplicate document " + docid + " for query " + qid);
    }
    docs.push_back({docid, score, rank});
    if (!tag_set) {
      run.tag = cols[5];
      tag_set = true;
    }
  }
  return run;
}

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_run(in, path.string());
}

void write_run(std::ostream& out, const RunFile& run) {
  // %.17g keeps doubles round-trippable.
  char buf[64];
  for (const auto& [qid, docs] : run.entries) {
    for (const auto& d : docs) {
      std::snprintf(buf, sizeof buf, "%.17g", d.score);
      out << qid << " Q0 " << d.passage_id << ' ' << d.rank << ' ' << buf << ' ' << run.tag << '\n';
    }
  }
}

void write_run(const std::filesystem::path& path, const RunFile& run) {
  std::ostringstream ss;
  write_run(ss, run);
  write_file(path, ss.str());
}

void Qrels::set(const std::string& qid, const std::string& docid, int grade) {
  if (grade < 0) throw InputError("negative grade for " + qid + "/" + docid);
  judgments_[qid][docid] = grade;
}

int Qrels::grade(const std::string& qid, const std::string& docid) const {
  auto q = judgments_.find(qid);
  if (q == judgments_.end()) return 0;
  auto d = q->second.find(docid);
  return d == q->second.end() ? 0 : d->second;
}

std::vector<std::string> Qrels::relevant(const std::string& qid) const {
  std::vector<std::string> out;
  if (const auto* j = judgments(qid)) {
    for (const auto& [doc, g] : *j) {
      if (g >= 1) out.push_back(doc);
    }
  }
  return out;
}

bool Qrels::has_relevant(const std::string& qid) const {
  if (const auto* j = judgments(qid)) {
    return std::any_of(j->begin(), j->end(), [](const auto& kv) { return kv.second >= 1; });
  }
  return false;
}

const std::map<std::string, int>* Qrels::judgments(const std::string& qid) const {
  auto it = judgments_.find(qid);
  return it == judgments_.end() ? nullptr : &it->second;
}

Qrels parse_qrels(std::istream& in, const std::string& source_name) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = source_name + ": line " + std::to_string(line_no);
    const auto cols = split_ws(line);
    if (cols.size() != 4) throw InputError(where + ": expected 4 columns");
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument("grade");
    } catch (const std::exception&) {
      throw InputError(where + ": non-integer grade");
    }
    if (grade < 0) throw InputError(where + ": negative grade");
    qrels.set(cols[0], cols[2], grade);
  }
  return qrels;
}

Qrels read_qrels(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') {
    Qrels qrels;
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + ": malformed JSON qrels (" + e.what() + ")");
    }
    for (const auto& [qid, docs] : doc.items()) {
      for (const auto& [docid, grade] : docs.items()) qrels.set(qid, docid, grade.get<int>());
    }
    return qrels;
  }
  std::istringstream ss(text);
  return parse_qrels(ss, path.string());
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  std::ostringstream ss;
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [docid, grade] : docs) ss << qid << " 0 " << docid << ' ' << grade << '\n';
  }
  write_file(path, ss.str());
}

std::vector<std::string> metric_names(const MetricConfig& config) {
  std::vector<std::string> names{"MRR", "MAP"};
  for (int k : config.recall_cutoffs) names.push_back("R@" + std::to_string(k));
  names.push_back("NDCG@" + std::to_string(config.ndcg_cutoff));
  return names;
}

MetricMap score_ranking(const std::vector<ScoredDoc>& ranking, const std::map<std::string, int>& judged,
                        const MetricConfig& config) {
  std::size_t num_relevant = 0;
  std::vector<int> ideal;
  for (const auto& [doc, g] : judged) {
    if (g >= 1) {
      ++num_relevant;
      ideal.push_back(g);
    }
  }
  std::sort(ideal.rbegin(), ideal.rend());

  MetricMap m;
  double rr = 0.0;
  double ap_sum = 0.0;
  std::size_t hits = 0;
  std::vector<std::size_t> hits_at_rank(ranking.size() + 1, 0);  // hits within the first r docs
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const std::size_t rank = i + 1;
    auto it = judged.find(ranking[i].passage_id);
    const int g = it == judged.end() ? 0 : it->second;
    if (g >= 1) {
      ++hits;
      if (rr == 0.0) rr = 1.0 / static_cast<double>(rank);
      ap_sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
    if (rank <= static_cast<std::size_t>(config.ndcg_cutoff) && g > 0) {
      dcg += g / std::log2(static_cast<double>(rank) + 1.0);
    }
    hits_at_rank[rank] = hits;
  }

  const double denom = static_cast<double>(num_relevant);
  m["MRR"] = rr;
  m["MAP"] = num_relevant == 0 ? 0.0 : ap_sum / denom;
  for (int k : config.recall_cutoffs) {
    const std::size_t upto = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
    m["R@" + std::to_string(k)] = num_relevant == 0 ? 0.0 : hits_at_rank[upto] / denom;
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size() && i < static_cast<std::size_t>(config.ndcg_cutoff); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i + 1) + 1.0);
  }
  m["NDCG@" + std::to_string(config.ndcg_cutoff)] = idcg > 0.0 ? dcg / idcg : 0.0;
  return m;
}

MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const MetricConfig& config,
                          const std::map<std::string, std::string>& subset_of) {
  MetricReport report;
  const auto names = metric_names(config);
  static const std::vector<ScoredDoc> kEmpty;

  std::vector<std::string> evaluated;
  if (config.query_universe) {
    for (const auto& qid : *config.query_universe) {
      if (!qrels.has_relevant(qid)) continue;
      evaluated.push_back(qid);
      if (!run.entries.count(qid)) report.missing_from_run.push_back(qid);
    }
    for (const auto& [qid, docs] : run.entries) {
      if (!config.query_universe->count(qid) || !qrels.has_relevant(qid)) {
        report.excluded_not_in_qrels.push_back(qid);
      }
    }
  } else {
    for (const auto& [qid, docs] : run.entries) {
      if (qrels.has_relevant(qid)) {
        evaluated.push_back(qid);
      } else {
        report.excluded_not_in_qrels.push_back(qid);
      }
    }
  }

  std::map<std::string, MetricMap> sums;
  for (const auto& qid : evaluated) {
    auto it = run.entries.find(qid);
    const auto& ranking = it == run.entries.end() ? kEmpty : it->second;
    MetricMap m = score_ranking(ranking, *qrels.judgments(qid), config);

    std::vector<std::string> groups{kAllSubset};
    if (auto s = subset_of.find(qid); s != subset_of.end() && s->second != kAllSubset) {
      groups.push_back(s->second);
    }
    for (const auto& g : groups) {
      ++report.query_counts[g];
      for (const auto& name : names) sums[g][name] += m[name];
    }
    report.per_query.emplace(qid, std::move(m));
  }

  report.query_counts.try_emplace(kAllSubset, 0);
  for (const auto& [group, count] : report.query_counts) {
    MetricMap mean;
    for (const auto& name : names) {
      mean[name] = count == 0 ? 0.0 : sums[group][name] / static_cast<double>(count);
    }
    report.aggregate[group] = std::move(mean);
  }
  return report;
}

json MetricReport::to_json() const {
  return json{{"aggregate", aggregate},
              {"query_counts", query_counts},
              {"per_query", per_query},
              {"excluded_not_in_qrels", excluded_not_in_qrels},
              {"missing_from_run", missing_from_run}};
}

MetricReport MetricReport::from_json(const json& j) {
  MetricReport r;
  r.aggregate = j.at("aggregate").get<std::map<std::string, MetricMap>>();
  r.query_counts = j.at("query_counts").get<std::map<std::string, std::size_t>>();
  r.per_query = j.value("per_query", std::map<std::string, MetricMap>{});
  r.excluded_not_in_qrels = j.value("excluded_not_in_qrels", std::vector<std::string>{});
  r.missing_from_run = j.value("missing_from_run", std::vector<std::string>{});
  return r;
}

namespace {

std::map<std::string, double> reciprocal_ranks(const RunFile& run, const Qrels& qrels) {
  std::map<std::string, double> out;
  for (const auto& [qid, docs] : run.entries) {
    if (!qrels.has_relevant(qid)) continue;
    double rr = 0.0;
    for (const auto& d : docs) {
      if (qrels.grade(qid, d.passage_id) >= 1) {
        rr = 1.0 / static_cast<double>(d.rank);
        break;
      }
    }
    out[qid] = rr;
  }
  return out;
}

}  // namespace

WinTie pairwise_win_tie(const RunFile& a, const RunFile& b, const Qrels& qrels) {
  const auto rr_a = reciprocal_ranks(a, qrels);
  const auto rr_b = reciprocal_ranks(b, qrels);

  std::vector<std::string> only_a, only_b;
  for (const auto& [q, v] : rr_a) {
    if (!rr_b.count(q)) only_a.push_back(q);
  }
  for (const auto& [q, v] : rr_b) {
    if (!rr_a.count(q)) only_b.push_back(q);
  }
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "query sets differ;";
    auto list = [&](const char* label, const std::vector<std::string>& qs) {
      if (qs.empty()) return;
      msg += std::string(" only in ") + label + ":";
      for (std::size_t i = 0; i < qs.size() && i < 20; ++i) msg += " " + qs[i];
      if (qs.size() > 20) msg += " ... (" + std::to_string(qs.size()) + " total)";
    };
    list("A", only_a);
    list("B", only_b);
    throw InputError(msg);
  }

  WinTie out;
  for (const auto& [q, ra] : rr_a) {
    const double rb = rr_b.at(q);
    if (ra > rb) {
      ++out.wins;
    } else if (ra < rb) {
      ++out.losses;
    } else {
      ++out.ties;
    }
  }
  out.queries = rr_a.size();
  if (out.queries > 0) {
    const double n = static_cast<double>(out.queries);
    out.win = static_cast<double>(out.wins) / n;
    out.loss = static_cast<double>(out.losses) / n;
    out.tie = 1.0 - (out.win + out.loss);
  }
  return out;
}

std::string render_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows,
                                const std::vector<std::string>& metrics) {
  static const std::vector<std::pair<std::string, std::string>> kBlocks{
      {kAllSubset, "QReCC"}, {"QuAC", "QuAC-Conv"}, {"NQ", "NQ-Conv"}, {"TREC", "TREC-Conv"}};
  std::size_t name_w = 5;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  constexpr int kCol = 8;
  const std::size_t block_w = metrics.size() * kCol;

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "Query";
  for (const auto& [key, label] : kBlocks) {
    std::string head = " " + label;
    bool any = std::any_of(rows.begin(), rows.end(), [&](const auto& row) {
      return row.second.query_counts.count(key) && row.second.query_counts.at(key) > 0;
    });
    if (!any) continue;
    std::size_t n = 0;
    for (const auto& row : rows) {
      if (auto it = row.second.query_counts.find(key); it != row.second.query_counts.end()) {
        n = std::max(n, it->second);
      }
    }
    head += " (" + std::to_string(n) + ")";
    out << " | " << std::setw(static_cast<int>(block_w)) << head;
  }
  out << '\n' << std::string(name_w, ' ');
  for (const auto& [key, label] : kBlocks) {
    bool any = std::any_of(rows.begin(), rows.end(), [&](const auto& row) {
      return row.second.query_counts.count(key) && row.second.query_counts.at(key) > 0;
    });
    if (!any) continue;
    out << " | ";
    for (const auto& m : metrics) out << std::right << std::setw(kCol) << m;
  }
  out << '\n';
  for (const auto& [name, report] : rows) {
    out << std::left << std::setw(static_cast<int>(name_w)) << name;
    for (const auto& [key, label] : kBlocks) {
      bool any = std::any_of(rows.begin(), rows.end(), [&](const auto& row) {
        return row.second.query_counts.count(key) && row.second.query_counts.at(key) > 0;
      });
      if (!any) continue;
      out << " | ";
      auto it = report.aggregate.find(key);
      for (const auto& m : metrics) {
        out << std::right << std::setw(kCol);
        if (it == report.aggregate.end() || !it->second.count(m)) {
          out << "-";
        } else {
          std::ostringstream cell;
          cell << std::fixed << std::setprecision(2) << 100.0 * it->second.at(m);
          out << cell.str();
        }
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cqr
