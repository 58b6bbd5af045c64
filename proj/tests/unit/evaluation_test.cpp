// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <sstream>

#include "cqr/error.hpp"
#include "cqr/evaluation.hpp"
#include "test_support.hpp"

using namespace cqr;

namespace {

std::vector<ScoredDoc> ranking(std::initializer_list<const char*> ids) {
  std::vector<ScoredDoc> out;
  double s = 100;
  for (const char* id : ids) out.push_back({id, s--, 0});
  assign_ranks(out);
  return out;
}

// Straight from the definitions, no shared code with the library.
MetricMap oracle(const std::vector<ScoredDoc>& ranked, const std::map<std::string, int>& judged) {
  std::vector<std::string> rel;
  for (const auto& [d, g] : judged)
    if (g > 0) rel.push_back(d);
  auto is_rel = [&](const std::string& d) { return std::find(rel.begin(), rel.end(), d) != rel.end(); };
  MetricMap m;
  m["MRR"] = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (is_rel(ranked[i].passage_id)) {
      m["MRR"] = 1.0 / (i + 1);
      break;
    }
  }
  double ap = 0;
  for (const auto& r : rel) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].passage_id != r) continue;
      int above = 0;
      for (std::size_t j = 0; j <= i; ++j) above += is_rel(ranked[j].passage_id);
      ap += static_cast<double>(above) / (i + 1);
    }
  }
  m["MAP"] = ap / rel.size();
  for (int k : {5, 10, 20, 30, 100}) {
    int found = 0;
    for (const auto& r : rel)
      for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(k); ++i)
        found += ranked[i].passage_id == r;
    m["R@" + std::to_string(k)] = static_cast<double>(found) / rel.size();
  }
  std::vector<int> grades;
  for (const auto& [d, g] : judged)
    if (g > 0) grades.push_back(g);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double dcg = 0, idcg = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (i < ranked.size()) {
      auto it = judged.find(ranked[i].passage_id);
      if (it != judged.end()) dcg += it->second / std::log2(i + 2.0);
    }
    if (i < grades.size()) idcg += grades[i] / std::log2(i + 2.0);
  }
  m["NDCG@3"] = dcg / idcg;
  return m;
}

RunFile parse(const std::string& s) {
  std::istringstream in(s);
  return parse_run(in, "t");
}

}  // namespace

TEST(Metrics, PerfectRanking) {
  auto m = score_ranking(ranking({"a", "b", "c"}), {{"a", 1}}, {});
  EXPECT_EQ(m.at("MRR"), 1.0);
  EXPECT_EQ(m.at("MAP"), 1.0);
  EXPECT_EQ(m.at("R@5"), 1.0);
  EXPECT_EQ(m.at("NDCG@3"), 1.0);
}

TEST(Metrics, ThreeQueriesRanksOneFourNone) {
  RunFile run;
  run.entries["q1"] = ranking({"r1", "x", "y", "z"});
  run.entries["q2"] = ranking({"x", "y", "z", "r2"});
  run.entries["q3"] = ranking({"x", "y", "z", "w"});
  Qrels qrels;
  qrels.set("q1", "r1", 1);
  qrels.set("q2", "r2", 1);
  qrels.set("q3", "r3", 1);
  auto rep = evaluate_run(run, qrels);
  const auto& all = rep.aggregate.at(kAllSubset);
  EXPECT_NEAR(all.at("MRR"), 5.0 / 12.0, 1e-12);
  EXPECT_NEAR(all.at("MAP"), 5.0 / 12.0, 1e-12);
  EXPECT_NEAR(all.at("R@10"), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(all.at("MRR"), 0.41667, 5e-6);
}

TEST(Metrics, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> docs;
    for (int i = 0; i < 60; ++i) docs.push_back("d" + std::to_string(i));
    std::shuffle(docs.begin(), docs.end(), rng);
    const std::size_t len = rng() % 60;
    std::vector<ScoredDoc> ranked;
    for (std::size_t i = 0; i < len; ++i) ranked.push_back({docs[i], 100.0 - i, 0});
    assign_ranks(ranked);
    std::map<std::string, int> judged;
    const int n_rel = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < n_rel; ++i) judged["d" + std::to_string(rng() % 60)] = 1 + static_cast<int>(rng() % 3);
    judged["d" + std::to_string(rng() % 60)] = 0;
    bool any = false;
    for (auto& [d, g] : judged) any |= g > 0;
    if (!any) continue;
    auto got = score_ranking(ranked, judged, {});
    auto want = oracle(ranked, judged);
    for (const auto& [name, v] : want) EXPECT_NEAR(got.at(name), v, 1e-9) << name;
  }
}

TEST(Metrics, RecallIsMonotoneInCutoff) {
  auto m = score_ranking(ranking({"x", "a", "y", "z", "w", "v", "b"}), {{"a", 1}, {"b", 1}, {"c", 1}}, {});
  EXPECT_LE(m.at("R@5"), m.at("R@10"));
  EXPECT_LE(m.at("R@10"), m.at("R@20"));
  EXPECT_NEAR(m.at("R@5"), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.at("R@10"), 2.0 / 3.0, 1e-12);
}

TEST(Metrics, UniverseScoresMissingQueriesAsZero) {
  RunFile run;
  run.entries["q1"] = ranking({"a"});
  run.entries["q9"] = ranking({"a"});
  Qrels qrels;
  qrels.set("q1", "a", 1);
  qrels.set("q2", "a", 1);
  MetricConfig cfg;
  cfg.query_universe = std::set<std::string>{"q1", "q2"};
  auto rep = evaluate_run(run, qrels, cfg);
  EXPECT_EQ(rep.query_counts.at(kAllSubset), 2u);
  EXPECT_EQ(rep.aggregate.at(kAllSubset).at("MRR"), 0.5);
  EXPECT_EQ(rep.missing_from_run, std::vector<std::string>{"q2"});
  EXPECT_EQ(rep.excluded_not_in_qrels, std::vector<std::string>{"q9"});

  auto plain = evaluate_run(run, qrels);
  EXPECT_EQ(plain.aggregate.at(kAllSubset).at("MRR"), 1.0);
}

TEST(Metrics, AllIsCountWeightedMeanOfSubsets) {
  RunFile run;
  Qrels qrels;
  std::map<std::string, std::string> subset;
  std::mt19937_64 rng(5);
  const char* names[] = {"QuAC", "NQ", "TREC"};
  for (int q = 0; q < 40; ++q) {
    const auto qid = "q" + std::to_string(q);
    run.entries[qid] = ranking({"a", "b", "c", "d"});
    qrels.set(qid, std::string(1, static_cast<char>('a' + rng() % 6)), 1);
    subset[qid] = names[rng() % 3];
  }
  auto rep = evaluate_run(run, qrels, {}, subset);
  for (const auto& metric : metric_names({})) {
    double total = 0;
    std::size_t n = 0;
    for (const char* s : names) {
      total += rep.aggregate.at(s).at(metric) * rep.query_counts.at(s);
      n += rep.query_counts.at(s);
    }
    EXPECT_EQ(n, 40u);
    EXPECT_NEAR(rep.aggregate.at(kAllSubset).at(metric), total / n, 1e-12) << metric;
  }
}

TEST(RunFiles, ParseErrorsNameTheLine) {
  try {
    parse("q1 Q0 a 1 2.0 t\nq1 Q0 b 3 1.0 t\n");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse("q1 Q0 a 1 2.0 t\nq1 Q0 a 2 1.0 t\n"), InputError);
  EXPECT_THROW(parse("q1 Q0 a 1 2.0 t\nq1 Q0 b 2 3.0 t\n"), InputError);
  EXPECT_THROW(parse("q1 Q0 a 1 t\n"), InputError);
  EXPECT_THROW(parse("q1 Q0 a one 2.0 t\n"), InputError);
}

TEST(RunFiles, RoundTrip) {
  cqr::testing::TempDir dir;
  RunFile run;
  run.tag = "bm25";
  run.entries["q1"] = {{"a", 0.1 + 0.2, 1}, {"b", 1.0 / 3.0, 2}};
  run.entries["q2"] = {{"c", -1.5, 1}};
  std::swap(run.entries["q1"][0].score, run.entries["q1"][1].score);
  write_run(dir / "r.trec", run);
  EXPECT_EQ(read_run(dir / "r.trec"), run);

  Qrels q;
  q.set("q1", "a", 2);
  q.set("q2", "c", 0);
  write_qrels(dir / "q.txt", q);
  auto back = read_qrels(dir / "q.txt");
  EXPECT_EQ(back.grade("q1", "a"), 2);
  EXPECT_FALSE(back.has_relevant("q2"));
  write_file(dir / "q.json", R"({"q1": {"a": 1}})");
  EXPECT_EQ(read_qrels(dir / "q.json").relevant("q1"), std::vector<std::string>{"a"});
}

TEST(WinTie, HandComputedCase) {
  // Reciprocal ranks: A = (1, 1/2, 0), B = (1/2, 1/2, 1).
  RunFile a, b;
  a.entries["q1"] = ranking({"r"});
  a.entries["q2"] = ranking({"x", "r"});
  a.entries["q3"] = ranking({"x"});
  b.entries["q1"] = ranking({"x", "r"});
  b.entries["q2"] = ranking({"y", "r"});
  b.entries["q3"] = ranking({"r"});
  Qrels qrels;
  for (const char* q : {"q1", "q2", "q3"}) qrels.set(q, "r", 1);
  auto wt = pairwise_win_tie(a, b, qrels);
  EXPECT_EQ(wt.wins, 1u);
  EXPECT_EQ(wt.ties, 1u);
  EXPECT_EQ(wt.losses, 1u);
  EXPECT_DOUBLE_EQ(wt.win, 1.0 / 3.0);
  EXPECT_EQ(wt.win + wt.loss + wt.tie, 1.0);

  auto rev = pairwise_win_tie(b, a, qrels);
  EXPECT_EQ(rev.win, wt.loss);
  EXPECT_EQ(rev.loss, wt.win);
}

TEST(WinTie, DifferentQuerySetsAreRejected) {
  RunFile a, b;
  a.entries["q1"] = ranking({"r"});
  b.entries["q2"] = ranking({"r"});
  Qrels qrels;
  qrels.set("q1", "r", 1);
  qrels.set("q2", "r", 1);
  try {
    pairwise_win_tie(a, b, qrels);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("q1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("q2"), std::string::npos);
  }
}

TEST(Table, ShowsSubsetBlocks) {
  RunFile run;
  run.entries["q1"] = ranking({"a"});
  Qrels qrels;
  qrels.set("q1", "a", 1);
  auto rep = evaluate_run(run, qrels, {}, {{"q1", "QuAC"}});
  auto table = render_metric_table({{"Original", rep}});
  EXPECT_NE(table.find("QReCC (1)"), std::string::npos);
  EXPECT_NE(table.find("QuAC-Conv (1)"), std::string::npos);
  EXPECT_EQ(table.find("TREC-Conv"), std::string::npos);
  EXPECT_NE(table.find("Original"), std::string::npos);
  auto back = MetricReport::from_json(rep.to_json());
  EXPECT_EQ(back.aggregate, rep.aggregate);
}
