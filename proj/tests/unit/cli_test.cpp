// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "cqr/cli.hpp"
#include "cqr/evaluation.hpp"
#include "cqr/rewriter.hpp"
#include "test_support.hpp"

using namespace cqr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cqr_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string mini(const std::string& f) { return cqr::testing::bundled_data("mini/" + f).string(); }

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(cqr_run({"prepare", "--dataset", mini("conversations.json"), "--qrels", mini("qrels.txt"), "--out",
                       p("tasks.jsonl")})
                  .code,
              0);
    ASSERT_EQ(cqr_run({"index-sparse", "--passages", mini("passages.jsonl"), "--out", p("bm25.idx")}).code, 0);
  }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  cqr::testing::TempDir dir_;
};

}  // namespace

TEST(CliBasics, UsageAndVersion) {
  EXPECT_EQ(cqr_run({}).code, cli::kUsage);
  EXPECT_EQ(cqr_run({"frobnicate"}).code, cli::kUsage);
  auto v = cqr_run({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(std::string(cli::kVersion)), std::string::npos);
  EXPECT_EQ(cqr_run({"evaluate", "--run", "/nonexistent", "--qrels", "/nonexistent", "--out", "/tmp/x"}).code,
            cli::kInputError);
}

TEST(CliConfig, RejectsKeysAndUnknownSections) {
  cqr::testing::TempDir dir;
  write_file(dir / "a.json", R"({"llm": {"api_key": "sk-secret"}})");
  EXPECT_THROW(cli::load_config(dir / "a.json"), std::exception);
  write_file(dir / "b.json", R"({"bogus": {}})");
  EXPECT_THROW(cli::load_config(dir / "b.json"), std::exception);
  write_file(dir / "c.json", R"({"retrieval": {"k": 10}})");
  auto cfg = cli::load_config(dir / "c.json");
  EXPECT_EQ(cfg["retrieval"]["k"], 10);
  EXPECT_EQ(cfg["retrieval"]["shards"], cli::default_config()["retrieval"]["shards"]);
  EXPECT_FALSE(cli::default_config()["llm"].contains("api_key"));
}

TEST_F(Pipeline, OriginalRewritesSearchAndEvaluate) {
  ASSERT_EQ(cqr_run({"rewrite", "--method", "original", "--tasks", p("tasks.jsonl"), "--out", p("orig.jsonl")}).code, 0);
  auto r = cqr_run({"search", "--retriever", "sparse", "--index", p("bm25.idx"), "--queries", p("orig.jsonl"), "--out",
                    p("orig.trec"), "--k", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto run = read_run(p("orig.trec"));
  EXPECT_EQ(run.entries.size(), 29u);
  for (const auto& [q, docs] : run.entries) EXPECT_LE(docs.size(), 5u);

  r = cqr_run({"evaluate", "--run", p("orig.trec"), "--qrels", mini("qrels.txt"), "--tasks", p("tasks.jsonl"), "--out",
               p("orig.eval.json"), "--table", p("orig.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = MetricReport::from_json(json::parse(read_file(p("orig.eval.json"))));
  EXPECT_EQ(rep.query_counts.at(kAllSubset), 29u);
  EXPECT_TRUE(fs::exists(p("orig.eval.json.manifest.json")));
  const auto manifest = json::parse(read_file(p("orig.eval.json.manifest.json")));
  EXPECT_EQ(manifest["command"], "evaluate");
  EXPECT_EQ(manifest["inputs"]["run"]["sha256"], sha256_hex(read_file(p("orig.trec"))));
}

TEST_F(Pipeline, MockedFewShotRewritesBeatOriginal) {
  auto r = cqr_run({"mock-script", "--tasks", p("tasks.jsonl"), "--method", "rw-fsl", "--responses",
                    mini("responses_rw_fsl.jsonl"), "--out", p("mock.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = cqr_run({"rewrite", "--method", "rw-fsl", "--tasks", p("tasks.jsonl"), "--out", p("rw.jsonl"),
               "--mock-transcript", p("mock.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto recs = rewriter::read_rewrites(p("rw.jsonl"));
  ASSERT_EQ(recs.size(), 29u);
  for (const auto& rec : recs) {
    EXPECT_FALSE(rec.flag.has_value()) << rec.query_id();
    EXPECT_EQ(rec.rewrite.rfind("Rewrite:", 0), std::string::npos);
  }
  ASSERT_EQ(cqr_run({"rewrite", "--method", "original", "--tasks", p("tasks.jsonl"), "--out", p("orig.jsonl")}).code, 0);
  for (const char* m : {"rw", "orig"}) {
    const std::string s = m;
    ASSERT_EQ(cqr_run({"search", "--retriever", "sparse", "--index", p("bm25.idx"), "--queries", p(s + ".jsonl"),
                       "--out", p(s + ".trec")})
                  .code,
              0);
  }
  r = cqr_run({"compare", "--run-a", p("rw.trec"), "--run-b", p("orig.trec"), "--qrels", mini("qrels.txt"), "--out",
               p("cmp.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cmp = json::parse(read_file(p("cmp.json")));
  EXPECT_GT(cmp["win"].get<double>(), cmp["loss"].get<double>());
}

TEST_F(Pipeline, DenseSearchRespectsK) {
  auto r = cqr_run({"embed", "--passages", mini("passages.jsonl"), "--out", p("dense"), "--dimension", "64"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(cqr_run({"rewrite", "--method", "human", "--tasks", p("tasks.jsonl"), "--out", p("h.jsonl")}).code, 0);
  r = cqr_run({"search", "--retriever", "dense", "--index", p("dense"), "--queries", p("h.jsonl"), "--out",
               p("h.trec"), "--dimension", "64", "--k", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& [q, docs] : read_run(p("h.trec")).entries) EXPECT_EQ(docs.size(), 100u);
  EXPECT_EQ(cqr_run({"search", "--retriever", "dense", "--index", p("dense"), "--queries", p("h.jsonl"), "--out",
                     p("bad.trec"), "--dimension", "32"})
                .code,
            cli::kInputError);
}

TEST_F(Pipeline, AblationRecordsTheInstruction) {
  auto r = cqr_run({"ablate", "--drop", "informativeness", "--out", p("instr.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(read_file(p("instr.json")));
  EXPECT_EQ(j.dump().find("as informative as possible"), std::string::npos);
  EXPECT_TRUE(fs::exists(p("instr.json.manifest.json")));
  EXPECT_EQ(cqr_run({"ablate", "--drop", "brevity", "--out", p("x.json")}).code, cli::kInputError);
}

TEST_F(Pipeline, BadOverrideIsUsageError) {
  EXPECT_EQ(cqr_run({"search", "--retriever", "sparse", "--index", p("bm25.idx"), "--queries", p("none.jsonl"), "--out",
                     p("x.trec"), "--k", "ten"})
                .code,
            cli::kUsage);
}

TEST_F(Pipeline, DistillExportWritesBothSplits) {
  auto r = cqr_run({"export-distill", "--train-tasks", p("tasks.jsonl"), "--label-source", "human", "--n-train", "10",
                    "--n-dev", "5", "--train-out", p("train.jsonl"), "--dev-out", p("dev.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t n = 0;
  for_each_jsonl(p("train.jsonl"), [&](std::size_t, const json& j) {
    ++n;
    EXPECT_EQ(j["input"].get<std::string>().rfind("<Que> ", 0), 0u);
  });
  EXPECT_EQ(n, 10u);
}
