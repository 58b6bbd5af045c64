// SPDX-License-Identifier: Apache-2.0
#include "cqr/error.hpp"
#include "cqr/rewriter.hpp"
#include "test_support.hpp"

using namespace cqr;
using namespace cqr::rewriter;

namespace {

corpus::RewriteTask task(const std::string& conv, int turn, const std::string& q,
                         std::optional<std::string> human = std::nullopt) {
  corpus::RewriteTask t;
  t.conversation_id = conv;
  t.turn_no = turn;
  t.question = q;
  t.human_rewrite = std::move(human);
  if (turn > 1) t.context.push_back({"Who is Keith Carradine?", "An American actor."});
  return t;
}

RewriterOptions options() {
  RewriterOptions o;
  o.demonstrations = prompting::load_demonstrations(cqr::testing::bundled_data("prompts/demonstrations.json"));
  o.workers = 3;
  return o;
}

std::shared_ptr<llm::LlmClient> client_for(std::shared_ptr<llm::MockTransport> mock) {
  llm::ClientConfig cfg;
  cfg.retry.max_attempts = 1;
  return std::make_shared<llm::LlmClient>(std::move(mock), cfg);
}

}  // namespace

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::Original, Method::Human, Method::RwZsl, Method::RwFsl, Method::EdSelf, Method::EdFile,
                   Method::Student}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_EQ(parse_method("RW-FSL"), Method::RwFsl);
  EXPECT_THROW(parse_method("gpt"), InputError);
  EXPECT_TRUE(needs_initials(Method::EdFile));
  EXPECT_FALSE(is_llm_method(Method::Student));
}

TEST(Baselines, OriginalAndHuman) {
  Rewriter rw(nullptr, {});
  std::vector<corpus::RewriteTask> tasks{task("c", 2, "Is he married?", "Is Keith Carradine married?"),
                                         task("c", 3, "Where?")};
  auto orig = rw.generate(Method::Original, tasks);
  EXPECT_EQ(orig.records[0].rewrite, "Is he married?");
  auto human = rw.generate(Method::Human, tasks);
  EXPECT_EQ(human.records[0].rewrite, "Is Keith Carradine married?");
  EXPECT_EQ(human.records[1].rewrite, "Where?");
  EXPECT_EQ(human.records[1].flag, "no_human_rewrite");
  EXPECT_FALSE(human.records[0].latency_ms.has_value());
  EXPECT_THROW(rw.generate(Method::RwFsl, tasks), Error);
  EXPECT_THROW(rw.generate(Method::Student, tasks), InputError);
}

TEST(Sanitize, StripsPreamblesLabelsAndQuotes) {
  EXPECT_EQ(sanitize_output("Sure! Here is the rewrite:\nWho won the 1998 final?"), "Who won the 1998 final?");
  EXPECT_EQ(sanitize_output("Rewrite: Who won?"), "Who won?");
  EXPECT_EQ(sanitize_output("  \"Who won?\"  \n"), "Who won?");
  EXPECT_EQ(sanitize_output("Edit: 'Who won?'"), "Who won?");
  EXPECT_EQ(sanitize_output("Okay, is it raining?"), "Okay, is it raining?");
  EXPECT_EQ(sanitize_output("Was Keith's film good?"), "Was Keith's film good?");
  EXPECT_THROW(sanitize_output(" \n\n "), Error);
  for (const char* s : {"Sure! Here is the rewrite:\nWho won the 1998 final?", "Rewrite: \"x y\"", "a\nb"}) {
    const auto once = sanitize_output(s);
    EXPECT_EQ(sanitize_output(once), once);
  }
}

TEST(Llm, RewriterThenEditorKeepsProvenance) {
  auto opts = options();
  auto mock = std::make_shared<llm::MockTransport>();
  Rewriter probe(nullptr, opts);
  const auto t = task("c", 2, "Is he married?");
  mock->script_prompt(probe.render(Method::RwFsl, t), "Rewrite: Is Keith married?");
  mock->script_prompt(probe.render(Method::EdSelf, t, "Is Keith married?"), "Is Keith Carradine married?");
  Rewriter rw(client_for(mock), opts);

  auto both = rewrite_then_edit(rw, {t});
  ASSERT_EQ(both.initial.records.size(), 1u);
  EXPECT_EQ(both.initial.records[0].rewrite, "Is Keith married?");
  const auto& ed = both.edited.records[0];
  EXPECT_EQ(ed.method, Method::EdSelf);
  EXPECT_EQ(ed.rewrite, "Is Keith Carradine married?");
  EXPECT_EQ(ed.initial_rewrite, "Is Keith married?");
  EXPECT_EQ(ed.prompt_hash, llm::prompt_hash(probe.render(Method::EdSelf, t, "Is Keith married?")));
  EXPECT_TRUE(ed.latency_ms.has_value());

  auto again = rw.generate(Method::EdSelf, {t});
  EXPECT_EQ(again.records[0].rewrite, ed.rewrite);
  EXPECT_FALSE(again.records[0].latency_ms.has_value());
}

TEST(Llm, FailedCallFallsBackToQuestion) {
  auto mock = std::make_shared<llm::MockTransport>();
  Rewriter rw(client_for(mock), options());
  auto res = rw.generate(Method::RwZsl, {task("c", 2, "Is he married?")});
  EXPECT_EQ(res.failures, 1u);
  EXPECT_EQ(res.records[0].rewrite, "Is he married?");
  ASSERT_TRUE(res.records[0].flag.has_value());
  EXPECT_EQ(res.records[0].flag->rfind("llm_error", 0), 0u);
}

TEST(Llm, EditFileNeedsEveryInitial) {
  auto mock = std::make_shared<llm::MockTransport>();
  Rewriter rw(client_for(mock), options());
  RewriteMap initials{{"c_2", "Is Keith married?"}};
  try {
    rw.generate(Method::EdFile, {task("c", 2, "Is he married?"), task("c", 3, "Kids?")}, &initials);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("c_3"), std::string::npos);
  }
  EXPECT_THROW(rw.generate(Method::EdFile, {task("c", 2, "x")}), InputError);
}

TEST(Records, FileRoundTripAndValidation) {
  cqr::testing::TempDir dir;
  std::vector<RewriteRecord> recs{{"c", 2, Method::EdSelf, "B", "A", 12.5, "h", std::nullopt},
                                  {"c", 3, Method::Student, "S", {}, {}, {}, {}}};
  write_rewrites(dir / "r.jsonl", recs);
  EXPECT_EQ(read_rewrites(dir / "r.jsonl"), recs);
  EXPECT_EQ(to_map(recs).at("c_3"), "S");

  write_file(dir / "student.jsonl",
             R"({"conversation_id": 7, "turn_no": 2, "method": "student", "rewrite": "Is Keith married?"})" "\n");
  auto st = read_rewrites(dir / "student.jsonl");
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].method, Method::Student);
  EXPECT_EQ(st[0].query_id(), "7_2");

  const std::string line = R"({"conversation_id":"c","turn_no":1,"method":"rw_fsl","rewrite":"x"})";
  write_file(dir / "dup.jsonl", line + "\n" + line + "\n");
  try {
    read_rewrites(dir / "dup.jsonl");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(record_from_json(json::parse(R"({"conversation_id":"c","turn_no":1,"method":"ed_file","rewrite":"x"})")),
               InputError);
  EXPECT_THROW(record_from_json(json::parse(R"({"conversation_id":"c","turn_no":1,"method":"rw_fsl","rewrite":" "})")),
               InputError);
}
