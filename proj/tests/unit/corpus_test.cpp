// SPDX-License-Identifier: Apache-2.0
#include "cqr/corpus.hpp"
#include "cqr/error.hpp"
#include "cqr/evaluation.hpp"
#include "test_support.hpp"

using namespace cqr;
using namespace cqr::corpus;
using cqr::testing::TempDir;

namespace {

json record(int conv, int turn, const std::string& q, const std::string& a, const std::string& rw,
            const std::string& source = "QuAC") {
  return {{"Conversation_no", conv}, {"Turn_no", turn}, {"Question", q},
          {"Answer", a},             {"Rewrite", rw},    {"Conversation_source", source}};
}

std::filesystem::path write_records(const TempDir& dir, const json& records) {
  auto p = dir / "conv.json";
  write_file(p, records.dump());
  return p;
}

}  // namespace

TEST(Subset, ParsesNames) {
  EXPECT_EQ(parse_subset("quac"), Subset::QuAC);
  EXPECT_EQ(parse_subset("QuAC-Conv"), Subset::QuAC);
  EXPECT_EQ(parse_subset("nq"), Subset::NQ);
  EXPECT_EQ(parse_subset("trec"), Subset::TREC);
  EXPECT_EQ(to_string(Subset::NQ), "NQ");
}

TEST(LoadConversations, GroupsAndOrdersTurns) {
  TempDir dir;
  json recs = json::array({record(1, 2, "Did she do well?", "Yes.", "Did Elizabeth Blackwell do well?"),
                           record(1, 1, "Who was Elizabeth Blackwell?", "A physician.", "Who was Elizabeth Blackwell?"),
                           record(2, 1, "What is decantation?", "A process.", "", "nq")});
  auto convs = load_conversations(write_records(dir, recs));
  ASSERT_EQ(convs.size(), 2u);
  EXPECT_EQ(convs[0].id, "1");
  EXPECT_EQ(convs[0].exchanges[0].turn_no, 1);
  EXPECT_EQ(convs[0].exchanges[1].question, "Did she do well?");
  EXPECT_EQ(convs[1].source, Subset::NQ);
  EXPECT_FALSE(convs[1].exchanges[0].human_rewrite.has_value());
  const auto turns = convs[0].turns();
  ASSERT_EQ(turns.size(), 4u);
  EXPECT_EQ(turns[0].role, Role::User);
  EXPECT_EQ(turns[1].role, Role::System);
}

TEST(LoadConversations, MissingFieldNamesRecord) {
  TempDir dir;
  json recs = json::array({record(1, 1, "q", "a", "r"), {{"Conversation_no", 1}, {"Turn_no", 2}}});
  try {
    load_conversations(write_records(dir, recs));
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1: missing field 'Question'"), std::string::npos) << e.what();
  }
}

TEST(LoadConversations, RejectsDuplicateTurn) {
  TempDir dir;
  json recs = json::array({record(1, 1, "q", "a", "r"), record(1, 1, "q2", "a", "r")});
  EXPECT_THROW(load_conversations(write_records(dir, recs)), InputError);
}

TEST(LoadConversations, SchemaMapAndSourceOverride) {
  TempDir dir;
  json recs = json::array({{{"cid", "c9"}, {"t", 1}, {"q", "hello?"}, {"ans", "hi"}}});
  SchemaMap schema;
  schema.conversation_id = "cid";
  schema.turn_no = "t";
  schema.question = "q";
  schema.answer = "ans";
  schema.source_override = Subset::TREC;
  auto convs = load_conversations(write_records(dir, recs), schema);
  ASSERT_EQ(convs.size(), 1u);
  EXPECT_EQ(convs[0].id, "c9");
  EXPECT_EQ(convs[0].source, Subset::TREC);
}

TEST(Preprocess, FirstQuestionReplacedAndCarriedInContext) {
  TempDir dir;
  json recs = json::array({record(1, 1, "Who was she?", "Elizabeth Blackwell was a physician.", "Who was Elizabeth Blackwell?"),
                           record(1, 2, "Where did she work?", "London.", "Where did Elizabeth Blackwell work?"),
                           record(1, 3, "Did she do well?", "Yes.", "Did Elizabeth Blackwell do well?")});
  auto tasks = preprocess_tasks(load_conversations(write_records(dir, recs)));
  ASSERT_EQ(tasks.size(), 3u);
  EXPECT_EQ(tasks[0].question, "Who was Elizabeth Blackwell?");
  EXPECT_TRUE(tasks[0].context.empty());
  EXPECT_EQ(tasks[1].question, "Where did she work?");
  ASSERT_EQ(tasks[2].context.size(), 2u);
  EXPECT_EQ(tasks[2].context[0].question, "Who was Elizabeth Blackwell?");
  EXPECT_EQ(tasks[2].context[1].answer, "London.");
  EXPECT_EQ(tasks[2].id(), "1_3");
  EXPECT_EQ(*tasks[2].human_rewrite, "Did Elizabeth Blackwell do well?");
}

TEST(Preprocess, FirstQuestionWithoutRewriteIsFlagged) {
  TempDir dir;
  json recs = json::array({record(4, 1, "What is it?", "A town.", "")});
  auto tasks = preprocess_tasks(load_conversations(write_records(dir, recs)));
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_TRUE(tasks[0].first_question_unreplaced);
  EXPECT_EQ(tasks[0].question, "What is it?");
}

TEST(Filter, KeepsOnlyJudgedTasksAndCountsSubsets) {
  TempDir dir;
  json recs = json::array({record(1, 1, "q1", "a", "r1"), record(1, 2, "q2", "a", "r2"),
                           record(2, 1, "q3", "a", "r3", "NQ")});
  auto tasks = preprocess_tasks(load_conversations(write_records(dir, recs)));
  write_file(dir / "qrels.txt", "1_1 0 d1 1\n1_2 0 d2 0\n2_1 0 d3 1\n2_1 0 d4 2\n");
  auto result = filter_evaluable(tasks, read_qrels(dir / "qrels.txt"));
  ASSERT_EQ(result.tasks.size(), 2u);
  EXPECT_EQ(result.tasks[0].id(), "1_1");
  EXPECT_EQ(result.tasks[1].gold_passage_ids, (std::vector<std::string>{"d3", "d4"}));
  EXPECT_EQ(result.per_subset[Subset::QuAC], 1u);
  EXPECT_EQ(result.per_subset[Subset::NQ], 1u);
}

TEST(Passages, StreamsAndReportsLineNumbers) {
  TempDir dir;
  write_file(dir / "p.jsonl", "{\"id\":\"a\",\"contents\":\"x\"}\n{\"id\":\"b\"}\n");
  PassageReader reader(dir / "p.jsonl");
  ASSERT_TRUE(reader.next().has_value());
  try {
    reader.next();
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  write_file(dir / "d.jsonl", "{\"id\":\"a\",\"contents\":\"x\"}\n{\"id\":\"a\",\"contents\":\"y\"}\n");
  EXPECT_THROW(load_passages(dir / "d.jsonl"), InputError);
}

TEST(DevSplit, PartitionIsDeterministicAndDisjoint) {
  std::vector<Conversation> convs;
  for (int i = 0; i < 50; ++i) convs.push_back({std::to_string(i), Subset::QuAC, {}});
  auto a = split_dev(convs, 10);
  auto b = split_dev(convs, 10);
  ASSERT_EQ(a.dev.size(), 10u);
  ASSERT_EQ(a.train.size(), 40u);
  for (std::size_t i = 0; i < a.dev.size(); ++i) EXPECT_EQ(a.dev[i].id, b.dev[i].id);
  std::set<std::string> ids;
  for (const auto& c : a.dev) ids.insert(c.id);
  for (const auto& c : a.train) EXPECT_FALSE(ids.count(c.id));
}

TEST(Tasks, JsonRoundTrip) {
  TempDir dir;
  RewriteTask t;
  t.conversation_id = "7";
  t.turn_no = 2;
  t.context = {{"Q1", "A1"}};
  t.question = "Q2";
  t.human_rewrite = "Q2 full";
  t.gold_passage_ids = {"d1"};
  t.source = Subset::TREC;
  write_tasks(dir / "t.jsonl", {t});
  auto back = read_tasks(dir / "t.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id(), "7_2");
  EXPECT_EQ(back[0].context, t.context);
  EXPECT_EQ(back[0].human_rewrite, t.human_rewrite);
  EXPECT_EQ(back[0].source, Subset::TREC);
}
