// SPDX-License-Identifier: Apache-2.0
#include "cqr/error.hpp"
#include "cqr/prompting.hpp"
#include "test_support.hpp"

using namespace cqr;
using namespace cqr::prompting;

namespace {

corpus::RewriteTask golden_task() {
  const auto j = json::parse(read_file(cqr::testing::test_data("golden/golden_task.json")));
  corpus::RewriteTask t;
  t.conversation_id = j.at("conversation_id");
  t.turn_no = j.at("turn_no");
  for (const auto& p : j.at("context")) t.context.push_back({p.at("question"), p.at("answer")});
  t.question = j.at("question");
  t.human_rewrite = j.at("human_rewrite").get<std::string>();
  t.source = corpus::Subset::QuAC;
  return t;
}

std::string golden_initial() {
  return json::parse(read_file(cqr::testing::test_data("golden/golden_task.json"))).at("initial_rewrite");
}

std::string golden(const std::string& name) { return read_file(cqr::testing::test_data("golden/" + name)); }

std::vector<Demonstration> demos() { return load_demonstrations(cqr::testing::bundled_data("prompts/demonstrations.json")); }

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Prompts, ZeroShotRewriterMatchesGolden) {
  const auto want = golden("rw_zsl.txt");
  EXPECT_EQ(want.size(), 556u);
  EXPECT_EQ(render_rewriter_prompt(Instruction::rewriter(), {}, golden_task()), want);
}

TEST(Prompts, FewShotRewriterMatchesGolden) {
  const auto want = golden("rw_fsl.txt");
  EXPECT_EQ(want.size(), 2097u);
  EXPECT_EQ(render_rewriter_prompt(Instruction::rewriter(), demos(), golden_task()), want);
}

TEST(Prompts, FewShotEditorMatchesGolden) {
  const auto want = golden("ed_fsl.txt");
  EXPECT_EQ(want.size(), 2523u);
  EXPECT_EQ(render_editor_prompt(Instruction::editor(), demos(), golden_task(), golden_initial()), want);
}

TEST(Prompts, StructuralInvariants) {
  const auto d = demos();
  ASSERT_EQ(d.size(), 4u);
  const auto task = golden_task();
  const auto rw = render_rewriter_prompt(Instruction::rewriter(), d, task);
  EXPECT_EQ(count(rw, "Question: " + task.question + "\n"), 1u);
  EXPECT_EQ(count(rw, "Context: "), 5u);
  EXPECT_EQ(rw.find('\r'), std::string::npos);
  EXPECT_TRUE(rw.ends_with("\nRewrite:"));

  const auto ed = render_editor_prompt(Instruction::editor(), d, task, "X?");
  EXPECT_EQ(count(ed, "Rewrite: X?\n"), 1u);
  EXPECT_TRUE(ed.ends_with("Rewrite: X?\nEdit:"));
  EXPECT_EQ(count(ed, "\nEdit: "), 4u);
}

TEST(Prompts, ContextRendering) {
  EXPECT_EQ(render_context({}), "[]");
  EXPECT_EQ(render_context({{"a?", "b."}}), "[Q: a?\nA: b. ]");
  corpus::RewriteTask t;
  t.conversation_id = "c";
  t.turn_no = 1;
  t.question = "Who?";
  EXPECT_EQ(render_rewriter_prompt(Instruction::rewriter(), {}, t).find("Context: []\nQuestion: Who?\nRewrite:") !=
                std::string::npos,
            true);
}

TEST(Prompts, TruncationDropsOldestPairs) {
  std::vector<corpus::QaPair> ctx{{"aaaa", "bbbb"}, {"cc", "dd"}, {"e", "f"}};
  EXPECT_EQ(truncate_context(ctx, 0), ctx);
  EXPECT_EQ(truncate_context(ctx, 100), ctx);
  EXPECT_EQ(truncate_context(ctx, 6), (std::vector<corpus::QaPair>{{"cc", "dd"}, {"e", "f"}}));
  EXPECT_EQ(truncate_context(ctx, 5), (std::vector<corpus::QaPair>{{"e", "f"}}));
  EXPECT_TRUE(truncate_context(ctx, 1).empty());
}

TEST(Prompts, EditorInputErrors) {
  EXPECT_THROW(render_editor_prompt(Instruction::editor(), {}, golden_task(), "  "), InputError);
  auto d = demos();
  d[1].initial_rewrite.reset();
  EXPECT_THROW(render_editor_prompt(Instruction::editor(), d, golden_task(), "x"), InputError);
}

TEST(Instructions, AblationRemovesOnlyThatClause) {
  const auto full = Instruction::rewriter();
  for (Property p : kAllProperties) {
    const auto ab = ablate_instruction(full, p);
    EXPECT_FALSE(ab.has(p));
    EXPECT_EQ(ab.properties().size(), 3u);
    EXPECT_EQ(ab.text().find(rewriter_phrase(p)), std::string::npos) << to_string(p);
    for (Property q : kAllProperties) {
      if (q != p) EXPECT_NE(ab.text().find(rewriter_phrase(q)), std::string::npos) << to_string(q);
    }
    EXPECT_EQ(ab.text().find("  "), std::string::npos);
    EXPECT_EQ(ablate_instruction(ab, p), ab);
  }
  EXPECT_EQ(ablate_instruction(full, Property::Informativeness).text(),
            "Given a question and its context, decontextualize the question by addressing coreference and omission "
            "issues. The resulting question should retain its original meaning, and should not duplicate any "
            "previously asked questions in the context.");
}

TEST(Instructions, EditorAblation) {
  const auto full = Instruction::editor();
  for (Property p : kAllProperties) {
    const auto ab = ablate_instruction(full, p);
    EXPECT_EQ(ab.text().find(editor_phrase(p)), std::string::npos) << to_string(p);
    EXPECT_TRUE(ab.text().ends_with("return the rewrite as-is."));
  }
}

TEST(Instructions, CustomTextDetectsAndAblatesPhrases) {
  auto c = Instruction::custom("Rewrite it and retain its original meaning please.");
  EXPECT_TRUE(c.has(Property::Correctness));
  EXPECT_FALSE(c.has(Property::Clarity));
  auto ab = ablate_instruction(c, Property::Correctness);
  EXPECT_EQ(ab.text(), "Rewrite it and please.");
  EXPECT_EQ(ablate_instruction(ab, Property::Correctness), ab);
  EXPECT_EQ(parse_property("Clarity"), Property::Clarity);
  EXPECT_THROW(parse_property("brevity"), InputError);
}

TEST(Demonstrations, VersionIsChecked) {
  cqr::testing::TempDir dir;
  write_file(dir / "d.json", R"({"version": 2, "demonstrations": []})");
  EXPECT_THROW(load_demonstrations(dir / "d.json"), InputError);
  for (const auto& d : demos()) {
    EXPECT_TRUE(d.initial_rewrite.has_value());
    EXPECT_FALSE(d.rewrite.empty());
  }
}

TEST(Bundles, CarryTheirInputs) {
  auto b = make_editor_bundle(Instruction::editor(), demos(), golden_task(), golden_initial());
  EXPECT_EQ(b.role, Role::Editor);
  EXPECT_EQ(b.rendered, golden("ed_fsl.txt"));
  EXPECT_EQ(b.initial_rewrite, golden_initial());
}
