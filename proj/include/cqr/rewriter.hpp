// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/corpus.hpp"
#include "cqr/llm_client.hpp"
#include "cqr/prompting.hpp"

namespace cqr::rewriter {

enum class Method { Original, Human, RwZsl, RwFsl, EdSelf, EdFile, Student };

/// "original", "human", "rw_zsl", "rw_fsl", "ed_self", "ed_file", "student".
std::string_view to_string(Method m);
/// Accepts underscores or dashes, any case.
Method parse_method(std::string_view name);
bool is_llm_method(Method m);
bool needs_initials(Method m);

struct RewriteRecord {
  std::string conversation_id;
  int turn_no = 0;
  Method method = Method::Original;
  std::string rewrite;
  std::optional<std::string> initial_rewrite;
  /// Wall time of the network call; absent for cache hits and non-LLM methods.
  std::optional<double> latency_ms;
  std::optional<std::string> prompt_hash;
  /// Why the rewrite fell back to the question ("llm_error: ...", "no_human_rewrite").
  std::optional<std::string> flag;

  std::string query_id() const;
  bool operator==(const RewriteRecord&) const = default;
};

json record_to_json(const RewriteRecord& r);
/// Validates the schema: non-empty rewrite, initial present for edit methods.
RewriteRecord record_from_json(const json& j);

void write_rewrites(const std::filesystem::path& path, const std::vector<RewriteRecord>& records);
/// Throws InputError naming the line for schema violations and duplicate
/// (conversation_id, turn_no, method) triples.
std::vector<RewriteRecord> read_rewrites(const std::filesystem::path& path);

/// Query id -> rewrite text.
using RewriteMap = std::map<std::string, std::string>;
RewriteMap to_map(const std::vector<RewriteRecord>& records);

inline constexpr int kSanitizerVersion = 1;

/// Reduces an LLM completion to a single query line. Throws
/// Error("unusable completion") when nothing is left.
std::string sanitize_output(std::string_view raw);

struct RewriterOptions {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_tokens = llm::kDefaultMaxTokens;
  prompting::Instruction rewriter_instruction = prompting::Instruction::rewriter();
  prompting::Instruction editor_instruction = prompting::Instruction::editor();
  /// Few-shot set; editor prompts need each demo's initial rewrite.
  std::vector<prompting::Demonstration> demonstrations;
  prompting::PromptOptions prompt;
  int workers = 4;
};

struct GenerateResult {
  std::vector<RewriteRecord> records;  // task order
  std::size_t failures = 0;
};

class Rewriter {
 public:
  /// `client` may be null when only non-LLM methods are used.
  Rewriter(std::shared_ptr<llm::LlmClient> client, RewriterOptions options);

  /// For ed_self, `initials` may be null, in which case rw_fsl runs first.
  /// ed_file requires `initials` covering every task.
  GenerateResult generate(Method method, const std::vector<corpus::RewriteTask>& tasks,
                          const RewriteMap* initials = nullptr) const;

  /// The prompt an LLM method sends for `task`.
  std::string render(Method method, const corpus::RewriteTask& task,
                     const std::optional<std::string>& initial = std::nullopt) const;

  const RewriterOptions& options() const noexcept { return options_; }

 private:
  RewriteRecord run_llm(Method method, const corpus::RewriteTask& task,
                        const std::optional<std::string>& initial) const;

  std::shared_ptr<llm::LlmClient> client_;
  RewriterOptions options_;
};

struct RewriteThenEdit {
  GenerateResult initial;  // rw_fsl
  GenerateResult edited;   // ed_self
};

RewriteThenEdit rewrite_then_edit(const Rewriter& rewriter, const std::vector<corpus::RewriteTask>& tasks);

}  // namespace cqr::rewriter
