// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cqr/util.hpp"

namespace cqr {

class Qrels;

namespace corpus {

/// Dataset a conversation originates from. Unknown only appears before a
/// source override has been applied.
enum class Subset { QuAC, NQ, TREC, Unknown };

std::string_view to_string(Subset s);
/// Accepts "quac", "QuAC-Conv", "nq", "NQ-Conv", "trec", ... (case-insensitive).
Subset parse_subset(std::string_view s);

enum class Role { User, System };

struct Turn {
  Role role;
  std::string text;
};

struct QaPair {
  std::string question;
  std::string answer;

  bool operator==(const QaPair&) const = default;
};

/// One user question with the system answer that followed it.
struct Exchange {
  int turn_no = 0;
  std::string question;
  std::string answer;
  std::optional<std::string> human_rewrite;
  std::vector<std::string> gold_passage_ids;
};

struct Conversation {
  std::string id;
  Subset source = Subset::Unknown;
  std::vector<Exchange> exchanges;  // ordered by turn_no

  /// Alternating user/system turns, starting with the user.
  std::vector<Turn> turns() const;
};

struct RewriteTask {
  std::string conversation_id;
  int turn_no = 0;
  std::vector<QaPair> context;
  std::string question;
  std::optional<std::string> human_rewrite;
  std::vector<std::string> gold_passage_ids;  // sorted, unique
  Subset source = Subset::Unknown;
  /// Set on turn 1 when no human rewrite was available to replace the question.
  bool first_question_unreplaced = false;

  /// Query id shared with qrels and run files: "<conversation_id>_<turn_no>".
  std::string id() const;
};

struct Passage {
  std::string id;
  std::string text;
};

/// Logical field -> source field name. Defaults follow the public QReCC release.
struct SchemaMap {
  std::string conversation_id = "Conversation_no";
  std::string turn_no = "Turn_no";
  std::string question = "Question";
  std::string rewrite = "Rewrite";
  std::string answer = "Answer";
  std::string source = "Conversation_source";
  /// Empty when gold passages come only from a qrels file.
  std::string gold_passages;
  /// Applied to conversations whose record lacks the source field.
  std::optional<Subset> source_override;

  static SchemaMap from_json(const json& j);
};

std::vector<Conversation> load_conversations(const std::filesystem::path& path,
                                             const SchemaMap& schema = {});

/// One task per user turn. The first question is replaced by its human rewrite
/// when one exists, and the replaced text is what later contexts carry.
std::vector<RewriteTask> preprocess_tasks(const std::vector<Conversation>& conversations);

struct FilterResult {
  std::vector<RewriteTask> tasks;
  std::map<Subset, std::size_t> per_subset;
};

/// Keeps tasks whose id has at least one relevant judgment; their
/// gold_passage_ids are replaced by the judged-relevant set.
FilterResult filter_evaluable(const std::vector<RewriteTask>& tasks, const Qrels& qrels);

struct PassageFields {
  std::string id = "id";
  std::string text = "contents";
};

/// Streams passages from a JSON-lines collection in file order.
class PassageReader {
 public:
  explicit PassageReader(const std::filesystem::path& path, PassageFields fields = {});

  /// Next passage, or nullopt at end of file. Throws InputError on a malformed
  /// line or a repeated id.
  std::optional<Passage> next();

  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  PassageFields fields_;
  std::size_t line_no_ = 0;
  std::unordered_set<std::string> seen_;
};

std::vector<Passage> load_passages(const std::filesystem::path& path, PassageFields fields = {});

struct DevSplit {
  std::vector<Conversation> train;
  std::vector<Conversation> dev;
};

inline constexpr std::uint64_t kDefaultDevSeed = 42;

/// Deterministic partition; both halves keep input order.
DevSplit split_dev(const std::vector<Conversation>& conversations, std::size_t n,
                   std::uint64_t seed = kDefaultDevSeed);

json task_to_json(const RewriteTask& task);
RewriteTask task_from_json(const json& j);
void write_tasks(const std::filesystem::path& path, const std::vector<RewriteTask>& tasks);
std::vector<RewriteTask> read_tasks(const std::filesystem::path& path);

}  // namespace corpus
}  // namespace cqr
