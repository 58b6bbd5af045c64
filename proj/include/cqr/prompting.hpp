// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cqr/corpus.hpp"

namespace cqr::prompting {

enum class Property { Correctness, Clarity, Informativeness, Nonredundancy };

inline constexpr Property kAllProperties[] = {Property::Correctness, Property::Clarity,
                                              Property::Informativeness, Property::Nonredundancy};

std::string_view to_string(Property p);
/// Throws InputError for unknown names.
Property parse_property(std::string_view name);

enum class Role { Rewriter, Editor };

/// Instruction text plus the properties it asks for. Built-in instructions are
/// rendered from their property set, so ablating a property re-renders a
/// grammatical sentence without that clause.
class Instruction {
 public:
  static Instruction rewriter(std::set<Property> properties = {std::begin(kAllProperties), std::end(kAllProperties)});
  static Instruction editor(std::set<Property> properties = {std::begin(kAllProperties), std::end(kAllProperties)});
  /// Free text; properties are detected from the known phrases it contains.
  static Instruction custom(std::string text);

  const std::string& text() const noexcept { return text_; }
  const std::set<Property>& properties() const noexcept { return properties_; }
  bool has(Property p) const { return properties_.count(p) > 0; }

  bool operator==(const Instruction&) const = default;

 private:
  enum class Kind { Rewriter, Editor, Custom };
  friend Instruction ablate_instruction(const Instruction&, Property);

  Kind kind_ = Kind::Custom;
  std::string text_;
  std::set<Property> properties_;
};

/// The literal clause expressing `p` in the rewriter instruction.
std::string_view rewriter_phrase(Property p);
std::string_view editor_phrase(Property p);

/// Drops one property; a no-op when it is already absent.
Instruction ablate_instruction(const Instruction& instruction, Property drop);

struct Demonstration {
  std::vector<corpus::QaPair> context;
  std::string question;
  std::optional<std::string> initial_rewrite;  // used by editor prompts
  std::string rewrite;
};

/// Versioned demonstration file: {"version": 1, "demonstrations": [...]}.
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path);

struct PromptOptions {
  /// Oldest (Q, A) pairs of the test context are dropped until the summed
  /// question+answer length fits. 0 disables truncation.
  std::size_t context_char_budget = 12000;
};

/// Context as rendered in prompts: "[Q: ...\nA: ...\nQ: ...\nA: ... ]", "[]" when empty.
std::string render_context(const std::vector<corpus::QaPair>& context);

std::vector<corpus::QaPair> truncate_context(const std::vector<corpus::QaPair>& context, std::size_t budget);

std::string render_rewriter_prompt(const Instruction& instruction, const std::vector<Demonstration>& demos,
                                   const corpus::RewriteTask& task, const PromptOptions& options = {});

/// Throws InputError if a demonstration lacks its initial rewrite or `initial` is empty.
std::string render_editor_prompt(const Instruction& instruction, const std::vector<Demonstration>& demos,
                                 const corpus::RewriteTask& task, std::string_view initial,
                                 const PromptOptions& options = {});

struct PromptBundle {
  Role role = Role::Rewriter;
  Instruction instruction;
  std::vector<Demonstration> demonstrations;
  corpus::RewriteTask task;
  std::optional<std::string> initial_rewrite;
  std::string rendered;
};

PromptBundle make_rewriter_bundle(Instruction instruction, std::vector<Demonstration> demos,
                                  corpus::RewriteTask task, const PromptOptions& options = {});
PromptBundle make_editor_bundle(Instruction instruction, std::vector<Demonstration> demos,
                                corpus::RewriteTask task, std::string initial, const PromptOptions& options = {});

}  // namespace cqr::prompting
