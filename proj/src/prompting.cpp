// SPDX-License-Identifier: Apache-2.0
#include "cqr/prompting.hpp"

#include <algorithm>

#include "cqr/error.hpp"
#include "cqr/util.hpp"

namespace cqr::prompting {

std::string_view to_string(Property p) {
  switch (p) {
    case Property::Correctness: return "correctness";
    case Property::Clarity: return "clarity";
    case Property::Informativeness: return "informativeness";
    case Property::Nonredundancy: return "nonredundancy";
  }
  return "";
}

Property parse_property(std::string_view name) {
  const auto lower = to_lower_ascii(trim(name));
  for (Property p : kAllProperties) {
    if (lower == to_string(p)) return p;
  }
  throw InputError("unknown property '" + std::string(name) +
                   "' (expected correctness, clarity, informativeness or nonredundancy)");
}

std::string_view rewriter_phrase(Property p) {
  switch (p) {
    case Property::Correctness: return "retain its original meaning";
    case Property::Clarity: return "addressing coreference and omission issues";
    case Property::Informativeness: return "be as informative as possible";
    case Property::Nonredundancy: return "should not duplicate any previously asked questions";
  }
  return "";
}

std::string_view editor_phrase(Property p) {
  switch (p) {
    case Property::Correctness: return "without changing the original meaning of the question";
    case Property::Clarity: return "fully addresses coreferences and omissions in the question";
    case Property::Informativeness: return "providing more information";
    case Property::Nonredundancy: return "should not duplicate any previously asked questions";
  }
  return "";
}

namespace {

std::string render_rewriter_text(const std::set<Property>& props) {
  auto has = [&](Property p) { return props.count(p) > 0; };
  std::string text = "Given a question and its context, decontextualize the question";
  if (has(Property::Clarity)) text += " by addressing coreference and omission issues";
  text += ".";

  std::vector<std::string> asks;
  if (has(Property::Correctness)) asks.emplace_back("retain its original meaning");
  if (has(Property::Informativeness)) asks.emplace_back("be as informative as possible");
  std::string second;
  if (!asks.empty()) {
    second = "should " + asks[0];
    for (std::size_t i = 1; i < asks.size(); ++i) second += " and " + asks[i];
  }
  if (has(Property::Nonredundancy)) {
    const std::string clause = "should not duplicate any previously asked questions in the context";
    second = second.empty() ? clause : second + ", and " + clause;
  }
  if (!second.empty()) text += " The resulting question " + second + ".";
  return text;
}

std::string render_editor_text(const std::set<Property>& props) {
  auto has = [&](Property p) { return props.count(p) > 0; };
  std::string text =
      "Given a question and its context and a rewrite that decontextualizes the question, edit the rewrite to "
      "create a revised version";
  if (has(Property::Clarity)) text += " that fully addresses coreferences and omissions in the question";
  if (has(Property::Correctness)) text += " without changing the original meaning of the question";
  if (has(Property::Informativeness)) {
    text += has(Property::Correctness) ? " but providing more information" : " providing more information";
  }
  text += ".";
  if (has(Property::Nonredundancy)) {
    text += " The new rewrite should not duplicate any previously asked questions in the context.";
  }
  text += " If there is no need to edit the rewrite, return the rewrite as-is.";
  return text;
}

void collapse_spaces(std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(c);
  }
  s = std::string(trim(out));
}

}  // namespace

Instruction Instruction::rewriter(std::set<Property> properties) {
  Instruction i;
  i.kind_ = Kind::Rewriter;
  i.text_ = render_rewriter_text(properties);
  i.properties_ = std::move(properties);
  return i;
}

Instruction Instruction::editor(std::set<Property> properties) {
  Instruction i;
  i.kind_ = Kind::Editor;
  i.text_ = render_editor_text(properties);
  i.properties_ = std::move(properties);
  return i;
}

Instruction Instruction::custom(std::string text) {
  Instruction i;
  i.kind_ = Kind::Custom;
  for (Property p : kAllProperties) {
    if (text.find(rewriter_phrase(p)) != std::string::npos || text.find(editor_phrase(p)) != std::string::npos) {
      i.properties_.insert(p);
    }
  }
  i.text_ = std::move(text);
  return i;
}

Instruction ablate_instruction(const Instruction& instruction, Property drop) {
  if (!instruction.has(drop)) return instruction;
  std::set<Property> props = instruction.properties_;
  props.erase(drop);
  switch (instruction.kind_) {
    case Instruction::Kind::Rewriter: return Instruction::rewriter(std::move(props));
    case Instruction::Kind::Editor: return Instruction::editor(std::move(props));
    case Instruction::Kind::Custom: break;
  }
  Instruction out = instruction;
  for (auto phrase : {rewriter_phrase(drop), editor_phrase(drop)}) {
    for (auto pos = out.text_.find(phrase); pos != std::string::npos; pos = out.text_.find(phrase)) {
      out.text_.erase(pos, phrase.size());
    }
  }
  collapse_spaces(out.text_);
  out.properties_ = std::move(props);
  return out;
}

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  const int version = doc.value("version", 0);
  if (version != 1) throw InputError(path.string() + ": unsupported demonstration file version " + std::to_string(version));
  std::vector<Demonstration> demos;
  for (const auto& d : doc.at("demonstrations")) {
    Demonstration demo;
    for (const auto& p : d.at("context")) {
      demo.context.push_back({p.at("question").get<std::string>(), p.at("answer").get<std::string>()});
    }
    demo.question = d.at("question").get<std::string>();
    if (d.contains("initial_rewrite") && !d.at("initial_rewrite").is_null()) {
      demo.initial_rewrite = d.at("initial_rewrite").get<std::string>();
    }
    demo.rewrite = d.at("rewrite").get<std::string>();
    if (trim(demo.rewrite).empty()) throw InputError(path.string() + ": demonstration with empty rewrite");
    demos.push_back(std::move(demo));
  }
  return demos;
}

std::string render_context(const std::vector<corpus::QaPair>& context) {
  if (context.empty()) return "[]";
  std::string out = "[";
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Q: " + context[i].question + "\nA: " + context[i].answer;
  }
  out += " ]";
  return out;
}

std::vector<corpus::QaPair> truncate_context(const std::vector<corpus::QaPair>& context, std::size_t budget) {
  if (budget == 0) return context;
  std::size_t total = 0;
  for (const auto& p : context) total += p.question.size() + p.answer.size();
  std::size_t first = 0;
  while (first < context.size() && total > budget) {
    total -= context[first].question.size() + context[first].answer.size();
    ++first;
  }
  return {context.begin() + static_cast<std::ptrdiff_t>(first), context.end()};
}

namespace {

std::string demo_block(const Demonstration& d, Role role) {
  std::string out = "Context: " + render_context(d.context) + "\nQuestion: " + d.question + "\nRewrite: ";
  if (role == Role::Editor) {
    out += *d.initial_rewrite + "\nEdit: " + d.rewrite;
  } else {
    out += d.rewrite;
  }
  return out;
}

std::string test_block(const corpus::RewriteTask& task, const PromptOptions& options) {
  return "Context: " + render_context(truncate_context(task.context, options.context_char_budget)) +
         "\nQuestion: " + task.question + "\n";
}

}  // namespace

std::string render_rewriter_prompt(const Instruction& instruction, const std::vector<Demonstration>& demos,
                                   const corpus::RewriteTask& task, const PromptOptions& options) {
  std::string out = instruction.text() + "\n\n";
  for (const auto& d : demos) out += demo_block(d, Role::Rewriter) + "\n\n";
  out += test_block(task, options) + "Rewrite:";
  return out;
}

std::string render_editor_prompt(const Instruction& instruction, const std::vector<Demonstration>& demos,
                                 const corpus::RewriteTask& task, std::string_view initial,
                                 const PromptOptions& options) {
  if (trim(initial).empty()) throw InputError("editor prompt for " + task.id() + " needs a non-empty initial rewrite");
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (!demos[i].initial_rewrite) {
      throw InputError("demonstration " + std::to_string(i) + " has no initial rewrite; editor prompts need one");
    }
  }
  std::string out = instruction.text() + "\n\n";
  for (const auto& d : demos) out += demo_block(d, Role::Editor) + "\n\n";
  out += test_block(task, options) + "Rewrite: " + std::string(initial) + "\nEdit:";
  return out;
}

PromptBundle make_rewriter_bundle(Instruction instruction, std::vector<Demonstration> demos,
                                  corpus::RewriteTask task, const PromptOptions& options) {
  PromptBundle b;
  b.role = Role::Rewriter;
  b.rendered = render_rewriter_prompt(instruction, demos, task, options);
  b.instruction = std::move(instruction);
  b.demonstrations = std::move(demos);
  b.task = std::move(task);
  return b;
}

PromptBundle make_editor_bundle(Instruction instruction, std::vector<Demonstration> demos,
                                corpus::RewriteTask task, std::string initial, const PromptOptions& options) {
  PromptBundle b;
  b.role = Role::Editor;
  b.rendered = render_editor_prompt(instruction, demos, task, initial, options);
  b.instruction = std::move(instruction);
  b.demonstrations = std::move(demos);
  b.task = std::move(task);
  b.initial_rewrite = std::move(initial);
  return b;
}

}  // namespace cqr::prompting
