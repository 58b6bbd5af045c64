// SPDX-License-Identifier: Apache-2.0
#include "cqr/rewriter.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "cqr/error.hpp"

namespace cqr::rewriter {

namespace {
constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::Original, "original"}, {Method::Human, "human"},     {Method::RwZsl, "rw_zsl"},
    {Method::RwFsl, "rw_fsl"},      {Method::EdSelf, "ed_self"}, {Method::EdFile, "ed_file"},
    {Method::Student, "student"},
};
}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  return "";
}

Method parse_method(std::string_view name) {
  std::string norm = to_lower_ascii(trim(name));
  std::replace(norm.begin(), norm.end(), '-', '_');
  for (const auto& [method, n] : kMethodNames) {
    if (n == norm) return method;
  }
  throw InputError("unknown rewrite method '" + std::string(name) + "'");
}

bool is_llm_method(Method m) {
  return m == Method::RwZsl || m == Method::RwFsl || m == Method::EdSelf || m == Method::EdFile;
}

bool needs_initials(Method m) { return m == Method::EdSelf || m == Method::EdFile; }

std::string RewriteRecord::query_id() const { return conversation_id + "_" + std::to_string(turn_no); }

json record_to_json(const RewriteRecord& r) {
  json j{{"conversation_id", r.conversation_id},
         {"turn_no", r.turn_no},
         {"method", to_string(r.method)},
         {"rewrite", r.rewrite}};
  if (r.initial_rewrite) j["initial_rewrite"] = *r.initial_rewrite;
  if (r.latency_ms) j["latency_ms"] = *r.latency_ms;
  if (r.prompt_hash) j["prompt_hash"] = *r.prompt_hash;
  if (r.flag) j["flag"] = *r.flag;
  return j;
}

RewriteRecord record_from_json(const json& j) {
  if (!j.is_object()) throw InputError("rewrite record must be an object");
  for (const char* field : {"conversation_id", "turn_no", "method", "rewrite"}) {
    if (!j.contains(field)) throw InputError(std::string("missing field '") + field + "'");
  }
  RewriteRecord r;
  const auto& conv = j.at("conversation_id");
  r.conversation_id = conv.is_string() ? conv.get<std::string>() : conv.dump();
  r.turn_no = j.at("turn_no").get<int>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.rewrite = j.at("rewrite").get<std::string>();
  if (trim(r.rewrite).empty()) throw InputError("empty rewrite for " + r.query_id());
  if (j.contains("initial_rewrite") && !j["initial_rewrite"].is_null()) {
    r.initial_rewrite = j["initial_rewrite"].get<std::string>();
  }
  if (needs_initials(r.method) && !r.initial_rewrite) {
    throw InputError(std::string(to_string(r.method)) + " record " + r.query_id() + " lacks initial_rewrite");
  }
  if (j.contains("latency_ms") && !j["latency_ms"].is_null()) {
    r.latency_ms = j["latency_ms"].get<double>();
    if (*r.latency_ms < 0) throw InputError("negative latency for " + r.query_id());
  }
  if (j.contains("prompt_hash") && !j["prompt_hash"].is_null()) r.prompt_hash = j["prompt_hash"].get<std::string>();
  if (j.contains("flag") && !j["flag"].is_null()) r.flag = j["flag"].get<std::string>();
  return r;
}

void write_rewrites(const std::filesystem::path& path, const std::vector<RewriteRecord>& records) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(record_to_json(r));
  write_jsonl(path, out);
}

std::vector<RewriteRecord> read_rewrites(const std::filesystem::path& path) {
  std::vector<RewriteRecord> records;
  std::set<std::tuple<std::string, int, Method>> seen;
  for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    try {
      auto r = record_from_json(j);
      if (!seen.emplace(r.conversation_id, r.turn_no, r.method).second) {
        throw InputError("duplicate record " + r.query_id() + " (" + std::string(to_string(r.method)) + ")");
      }
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return records;
}

RewriteMap to_map(const std::vector<RewriteRecord>& records) {
  RewriteMap m;
  for (const auto& r : records) m[r.query_id()] = r.rewrite;
  return m;
}

namespace {

constexpr std::string_view kLabels[] = {"revised rewrite:", "rewritten question:", "rewritten query:",
                                        "rewrite:", "edit:"};
constexpr std::string_view kPreambleStarts[] = {"sure", "certainly", "of course", "here is", "here's",
                                                "okay", "ok"};

bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

std::string_view strip_quotes(std::string_view s) {
  for (std::string_view q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "\"", "`"}) {
    while (s.size() >= q.size() && s.substr(0, q.size()) == q) s.remove_prefix(q.size());
    while (s.size() >= q.size() && s.substr(s.size() - q.size()) == q) s.remove_suffix(q.size());
  }
  if (s.size() >= 2 && s.front() == '\'' && s.back() == '\'') s = s.substr(1, s.size() - 2);
  return s;
}

std::string strip_line(std::string_view line) {
  std::string_view s = trim(line);
  for (;;) {
    const std::string_view before = s;
    for (auto label : kLabels) {
      if (istarts_with(s, label)) s = trim(s.substr(label.size()));
    }
    s = trim(strip_quotes(s));
    if (s == before) break;
  }
  return std::string(s);
}

bool is_preamble(std::string_view s) {
  if (s.back() == '?') return false;
  if (s.back() == ':') return true;
  for (auto p : kPreambleStarts) {
    if (istarts_with(s, p) && (s.size() == p.size() || !std::isalpha(static_cast<unsigned char>(s[p.size()])))) {
      return true;
    }
  }
  return false;
}

}  // namespace

std::string sanitize_output(std::string_view raw) {
  std::optional<std::string> fallback;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    std::string line = strip_line(raw.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    if (!is_preamble(line)) return line;
    if (!fallback) fallback = std::move(line);
  }
  if (fallback) return *fallback;
  throw Error("unusable completion");
}

Rewriter::Rewriter(std::shared_ptr<llm::LlmClient> client, RewriterOptions options)
    : client_(std::move(client)), options_(std::move(options)) {}

std::string Rewriter::render(Method method, const corpus::RewriteTask& task,
                             const std::optional<std::string>& initial) const {
  using namespace prompting;
  switch (method) {
    case Method::RwZsl: return render_rewriter_prompt(options_.rewriter_instruction, {}, task, options_.prompt);
    case Method::RwFsl:
      return render_rewriter_prompt(options_.rewriter_instruction, options_.demonstrations, task, options_.prompt);
    case Method::EdSelf:
    case Method::EdFile:
      if (!initial) throw InputError("no initial rewrite for " + task.id());
      return render_editor_prompt(options_.editor_instruction, options_.demonstrations, task, *initial,
                                  options_.prompt);
    default: throw Error(std::string(to_string(method)) + " does not use prompts");
  }
}

RewriteRecord Rewriter::run_llm(Method method, const corpus::RewriteTask& task,
                                const std::optional<std::string>& initial) const {
  RewriteRecord r{task.conversation_id, task.turn_no, method, task.question, initial, {}, {}, {}};
  const std::string prompt = render(method, task, initial);
  r.prompt_hash = llm::prompt_hash(prompt);
  try {
    auto resp = client_->complete({options_.model, prompt, options_.temperature, options_.max_tokens});
    r.rewrite = sanitize_output(resp.text);
    if (!resp.cached) r.latency_ms = resp.latency_ms;
  } catch (const Error& e) {
    r.rewrite = task.question;
    r.flag = std::string("llm_error: ") + e.what();
  }
  return r;
}

GenerateResult Rewriter::generate(Method method, const std::vector<corpus::RewriteTask>& tasks,
                                  const RewriteMap* initials) const {
  GenerateResult result;
  result.records.resize(tasks.size());

  if (method == Method::Student) {
    throw InputError("student rewrites come from the trainer; load them with ed_file or evaluate them directly");
  }
  if (method == Method::Original || method == Method::Human) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto& t = tasks[i];
      RewriteRecord r{t.conversation_id, t.turn_no, method, t.question, {}, {}, {}, {}};
      if (method == Method::Human) {
        if (t.human_rewrite && !trim(*t.human_rewrite).empty()) {
          r.rewrite = *t.human_rewrite;
        } else {
          r.flag = "no_human_rewrite";
        }
      }
      result.records[i] = std::move(r);
    }
    return result;
  }

  if (!client_) throw Error(std::string(to_string(method)) + " needs an LLM client");

  RewriteMap self_initials;
  if (method == Method::EdSelf && initials == nullptr) {
    self_initials = to_map(generate(Method::RwFsl, tasks).records);
    initials = &self_initials;
  }
  if (needs_initials(method)) {
    if (initials == nullptr) throw InputError(std::string(to_string(method)) + " needs initial rewrites");
    std::vector<std::string> missing;
    for (const auto& t : tasks) {
      if (!initials->count(t.id())) missing.push_back(t.id());
    }
    if (!missing.empty()) {
      std::string list;
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
      if (missing.size() > 20) list += ", ...";
      throw InputError(std::to_string(missing.size()) + " task(s) lack an initial rewrite: " + list);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto work = [&] {
    try {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        std::optional<std::string> initial;
        if (initials) {
          auto it = initials->find(tasks[i].id());
          if (it != initials->end()) initial = it->second;
        }
        result.records[i] = run_llm(method, tasks[i], initial);
      }
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!first_error) first_error = std::current_exception();
      next = tasks.size();
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::max(1, options_.workers));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(n_workers, tasks.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& r : result.records) result.failures += r.flag ? 1 : 0;
  return result;
}

RewriteThenEdit rewrite_then_edit(const Rewriter& rewriter, const std::vector<corpus::RewriteTask>& tasks) {
  RewriteThenEdit out;
  out.initial = rewriter.generate(Method::RwFsl, tasks);
  const auto initials = to_map(out.initial.records);
  out.edited = rewriter.generate(Method::EdSelf, tasks, &initials);
  return out;
}

}  // namespace cqr::rewriter
