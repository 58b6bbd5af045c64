// SPDX-License-Identifier: Apache-2.0
#include "cqr/distill_export.hpp"

#include <unordered_set>

#include "cqr/error.hpp"

namespace cqr::distill {

std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::RwFsl: return "rw_fsl";
    case LabelSource::EdSelf: return "ed_self";
    case LabelSource::Human: return "human";
  }
  return "";
}

LabelSource parse_label_source(std::string_view s) {
  std::string norm = to_lower_ascii(trim(s));
  for (auto& c : norm) c = c == '-' ? '_' : c;
  for (auto src : {LabelSource::RwFsl, LabelSource::EdSelf, LabelSource::Human}) {
    if (norm == to_string(src)) return src;
  }
  throw InputError("unknown label source '" + std::string(s) + "' (expected rw_fsl, ed_self or human)");
}

std::string encode_input(const std::vector<corpus::QaPair>& context, std::string_view question) {
  std::string out;
  for (const auto& p : context) {
    out += std::string(kQuestionMarker) + " " + p.question + " " + std::string(kAnswerMarker) + " " + p.answer + " ";
  }
  out += std::string(kQuestionMarker) + " " + std::string(question);
  return out;
}

DecodedInput parse_input(std::string_view input) {
  struct Segment {
    bool question;
    std::string text;
  };
  std::vector<Segment> segments;
  std::size_t pos = 0;
  while (pos < input.size()) {
    const bool q = input.substr(pos, kQuestionMarker.size()) == kQuestionMarker;
    const bool a = input.substr(pos, kAnswerMarker.size()) == kAnswerMarker;
    if (!q && !a) {
      if (segments.empty()) throw InputError("encoded input must begin with " + std::string(kQuestionMarker));
      throw InputError("malformed encoded input");
    }
    pos += q ? kQuestionMarker.size() : kAnswerMarker.size();
    std::size_t next = input.size();
    for (auto marker : {kQuestionMarker, kAnswerMarker}) {
      auto found = input.find(marker, pos);
      if (found != std::string_view::npos) next = std::min(next, found);
    }
    segments.push_back({q, std::string(trim(input.substr(pos, next - pos)))});
    pos = next;
  }
  if (segments.empty() || !segments.back().question) throw InputError("encoded input must end with a question");
  DecodedInput out;
  for (std::size_t i = 0; i + 1 < segments.size(); i += 2) {
    if (!segments[i].question || segments[i + 1].question) throw InputError("markers must alternate");
    out.context.push_back({segments[i].text, segments[i + 1].text});
  }
  if (segments.size() % 2 == 0) throw InputError("markers must alternate");
  out.question = segments.back().text;
  return out;
}

json to_json(const DistillExample& e) {
  return json{{"input", e.input},
              {"target", e.target},
              {"meta",
               {{"conversation_id", e.conversation_id},
                {"turn_no", e.turn_no},
                {"label_source", to_string(e.label_source)}}}};
}

DistillExample example_from_json(const json& j) {
  DistillExample e;
  e.input = j.at("input").get<std::string>();
  e.target = j.at("target").get<std::string>();
  const auto& meta = j.at("meta");
  e.conversation_id = meta.at("conversation_id").get<std::string>();
  e.turn_no = meta.at("turn_no").get<int>();
  e.label_source = parse_label_source(meta.at("label_source").get<std::string>());
  if (e.input.rfind(kQuestionMarker, 0) != 0) throw InputError("input must begin with " + std::string(kQuestionMarker));
  if (trim(e.target).empty()) throw InputError("empty target");
  return e;
}

rewriter::RewriteMap human_labels(const std::vector<corpus::RewriteTask>& tasks) {
  rewriter::RewriteMap m;
  for (const auto& t : tasks) {
    if (t.human_rewrite && !trim(*t.human_rewrite).empty()) m[t.id()] = *t.human_rewrite;
  }
  return m;
}

namespace {

std::vector<DistillExample> draw(const std::vector<const corpus::RewriteTask*>& pool, std::size_t n,
                                 std::uint64_t seed, const rewriter::RewriteMap& labels, LabelSource source,
                                 const char* which) {
  if (n > pool.size()) {
    throw InputError(std::string("cannot sample ") + std::to_string(n) + " " + which + " questions from a pool of " +
                     std::to_string(pool.size()));
  }
  std::vector<DistillExample> out;
  std::vector<std::string> missing;
  for (auto idx : sample_indices(pool.size(), n, seed)) {
    const auto& t = *pool[idx];
    auto it = labels.find(t.id());
    if (it == labels.end() || trim(it->second).empty()) {
      missing.push_back(t.id());
      continue;
    }
    out.push_back({encode_input(t.context, t.question), it->second, t.conversation_id, t.turn_no, source});
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw InputError(std::to_string(missing.size()) + " sampled " + which + " task(s) have no " +
                     std::string(to_string(source)) + " label: " + list);
  }
  return out;
}

}  // namespace

TrainingSet export_training_set(const std::vector<corpus::RewriteTask>& train_pool,
                                const std::vector<corpus::RewriteTask>& dev_pool,
                                const rewriter::RewriteMap& labels, LabelSource source, std::size_t n_train,
                                std::size_t n_dev, std::uint64_t seed) {
  std::vector<const corpus::RewriteTask*> train_ptrs;
  for (const auto& t : train_pool) train_ptrs.push_back(&t);
  TrainingSet set;
  set.train = draw(train_ptrs, n_train, seed, labels, source, "train");

  std::unordered_set<std::string> taken;
  for (const auto& e : set.train) taken.insert(e.conversation_id + "_" + std::to_string(e.turn_no));
  std::vector<const corpus::RewriteTask*> dev_ptrs;
  for (const auto& t : dev_pool) {
    if (!taken.count(t.id())) dev_ptrs.push_back(&t);
  }
  set.dev = draw(dev_ptrs, n_dev, seed + 1, labels, source, "dev");
  return set;
}

void write_examples(const std::filesystem::path& path, const std::vector<DistillExample>& examples) {
  std::vector<json> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(to_json(e));
  write_jsonl(path, out);
}

std::vector<DistillExample> read_examples(const std::filesystem::path& path) {
  std::vector<DistillExample> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    try {
      out.push_back(example_from_json(j));
    } catch (const std::exception& e) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cqr::distill
