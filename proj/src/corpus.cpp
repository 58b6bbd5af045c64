// SPDX-License-Identifier: Apache-2.0
#include "cqr/corpus.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "cqr/error.hpp"
#include "cqr/evaluation.hpp"

namespace cqr::corpus {

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::QuAC: return "QuAC";
    case Subset::NQ: return "NQ";
    case Subset::TREC: return "TREC";
    case Subset::Unknown: break;
  }
  return "Unknown";
}

Subset parse_subset(std::string_view s) {
  const std::string lower = to_lower_ascii(trim(s));
  if (lower.rfind("quac", 0) == 0) return Subset::QuAC;
  if (lower.rfind("nq", 0) == 0 || lower.rfind("natural", 0) == 0) return Subset::NQ;
  if (lower.rfind("trec", 0) == 0 || lower.rfind("cast", 0) == 0) return Subset::TREC;
  return Subset::Unknown;
}

std::vector<Turn> Conversation::turns() const {
  std::vector<Turn> out;
  out.reserve(exchanges.size() * 2);
  for (const auto& ex : exchanges) {
    out.push_back({Role::User, ex.question});
    out.push_back({Role::System, ex.answer});
  }
  return out;
}

std::string RewriteTask::id() const { return conversation_id + "_" + std::to_string(turn_no); }

SchemaMap SchemaMap::from_json(const json& j) {
  SchemaMap m;
  auto field = [&](const char* key, std::string& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::string>();
  };
  field("conversation_id", m.conversation_id);
  field("turn_no", m.turn_no);
  field("question", m.question);
  field("rewrite", m.rewrite);
  field("answer", m.answer);
  field("source", m.source);
  field("gold_passages", m.gold_passages);
  if (j.contains("source_override") && !j.at("source_override").is_null()) {
    m.source_override = parse_subset(j.at("source_override").get<std::string>());
  }
  return m;
}

namespace {

std::string scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  return v.dump();
}

const json* find_field(const json& rec, const std::string& name) {
  if (name.empty() || !rec.is_object()) return nullptr;
  auto it = rec.find(name);
  if (it == rec.end() || it->is_null()) return nullptr;
  return &*it;
}

const json& require_field(const json& rec, const std::string& name, std::size_t index) {
  const json* v = find_field(rec, name);
  if (v == nullptr) {
    throw InputError("record " + std::to_string(index) + ": missing field '" + name + "'");
  }
  return *v;
}

}  // namespace

std::vector<Conversation> load_conversations(const std::filesystem::path& path,
                                             const SchemaMap& schema) {
  const auto records = read_json_records(path);

  std::vector<Conversation> out;
  std::unordered_map<std::string, std::size_t> by_id;
  std::set<std::pair<std::string, int>> seen;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& rec = records[i];
    if (!rec.is_object()) throw InputError("record " + std::to_string(i) + ": not an object");

    const std::string conv_id = scalar_to_string(require_field(rec, schema.conversation_id, i));
    const json& turn_field = require_field(rec, schema.turn_no, i);
    int turn_no = 0;
    if (turn_field.is_number_integer()) {
      turn_no = turn_field.get<int>();
    } else {
      try {
        turn_no = std::stoi(scalar_to_string(turn_field));
      } catch (const std::exception&) {
        throw InputError("record " + std::to_string(i) + ": field '" + schema.turn_no +
                         "' is not an integer");
      }
    }
    if (turn_no < 1) {
      throw InputError("record " + std::to_string(i) + ": turn number must be positive");
    }
    if (!seen.insert({conv_id, turn_no}).second) {
      throw InputError("record " + std::to_string(i) + ": duplicate (conversation " + conv_id +
                       ", turn " + std::to_string(turn_no) + ")");
    }

    Exchange ex;
    ex.turn_no = turn_no;
    ex.question = std::string(trim(require_field(rec, schema.question, i).get<std::string>()));
    if (ex.question.empty()) {
      throw InputError("record " + std::to_string(i) + ": empty field '" + schema.question + "'");
    }
    if (const json* a = find_field(rec, schema.answer)) ex.answer = std::string(trim(a->get<std::string>()));
    if (const json* r = find_field(rec, schema.rewrite)) {
      auto text = std::string(trim(r->get<std::string>()));
      if (!text.empty()) ex.human_rewrite = std::move(text);
    }
    if (const json* g = find_field(rec, schema.gold_passages)) {
      if (g->is_array()) {
        for (const auto& p : *g) ex.gold_passage_ids.push_back(scalar_to_string(p));
      } else {
        ex.gold_passage_ids.push_back(scalar_to_string(*g));
      }
    }

    Subset source = Subset::Unknown;
    if (const json* s = find_field(rec, schema.source)) source = parse_subset(s->get<std::string>());
    if (source == Subset::Unknown && schema.source_override) source = *schema.source_override;

    auto [it, inserted] = by_id.try_emplace(conv_id, out.size());
    if (inserted) {
      out.push_back(Conversation{conv_id, source, {}});
    }
    Conversation& conv = out[it->second];
    if (conv.source == Subset::Unknown) conv.source = source;
    conv.exchanges.push_back(std::move(ex));
  }

  for (auto& conv : out) {
    std::sort(conv.exchanges.begin(), conv.exchanges.end(),
              [](const Exchange& a, const Exchange& b) { return a.turn_no < b.turn_no; });
  }
  return out;
}

std::vector<RewriteTask> preprocess_tasks(const std::vector<Conversation>& conversations) {
  std::vector<RewriteTask> tasks;
  for (const auto& conv : conversations) {
    std::vector<QaPair> context;
    for (std::size_t i = 0; i < conv.exchanges.size(); ++i) {
      const Exchange& ex = conv.exchanges[i];
      RewriteTask t;
      t.conversation_id = conv.id;
      t.turn_no = ex.turn_no;
      t.context = context;
      t.question = ex.question;
      if (i == 0) {
        if (ex.human_rewrite) {
          t.question = *ex.human_rewrite;
        } else {
          t.first_question_unreplaced = true;
        }
      }
      t.human_rewrite = ex.human_rewrite;
      t.gold_passage_ids = ex.gold_passage_ids;
      std::sort(t.gold_passage_ids.begin(), t.gold_passage_ids.end());
      t.gold_passage_ids.erase(std::unique(t.gold_passage_ids.begin(), t.gold_passage_ids.end()),
                               t.gold_passage_ids.end());
      t.source = conv.source;
      context.push_back({t.question, ex.answer});
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

FilterResult filter_evaluable(const std::vector<RewriteTask>& tasks, const Qrels& qrels) {
  FilterResult result;
  for (const auto& task : tasks) {
    auto relevant = qrels.relevant(task.id());
    if (relevant.empty()) continue;
    RewriteTask kept = task;
    kept.gold_passage_ids = std::move(relevant);
    ++result.per_subset[kept.source];
    result.tasks.push_back(std::move(kept));
  }
  return result;
}

PassageReader::PassageReader(const std::filesystem::path& path, PassageFields fields)
    : path_(path), in_(path, std::ios::binary), fields_(std::move(fields)) {
  if (!in_) throw InputError("cannot open " + path.string());
}

std::optional<Passage> PassageReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (trim(line).empty()) continue;
    auto where = [&] { return path_.string() + ": line " + std::to_string(line_no_); };
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error&) {
      throw InputError(where() + ": malformed JSON");
    }
    if (!rec.is_object()) throw InputError(where() + ": not an object");
    const json* id = find_field(rec, fields_.id);
    if (id == nullptr) throw InputError(where() + ": missing field '" + fields_.id + "'");
    const json* text = find_field(rec, fields_.text);
    if (text == nullptr || !text->is_string()) {
      throw InputError(where() + ": missing field '" + fields_.text + "'");
    }
    Passage p{scalar_to_string(*id), text->get<std::string>()};
    if (!seen_.insert(p.id).second) throw InputError(where() + ": duplicate passage id '" + p.id + "'");
    return p;
  }
  return std::nullopt;
}

std::vector<Passage> load_passages(const std::filesystem::path& path, PassageFields fields) {
  PassageReader reader(path, std::move(fields));
  std::vector<Passage> out;
  while (auto p = reader.next()) out.push_back(std::move(*p));
  return out;
}

DevSplit split_dev(const std::vector<Conversation>& conversations, std::size_t n, std::uint64_t seed) {
  if (n > conversations.size()) {
    throw InputError("dev split of " + std::to_string(n) + " exceeds " +
                     std::to_string(conversations.size()) + " conversations");
  }
  const auto picked = sample_indices(conversations.size(), n, seed);
  DevSplit split;
  std::size_t next = 0;
  for (std::size_t i = 0; i < conversations.size(); ++i) {
    if (next < picked.size() && picked[next] == i) {
      split.dev.push_back(conversations[i]);
      ++next;
    } else {
      split.train.push_back(conversations[i]);
    }
  }
  return split;
}

json task_to_json(const RewriteTask& task) {
  json ctx = json::array();
  for (const auto& p : task.context) ctx.push_back({{"question", p.question}, {"answer", p.answer}});
  json j = {{"id", task.id()},
            {"conversation_id", task.conversation_id},
            {"turn_no", task.turn_no},
            {"source", std::string(to_string(task.source))},
            {"question", task.question},
            {"context", std::move(ctx)},
            {"gold_passage_ids", task.gold_passage_ids},
            {"first_question_unreplaced", task.first_question_unreplaced}};
  j["human_rewrite"] = task.human_rewrite ? json(*task.human_rewrite) : json(nullptr);
  return j;
}

RewriteTask task_from_json(const json& j) {
  RewriteTask t;
  t.conversation_id = j.at("conversation_id").get<std::string>();
  t.turn_no = j.at("turn_no").get<int>();
  t.question = j.at("question").get<std::string>();
  t.source = parse_subset(j.value("source", std::string("Unknown")));
  for (const auto& p : j.value("context", json::array())) {
    t.context.push_back({p.at("question").get<std::string>(), p.at("answer").get<std::string>()});
  }
  if (j.contains("human_rewrite") && !j.at("human_rewrite").is_null()) {
    t.human_rewrite = j.at("human_rewrite").get<std::string>();
  }
  t.gold_passage_ids = j.value("gold_passage_ids", std::vector<std::string>{});
  t.first_question_unreplaced = j.value("first_question_unreplaced", false);
  return t;
}

void write_tasks(const std::filesystem::path& path, const std::vector<RewriteTask>& tasks) {
  std::vector<json> records;
  records.reserve(tasks.size());
  for (const auto& t : tasks) records.push_back(task_to_json(t));
  write_jsonl(path, records);
}

std::vector<RewriteTask> read_tasks(const std::filesystem::path& path) {
  std::vector<RewriteTask> out;
  for_each_jsonl(path, [&](std::size_t line, const json& j) {
    try {
      out.push_back(task_from_json(j));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cqr::corpus
