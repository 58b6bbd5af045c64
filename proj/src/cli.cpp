// SPDX-License-Identifier: Apache-2.0
#include "cqr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <list>
#include <set>
#include <sstream>

#include "cqr/analysis.hpp"
#include "cqr/corpus.hpp"
#include "cqr/dense_search.hpp"
#include "cqr/distill_export.hpp"
#include "cqr/error.hpp"
#include "cqr/evaluation.hpp"
#include "cqr/http_transport.hpp"
#include "cqr/llm_client.hpp"
#include "cqr/prompting.hpp"
#include "cqr/rewriter.hpp"
#include "cqr/simd/kernels.hpp"
#include "cqr/sparse_index.hpp"

#ifndef CQR_DEFAULT_DATA_DIR
#define CQR_DEFAULT_DATA_DIR "data"
#endif

namespace cqr::cli {

namespace fs = std::filesystem;

json default_config() {
  return json{
      {"paths", {{"demonstrations", ""}, {"cache", ""}}},
      {"schema",
       {{"conversation_id", "Conversation_no"},
        {"turn_no", "Turn_no"},
        {"question", "Question"},
        {"rewrite", "Rewrite"},
        {"answer", "Answer"},
        {"source", "Conversation_source"},
        {"gold_passages", ""},
        {"source_override", nullptr}}},
      {"passages", {{"id_field", "id"}, {"text_field", "contents"}}},
      {"llm",
       {{"model", "gpt-3.5-turbo"},
        {"endpoint", "https://api.openai.com"},
        {"path", "/v1/chat/completions"},
        {"api_key_env", "OPENAI_API_KEY"},
        {"temperature", 0.0},
        {"max_tokens", llm::kDefaultMaxTokens},
        {"concurrency", 4},
        {"rate_per_second", 0.0},
        {"max_attempts", 5},
        {"backoff_ms", 1000},
        {"timeout_s", 60},
        {"mock_transcript", ""}}},
      {"prompt", {{"context_char_budget", 12000}}},
      {"retrieval",
       {{"k", 100},
        {"k1", 0.82},
        {"b", 0.68},
        {"stem", true},
        {"stopwords", ""},
        {"shards", static_cast<int>(dense::kDefaultShardCount)},
        {"dimension", static_cast<int>(dense::kDefaultDimension)},
        {"embedding", "hash"},
        {"embedding_vectors", ""},
        {"embedding_endpoint", ""},
        {"embedding_path", "/v1/embeddings"},
        {"embedding_model", ""},
        {"embedding_batch", 256}}},
      {"seeds", {{"dev", 42}, {"distill", 42}, {"embedding", 42}}},
      {"distill", {{"n_train", 10000}, {"n_dev", 2000}}},
  };
}

json load_config(const fs::path& path) {
  json cfg = default_config();
  json file;
  try {
    file = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  if (!file.is_object()) throw InputError(path.string() + ": config must be a JSON object");
  for (const auto& [section, _] : file.items()) {
    if (!cfg.contains(section)) throw InputError(path.string() + ": unknown config section '" + section + "'");
  }
  if (file.contains("llm") && (file["llm"].contains("api_key") || file["llm"].contains("key"))) {
    throw InputError(path.string() + ": API keys are read from the environment, not from config files");
  }
  cfg.merge_patch(file);
  return cfg;
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string digest(const fs::path& p) {
  if (fs::is_regular_file(p)) return sha256_hex(read_file(p));
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += f.filename().string() + ":" + sha256_hex(read_file(f)) + "\n";
    return sha256_hex(acc);
  }
  return "";
}

}  // namespace

void write_manifest(const fs::path& artifact, const std::string& command, const json& config,
                    const std::map<std::string, fs::path>& inputs, const json& details) {
  json in = json::object();
  for (const auto& [name, path] : inputs) {
    if (path.empty()) continue;
    in[name] = {{"path", path.string()}, {"sha256", digest(path)}};
  }
  json manifest{{"command", command},
                {"version", kVersion},
                {"created", utc_timestamp()},
                {"artifact", artifact.string()},
                {"inputs", in},
                {"config_hash", sha256_hex(config.dump())},
                {"config", config},
                {"simd", simd::isa_name(simd::active_kernels().isa)},
                {"details", details}};
  fs::path mpath = artifact;
  mpath += ".manifest.json";
  write_file(mpath, manifest.dump(2) + "\n");
}

namespace {

/// A CLI flag that overrides one config value when given.
struct Override {
  CLI::Option* opt = nullptr;
  std::string value;
  json::json_pointer ptr;
};

class Overrides {
 public:
  void add(CLI::App* sub, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto& o = items_.emplace_back();
    o.ptr = json::json_pointer(pointer);
    o.opt = sub->add_option(flag, o.value, help + " [config " + pointer + "]");
  }

  void apply(json& cfg) const {
    const json defaults = default_config();
    for (const auto& o : items_) {
      if (o.opt->count() == 0) continue;
      const json& proto = defaults.contains(o.ptr) ? defaults.at(o.ptr) : json(o.value);
      try {
        if (proto.is_boolean()) {
          const auto v = to_lower_ascii(o.value);
          if (v != "true" && v != "false" && v != "1" && v != "0") throw std::invalid_argument("not a boolean");
          cfg[o.ptr] = v == "true" || v == "1";
        } else if (proto.is_number_integer() || proto.is_number_unsigned()) {
          std::size_t used = 0;
          const long long v = std::stoll(o.value, &used);
          if (used != o.value.size()) throw std::invalid_argument("not an integer");
          cfg[o.ptr] = v;
        } else if (proto.is_number_float()) {
          std::size_t used = 0;
          const double v = std::stod(o.value, &used);
          if (used != o.value.size()) throw std::invalid_argument("not a number");
          cfg[o.ptr] = v;
        } else {
          cfg[o.ptr] = o.value;
        }
      } catch (const std::invalid_argument&) {
        throw CLI::ValidationError(o.opt->get_name(), "invalid value '" + o.value + "'");
      } catch (const std::out_of_range&) {
        throw CLI::ValidationError(o.opt->get_name(), "value out of range '" + o.value + "'");
      }
    }
  }

 private:
  std::list<Override> items_;
};

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw InputError("missing " + what + " path");
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

fs::path data_dir() {
  if (const char* env = std::getenv("CQR_DATA_DIR"); env && *env) return env;
  return CQR_DEFAULT_DATA_DIR;
}

fs::path demonstrations_path(const json& cfg) {
  const auto p = cfg.at(json::json_pointer("/paths/demonstrations")).get<std::string>();
  return p.empty() ? data_dir() / "prompts" / "demonstrations.json" : fs::path(p);
}

corpus::PassageFields passage_fields(const json& cfg) {
  return {cfg["passages"]["id_field"].get<std::string>(), cfg["passages"]["text_field"].get<std::string>()};
}

text::Analyzer analyzer_from(const json& cfg) {
  text::Analyzer a;
  a.stemmer = cfg["retrieval"]["stem"].get<bool>() ? text::Stemmer::Porter : text::Stemmer::None;
  const auto sw = cfg["retrieval"]["stopwords"].get<std::string>();
  if (!sw.empty()) {
    require_file(sw, "stopword list");
    a.stopwords = text::load_stopwords(sw);
  }
  return a;
}

std::shared_ptr<Transport> http_transport(const std::string& endpoint, const std::string& key_env, int timeout_s) {
  if (endpoint.empty()) throw InputError("no endpoint configured");
  const std::string key = api_key_from_env(key_env);
  if (key.empty()) throw InputError("environment variable " + key_env + " is not set");
  return std::make_shared<HttpTransport>(endpoint, std::map<std::string, std::string>{{"Authorization", "Bearer " + key}},
                                         std::chrono::seconds(timeout_s));
}

std::unique_ptr<dense::EmbeddingProvider> make_provider(const json& cfg) {
  const auto& r = cfg["retrieval"];
  const auto kind = r["embedding"].get<std::string>();
  const auto dim = r["dimension"].get<std::size_t>();
  if (kind == "hash") return std::make_unique<dense::HashEmbeddingProvider>(dim, cfg["seeds"]["embedding"].get<std::uint64_t>());
  if (kind == "precomputed") {
    const fs::path vectors = r["embedding_vectors"].get<std::string>();
    require_file(vectors, "precomputed vector file");
    return std::make_unique<dense::PrecomputedEmbeddingProvider>(vectors);
  }
  if (kind == "http") {
    auto transport = http_transport(r["embedding_endpoint"].get<std::string>(), cfg["llm"]["api_key_env"].get<std::string>(),
                                    cfg["llm"]["timeout_s"].get<int>());
    return std::make_unique<dense::HttpEmbeddingProvider>(transport, r["embedding_path"].get<std::string>(),
                                                          r["embedding_model"].get<std::string>(), dim);
  }
  throw InputError("unknown embedding provider '" + kind + "' (expected hash, precomputed or http)");
}

std::shared_ptr<llm::LlmClient> make_client(const json& cfg) {
  const auto& l = cfg["llm"];
  std::shared_ptr<Transport> transport;
  const auto mock = l["mock_transcript"].get<std::string>();
  if (!mock.empty()) {
    require_file(mock, "mock transcript");
    transport = llm::MockTransport::from_transcript(mock);
  } else {
    transport = http_transport(l["endpoint"].get<std::string>(), l["api_key_env"].get<std::string>(),
                               l["timeout_s"].get<int>());
  }
  llm::ClientConfig cc;
  cc.path = l["path"].get<std::string>();
  cc.concurrency = l["concurrency"].get<int>();
  cc.rate_per_second = l["rate_per_second"].get<double>();
  cc.retry.max_attempts = l["max_attempts"].get<int>();
  cc.retry.base_delay = std::chrono::milliseconds(l["backoff_ms"].get<int>());
  const auto cache = cfg["paths"]["cache"].get<std::string>();
  if (!cache.empty()) cc.cache_path = fs::path(cache);
  return std::make_shared<llm::LlmClient>(transport, cc);
}

rewriter::RewriterOptions rewriter_options(const json& cfg, rewriter::Method method,
                                           const std::vector<prompting::Property>& drops) {
  rewriter::RewriterOptions o;
  o.model = cfg["llm"]["model"].get<std::string>();
  o.temperature = cfg["llm"]["temperature"].get<double>();
  o.max_tokens = cfg["llm"]["max_tokens"].get<int>();
  o.prompt.context_char_budget = cfg["prompt"]["context_char_budget"].get<std::size_t>();
  o.workers = cfg["llm"]["concurrency"].get<int>();
  for (auto p : drops) {
    o.rewriter_instruction = prompting::ablate_instruction(o.rewriter_instruction, p);
    o.editor_instruction = prompting::ablate_instruction(o.editor_instruction, p);
  }
  if (rewriter::is_llm_method(method) && method != rewriter::Method::RwZsl) {
    const auto path = demonstrations_path(cfg);
    require_file(path, "demonstration file");
    o.demonstrations = prompting::load_demonstrations(path);
  }
  return o;
}

std::vector<prompting::Property> parse_drops(const std::vector<std::string>& names) {
  std::vector<prompting::Property> out;
  for (const auto& n : names) out.push_back(prompting::parse_property(n));
  return out;
}

json instruction_json(const prompting::Instruction& i) {
  json props = json::array();
  for (auto p : i.properties()) props.push_back(prompting::to_string(p));
  return {{"text", i.text()}, {"properties", props}};
}

std::map<std::string, std::string> subsets_of(const std::vector<corpus::RewriteTask>& tasks) {
  std::map<std::string, std::string> m;
  for (const auto& t : tasks) {
    if (t.source != corpus::Subset::Unknown) m[t.id()] = std::string(corpus::to_string(t.source));
  }
  return m;
}

std::string metric_summary(const MetricReport& report, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& [subset, metrics] : report.aggregate) {
    os << subset << " (" << report.query_counts.at(subset) << " queries):";
    for (const auto& name : names) os << ' ' << name << '=' << metrics.at(name);
    os << '\n';
  }
  return os.str();
}

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  Overrides overrides;
  std::function<void(const json&)> action;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conversational query rewriting and retrieval toolkit", "cqr"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  std::list<Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto& c = commands.emplace_back();
    c.name = name;
    c.app = app.add_subcommand(name, help);
    return c;
  };

  // prepare
  struct {
    std::string dataset, qrels, schema, out, dev_out;
    std::size_t dev_size = 0;
  } prep;
  {
    auto& c = add("prepare", "Load conversations, build rewrite tasks and drop tasks without relevant passages");
    c.app->add_option("--dataset", prep.dataset, "Conversation records (JSON array or JSONL)")->required();
    c.app->add_option("--qrels", prep.qrels, "Relevance judgments; tasks without a relevant passage are dropped");
    c.app->add_option("--schema-file", prep.schema, "JSON field map overriding the default record schema");
    c.app->add_option("--out", prep.out, "Output task file (JSONL)")->required();
    c.app->add_option("--dev-size", prep.dev_size, "Hold out this many conversations as a dev split");
    c.app->add_option("--dev-out", prep.dev_out, "Task file for the dev split");
    c.overrides.add(c.app, "--source", "/schema/source_override", "Subset for records without a source field");
    c.overrides.add(c.app, "--seed", "/seeds/dev", "Dev split seed");
    c.action = [&](const json& cfg) {
      require_file(prep.dataset, "dataset");
      json schema_json = cfg["schema"];
      if (!prep.schema.empty()) {
        require_file(prep.schema, "schema file");
        schema_json.merge_patch(json::parse(read_file(prep.schema)));
      }
      const auto schema = corpus::SchemaMap::from_json(schema_json);
      const auto conversations = corpus::load_conversations(prep.dataset, schema);
      json details{{"conversations", conversations.size()}};
      auto count_by_subset = [](const std::vector<corpus::RewriteTask>& tasks) {
        json j = json::object();
        for (const auto& t : tasks) {
          const std::string key(corpus::to_string(t.source));
          j[key] = j.value(key, 0) + 1;
        }
        return j;
      };

      if (prep.dev_size > 0) {
        if (prep.dev_out.empty()) throw CLI::ValidationError("--dev-out", "required with --dev-size");
        const auto split = corpus::split_dev(conversations, prep.dev_size, cfg["seeds"]["dev"].get<std::uint64_t>());
        const auto train = corpus::preprocess_tasks(split.train);
        const auto dev = corpus::preprocess_tasks(split.dev);
        corpus::write_tasks(prep.out, train);
        corpus::write_tasks(prep.dev_out, dev);
        details["train_tasks"] = train.size();
        details["dev_tasks"] = dev.size();
        details["dev_conversations"] = split.dev.size();
        write_manifest(prep.dev_out, "prepare", cfg, {{"dataset", prep.dataset}}, details);
        write_manifest(prep.out, "prepare", cfg, {{"dataset", prep.dataset}}, details);
        out << "train tasks: " << train.size() << "\ndev tasks: " << dev.size() << '\n';
        return;
      }

      auto tasks = corpus::preprocess_tasks(conversations);
      details["tasks_before_filter"] = tasks.size();
      std::size_t unreplaced = 0;
      for (const auto& t : tasks) unreplaced += t.first_question_unreplaced ? 1 : 0;
      details["first_questions_unreplaced"] = unreplaced;
      if (!prep.qrels.empty()) {
        require_file(prep.qrels, "qrels");
        auto filtered = corpus::filter_evaluable(tasks, read_qrels(prep.qrels));
        tasks = std::move(filtered.tasks);
      }
      details["tasks"] = tasks.size();
      details["per_subset"] = count_by_subset(tasks);
      corpus::write_tasks(prep.out, tasks);
      write_manifest(prep.out, "prepare", cfg, {{"dataset", prep.dataset}, {"qrels", prep.qrels}}, details);
      out << "tasks: " << tasks.size() << '\n';
      for (const auto& [subset, n] : details["per_subset"].items()) out << "  " << subset << ": " << n << '\n';
    };
  }

  // rewrite / ablate
  struct RewriteArgs {
    std::string method, tasks, out, initials, initials_out;
    std::vector<std::string> drop;
  };
  RewriteArgs rw, ab;
  auto add_llm_flags = [](Command& c) {
    c.overrides.add(c.app, "--model", "/llm/model", "Chat model name");
    c.overrides.add(c.app, "--endpoint", "/llm/endpoint", "Base URL of the chat-completion service");
    c.overrides.add(c.app, "--api-key-env", "/llm/api_key_env", "Environment variable holding the API key");
    c.overrides.add(c.app, "--mock-transcript", "/llm/mock_transcript", "Answer from a scripted transcript instead");
    c.overrides.add(c.app, "--cache", "/paths/cache", "Response cache file");
    c.overrides.add(c.app, "--concurrency", "/llm/concurrency", "Maximum in-flight requests");
    c.overrides.add(c.app, "--rate", "/llm/rate_per_second", "Maximum requests per second (0: unlimited)");
    c.overrides.add(c.app, "--max-tokens", "/llm/max_tokens", "Generation limit");
    c.overrides.add(c.app, "--temperature", "/llm/temperature", "Sampling temperature");
    c.overrides.add(c.app, "--demonstrations", "/paths/demonstrations", "Demonstration file");
    c.overrides.add(c.app, "--context-budget", "/prompt/context_char_budget", "Context character budget");
  };
  auto rewrite_action = [&](const RewriteArgs& a, const json& cfg, const std::string& command) {
    const auto method = rewriter::parse_method(a.method);
    const auto drops = parse_drops(a.drop);
    require_file(a.tasks, "task file");
    const auto tasks = corpus::read_tasks(a.tasks);
    auto options = rewriter_options(cfg, method, drops);
    json details{{"method", rewriter::to_string(method)},
                 {"sanitizer_version", rewriter::kSanitizerVersion},
                 {"rewriter_instruction", instruction_json(options.rewriter_instruction)},
                 {"editor_instruction", instruction_json(options.editor_instruction)}};
    json dropped = json::array();
    for (auto p : drops) dropped.push_back(prompting::to_string(p));
    details["dropped"] = dropped;

    std::shared_ptr<llm::LlmClient> client;
    if (rewriter::is_llm_method(method)) client = make_client(cfg);
    const rewriter::Rewriter rewriter(client, std::move(options));

    rewriter::RewriteMap initials;
    const rewriter::RewriteMap* initials_ptr = nullptr;
    if (!a.initials.empty()) {
      require_file(a.initials, "initial rewrite file");
      initials = rewriter::to_map(rewriter::read_rewrites(a.initials));
      initials_ptr = &initials;
    } else if (method == rewriter::Method::EdFile) {
      throw InputError("ed_file needs --initials");
    }

    rewriter::GenerateResult result;
    if (method == rewriter::Method::EdSelf && initials_ptr == nullptr) {
      auto both = rewriter::rewrite_then_edit(rewriter, tasks);
      if (!a.initials_out.empty()) {
        rewriter::write_rewrites(a.initials_out, both.initial.records);
        write_manifest(a.initials_out, command, cfg, {{"tasks", a.tasks}}, details);
      }
      details["initial_failures"] = both.initial.failures;
      result = std::move(both.edited);
    } else {
      result = rewriter.generate(method, tasks, initials_ptr);
    }
    rewriter::write_rewrites(a.out, result.records);
    details["records"] = result.records.size();
    details["failures"] = result.failures;
    if (client) details["network_calls"] = client->network_calls();
    write_manifest(a.out, command, cfg, {{"tasks", a.tasks}, {"initials", a.initials}}, details);
    out << "rewrites: " << result.records.size() << " (" << result.failures << " failed)\n";
    if (result.failures > 0) err << "warning: " << result.failures << " rewrite(s) fell back to the question\n";
  };
  {
    auto& c = add("rewrite", "Produce rewrites with one method");
    c.app->add_option("--method", rw.method, "original|human|rw-zsl|rw-fsl|ed-self|ed-file")->required();
    c.app->add_option("--tasks", rw.tasks, "Task file from prepare")->required();
    c.app->add_option("--out", rw.out, "Output rewrite file (JSONL)")->required();
    c.app->add_option("--initials", rw.initials, "Rewrite file with initial rewrites (ed-file, optional for ed-self)");
    c.app->add_option("--initials-out", rw.initials_out, "Where ed-self writes its own rw-fsl rewrites");
    c.app->add_option("--drop", rw.drop, "Remove a property from the instructions");
    add_llm_flags(c);
    c.action = [&](const json& cfg) { rewrite_action(rw, cfg, "rewrite"); };
  }
  {
    auto& c = add("ablate", "Instruction with properties removed; rewrites tasks when --tasks is given");
    ab.method = "rw-fsl";
    c.app->add_option("--drop", ab.drop, "correctness|clarity|informativeness|nonredundancy")->required();
    c.app->add_option("--method", ab.method, "LLM method to run")->capture_default_str();
    c.app->add_option("--tasks", ab.tasks, "Task file from prepare");
    c.app->add_option("--out", ab.out, "Rewrite file, or instruction JSON without --tasks")->required();
    c.app->add_option("--initials", ab.initials, "Initial rewrites for ed-file");
    c.app->add_option("--initials-out", ab.initials_out, "Where ed-self writes its own rw-fsl rewrites");
    add_llm_flags(c);
    c.action = [&](const json& cfg) {
      const auto method = rewriter::parse_method(ab.method);
      if (!rewriter::is_llm_method(method)) throw InputError("ablation needs an LLM method, got " + ab.method);
      if (!ab.tasks.empty()) {
        rewrite_action(ab, cfg, "ablate");
        return;
      }
      const auto drops = parse_drops(ab.drop);
      auto instr = rewriter::needs_initials(method) ? prompting::Instruction::editor() : prompting::Instruction::rewriter();
      for (auto p : drops) instr = prompting::ablate_instruction(instr, p);
      json dropped = json::array();
      for (auto p : drops) dropped.push_back(prompting::to_string(p));
      json doc = instruction_json(instr);
      doc["role"] = rewriter::needs_initials(method) ? "editor" : "rewriter";
      doc["dropped"] = dropped;
      write_file(ab.out, doc.dump(2) + "\n");
      write_manifest(ab.out, "ablate", cfg, {}, {{"method", rewriter::to_string(method)}, {"instruction", doc}});
      out << instr.text() << '\n';
    };
  }

  // index-sparse
  struct {
    std::string passages, out;
  } idx;
  {
    auto& c = add("index-sparse", "Build a BM25 index over a passage collection");
    c.app->add_option("--passages", idx.passages, "Passage collection (JSONL)")->required();
    c.app->add_option("--out", idx.out, "Index file")->required();
    c.overrides.add(c.app, "--k1", "/retrieval/k1", "BM25 k1");
    c.overrides.add(c.app, "--b", "/retrieval/b", "BM25 b");
    c.overrides.add(c.app, "--stem", "/retrieval/stem", "Porter stemming (true/false)");
    c.overrides.add(c.app, "--stopwords", "/retrieval/stopwords", "Stopword list");
    c.overrides.add(c.app, "--id-field", "/passages/id_field", "Passage id field");
    c.overrides.add(c.app, "--text-field", "/passages/text_field", "Passage text field");
    c.action = [&](const json& cfg) {
      require_file(idx.passages, "passage collection");
      sparse::Bm25Builder builder(analyzer_from(cfg),
                                  {cfg["retrieval"]["k1"].get<double>(), cfg["retrieval"]["b"].get<double>()});
      corpus::PassageReader reader(idx.passages, passage_fields(cfg));
      while (auto p = reader.next()) builder.add(*p);
      const auto index = std::move(builder).finish();
      index.save(idx.out);
      write_manifest(idx.out, "index-sparse", cfg, {{"passages", idx.passages}},
                     {{"documents", index.doc_count()}, {"terms", index.term_count()}, {"avg_doc_len", index.avg_doc_len()}});
      out << "indexed " << index.doc_count() << " passages, " << index.term_count() << " terms\n";
    };
  }

  // embed
  struct {
    std::string passages, out;
  } emb;
  {
    auto& c = add("embed", "Encode passages into sharded unit vectors");
    c.app->add_option("--passages", emb.passages, "Passage collection (JSONL)")->required();
    c.app->add_option("--out", emb.out, "Output directory for shard files")->required();
    c.overrides.add(c.app, "--provider", "/retrieval/embedding", "hash|precomputed|http");
    c.overrides.add(c.app, "--vectors", "/retrieval/embedding_vectors", "Precomputed vectors (JSONL)");
    c.overrides.add(c.app, "--embedding-endpoint", "/retrieval/embedding_endpoint", "Embedding service base URL");
    c.overrides.add(c.app, "--embedding-model", "/retrieval/embedding_model", "Embedding model name");
    c.overrides.add(c.app, "--dimension", "/retrieval/dimension", "Vector dimension");
    c.overrides.add(c.app, "--shards", "/retrieval/shards", "Shard count");
    c.overrides.add(c.app, "--id-field", "/passages/id_field", "Passage id field");
    c.overrides.add(c.app, "--text-field", "/passages/text_field", "Passage text field");
    c.action = [&](const json& cfg) {
      require_file(emb.passages, "passage collection");
      auto provider = make_provider(cfg);
      const auto batch = std::max<std::size_t>(1, cfg["retrieval"]["embedding_batch"].get<std::size_t>());
      std::vector<std::string> ids, texts;
      std::vector<dense::Vector> vectors;
      corpus::PassageReader reader(emb.passages, passage_fields(cfg));
      auto flush = [&] {
        if (texts.empty()) return;
        for (auto& v : dense::embed(texts, *provider)) vectors.push_back(std::move(v));
        texts.clear();
      };
      while (auto p = reader.next()) {
        ids.push_back(p->id);
        texts.push_back(std::move(p->text));
        if (texts.size() == batch) flush();
      }
      flush();
      if (ids.empty()) throw InputError(emb.passages + ": no passages");
      const auto shards = dense::make_shards(ids, vectors, cfg["retrieval"]["shards"].get<std::size_t>());
      dense::save_shards(emb.out, shards);
      write_manifest(fs::path(emb.out) / "index", "embed", cfg, {{"passages", emb.passages}},
                     {{"provider", provider->name()}, {"dimension", provider->dimension()}, {"vectors", ids.size()},
                      {"shards", shards.size()}});
      out << "embedded " << ids.size() << " passages into " << shards.size() << " shards\n";
    };
  }

  // search
  struct {
    std::string retriever, index, queries, out, tag, method;
  } srch;
  {
    auto& c = add("search", "Retrieve passages for each rewrite");
    c.app->add_option("--retriever", srch.retriever, "sparse|dense")->required();
    c.app->add_option("--index", srch.index, "Sparse index file or dense shard directory")->required();
    c.app->add_option("--queries", srch.queries, "Rewrite file whose rewrites are the queries")->required();
    c.app->add_option("--out", srch.out, "Output TREC run file")->required();
    c.app->add_option("--tag", srch.tag, "Run tag (default: <retriever>_<method>)");
    c.app->add_option("--method", srch.method, "Use only records of this method");
    c.overrides.add(c.app, "--k", "/retrieval/k", "Passages per query");
    c.overrides.add(c.app, "--provider", "/retrieval/embedding", "Query encoder for dense search");
    c.overrides.add(c.app, "--vectors", "/retrieval/embedding_vectors", "Precomputed vectors (JSONL)");
    c.overrides.add(c.app, "--dimension", "/retrieval/dimension", "Vector dimension");
    c.action = [&](const json& cfg) {
      if (srch.retriever != "sparse" && srch.retriever != "dense") {
        throw CLI::ValidationError("--retriever", "expected sparse or dense");
      }
      require_file(srch.index, "index");
      require_file(srch.queries, "query rewrite file");
      auto records = rewriter::read_rewrites(srch.queries);
      if (!srch.method.empty()) {
        const auto m = rewriter::parse_method(srch.method);
        std::erase_if(records, [&](const auto& r) { return r.method != m; });
      }
      std::set<rewriter::Method> methods;
      for (const auto& r : records) methods.insert(r.method);
      if (methods.size() > 1) throw InputError(srch.queries + " mixes methods; pick one with --method");
      if (records.empty()) throw InputError(srch.queries + ": no queries");
      const auto k = cfg["retrieval"]["k"].get<std::size_t>();

      RunFile run;
      run.tag = srch.tag.empty() ? srch.retriever + "_" + std::string(rewriter::to_string(*methods.begin())) : srch.tag;
      json details{{"retriever", srch.retriever}, {"queries", records.size()}, {"k", k}};
      if (srch.retriever == "sparse") {
        const auto index = sparse::Bm25Index::load(srch.index);
        for (const auto& r : records) run.entries[r.query_id()] = index.search(r.rewrite, k);
      } else {
        const auto shards = dense::load_shards(srch.index);
        auto provider = make_provider(cfg);
        std::vector<std::string> texts;
        for (const auto& r : records) texts.push_back(r.rewrite);
        const auto vectors = dense::embed(texts, *provider);
        for (std::size_t i = 0; i < records.size(); ++i) {
          run.entries[records[i].query_id()] = dense::search_dense(vectors[i], shards, k);
        }
        details["provider"] = provider->name();
      }
      write_run(srch.out, run);
      write_manifest(srch.out, "search", cfg, {{"index", srch.index}, {"queries", srch.queries}}, details);
      out << "wrote " << run.entries.size() << " ranked lists to " << srch.out << '\n';
    };
  }

  // evaluate
  struct {
    std::string run, qrels, tasks, out, table;
  } ev;
  {
    auto& c = add("evaluate", "Score a run against relevance judgments");
    c.app->add_option("--run", ev.run, "TREC run file")->required();
    c.app->add_option("--qrels", ev.qrels, "Relevance judgments")->required();
    c.app->add_option("--tasks", ev.tasks, "Task file: evaluated queries and their subsets");
    c.app->add_option("--out", ev.out, "Report JSON")->required();
    c.app->add_option("--table", ev.table, "Also write a plain-text table");
    c.action = [&](const json& cfg) {
      require_file(ev.run, "run file");
      require_file(ev.qrels, "qrels");
      const auto run = read_run(ev.run);
      const auto qrels = read_qrels(ev.qrels);
      MetricConfig mc;
      std::map<std::string, std::string> subset_of;
      if (!ev.tasks.empty()) {
        require_file(ev.tasks, "task file");
        const auto tasks = corpus::read_tasks(ev.tasks);
        subset_of = subsets_of(tasks);
        std::set<std::string> universe;
        for (const auto& t : tasks) universe.insert(t.id());
        mc.query_universe = std::move(universe);
      }
      const auto report = evaluate_run(run, qrels, mc, subset_of);
      write_file(ev.out, report.to_json().dump(2) + "\n");
      if (!ev.table.empty()) write_file(ev.table, render_metric_table({{run.tag, report}}, metric_names(mc)));
      if (!report.excluded_not_in_qrels.empty()) {
        err << "warning: " << report.excluded_not_in_qrels.size() << " run queries have no relevant judgments\n";
      }
      write_manifest(ev.out, "evaluate", cfg, {{"run", ev.run}, {"qrels", ev.qrels}, {"tasks", ev.tasks}},
                     {{"queries", report.per_query.size()}});
      out << metric_summary(report, metric_names(mc));
    };
  }

  // compare
  struct {
    std::string a, b, qrels, out;
  } cmp;
  {
    auto& c = add("compare", "Per-query win/tie/loss of run A against run B");
    c.app->add_option("--run-a", cmp.a, "First run")->required();
    c.app->add_option("--run-b", cmp.b, "Second run")->required();
    c.app->add_option("--qrels", cmp.qrels, "Relevance judgments")->required();
    c.app->add_option("--out", cmp.out, "Result JSON")->required();
    c.action = [&](const json& cfg) {
      require_file(cmp.a, "run file");
      require_file(cmp.b, "run file");
      require_file(cmp.qrels, "qrels");
      const auto ra = read_run(cmp.a);
      const auto rb = read_run(cmp.b);
      const auto wt = pairwise_win_tie(ra, rb, read_qrels(cmp.qrels));
      const json doc{{"run_a", ra.tag}, {"run_b", rb.tag}, {"win", wt.win},     {"tie", wt.tie},
                     {"loss", wt.loss}, {"wins", wt.wins},  {"ties", wt.ties}, {"losses", wt.losses},
                     {"queries", wt.queries}};
      write_file(cmp.out, doc.dump(2) + "\n");
      write_manifest(cmp.out, "compare", cfg, {{"run_a", cmp.a}, {"run_b", cmp.b}, {"qrels", cmp.qrels}});
      out << std::fixed << std::setprecision(4) << ra.tag << " vs " << rb.tag << ": win " << wt.win << ", tie "
          << wt.tie << ", loss " << wt.loss << " over " << wt.queries << " queries\n";
    };
  }

  // analyze
  struct {
    std::vector<std::string> rewrites;
    std::string tasks, out, table;
  } an;
  {
    auto& c = add("analyze", "Rewrite length, overlap with human rewrites, ROUGE-1 and latency");
    c.app->add_option("--rewrites", an.rewrites, "Rewrite files")->required();
    c.app->add_option("--tasks", an.tasks, "Task file with human rewrites and subsets")->required();
    c.app->add_option("--out", an.out, "Stats JSON")->required();
    c.app->add_option("--table", an.table, "Also write plain-text tables");
    c.action = [&](const json& cfg) {
      require_file(an.tasks, "task file");
      const auto tasks = corpus::read_tasks(an.tasks);
      std::map<std::string, corpus::Subset> subset_of;
      for (const auto& t : tasks) subset_of[t.id()] = t.source;
      const auto humans = distill::human_labels(tasks);
      std::vector<rewriter::RewriteRecord> records;
      std::map<std::string, fs::path> inputs{{"tasks", an.tasks}};
      for (std::size_t i = 0; i < an.rewrites.size(); ++i) {
        require_file(an.rewrites[i], "rewrite file");
        auto r = rewriter::read_rewrites(an.rewrites[i]);
        records.insert(records.end(), r.begin(), r.end());
        inputs["rewrites_" + std::to_string(i)] = an.rewrites[i];
      }
      const auto stats = analysis::rewrite_stats(records, humans, subset_of);
      json doc{{"stats", json::array()}, {"latency", json::array()}};
      for (const auto& s : stats) doc["stats"].push_back(analysis::to_json(s));
      std::string table = analysis::render_stats_table(stats);
      bool timed = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.latency_ms.has_value(); });
      if (timed) {
        const auto lat = analysis::latency_stats(records);
        for (const auto& l : lat) doc["latency"].push_back(analysis::to_json(l));
        table += "\n" + analysis::render_latency_table(lat);
      }
      write_file(an.out, doc.dump(2) + "\n");
      if (!an.table.empty()) write_file(an.table, table);
      write_manifest(an.out, "analyze", cfg, inputs, {{"records", records.size()}});
      out << table;
    };
  }

  // export-distill
  struct {
    std::string train_tasks, dev_tasks, labels, label_source = "rw_fsl", train_out, dev_out;
  } dx;
  {
    auto& c = add("export-distill", "Sample questions and write student training files");
    c.app->add_option("--train-tasks", dx.train_tasks, "Training task pool")->required();
    c.app->add_option("--dev-tasks", dx.dev_tasks, "Dev task pool (default: the training pool)");
    c.app->add_option("--labels", dx.labels, "Rewrite file supplying the labels (not needed for human)");
    c.app->add_option("--label-source", dx.label_source, "rw_fsl|ed_self|human")->capture_default_str();
    c.app->add_option("--train-out", dx.train_out, "Training JSONL")->required();
    c.app->add_option("--dev-out", dx.dev_out, "Dev JSONL")->required();
    c.overrides.add(c.app, "--n-train", "/distill/n_train", "Training questions");
    c.overrides.add(c.app, "--n-dev", "/distill/n_dev", "Dev questions");
    c.overrides.add(c.app, "--seed", "/seeds/distill", "Sampling seed");
    c.action = [&](const json& cfg) {
      const auto source = distill::parse_label_source(dx.label_source);
      require_file(dx.train_tasks, "training task file");
      const auto train_pool = corpus::read_tasks(dx.train_tasks);
      std::vector<corpus::RewriteTask> dev_pool;
      if (!dx.dev_tasks.empty()) {
        require_file(dx.dev_tasks, "dev task file");
        dev_pool = corpus::read_tasks(dx.dev_tasks);
      } else {
        dev_pool = train_pool;
      }
      rewriter::RewriteMap labels;
      if (source == distill::LabelSource::Human) {
        labels = distill::human_labels(train_pool);
        for (auto& [k, v] : distill::human_labels(dev_pool)) labels.emplace(k, v);
      } else {
        require_file(dx.labels, "label rewrite file");
        const auto want = rewriter::parse_method(distill::to_string(source));
        std::vector<rewriter::RewriteRecord> recs;
        for (auto& r : rewriter::read_rewrites(dx.labels)) {
          if (r.method == want && !r.flag) recs.push_back(std::move(r));
        }
        if (recs.empty()) throw InputError(dx.labels + ": no usable " + dx.label_source + " records");
        labels = rewriter::to_map(recs);
      }
      const auto set = distill::export_training_set(train_pool, dev_pool, labels, source,
                                                    cfg["distill"]["n_train"].get<std::size_t>(),
                                                    cfg["distill"]["n_dev"].get<std::size_t>(),
                                                    cfg["seeds"]["distill"].get<std::uint64_t>());
      distill::write_examples(dx.train_out, set.train);
      distill::write_examples(dx.dev_out, set.dev);
      const std::map<std::string, fs::path> inputs{
          {"train_tasks", dx.train_tasks}, {"dev_tasks", dx.dev_tasks}, {"labels", dx.labels}};
      const json details{{"label_source", dx.label_source}, {"train", set.train.size()}, {"dev", set.dev.size()}};
      write_manifest(dx.train_out, "export-distill", cfg, inputs, details);
      write_manifest(dx.dev_out, "export-distill", cfg, inputs, details);
      out << "train: " << set.train.size() << ", dev: " << set.dev.size() << '\n';
    };
  }

  // report
  struct {
    std::vector<std::string> evals;
    std::string stats, out, json_out;
  } rep;
  {
    auto& c = add("report", "Summary tables from evaluation reports and rewrite stats");
    c.app->add_option("--eval", rep.evals, "label=report.json (repeatable, row order kept)");
    c.app->add_option("--stats", rep.stats, "Stats JSON from analyze");
    c.app->add_option("--out", rep.out, "Text report")->required();
    c.app->add_option("--json", rep.json_out, "Combined JSON report");
    c.action = [&](const json& cfg) {
      if (rep.evals.empty() && rep.stats.empty()) throw CLI::ValidationError("report", "give --eval or --stats");
      std::vector<std::pair<std::string, MetricReport>> rows;
      json combined{{"retrieval", json::object()}};
      std::map<std::string, fs::path> inputs;
      for (const auto& spec : rep.evals) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--eval", "expected label=path, got " + spec);
        const std::string label = spec.substr(0, eq);
        const fs::path path = spec.substr(eq + 1);
        require_file(path, "evaluation report");
        json j;
        try {
          j = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
          throw InputError(path.string() + ": " + e.what());
        }
        rows.emplace_back(label, MetricReport::from_json(j));
        combined["retrieval"][label] = j.at("aggregate");
        inputs["eval_" + label] = path;
      }
      std::string text;
      if (!rows.empty()) text += render_metric_table(rows);
      if (!rep.stats.empty()) {
        require_file(rep.stats, "stats file");
        const auto j = json::parse(read_file(rep.stats));
        std::vector<analysis::RewriteStats> stats;
        for (const auto& s : j.at("stats")) {
          analysis::RewriteStats r;
          r.method = s.at("method").get<std::string>();
          r.subset = s.at("subset").get<std::string>();
          r.records = s.at("records").get<std::size_t>();
          r.avg_tokens = s.at("AT").get<double>();
          if (!s.at("OT").is_null()) r.overlap_pct = s.at("OT").get<double>();
          stats.push_back(std::move(r));
        }
        if (!text.empty()) text += "\n";
        text += analysis::render_stats_table(stats);
        combined["rewrites"] = j;
        inputs["stats"] = rep.stats;
      }
      write_file(rep.out, text);
      if (!rep.json_out.empty()) write_file(rep.json_out, combined.dump(2) + "\n");
      write_manifest(rep.out, "report", cfg, inputs);
      out << text;
    };
  }

  // mock-script
  struct {
    std::string tasks, method, responses, initials, out;
    std::vector<std::string> drop;
    bool append = false;
  } ms;
  {
    auto& c = add("mock-script", "Render prompts and write a scripted transcript for the mock backend");
    c.app->add_option("--tasks", ms.tasks, "Task file")->required();
    c.app->add_option("--method", ms.method, "rw-zsl|rw-fsl|ed-self|ed-file")->required();
    c.app->add_option("--responses", ms.responses, "JSONL {query_id, text} scripted per task")->required();
    c.app->add_option("--initials", ms.initials, "Rewrite file with initial rewrites (edit methods)");
    c.app->add_option("--drop", ms.drop, "Properties removed from the instructions");
    c.app->add_option("--out", ms.out, "Transcript JSONL")->required();
    c.app->add_flag("--append", ms.append, "Append to an existing transcript");
    c.overrides.add(c.app, "--demonstrations", "/paths/demonstrations", "Demonstration file");
    c.overrides.add(c.app, "--context-budget", "/prompt/context_char_budget", "Context character budget");
    c.action = [&](const json& cfg) {
      const auto method = rewriter::parse_method(ms.method);
      if (!rewriter::is_llm_method(method)) throw InputError("mock-script needs an LLM method");
      require_file(ms.tasks, "task file");
      require_file(ms.responses, "response file");
      const auto tasks = corpus::read_tasks(ms.tasks);
      std::map<std::string, std::string> responses;
      for_each_jsonl(ms.responses, [&](std::size_t line_no, const json& j) {
        if (!j.contains("query_id") || !j.contains("text")) {
          throw InputError(ms.responses + ": line " + std::to_string(line_no) + ": expected query_id and text");
        }
        responses[j["query_id"].get<std::string>()] = j["text"].get<std::string>();
      });
      rewriter::RewriteMap initials;
      if (rewriter::needs_initials(method)) {
        require_file(ms.initials, "initial rewrite file");
        initials = rewriter::to_map(rewriter::read_rewrites(ms.initials));
      }
      const rewriter::Rewriter renderer(nullptr, rewriter_options(cfg, method, parse_drops(ms.drop)));
      std::vector<json> lines;
      for (const auto& t : tasks) {
        auto it = responses.find(t.id());
        if (it == responses.end()) continue;
        std::optional<std::string> initial;
        if (auto in = initials.find(t.id()); in != initials.end()) initial = in->second;
        const auto prompt = renderer.render(method, t, initial);
        lines.push_back({{"prompt_hash", llm::prompt_hash(prompt)}, {"response_text", it->second}, {"query_id", t.id()}});
      }
      std::string text;
      for (const auto& l : lines) text += l.dump() + "\n";
      if (ms.append && fs::exists(ms.out)) text = read_file(ms.out) + text;
      write_file(ms.out, text);
      write_manifest(ms.out, "mock-script", cfg, {{"tasks", ms.tasks}, {"responses", ms.responses}},
                     {{"method", rewriter::to_string(method)}, {"scripted", lines.size()}});
      out << "scripted " << lines.size() << " prompts\n";
    };
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    json cfg = config_path.empty() ? default_config() : load_config(config_path);
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      c.overrides.apply(cfg);
      c.action(cfg);
    }
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace cqr::cli
