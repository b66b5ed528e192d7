#include "inferqa/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "inferqa/json_io.hpp"
#include "inferqa/rerank.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

namespace fs = std::filesystem;

namespace {

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* v = std::getenv(name.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

EndpointConfig endpoint_from_json(const json& j, const fs::path& base) {
  EndpointConfig c;
  c.endpoint.name = j.at("name").get<std::string>();
  c.kind = j.value("kind", c.kind);
  if (c.kind != "mock" && c.kind != "http" && c.kind != "replay") {
    throw std::invalid_argument("endpoint '" + c.endpoint.name + "': unknown kind '" + c.kind +
                                "'");
  }
  c.endpoint.base_url = j.value("base_url", std::string());
  c.endpoint.model_id = j.value("model", c.endpoint.name);
  c.endpoint.temperature = j.value("temperature", 0.0);
  c.endpoint.max_retries = j.value("max_retries", c.endpoint.max_retries);
  c.endpoint.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
  c.endpoint.max_in_flight = j.value("max_in_flight", c.endpoint.max_in_flight);
  c.endpoint.backoff = std::chrono::milliseconds(j.value("backoff_ms", 200));
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  if (j.contains("replay_file")) {
    c.replay_file = resolve(base, j.at("replay_file").get<std::string>());
  }
  c.mock_threshold = j.value("threshold", c.mock_threshold);
  if (j.contains("closed_book")) {
    const auto& cb = j.at("closed_book");
    if (cb.is_string() && cb.get<std::string>() == "all") {
      c.mock_closed_book_all = true;
    } else {
      c.mock_closed_book = cb.get<std::set<std::string>>();
    }
  }
  if (j.contains("equivalences")) {
    for (const auto& pair : j.at("equivalences")) {
      c.mock_equivalences.emplace_back(pair.at(0).get<std::string>(),
                                       pair.at(1).get<std::string>());
    }
  }
  if (c.kind == "http" && c.endpoint.base_url.empty()) {
    throw std::invalid_argument("endpoint '" + c.endpoint.name + "': http needs base_url");
  }
  if (c.kind == "replay" && c.replay_file.empty()) {
    throw std::invalid_argument("endpoint '" + c.endpoint.name + "': replay needs replay_file");
  }
  return c;
}

json endpoint_to_json(const EndpointConfig& c) {
  json j{{"name", c.endpoint.name},
         {"kind", c.kind},
         {"model", c.endpoint.model_id},
         {"temperature", c.endpoint.temperature},
         {"max_retries", c.endpoint.max_retries}};
  if (c.kind == "http") j["base_url"] = c.endpoint.base_url;
  if (c.kind == "replay") j["replay_file"] = c.replay_file.generic_string();
  if (c.kind == "mock") {
    j["threshold"] = c.mock_threshold;
    if (c.mock_closed_book_all) {
      j["closed_book"] = "all";
    } else {
      j["closed_book"] = c.mock_closed_book;
    }
    j["equivalences"] = c.mock_equivalences;
  }
  return j;
}

json retriever_to_json(const RetrieverConfig& c) {
  json j{{"method", c.method}, {"k", c.k}};
  if (c.method == "bm25") {
    j["k1"] = c.bm25.k1;
    j["b"] = c.bm25.b;
  } else {
    j["embedder"] = c.embedder;
    j["dim"] = c.dim;
    j["metric"] = c.metric == DenseMetric::cosine ? "cosine" : "inner_product";
    if (c.embedder == "http") {
      j["base_url"] = c.base_url;
      j["model"] = c.model;
    }
  }
  return j;
}

json reranker_to_json(const RerankerConfig& c) {
  json j{{"scorer", c.scorer}, {"depth", c.depth}};
  if (c.scorer == "http") j["base_url"] = c.base_url;
  return j;
}

json fusion_to_json(const FusionConfig& c) {
  json j{{"method", std::string(to_string(c.method))}, {"alpha", c.alpha}, {"beta", c.beta}};
  j["sentence_cap"] = c.sentence_cap ? json(*c.sentence_cap) : json(nullptr);
  return j;
}

json metrics_to_json(const MetricConfig& c) {
  return json{{"relevance_threshold", c.relevance_threshold},
              {"ndcg_gain", std::string(to_string(c.ndcg_gain))},
              {"mrr_cutoff", c.mrr_cutoff},
              {"k_values", c.k_values},
              {"recall_k", c.recall_k},
              {"ndcg_k", c.ndcg_k}};
}

std::string hash_of(std::string_view s) { return to_hex16(fnv1a64(s)); }

// Remembers, per stage, the key its artifact was produced under.
class StageCache {
 public:
  explicit StageCache(fs::path dir) : dir_(std::move(dir)) {}

  /// A hit needs the same input key and an artifact unchanged since it was
  /// stored.
  bool hit(const std::string& stage, const std::string& key, const fs::path& artifact) const {
    auto key_file = dir_ / (stage + ".key");
    if (!fs::exists(key_file) || !fs::exists(artifact)) return false;
    return read_file(key_file) == record(key, artifact);
  }

  void store(const std::string& stage, const std::string& key, const fs::path& artifact) const {
    write_file(dir_ / (stage + ".key"), record(key, artifact));
  }

 private:
  static std::string record(const std::string& key, const fs::path& artifact) {
    return key + "\n" + hash_of(read_file(artifact)) + "\n";
  }

  fs::path dir_;
};

template <typename F>
auto in_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

void complete_runs(std::vector<RunList>& runs, std::span<const std::string> question_ids,
                   const std::string& tag) {
  std::set<std::string> have;
  for (const auto& r : runs) have.insert(r.question_id);
  for (const auto& qid : question_ids) {
    if (have.count(qid) == 0) runs.push_back(RunList{qid, {}, tag});
  }
  std::sort(runs.begin(), runs.end(),
            [](const RunList& a, const RunList& b) { return a.question_id < b.question_id; });
}

struct Workspace {
  const ExperimentManifest& manifest;
  const Corpus& corpus;
  std::vector<std::string> qids;
  std::string fingerprint;
  StageCache cache;
  PipelineResult result;

  Workspace(const ExperimentManifest& m, const Corpus& c)
      : manifest(m),
        corpus(c),
        qids(questions_in_split(c, m.eval_split)),
        fingerprint(corpus_fingerprint(c)),
        cache(m.output_dir / ".cache") {
    fs::create_directories(m.output_dir / ".cache");
    json resolved = manifest_json();
    write_file(m.output_dir / "manifest.resolved.json", resolved.dump(2) + "\n");
    write_file(m.output_dir / "qrels.tsv", export_qrels(c, m.metrics.relevance_threshold));
  }

  json manifest_json() const {
    json j{{"mode", std::string(to_string(manifest.mode))},
           {"k", manifest.k},
           {"seed", manifest.seed},
           {"oracle_threshold", manifest.oracle_threshold},
           {"eval_split", manifest.eval_split},
           {"exhaustive", manifest.exhaustive},
           {"fusion", fusion_to_json(manifest.fusion)},
           {"metrics", metrics_to_json(manifest.metrics)},
           {"corpus_fingerprint", fingerprint}};
    j["retriever"] = manifest.retriever ? retriever_to_json(*manifest.retriever) : json(nullptr);
    j["reranker"] = manifest.reranker ? reranker_to_json(*manifest.reranker) : json(nullptr);
    json readers = json::array();
    for (const auto& name : manifest.models.readers) {
      readers.push_back(endpoint_to_json(manifest.models.endpoints.at(name)));
    }
    j["readers"] = readers;
    return j;
  }

  fs::path out(const std::string& name) const { return manifest.output_dir / name; }

  std::vector<RunList> retrieve() {
    const auto& cfg = *manifest.retriever;
    auto file = out("retrieval.run");
    auto key = hash_of("retrieve|" + fingerprint + "|" + json(qids).dump() + "|" +
                       retriever_to_json(cfg).dump());
    std::vector<RunList> runs;
    if (cache.hit("retrieve", key, file)) {
      runs = in_stage("retrieve", [&] { return read_run(file); });
      result.cache_hits["retrieve"] = true;
    } else {
      runs = in_stage("retrieve", [&] { return retrieve_all(corpus, qids, cfg); });
      write_file(file, format_run(runs));
      cache.store("retrieve", key, file);
      result.cache_hits["retrieve"] = false;
    }
    complete_runs(runs, qids, cfg.tag());
    return runs;
  }

  std::vector<RunList> rerank_stage(const std::vector<RunList>& input, const std::string& input_file) {
    const auto& cfg = *manifest.reranker;
    auto file = out("rerank.run");
    auto key = hash_of("rerank|" + fingerprint + "|" + hash_of(read_file(input_file)) + "|" +
                       reranker_to_json(cfg).dump());
    std::vector<RunList> runs;
    if (cache.hit("rerank", key, file)) {
      runs = in_stage("rerank", [&] { return read_run(file); });
      result.cache_hits["rerank"] = true;
    } else {
      runs = in_stage("rerank", [&] { return rerank_all(corpus, input, cfg); });
      write_file(file, format_run(runs));
      cache.store("rerank", key, file);
      result.cache_hits["rerank"] = false;
    }
    complete_runs(runs, qids, cfg.scorer);
    return runs;
  }

  std::map<std::string, std::string> fuse_stage(const std::vector<RunList>& runs,
                                                const std::string& run_file) {
    auto file = out("contexts.jsonl");
    auto key = hash_of("fuse|" + fingerprint + "|" + hash_of(read_file(run_file)) + "|" +
                       fusion_to_json(manifest.fusion).dump() + "|" + std::to_string(manifest.k));
    std::map<std::string, std::string> contexts;
    if (cache.hit("fuse", key, file)) {
      contexts = in_stage("fuse", [&] { return contexts_from_jsonl(read_file(file)); });
      result.cache_hits["fuse"] = true;
    } else {
      contexts = in_stage("fuse", [&] { return fuse_all(corpus, runs, manifest.fusion, manifest.k); });
      write_file(file, contexts_to_jsonl(contexts));
      cache.store("fuse", key, file);
      result.cache_hits["fuse"] = false;
    }
    return contexts;
  }

  void read_stage(const std::map<std::string, std::string>& contexts) {
    auto contexts_hash = hash_of(read_file(out("contexts.jsonl")));
    for (const auto& name : manifest.models.readers) {
      const auto& cfg = manifest.models.endpoints.at(name);
      auto stage = "read." + name;
      auto file = out("answers." + name + ".jsonl");
      auto key = hash_of(stage + "|" + fingerprint + "|" + contexts_hash + "|" +
                         endpoint_to_json(cfg).dump());
      ReaderOutputs outputs;
      if (cache.hit(stage, key, file)) {
        outputs = in_stage(stage, [&] { return answers_from_jsonl(read_file(file)); });
        result.cache_hits[stage] = true;
      } else {
        outputs = in_stage(stage, [&] {
          auto endpoint = make_endpoint(cfg, corpus.questions);
          return read_all(corpus, contexts, endpoint, manifest.workers);
        });
        write_file(file, answers_to_jsonl(name, outputs));
        cache.store(stage, key, file);
        result.cache_hits[stage] = false;
      }
      result.answers[name] = std::move(outputs);
    }
  }

  void finish(std::vector<SystemInput> systems) {
    result.report = build_report(systems, corpus, qrels_from_corpus(corpus), qids, manifest.metrics);
    std::size_t empty = 0;
    for (const auto& qid : qids) {
      auto it = result.contexts.find(qid);
      if (it != result.contexts.end() && it->second.empty()) ++empty;
    }
    if (empty > 0) {
      result.flags.push_back(std::to_string(empty) +
                             (empty == 1 ? " question had" : " questions had") +
                             " an empty context, scored as no answer");
    }
    for (auto& row : result.report.rows) {
      if (row.values.count("EM") != 0) {
        row.flags.insert(row.flags.end(), result.flags.begin(), result.flags.end());
      }
    }
    write_file(out("report.jsonl"), result.report.to_jsonl());
    write_file(out("report.md"), result.report.to_markdown());
  }
};

std::vector<SystemInput> reader_rows(const std::string& prefix, const std::vector<RunList>& runs,
                                     const std::map<std::string, ReaderOutputs>& answers,
                                     const std::vector<std::string>& readers) {
  std::vector<SystemInput> rows;
  for (const auto& name : readers) {
    rows.push_back({prefix + "/" + name, runs, answers.at(name)});
  }
  return rows;
}

}  // namespace

EndpointConfig parse_endpoint_config(const std::string& json_text) {
  return endpoint_from_json(json::parse(json_text), {});
}

Endpoint make_endpoint(const EndpointConfig& config, std::span<const Question> questions) {
  std::shared_ptr<ChatProvider> provider;
  if (config.kind == "http") {
    provider = std::make_shared<HttpChatProvider>(config.endpoint.base_url,
                                                  env_or_empty(config.api_key_env),
                                                  config.endpoint.timeout);
  } else if (config.kind == "replay") {
    provider = std::make_shared<ReplayProvider>(ReplayProvider::from_file(config.replay_file));
  } else {
    std::set<std::string> closed = config.mock_closed_book;
    if (config.mock_closed_book_all) {
      for (const auto& q : questions) closed.insert(q.id);
    }
    auto knowledge = MockKnowledge::from_questions(questions, config.mock_threshold, closed);
    for (const auto& [a, b] : config.mock_equivalences) knowledge.add_equivalence(a, b);
    provider = std::make_shared<MockProvider>(std::move(knowledge));
  }
  return Endpoint(config.endpoint, std::move(provider));
}

ModelConfig ModelConfig::from_json_text(std::string_view text, const fs::path& base) {
  auto j = json::parse(text);
  ModelConfig c;
  for (const auto& e : j.value("endpoints", json::array())) {
    auto ec = endpoint_from_json(e, base);
    auto name = ec.endpoint.name;
    if (!c.endpoints.emplace(name, std::move(ec)).second) {
      throw std::invalid_argument("duplicate endpoint '" + name + "'");
    }
  }
  c.labelers = j.value("labelers", std::vector<std::string>{});
  c.readers = j.value("readers", std::vector<std::string>{});
  c.closed_book = j.value("closed_book", std::vector<std::string>{});
  if (j.contains("judge") && !j.at("judge").is_null()) c.judge = j.at("judge").get<std::string>();
  auto check = [&](const std::string& name) {
    if (c.endpoints.count(name) == 0) {
      throw std::invalid_argument("unknown endpoint '" + name + "'");
    }
  };
  for (const auto* names : {&c.labelers, &c.readers, &c.closed_book}) {
    for (const auto& n : *names) check(n);
  }
  if (c.judge) check(*c.judge);
  return c;
}

std::vector<Endpoint> ModelConfig::build(std::span<const std::string> names,
                                         std::span<const Question> questions) const {
  std::vector<Endpoint> out;
  for (const auto& n : names) {
    auto it = endpoints.find(n);
    if (it == endpoints.end()) throw std::invalid_argument("unknown endpoint '" + n + "'");
    out.push_back(make_endpoint(it->second, questions));
  }
  return out;
}

std::unique_ptr<EquivalenceJudge> ModelConfig::build_judge(
    std::span<const Question> questions) const {
  if (!judge) return std::make_unique<LexicalJudge>();
  return std::make_unique<LlmJudge>(make_endpoint(endpoints.at(*judge), questions));
}

std::string RetrieverConfig::tag() const {
  if (method == "bm25") return "bm25";
  return "dense-" + (embedder == "http" ? model : "hash" + std::to_string(dim));
}

Mode parse_mode(std::string_view s) {
  if (s == "standard") return Mode::standard;
  if (s == "oracle_retriever" || s == "oracle") return Mode::oracle_retriever;
  if (s == "optimal") return Mode::optimal;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::standard:
      return "standard";
    case Mode::oracle_retriever:
      return "oracle_retriever";
    case Mode::optimal:
      return "optimal";
  }
  return "standard";
}

ExperimentManifest ExperimentManifest::from_json_text(std::string_view text,
                                                      const fs::path& base) {
  auto j = json::parse(text);
  ExperimentManifest m;
  m.corpus = resolve(base, j.at("corpus").get<std::string>());
  m.output_dir = resolve(base, j.at("output_dir").get<std::string>());
  m.mode = parse_mode(j.value("mode", std::string("standard")));
  m.k = j.value("k", m.k);
  m.seed = j.value("seed", m.seed);
  m.oracle_threshold = j.value("oracle_threshold", m.oracle_threshold);
  m.eval_split = j.value("eval_split", m.eval_split);
  m.exhaustive = j.value("exhaustive", m.exhaustive);
  m.workers = j.value("workers", m.workers);
  if (j.contains("retriever") && !j.at("retriever").is_null()) {
    const auto& r = j.at("retriever");
    RetrieverConfig c;
    c.method = r.value("method", c.method);
    c.k = r.value("k", c.k);
    c.bm25.k1 = r.value("k1", c.bm25.k1);
    c.bm25.b = r.value("b", c.bm25.b);
    c.embedder = r.value("embedder", c.embedder);
    c.dim = r.value("dim", c.dim);
    c.base_url = r.value("base_url", c.base_url);
    c.model = r.value("model", c.model);
    c.api_key_env = r.value("api_key_env", c.api_key_env);
    auto metric = r.value("metric", std::string("cosine"));
    if (metric == "cosine") {
      c.metric = DenseMetric::cosine;
    } else if (metric == "inner_product" || metric == "ip") {
      c.metric = DenseMetric::inner_product;
    } else {
      throw std::invalid_argument("unknown dense metric '" + metric + "'");
    }
    m.retriever = c;
  }
  if (j.contains("reranker") && !j.at("reranker").is_null()) {
    const auto& r = j.at("reranker");
    RerankerConfig c;
    c.scorer = r.value("scorer", c.scorer);
    c.depth = r.value("depth", c.depth);
    c.base_url = r.value("base_url", c.base_url);
    c.api_key_env = r.value("api_key_env", c.api_key_env);
    m.reranker = c;
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    m.fusion.method = parse_fusion_method(f.value("method", std::string("union_freq")));
    m.fusion.alpha = f.value("alpha", m.fusion.alpha);
    m.fusion.beta = f.value("beta", m.fusion.beta);
    if (f.contains("sentence_cap") && !f.at("sentence_cap").is_null()) {
      m.fusion.sentence_cap = f.at("sentence_cap").get<std::size_t>();
    }
  }
  if (j.contains("metrics")) m.metrics = MetricConfig::from_json_text(j.at("metrics").dump());
  const auto& models = j.at("models");
  if (models.is_string()) {
    auto file = resolve(base, models.get<std::string>());
    m.models = ModelConfig::from_json_text(read_file(file), file.parent_path());
  } else {
    m.models = ModelConfig::from_json_text(models.dump(), base);
  }
  m.validate();
  return m;
}

void ExperimentManifest::validate() const {
  if (k != 1 && k != 3 && k != 5) throw std::invalid_argument("k must be 1, 3 or 5");
  if (oracle_threshold != 1 && oracle_threshold != 2) {
    throw std::invalid_argument("oracle_threshold must be 1 or 2");
  }
  if (eval_split != "all") parse_split(eval_split);
  if (models.readers.empty()) throw std::invalid_argument("at least one reader is required");
  switch (mode) {
    case Mode::standard:
      if (!retriever) throw std::invalid_argument("mode standard requires a retriever");
      if (retriever->method != "bm25" && retriever->method != "dense") {
        throw std::invalid_argument("unknown retriever '" + retriever->method + "'");
      }
      if (retriever->k < 1) throw std::invalid_argument("retriever k must be >= 1");
      break;
    case Mode::oracle_retriever:
      if (retriever) throw std::invalid_argument("mode oracle_retriever takes no retriever");
      break;
    case Mode::optimal:
      if (retriever || reranker) {
        throw std::invalid_argument("mode optimal takes no retriever or reranker");
      }
      break;
  }
  fusion.validate();
  metrics.validate();
}

std::vector<std::string> questions_in_split(const Corpus& corpus, std::string_view split) {
  std::vector<std::string> ids;
  std::optional<Split> want;
  if (split != "all") want = parse_split(split);
  for (const auto& q : corpus.questions) {
    if (!want || q.split == *want) ids.push_back(q.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string corpus_fingerprint(const Corpus& corpus) {
  std::uint64_t h = fnv1a64("corpus");
  auto mix = [&](const json& j) { h = fnv1a64(j.dump(), h); };
  for (const auto& q : corpus.questions) mix(json(q));
  for (const auto& p : corpus.passages) mix(json(p));
  for (const auto& r : corpus.judgments) mix(json(r));
  return to_hex16(h);
}

std::vector<RunList> retrieve_all(const Corpus& corpus, std::span<const std::string> question_ids,
                                  const RetrieverConfig& config) {
  std::vector<RunList> runs;
  auto query_of = [&](const std::string& qid) -> const std::string& {
    const Question* q = corpus.find_question(qid);
    if (q == nullptr) throw std::invalid_argument("unknown question '" + qid + "'");
    return q->text;
  };
  if (config.method == "bm25") {
    auto index = build_lexical_index(corpus.passages);
    for (const auto& qid : question_ids) {
      runs.push_back(search_bm25(index, qid, query_of(qid), config.k, config.bm25, config.tag()));
    }
    return runs;
  }
  if (config.method != "dense") {
    throw std::invalid_argument("unknown retriever '" + config.method + "'");
  }
  std::unique_ptr<EmbeddingProvider> provider;
  if (config.embedder == "http") {
    provider = std::make_unique<HttpEmbeddingProvider>(config.base_url, config.model,
                                                       env_or_empty(config.api_key_env));
  } else if (config.embedder == "hash") {
    provider = std::make_unique<HashEmbeddingProvider>(config.dim);
  } else {
    throw std::invalid_argument("unknown embedder '" + config.embedder + "'");
  }
  auto index = embed_corpus(corpus.passages, *provider);
  std::vector<std::string> queries;
  for (const auto& qid : question_ids) queries.push_back(query_of(qid));
  auto vectors = provider->embed(queries);
  for (std::size_t i = 0; i < question_ids.size(); ++i) {
    runs.push_back(search_dense(index, question_ids[i], vectors[i], provider->tag(), config.k,
                                config.metric, config.tag()));
  }
  return runs;
}

std::vector<RunList> rerank_all(const Corpus& corpus, std::span<const RunList> runs,
                                const RerankerConfig& config) {
  std::unique_ptr<Scorer> scorer;
  if (config.scorer == "http") {
    scorer = std::make_unique<HttpScorer>("http", config.base_url, env_or_empty(config.api_key_env));
  } else {
    scorer = make_mock_scorer(config.scorer);
  }
  std::vector<RunList> out;
  for (const auto& run : runs) {
    const Question* q = corpus.find_question(run.question_id);
    if (q == nullptr) throw std::invalid_argument("unknown question '" + run.question_id + "'");
    RerankRequest request;
    request.question = q;
    request.candidates = run;
    request.scorer = scorer.get();
    request.depth = config.depth;
    out.push_back(rerank(request, corpus));
  }
  return out;
}

std::map<std::string, std::string> fuse_all(const Corpus& corpus, std::span<const RunList> runs,
                                            const FusionConfig& config, int k) {
  std::map<std::string, std::string> contexts;
  for (const auto& run : runs) {
    std::vector<const Passage*> top;
    for (const auto& e : run.entries) {
      if (top.size() >= static_cast<std::size_t>(k)) break;
      const Passage* p = corpus.find_passage(e.passage_id);
      if (p == nullptr) throw std::invalid_argument("unknown passage '" + e.passage_id + "'");
      top.push_back(p);
    }
    contexts[run.question_id] = fuse(top, config);
  }
  return contexts;
}

ReaderOutputs read_all(const Corpus& corpus, const std::map<std::string, std::string>& contexts,
                       const Endpoint& reader, std::size_t workers) {
  std::vector<std::pair<std::string, const std::string*>> items;
  for (const auto& [qid, ctx] : contexts) items.emplace_back(qid, &ctx);
  std::vector<std::optional<std::string>> answers(items.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      auto i = next.fetch_add(1);
      if (i >= items.size()) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const auto& [qid, ctx] = items[i];
        const Question* q = corpus.find_question(qid);
        if (q == nullptr) throw std::invalid_argument("unknown question '" + qid + "'");
        if (ctx->empty()) continue;
        answers[i] = answer_open_book(reader, q->text, *ctx).text;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::max<std::size_t>(workers, 1); ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  ReaderOutputs out;
  for (std::size_t i = 0; i < items.size(); ++i) out[items[i].first] = answers[i];
  return out;
}

std::string contexts_to_jsonl(const std::map<std::string, std::string>& contexts) {
  std::string out;
  for (const auto& [qid, ctx] : contexts) {
    out += json{{"question_id", qid}, {"context", ctx}}.dump();
    out.push_back('\n');
  }
  return out;
}

std::map<std::string, std::string> contexts_from_jsonl(std::string_view text) {
  std::map<std::string, std::string> out;
  for (const auto& j : parse_jsonl<json>(text, "contexts")) {
    out[j.at("question_id").get<std::string>()] = j.at("context").get<std::string>();
  }
  return out;
}

std::string answers_to_jsonl(const std::string& reader, const ReaderOutputs& outputs) {
  std::string out;
  for (const auto& [qid, answer] : outputs) {
    json j{{"question_id", qid}, {"reader", reader}};
    j["answer"] = answer ? json(*answer) : json(nullptr);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

ReaderOutputs answers_from_jsonl(std::string_view text) {
  ReaderOutputs out;
  for (const auto& j : parse_jsonl<json>(text, "answers")) {
    const auto& a = j.at("answer");
    out[j.at("question_id").get<std::string>()] =
        a.is_null() ? std::nullopt : std::optional<std::string>(a.get<std::string>());
  }
  return out;
}

PipelineResult run_standard(const ExperimentManifest& manifest, const Corpus& corpus) {
  manifest.validate();
  Workspace ws(manifest, corpus);
  auto runs = ws.retrieve();
  ws.result.retrieval = runs;
  std::string final_file = ws.out("retrieval.run").string();
  std::string prefix = manifest.retriever->tag();
  std::vector<SystemInput> systems;
  if (manifest.reranker) {
    systems.push_back({prefix, runs, std::nullopt});
    runs = ws.rerank_stage(runs, final_file);
    ws.result.reranked = runs;
    final_file = ws.out("rerank.run").string();
    prefix += "+" + manifest.reranker->scorer;
  }
  ws.result.contexts = ws.fuse_stage(runs, final_file);
  ws.read_stage(ws.result.contexts);
  prefix += "/" + std::string(to_string(manifest.fusion.method)) + "@" +
            std::to_string(manifest.k);
  for (auto& row : reader_rows(prefix, runs, ws.result.answers, manifest.models.readers)) {
    systems.push_back(std::move(row));
  }
  ws.finish(std::move(systems));
  return std::move(ws.result);
}

PipelineResult run_oracle_retriever(const ExperimentManifest& manifest, const Corpus& corpus) {
  manifest.validate();
  Workspace ws(manifest, corpus);
  auto runs = in_stage("oracle", [&] {
    std::vector<RunList> out;
    for (const auto& qid : ws.qids) {
      out.push_back(oracle_candidates(corpus, qid, manifest.oracle_threshold));
    }
    return out;
  });
  write_file(ws.out("oracle.run"), format_run(runs));
  ws.result.retrieval = runs;
  std::string final_file = ws.out("oracle.run").string();
  std::string prefix = "oracle";
  if (manifest.reranker) {
    runs = ws.rerank_stage(runs, final_file);
    ws.result.reranked = runs;
    final_file = ws.out("rerank.run").string();
    prefix += "+" + manifest.reranker->scorer;
  }
  ws.result.contexts = ws.fuse_stage(runs, final_file);
  ws.read_stage(ws.result.contexts);
  prefix += "/" + std::string(to_string(manifest.fusion.method)) + "@" +
            std::to_string(manifest.k);
  ws.finish(reader_rows(prefix, runs, ws.result.answers, manifest.models.readers));
  return std::move(ws.result);
}

PipelineResult run_optimal(const ExperimentManifest& manifest, const Corpus& corpus) {
  manifest.validate();
  Workspace ws(manifest, corpus);
  std::vector<SystemInput> systems;
  for (const auto& name : manifest.models.readers) {
    auto stage = "optimal." + name;
    auto outputs = in_stage(stage, [&] {
      auto reader = make_endpoint(manifest.models.endpoints.at(name), corpus.questions);
      ReaderOutputs result;
      std::string log;
      for (const auto& qid : ws.qids) {
        const Question* q = corpus.find_question(qid);
        auto candidates = oracle_candidates(corpus, qid, 1);
        std::optional<std::string> chosen;
        std::optional<std::string> hit_passage;
        std::size_t tried = 0;
        for (const auto& e : candidates.entries) {
          const Passage* p = corpus.find_passage(e.passage_id);
          ++tried;
          auto answer = answer_open_book(reader, q->text, p->text).text;
          if (exact_match(answer, q->answers) > 0.0) {
            if (!hit_passage) {
              hit_passage = p->id;
              chosen = answer;
            }
            if (!manifest.exhaustive) break;
          } else if (!hit_passage) {
            chosen = answer;
          }
        }
        result[qid] = chosen;
        json j{{"question_id", qid},
               {"answered", hit_passage.has_value()},
               {"tried", tried},
               {"candidates", candidates.entries.size()}};
        j["passage_id"] = hit_passage ? json(*hit_passage) : json(nullptr);
        j["answer"] = chosen ? json(*chosen) : json(nullptr);
        log += j.dump() + "\n";
      }
      write_file(ws.out("optimal." + name + ".jsonl"), log);
      return result;
    });
    ws.result.answers[name] = outputs;
    systems.push_back({"optimal/" + name, {}, outputs});
  }
  ws.finish(std::move(systems));
  return std::move(ws.result);
}

PipelineResult run_manifest(const ExperimentManifest& manifest, const Corpus& corpus) {
  switch (manifest.mode) {
    case Mode::standard:
      return run_standard(manifest, corpus);
    case Mode::oracle_retriever:
      return run_oracle_retriever(manifest, corpus);
    case Mode::optimal:
      return run_optimal(manifest, corpus);
  }
  throw std::invalid_argument("unknown mode");
}

}  // namespace inferqa
