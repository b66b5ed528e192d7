#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "inferqa/corpus.hpp"
#include "inferqa/fusion.hpp"
#include "inferqa/judge.hpp"
#include "inferqa/metrics.hpp"
#include "inferqa/retrieval.hpp"

namespace inferqa {

/// A failure inside one pipeline stage; artifacts of earlier stages stay on
/// disk.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// One named model. `kind` is "http", "mock" or "replay".
struct EndpointConfig {
  ModelEndpoint endpoint;
  std::string kind = "mock";
  std::string api_key_env = "INFERQA_API_KEY";
  std::filesystem::path replay_file;
  // mock settings
  int mock_threshold = 3;
  std::set<std::string> mock_closed_book;  // question ids answerable without context
  bool mock_closed_book_all = false;
  std::vector<std::pair<std::string, std::string>> mock_equivalences;
};

EndpointConfig parse_endpoint_config(const std::string& json_text);

/// Mock endpoints take their knowledge from `questions`.
Endpoint make_endpoint(const EndpointConfig& config, std::span<const Question> questions);

/// Endpoints by role, read from a JSON config:
///   {"endpoints": [...], "labelers": [names], "readers": [names],
///    "closed_book": [names], "judge": name}
/// A missing judge selects the lexical judge.
struct ModelConfig {
  std::map<std::string, EndpointConfig> endpoints;
  std::vector<std::string> labelers;
  std::vector<std::string> readers;
  std::vector<std::string> closed_book;
  std::optional<std::string> judge;

  static ModelConfig from_json_text(std::string_view text, const std::filesystem::path& base);
  std::vector<Endpoint> build(std::span<const std::string> names,
                              std::span<const Question> questions) const;
  std::unique_ptr<EquivalenceJudge> build_judge(std::span<const Question> questions) const;
};

struct RetrieverConfig {
  std::string method = "bm25";  // bm25 | dense
  std::size_t k = 100;
  Bm25Params bm25;
  std::string embedder = "hash";  // hash | http
  std::size_t dim = 64;
  std::string base_url;
  std::string model;
  std::string api_key_env = "INFERQA_API_KEY";
  DenseMetric metric = DenseMetric::cosine;

  std::string tag() const;
};

struct RerankerConfig {
  std::string scorer = "identity";  // mock scorer name, or "http"
  std::size_t depth = 100;
  std::string base_url;
  std::string api_key_env = "INFERQA_API_KEY";
};

enum class Mode { standard, oracle_retriever, optimal };
Mode parse_mode(std::string_view s);
std::string_view to_string(Mode mode);

struct ExperimentManifest {
  std::filesystem::path corpus;
  std::filesystem::path output_dir;
  Mode mode = Mode::standard;
  std::optional<RetrieverConfig> retriever;
  std::optional<RerankerConfig> reranker;
  FusionConfig fusion;
  int k = 5;
  ModelConfig models;
  std::uint64_t seed = 0;
  int oracle_threshold = 1;
  std::string eval_split = "all";  // train | dev | test | all
  bool exhaustive = false;         // optimal mode: read every relevant passage
  MetricConfig metrics;
  std::size_t workers = 1;

  /// Relative paths resolve against `base`.
  static ExperimentManifest from_json_text(std::string_view text,
                                           const std::filesystem::path& base);
  void validate() const;
};

struct PipelineResult {
  Report report;
  std::vector<RunList> retrieval;
  std::vector<RunList> reranked;
  std::map<std::string, std::string> contexts;       // question id -> context
  std::map<std::string, ReaderOutputs> answers;      // reader -> outputs
  std::vector<std::string> flags;
  std::map<std::string, bool> cache_hits;            // stage -> reused
};

/// Question ids in `split` ("all" for every question), sorted.
std::vector<std::string> questions_in_split(const Corpus& corpus, std::string_view split);

std::string corpus_fingerprint(const Corpus& corpus);

/// retrieve -> (rerank) -> fuse top-k -> read -> EM.
PipelineResult run_standard(const ExperimentManifest& manifest, const Corpus& corpus);

/// oracle_candidates -> rerank -> fuse -> read -> EM.
PipelineResult run_oracle_retriever(const ExperimentManifest& manifest, const Corpus& corpus);

/// A question counts as answered when any single passage labeled >= 1 makes
/// the reader answer correctly.
PipelineResult run_optimal(const ExperimentManifest& manifest, const Corpus& corpus);

PipelineResult run_manifest(const ExperimentManifest& manifest, const Corpus& corpus);

/// Retrieval over the corpus for each question id, with either retriever.
std::vector<RunList> retrieve_all(const Corpus& corpus, std::span<const std::string> question_ids,
                                  const RetrieverConfig& config);

std::vector<RunList> rerank_all(const Corpus& corpus, std::span<const RunList> runs,
                                const RerankerConfig& config);

/// question id -> fused context of the top-k passages of each run.
std::map<std::string, std::string> fuse_all(const Corpus& corpus, std::span<const RunList> runs,
                                            const FusionConfig& config, int k);

/// Reads every context with one reader; empty contexts are no-answers
/// without a model call.
ReaderOutputs read_all(const Corpus& corpus, const std::map<std::string, std::string>& contexts,
                       const Endpoint& reader, std::size_t workers = 1);

std::string contexts_to_jsonl(const std::map<std::string, std::string>& contexts);
std::map<std::string, std::string> contexts_from_jsonl(std::string_view text);
std::string answers_to_jsonl(const std::string& reader, const ReaderOutputs& outputs);
ReaderOutputs answers_from_jsonl(std::string_view text);

}  // namespace inferqa
