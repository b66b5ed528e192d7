#pragma once

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "inferqa/corpus.hpp"

namespace inferqa {

/// Pointwise relevance scorer. Listwise rerankers are driven through the
/// same interface, one candidate at a time.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// `original_rank` is the candidate's 1-based rank in the input list.
  /// Throws TransportError for retryable failures.
  virtual double score(const Question& question, const Passage& passage, int original_rank) = 0;
  virtual std::string name() const = 0;
};

/// Offline scorers selectable by name:
///   identity    -original_rank (keeps the input order)
///   constant    0 for every candidate
///   hint-count  1 for passages built from five hints, else 0
///   overlap     fraction of question tokens present in the passage
/// Throws std::invalid_argument for any other name.
std::unique_ptr<Scorer> make_mock_scorer(std::string_view name);

/// POST {base_url}/score with {"query": ..., "passage": ...}; reads "score".
class HttpScorer : public Scorer {
 public:
  HttpScorer(std::string name, std::string base_url, std::string api_key,
             std::chrono::milliseconds timeout = std::chrono::milliseconds{60000});
  double score(const Question& question, const Passage& passage, int original_rank) override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

class RerankFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RerankRequest {
  const Question* question = nullptr;
  RunList candidates;
  Scorer* scorer = nullptr;
  std::size_t depth = 100;
  int max_retries = 3;
};

/// Rescores the first `depth` candidates, orders them by score descending
/// (original rank breaks ties) and appends the rest in their original order.
/// Tail scores are capped at the lowest rescored score so the output stays a
/// valid RunList. Throws RerankFailed once the scorer's retries are spent.
RunList rerank(const RerankRequest& request, const Corpus& corpus);

/// Every passage labeled >= threshold for the question, ordered by passage
/// id, all with score 1. Throws std::invalid_argument for an unknown
/// question; an empty list means nothing qualified.
RunList oracle_candidates(const Corpus& corpus, std::string_view question_id, int threshold);

}  // namespace inferqa
