#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inferqa/corpus.hpp"

namespace inferqa {

enum class FusionMethod { union_norm, union_freq };
FusionMethod parse_fusion_method(std::string_view s);
std::string_view to_string(FusionMethod method);

struct FusionConfig {
  FusionMethod method = FusionMethod::union_freq;
  double alpha = 0.6;  // weight on 1/rank of the containing passage
  double beta = 0.4;   // weight on 1/position inside that passage
  std::optional<std::size_t> sentence_cap;

  /// alpha >= 0, beta >= 0, alpha + beta > 0; throws std::invalid_argument.
  void validate() const;
};

/// A ranked passage reduced to its sentences (the hint spans).
using SentenceList = std::vector<std::string>;

struct Occurrence {
  int passage_rank = 0;  // 1-based
  int position = 0;      // 1-based
};

struct ScoredSentence {
  std::string sentence;
  std::vector<Occurrence> occurrences;
  double score = 0.0;
};

/// score(s) = alpha * sum 1/rank + beta * sum 1/pos over occurrences. Each
/// sum adds its terms in ascending order so the value does not depend on
/// the order occurrences were found in.
double fusion_score(std::span<const Occurrence> occurrences, double alpha, double beta);

/// Distinct sentences with their occurrences, in first-seen order.
std::vector<ScoredSentence> collect_sentences(std::span<const SentenceList> ranked);

/// Order-preserving union: first occurrence scanning by rank then position.
std::string union_norm(std::span<const SentenceList> ranked);

/// Sentences by descending fusion_score; ties by lowest passage rank, then
/// lowest position, then text. Truncated to sentence_cap when set.
std::vector<ScoredSentence> rank_sentences(std::span<const SentenceList> ranked,
                                           const FusionConfig& config);
std::string union_freq(std::span<const SentenceList> ranked, const FusionConfig& config);

/// Dispatches on config.method over passages' stored hint boundaries.
std::string fuse(std::span<const Passage* const> ranked, const FusionConfig& config);

}  // namespace inferqa
