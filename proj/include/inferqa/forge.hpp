#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inferqa/corpus.hpp"
#include "inferqa/judge.hpp"

namespace inferqa {

/// Decides whether a hint gives away an answer.
class LeakageOracle {
 public:
  virtual ~LeakageOracle() = default;
  virtual bool leaks(std::string_view question, std::string_view hint,
                     std::string_view answer) const = 0;
  virtual std::string name() const = 0;
};

/// Offline check on normalize_for_match() text: the whole answer, or any
/// answer word of at least four bytes, occurs as a substring of the hint.
class LexicalLeakageOracle : public LeakageOracle {
 public:
  bool leaks(std::string_view question, std::string_view hint,
             std::string_view answer) const override;
  std::string name() const override { return "lexical"; }
};

/// Lexical check first; otherwise asks an equivalence judge about every run
/// of 1..max_span_words consecutive hint words.
class JudgeLeakageOracle : public LeakageOracle {
 public:
  JudgeLeakageOracle(const EquivalenceJudge& judge, std::size_t max_span_words = 3)
      : judge_(judge), max_span_words_(max_span_words) {}
  bool leaks(std::string_view question, std::string_view hint,
             std::string_view answer) const override;
  std::string name() const override { return "judge"; }

 private:
  const EquivalenceJudge& judge_;
  std::size_t max_span_words_;
  LexicalLeakageOracle lexical_;
};

/// Indices of hints that leak any of `answers`.
std::vector<std::size_t> leaking_hints(std::span<const Hint> hints,
                                       std::span<const std::string> answers,
                                       const LeakageOracle& oracle,
                                       std::string_view question = {});

/// True when any hint leaks any answer; such a question is not forged.
bool detect_leakage(std::span<const Hint> hints, std::span<const std::string> answers,
                    const LeakageOracle& oracle, std::string_view question = {});

enum class DropReason { leakage, low_convergence };
std::string_view to_string(DropReason reason);

struct HintSelection {
  std::string question_id;
  std::vector<Hint> kept;
  std::vector<std::size_t> kept_source_index;
  std::vector<std::pair<Hint, DropReason>> dropped;
  /// Set when no hint carried a convergence score and source order was used.
  bool source_order_fallback = false;
};

/// Top `max` hints by convergence, descending; ties keep source order, then
/// compare text. Unscored hints rank after scored ones in source order.
HintSelection select_top_hints(std::string_view question_id, std::span<const Hint> hints,
                               std::size_t max = kMaxSelectedHints);

/// Every ordering of every non-empty subset of {0..n-1}: shorter sequences
/// first, lexicographic within a length. Requires 1 <= n <= 5.
std::vector<std::vector<int>> enumerate_sequences(int n);

/// One passage per sequence of enumerate_sequences(|hints|) over `question`'s
/// hints, which must already be the selected ones.
std::vector<Passage> forge_passages(const Question& question);

struct ForgeReport {
  std::size_t input_questions = 0;
  std::size_t forged_questions = 0;
  std::size_t passages = 0;
  std::map<std::string, std::size_t> dropped;  // reason -> question count
  std::size_t source_order_fallbacks = 0;
  std::string oracle;

  std::string to_json() const;
};

struct ForgeResult {
  std::vector<Question> questions;  // hints replaced by the selection
  std::vector<Passage> passages;
  ForgeReport report;
};

/// Leakage filter, hint selection and passage synthesis over raw questions.
ForgeResult forge(std::span<const Question> raw, const LeakageOracle& oracle);

}  // namespace inferqa
