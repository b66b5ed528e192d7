#include "inferqa/forge.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

namespace {

bool contains(const std::string& haystack, const std::string& needle) {
  return !needle.empty() && haystack.find(needle) != std::string::npos;
}

}  // namespace

bool LexicalLeakageOracle::leaks(std::string_view, std::string_view hint,
                                 std::string_view answer) const {
  auto h = normalize_for_match(hint);
  auto a = normalize_for_match(answer);
  if (contains(h, a)) return true;
  for (const auto& word : split_words(a)) {
    if (word.size() >= 4 && contains(h, word)) return true;
  }
  return false;
}

bool JudgeLeakageOracle::leaks(std::string_view question, std::string_view hint,
                               std::string_view answer) const {
  if (lexical_.leaks(question, hint, answer)) return true;
  auto words = split_words(normalize_for_match(hint));
  for (std::size_t len = 1; len <= max_span_words_; ++len) {
    for (std::size_t i = 0; i + len <= words.size(); ++i) {
      std::string span = words[i];
      for (std::size_t j = i + 1; j < i + len; ++j) span += " " + words[j];
      if (judge_.judge(question, answer, span).correct) return true;
    }
  }
  return false;
}

std::vector<std::size_t> leaking_hints(std::span<const Hint> hints,
                                       std::span<const std::string> answers,
                                       const LeakageOracle& oracle, std::string_view question) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < hints.size(); ++i) {
    for (const auto& answer : answers) {
      if (oracle.leaks(question, hints[i].text, answer)) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

bool detect_leakage(std::span<const Hint> hints, std::span<const std::string> answers,
                    const LeakageOracle& oracle, std::string_view question) {
  for (const auto& hint : hints) {
    for (const auto& answer : answers) {
      if (oracle.leaks(question, hint.text, answer)) return true;
    }
  }
  return false;
}

std::string_view to_string(DropReason reason) {
  return reason == DropReason::leakage ? "leakage" : "low_convergence";
}

HintSelection select_top_hints(std::string_view question_id, std::span<const Hint> hints,
                               std::size_t max) {
  if (hints.empty()) throw std::invalid_argument("select_top_hints needs at least one hint");
  HintSelection sel;
  sel.question_id = std::string(question_id);
  sel.source_order_fallback = std::none_of(hints.begin(), hints.end(),
                                           [](const Hint& h) { return h.convergence.has_value(); });

  std::vector<std::size_t> order(hints.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = hints[a].convergence;
    const auto& cb = hints[b].convergence;
    if (ca.has_value() != cb.has_value()) return ca.has_value();
    if (ca && *ca != *cb) return *ca > *cb;
    if (a != b) return a < b;
    return hints[a].text < hints[b].text;
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& hint = hints[order[i]];
    if (i < max) {
      sel.kept.push_back(hint);
      sel.kept_source_index.push_back(order[i]);
    } else {
      sel.dropped.emplace_back(hint, DropReason::low_convergence);
    }
  }
  return sel;
}

std::vector<std::vector<int>> enumerate_sequences(int n) {
  if (n < 1 || n > static_cast<int>(kMaxSelectedHints)) {
    throw std::invalid_argument("enumerate_sequences: n must be in 1..5");
  }
  std::vector<std::vector<int>> out;
  std::vector<int> current;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  // Depth-first over indices in ascending order yields lexicographic order
  // within each target length.
  auto extend = [&](auto&& self, std::size_t length) -> void {
    if (current.size() == length) {
      out.push_back(current);
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      used[static_cast<std::size_t>(i)] = true;
      current.push_back(i);
      self(self, length);
      current.pop_back();
      used[static_cast<std::size_t>(i)] = false;
    }
  };
  for (std::size_t length = 1; length <= static_cast<std::size_t>(n); ++length) {
    extend(extend, length);
  }
  return out;
}

std::vector<Passage> forge_passages(const Question& question) {
  if (question.hints.empty()) {
    throw std::invalid_argument("question " + question.id + " has no kept hints");
  }
  std::vector<Passage> out;
  for (const auto& seq : enumerate_sequences(static_cast<int>(question.hints.size()))) {
    out.push_back(make_passage(question, seq));
  }
  return out;
}

std::string ForgeReport::to_json() const {
  json j{{"input_questions", input_questions},
         {"forged_questions", forged_questions},
         {"passages", passages},
         {"dropped", dropped},
         {"source_order_fallbacks", source_order_fallbacks},
         {"oracle", oracle}};
  return j.dump(2) + "\n";
}

ForgeResult forge(std::span<const Question> raw, const LeakageOracle& oracle) {
  ForgeResult result;
  result.report.input_questions = raw.size();
  result.report.oracle = oracle.name();
  result.report.dropped["leakage"] = 0;
  result.report.dropped["no_hints"] = 0;
  for (const auto& q : raw) {
    if (q.hints.empty()) {
      ++result.report.dropped["no_hints"];
      continue;
    }
    if (detect_leakage(q.hints, q.answers, oracle, q.text)) {
      ++result.report.dropped["leakage"];
      continue;
    }
    auto sel = select_top_hints(q.id, q.hints);
    if (sel.source_order_fallback) ++result.report.source_order_fallbacks;
    Question selected = q;
    selected.hints = sel.kept;
    auto passages = forge_passages(selected);
    result.report.passages += passages.size();
    result.passages.insert(result.passages.end(), std::make_move_iterator(passages.begin()),
                           std::make_move_iterator(passages.end()));
    result.questions.push_back(std::move(selected));
    ++result.report.forged_questions;
  }
  std::sort(result.questions.begin(), result.questions.end(),
            [](const Question& a, const Question& b) { return a.id < b.id; });
  std::sort(result.passages.begin(), result.passages.end(),
            [](const Passage& a, const Passage& b) { return a.id < b.id; });
  return result;
}

}  // namespace inferqa
