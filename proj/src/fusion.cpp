#include "inferqa/fusion.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace inferqa {

FusionMethod parse_fusion_method(std::string_view s) {
  if (s == "union_norm" || s == "norm" || s == "UN") return FusionMethod::union_norm;
  if (s == "union_freq" || s == "freq" || s == "UF") return FusionMethod::union_freq;
  throw std::invalid_argument("unknown fusion method '" + std::string(s) + "'");
}

std::string_view to_string(FusionMethod method) {
  return method == FusionMethod::union_norm ? "union_norm" : "union_freq";
}

void FusionConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    throw std::invalid_argument("fusion weights need alpha >= 0, beta >= 0, alpha + beta > 0");
  }
}

double fusion_score(std::span<const Occurrence> occurrences, double alpha, double beta) {
  std::vector<double> inv_rank, inv_pos;
  for (const auto& o : occurrences) {
    inv_rank.push_back(1.0 / o.passage_rank);
    inv_pos.push_back(1.0 / o.position);
  }
  std::sort(inv_rank.begin(), inv_rank.end());
  std::sort(inv_pos.begin(), inv_pos.end());
  double rank_sum = 0.0;
  double pos_sum = 0.0;
  for (double x : inv_rank) rank_sum += x;
  for (double x : inv_pos) pos_sum += x;
  return alpha * rank_sum + beta * pos_sum;
}

std::vector<ScoredSentence> collect_sentences(std::span<const SentenceList> ranked) {
  std::vector<ScoredSentence> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    for (std::size_t p = 0; p < ranked[r].size(); ++p) {
      const auto& s = ranked[r][p];
      auto [it, inserted] = index.try_emplace(s, out.size());
      if (inserted) out.push_back({s, {}, 0.0});
      out[it->second].occurrences.push_back(
          {static_cast<int>(r) + 1, static_cast<int>(p) + 1});
    }
  }
  return out;
}

namespace {

std::string join(const std::vector<ScoredSentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out.push_back(' ');
    out += s.sentence;
  }
  return out;
}

}  // namespace

std::string union_norm(std::span<const SentenceList> ranked) {
  return join(collect_sentences(ranked));
}

std::vector<ScoredSentence> rank_sentences(std::span<const SentenceList> ranked,
                                           const FusionConfig& config) {
  config.validate();
  auto sentences = collect_sentences(ranked);
  for (auto& s : sentences) s.score = fusion_score(s.occurrences, config.alpha, config.beta);
  auto min_rank = [](const ScoredSentence& s) {
    int m = s.occurrences.front().passage_rank;
    for (const auto& o : s.occurrences) m = std::min(m, o.passage_rank);
    return m;
  };
  auto min_pos = [](const ScoredSentence& s) {
    int m = s.occurrences.front().position;
    for (const auto& o : s.occurrences) m = std::min(m, o.position);
    return m;
  };
  std::sort(sentences.begin(), sentences.end(),
            [&](const ScoredSentence& a, const ScoredSentence& b) {
              if (a.score != b.score) return a.score > b.score;
              if (min_rank(a) != min_rank(b)) return min_rank(a) < min_rank(b);
              if (min_pos(a) != min_pos(b)) return min_pos(a) < min_pos(b);
              return a.sentence < b.sentence;
            });
  if (config.sentence_cap && sentences.size() > *config.sentence_cap) {
    sentences.resize(*config.sentence_cap);
  }
  return sentences;
}

std::string union_freq(std::span<const SentenceList> ranked, const FusionConfig& config) {
  return join(rank_sentences(ranked, config));
}

std::string fuse(std::span<const Passage* const> ranked, const FusionConfig& config) {
  std::vector<SentenceList> lists;
  lists.reserve(ranked.size());
  for (const auto* p : ranked) lists.push_back(p->sentences());
  return config.method == FusionMethod::union_norm ? union_norm(lists) : union_freq(lists, config);
}

}  // namespace inferqa
