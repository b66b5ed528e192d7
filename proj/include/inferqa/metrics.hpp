#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inferqa/corpus.hpp"

namespace inferqa {

enum class Gain { linear, exponential };
Gain parse_gain(std::string_view s);
std::string_view to_string(Gain gain);

struct MetricConfig {
  int relevance_threshold = 1;
  Gain ndcg_gain = Gain::exponential;
  int mrr_cutoff = 100;
  std::vector<int> k_values{1, 5, 10, 50, 100};  // Hit@k
  std::vector<int> recall_k{5, 10, 50};
  std::vector<int> ndcg_k{10, 100};

  void validate() const;
  static MetricConfig from_json_text(std::string_view text);
};

/// passage id -> graded label, for one question. Absent ids are label 0.
using Labels = std::map<std::string, int>;

double hit_at_k(const RunList& run, const Labels& labels, int k, int threshold);

/// nullopt when the question has no passage labeled >= threshold.
std::optional<double> recall_at_k(const RunList& run, const Labels& labels, int k, int threshold);

/// 1/rank of the first entry labeled >= threshold within `cutoff`, else 0.
double reciprocal_rank(const RunList& run, const Labels& labels, int cutoff, int threshold);

/// DCG@k / IDCG@k with gain(label)/log2(i+1); IDCG from all labeled
/// passages of the question sorted by label; 0 when IDCG is 0.
double ndcg_at_k(const RunList& run, const Labels& labels, int k, Gain gain);

double gain_value(int label, Gain gain);

/// 1 when normalize_answer(predicted) equals that of any gold; a missing
/// prediction (the no-answer value) never matches.
double exact_match(const std::optional<std::string>& predicted,
                   std::span<const std::string> golds);

struct SystemRow {
  std::string system;
  std::map<std::string, double> values;  // column name -> mean
  std::size_t questions = 0;
  std::size_t recall_excluded = 0;
  std::vector<std::string> flags;
};

/// Means over `question_ids`. Questions without a run count as empty runs;
/// questions with no relevant passage are left out of Recall means only.
SystemRow evaluate_run(std::string system, std::span<const RunList> runs, const Qrels& qrels,
                       std::span<const std::string> question_ids, const MetricConfig& config);

/// question id -> reader answer (nullopt = no answer).
using ReaderOutputs = std::map<std::string, std::optional<std::string>>;

/// Mean EM over `question_ids`; a question without an output scores 0.
double mean_exact_match(const ReaderOutputs& outputs, const Corpus& corpus,
                        std::span<const std::string> question_ids);

struct Report {
  std::vector<std::string> columns;
  std::vector<SystemRow> rows;

  std::string to_jsonl() const;
  std::string to_markdown() const;
};

std::vector<std::string> report_columns(const MetricConfig& config);

struct SystemInput {
  std::string name;
  std::vector<RunList> runs;                 // empty for reader-only rows
  std::optional<ReaderOutputs> reader;       // adds an EM column value
};

/// One row per system, in the given order.
Report build_report(std::span<const SystemInput> systems, const Corpus& corpus,
                    const Qrels& qrels, std::span<const std::string> question_ids,
                    const MetricConfig& config);

}  // namespace inferqa
