#include "inferqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

Gain parse_gain(std::string_view s) {
  if (s == "linear") return Gain::linear;
  if (s == "exponential") return Gain::exponential;
  throw std::invalid_argument("unknown gain '" + std::string(s) + "'");
}

std::string_view to_string(Gain gain) { return gain == Gain::linear ? "linear" : "exponential"; }

void MetricConfig::validate() const {
  if (relevance_threshold != 1 && relevance_threshold != 2) {
    throw std::invalid_argument("relevance_threshold must be 1 or 2");
  }
  if (mrr_cutoff < 1) throw std::invalid_argument("mrr_cutoff must be >= 1");
  for (const auto* ks : {&k_values, &recall_k, &ndcg_k}) {
    if (!std::is_sorted(ks->begin(), ks->end()) ||
        std::any_of(ks->begin(), ks->end(), [](int k) { return k < 1; })) {
      throw std::invalid_argument("k values must be positive and sorted");
    }
  }
}

MetricConfig MetricConfig::from_json_text(std::string_view text) {
  auto j = json::parse(text);
  MetricConfig c;
  c.relevance_threshold = j.value("relevance_threshold", c.relevance_threshold);
  c.ndcg_gain = parse_gain(j.value("ndcg_gain", std::string(to_string(c.ndcg_gain))));
  c.mrr_cutoff = j.value("mrr_cutoff", c.mrr_cutoff);
  c.k_values = j.value("k_values", c.k_values);
  c.recall_k = j.value("recall_k", c.recall_k);
  c.ndcg_k = j.value("ndcg_k", c.ndcg_k);
  c.validate();
  return c;
}

namespace {

int label_of(const Labels& labels, const std::string& id) {
  auto it = labels.find(id);
  return it == labels.end() ? 0 : it->second;
}

std::size_t depth(const RunList& run, int k) {
  return std::min(run.entries.size(), static_cast<std::size_t>(std::max(k, 0)));
}

}  // namespace

double hit_at_k(const RunList& run, const Labels& labels, int k, int threshold) {
  for (std::size_t i = 0; i < depth(run, k); ++i) {
    if (label_of(labels, run.entries[i].passage_id) >= threshold) return 1.0;
  }
  return 0.0;
}

std::optional<double> recall_at_k(const RunList& run, const Labels& labels, int k,
                                  int threshold) {
  auto total = std::count_if(labels.begin(), labels.end(),
                             [&](const auto& kv) { return kv.second >= threshold; });
  if (total == 0) return std::nullopt;
  std::size_t found = 0;
  for (std::size_t i = 0; i < depth(run, k); ++i) {
    if (label_of(labels, run.entries[i].passage_id) >= threshold) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(total);
}

double reciprocal_rank(const RunList& run, const Labels& labels, int cutoff, int threshold) {
  for (std::size_t i = 0; i < depth(run, cutoff); ++i) {
    if (label_of(labels, run.entries[i].passage_id) >= threshold) {
      return 1.0 / static_cast<double>(i + 1);
    }
  }
  return 0.0;
}

double gain_value(int label, Gain gain) {
  if (label <= 0) return 0.0;
  return gain == Gain::linear ? static_cast<double>(label) : std::exp2(label) - 1.0;
}

double ndcg_at_k(const RunList& run, const Labels& labels, int k, Gain gain) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < depth(run, k); ++i) {
    dcg += gain_value(label_of(labels, run.entries[i].passage_id), gain) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [id, label] : labels) ideal.push_back(label);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size() && i < static_cast<std::size_t>(std::max(k, 0)); ++i) {
    idcg += gain_value(ideal[i], gain) / std::log2(static_cast<double>(i) + 2.0);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double exact_match(const std::optional<std::string>& predicted,
                   std::span<const std::string> golds) {
  if (!predicted) return 0.0;
  auto p = normalize_answer(*predicted);
  if (p.empty()) return 0.0;
  for (const auto& g : golds) {
    if (normalize_answer(g) == p) return 1.0;
  }
  return 0.0;
}

SystemRow evaluate_run(std::string system, std::span<const RunList> runs, const Qrels& qrels,
                       std::span<const std::string> question_ids, const MetricConfig& config) {
  config.validate();
  SystemRow row;
  row.system = std::move(system);
  row.questions = question_ids.size();
  std::map<std::string, const RunList*> by_question;
  for (const auto& r : runs) by_question[r.question_id] = &r;

  std::map<std::string, double> sums;
  std::map<std::string, std::size_t> counts;
  const Labels empty_labels;
  const RunList empty_run;
  const int t = config.relevance_threshold;
  for (const auto& qid : question_ids) {
    auto rit = by_question.find(qid);
    const RunList& run = rit == by_question.end() ? empty_run : *rit->second;
    auto lit = qrels.find(qid);
    const Labels& labels = lit == qrels.end() ? empty_labels : lit->second;
    for (int k : config.k_values) {
      auto key = "Hit@" + std::to_string(k);
      sums[key] += hit_at_k(run, labels, k, t);
      ++counts[key];
    }
    bool excluded = false;
    for (int k : config.recall_k) {
      auto key = "Recall@" + std::to_string(k);
      counts.try_emplace(key, 0);
      auto r = recall_at_k(run, labels, k, t);
      if (!r) {
        excluded = true;
        continue;
      }
      sums[key] += *r;
      ++counts[key];
    }
    if (excluded) ++row.recall_excluded;
    auto mrr_key = "MRR@" + std::to_string(config.mrr_cutoff);
    sums[mrr_key] += reciprocal_rank(run, labels, config.mrr_cutoff, t);
    ++counts[mrr_key];
    for (int k : config.ndcg_k) {
      auto key = "nDCG@" + std::to_string(k);
      sums[key] += ndcg_at_k(run, labels, k, config.ndcg_gain);
      ++counts[key];
    }
  }
  for (const auto& [key, n] : counts) {
    row.values[key] = n == 0 ? 0.0 : sums[key] / static_cast<double>(n);
  }
  if (row.recall_excluded > 0) {
    row.flags.push_back(std::to_string(row.recall_excluded) +
                        " questions without relevant passages excluded from Recall");
  }
  return row;
}

double mean_exact_match(const ReaderOutputs& outputs, const Corpus& corpus,
                        std::span<const std::string> question_ids) {
  if (question_ids.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& qid : question_ids) {
    const Question* q = corpus.find_question(qid);
    auto it = outputs.find(qid);
    if (q == nullptr || it == outputs.end()) continue;
    sum += exact_match(it->second, q->answers);
  }
  return sum / static_cast<double>(question_ids.size());
}

std::vector<std::string> report_columns(const MetricConfig& config) {
  std::vector<std::string> cols;
  for (int k : config.k_values) cols.push_back("Hit@" + std::to_string(k));
  for (int k : config.recall_k) cols.push_back("Recall@" + std::to_string(k));
  cols.push_back("MRR@" + std::to_string(config.mrr_cutoff));
  for (int k : config.ndcg_k) cols.push_back("nDCG@" + std::to_string(k));
  cols.push_back("EM");
  return cols;
}

Report build_report(std::span<const SystemInput> systems, const Corpus& corpus,
                    const Qrels& qrels, std::span<const std::string> question_ids,
                    const MetricConfig& config) {
  Report report;
  report.columns = report_columns(config);
  for (const auto& sys : systems) {
    SystemRow row;
    if (!sys.runs.empty()) {
      row = evaluate_run(sys.name, sys.runs, qrels, question_ids, config);
    } else {
      row.system = sys.name;
      row.questions = question_ids.size();
    }
    if (sys.reader) row.values["EM"] = mean_exact_match(*sys.reader, corpus, question_ids);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string Report::to_jsonl() const {
  std::string out;
  for (const auto& row : rows) {
    json metrics = json::object();
    for (const auto& col : columns) {
      auto it = row.values.find(col);
      if (it != row.values.end()) metrics[col] = it->second;
    }
    json j{{"system", row.system},
           {"questions", row.questions},
           {"recall_excluded", row.recall_excluded},
           {"metrics", std::move(metrics)},
           {"flags", row.flags}};
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::string Report::to_markdown() const {
  std::string out = "| System |";
  for (const auto& c : columns) out += " " + c + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out += "---:|";
  out += "\n";
  for (const auto& row : rows) {
    out += "| " + row.system + " |";
    for (const auto& c : columns) {
      auto it = row.values.find(c);
      out += " " + (it == row.values.end() ? std::string("-") : fixed4(it->second)) + " |";
    }
    out += "\n";
  }
  return out;
}

}  // namespace inferqa
