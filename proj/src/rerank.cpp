#include "inferqa/rerank.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "inferqa/judge.hpp"
#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

namespace {

class IdentityScorer : public Scorer {
 public:
  double score(const Question&, const Passage&, int rank) override { return -rank; }
  std::string name() const override { return "identity"; }
};

class ConstantScorer : public Scorer {
 public:
  double score(const Question&, const Passage&, int) override { return 0.0; }
  std::string name() const override { return "constant"; }
};

class HintCountScorer : public Scorer {
 public:
  double score(const Question&, const Passage& p, int) override {
    return p.hint_seq.size() == kMaxSelectedHints ? 1.0 : 0.0;
  }
  std::string name() const override { return "hint-count"; }
};

class OverlapScorer : public Scorer {
 public:
  double score(const Question& q, const Passage& p, int) override {
    auto query = analyze(q.text);
    if (query.empty()) return 0.0;
    auto doc = analyze(p.text);
    std::set<std::string> terms(doc.begin(), doc.end());
    auto hits = std::count_if(query.begin(), query.end(),
                              [&](const std::string& t) { return terms.count(t) != 0; });
    return static_cast<double>(hits) / static_cast<double>(query.size());
  }
  std::string name() const override { return "overlap"; }
};

}  // namespace

std::unique_ptr<Scorer> make_mock_scorer(std::string_view name) {
  if (name == "identity") return std::make_unique<IdentityScorer>();
  if (name == "constant") return std::make_unique<ConstantScorer>();
  if (name == "hint-count") return std::make_unique<HintCountScorer>();
  if (name == "overlap") return std::make_unique<OverlapScorer>();
  throw std::invalid_argument("unknown scorer '" + std::string(name) + "'");
}

HttpScorer::HttpScorer(std::string name, std::string base_url, std::string api_key,
                       std::chrono::milliseconds timeout)
    : name_(std::move(name)), api_key_(std::move(api_key)), timeout_(timeout) {
  std::tie(origin_, path_prefix_) = split_base_url(base_url);
}

double HttpScorer::score(const Question& question, const Passage& passage, int) {
  httplib::Client client(origin_);
  client.set_read_timeout(timeout_.count() / 1000, (timeout_.count() % 1000) * 1000);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  json body{{"query", question.text}, {"passage", passage.text}};
  auto res = client.Post(path_prefix_ + "/score", headers, body.dump(), "application/json");
  if (!res) throw TransportError("scorer request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("scorer returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw JobFailure("scorer returned HTTP " + std::to_string(res->status));
  return json::parse(res->body).at("score").get<double>();
}

RunList rerank(const RerankRequest& request, const Corpus& corpus) {
  if (request.question == nullptr || request.scorer == nullptr) {
    throw std::invalid_argument("rerank needs a question and a scorer");
  }
  validate_run(request.candidates);
  const auto& input = request.candidates.entries;
  const auto depth = std::min(request.depth, input.size());

  std::vector<double> scores(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const Passage* p = corpus.find_passage(input[i].passage_id);
    if (p == nullptr) throw std::invalid_argument("unknown passage " + input[i].passage_id);
    for (int attempt = 0;; ++attempt) {
      try {
        scores[i] = request.scorer->score(*request.question, *p, input[i].rank);
        break;
      } catch (const TransportError& e) {
        if (attempt >= request.max_retries) {
          throw RerankFailed("scorer " + request.scorer->name() + " failed: " + e.what());
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
      }
    }
  }

  std::vector<std::size_t> order(depth);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RunList out;
  out.question_id = request.candidates.question_id;
  out.tag = request.scorer->name();
  for (auto i : order) out.entries.push_back({input[i].passage_id, scores[i], 0});
  double floor = depth > 0 ? scores[order.back()] : 0.0;
  for (std::size_t i = depth; i < input.size(); ++i) {
    auto s = depth > 0 ? std::min(input[i].score, floor) : input[i].score;
    out.entries.push_back({input[i].passage_id, s, 0});
  }
  if (depth == 0) out.tag = request.candidates.tag;
  assign_ranks(out);
  return out;
}

RunList oracle_candidates(const Corpus& corpus, std::string_view question_id, int threshold) {
  if (corpus.find_question(question_id) == nullptr) {
    throw std::invalid_argument("unknown question " + std::string(question_id));
  }
  RunList run;
  run.question_id = std::string(question_id);
  run.tag = "oracle";
  for (const auto& r : corpus.judgments_for(question_id)) {
    if (r.label >= threshold) run.entries.push_back({r.passage_id, 1.0, 0});
  }
  // judgments_for is ordered by passage id already.
  assign_ranks(run);
  return run;
}

}  // namespace inferqa
