// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "bm25_oracle.hpp"
#include "inferqa/fusion.hpp"
#include "inferqa/pipeline.hpp"
#include "inferqa/retrieval.hpp"
#include "inferqa/text.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

using namespace inferqa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects failed expectations for one criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string summary() const {
    std::string out;
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) out += (i ? "; " : "") + failures_[i];
    if (failures_.size() > 5) out += "; ... " + std::to_string(failures_.size() - 5) + " more";
    return out;
  }
  std::string note;

 private:
  std::vector<std::string> failures_;
};

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

void combinatorics(Checker& c) {
  auto start = Clock::now();
  const std::vector<std::size_t> expected{1, 4, 15, 64, 325};
  for (int n = 1; n <= 5; ++n) {
    auto seqs = enumerate_sequences(n);
    c.expect(seqs.size() == expected[n - 1], "n=" + std::to_string(n) + " gave " +
                                                 std::to_string(seqs.size()));
  }
  auto q = testing::make_question("q", "?", {"x"}, {"h1", "h2", "h3", "h4", "h5"});
  c.expect(forge_passages(q).size() == 325, "forge_passages for five hints is not 325");
  double t = seconds_since(start);
  c.expect(t < 1.0, fmt("runtime %.3f s", t));
  c.note = fmt("counts 1/4/15/64/325 in %.3f s", t);
}

std::vector<std::string> order_of(const std::vector<ScoredSentence>& ranked) {
  std::vector<std::string> out;
  for (const auto& s : ranked) out.push_back(s.sentence);
  return out;
}

void fusion_fixture(Checker& c) {
  std::vector<SentenceList> ranked{{"sA", "sB"}, {"sB", "sC"}};
  FusionConfig config;
  config.alpha = 0.6;
  config.beta = 0.4;
  auto out = rank_sentences(ranked, config);
  std::map<std::string, double> expected{{"sA", 1.0}, {"sB", 1.5}, {"sC", 0.5}};
  c.expect(order_of(out) == std::vector<std::string>{"sB", "sA", "sC"}, "order is not sB, sA, sC");
  for (const auto& s : out) {
    c.expect(std::abs(s.score - expected[s.sentence]) <= 1e-9, "score of " + s.sentence);
  }

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> passages(1, 6), length(1, 5), pick(0, 8);
  std::uniform_real_distribution<double> weight(0.01, 1.0), scale(0.01, 100.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<SentenceList> inst(static_cast<std::size_t>(passages(rng)));
    for (auto& p : inst) {
      int n = length(rng);
      while (static_cast<int>(p.size()) < n) {
        auto s = "s" + std::to_string(pick(rng));
        if (std::find(p.begin(), p.end(), s) == p.end()) p.push_back(s);
      }
    }
    FusionConfig base;
    base.alpha = weight(rng);
    base.beta = weight(rng);
    FusionConfig scaled = base;
    double k = scale(rng);
    scaled.alpha *= k;
    scaled.beta *= k;
    if (order_of(rank_sentences(inst, base)) != order_of(rank_sentences(inst, scaled))) ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " of 1000 instances changed order");
  c.note = "scores 1.0/1.5/0.5, order sB sA sC; 1000 scaled instances";
}

void metric_oracle(Checker& c) {
  auto start = Clock::now();
  std::mt19937_64 rng(11);
  int mismatches = 0, monotonic = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto inst = oracle::random_instance(rng);
    for (int t : {1, 2}) {
      double prev_hit = 0, prev_recall = 0;
      for (int k = 1; k <= 20; ++k) {
        double h = hit_at_k(inst.run, inst.labels, k, t);
        if (h != oracle::hit(inst, k, t)) ++mismatches;
        auto r = recall_at_k(inst.run, inst.labels, k, t);
        auto rr = oracle::recall(inst, k, t);
        if (r.has_value() != rr.has_value() || (r && std::abs(*r - *rr) > 1e-9)) ++mismatches;
        if (std::abs(reciprocal_rank(inst.run, inst.labels, k, t) - oracle::rr(inst, k, t)) > 1e-9) {
          ++mismatches;
        }
        if (h < prev_hit || (r && *r < prev_recall)) ++monotonic;
        prev_hit = h;
        if (r) prev_recall = *r;
      }
    }
    for (Gain g : {Gain::linear, Gain::exponential}) {
      for (int k = 1; k <= 20; ++k) {
        double v = ndcg_at_k(inst.run, inst.labels, k, g);
        if (std::abs(v - oracle::ndcg(inst, k, g)) > 1e-9) ++mismatches;
      }
    }
    std::vector<std::string> golds{oracle::random_answer(rng), oracle::random_answer(rng)};
    std::optional<std::string> pred;
    if (trial % 7 != 0) pred = oracle::random_answer(rng);
    if (exact_match(pred, golds) != oracle::em(pred, golds)) ++mismatches;
  }
  double t = seconds_since(start);
  c.expect(mismatches == 0, std::to_string(mismatches) + " metric mismatches");
  c.expect(monotonic == 0, std::to_string(monotonic) + " monotonicity violations");
  c.expect(t < 10.0, fmt("runtime %.3f s", t));
  c.note = fmt("500 instances, both gains and thresholds, %.3f s", t);
}

void bm25_fixture(Checker& c) {
  const std::string query = "spanish footballer titles";
  auto run = search_bm25(build_lexical_index(oracle::kDocs), "q", query, 3, {0.9, 0.4});
  std::vector<std::pair<double, std::string>> expected;
  for (std::size_t i = 0; i < oracle::kDocs.size(); ++i) {
    expected.push_back({-oracle::reference_bm25(oracle::kDocs, i, query, 0.9, 0.4), oracle::kDocs[i].id});
  }
  std::sort(expected.begin(), expected.end());
  c.expect(run.entries.size() == 3, "top-3 has " + std::to_string(run.entries.size()) + " entries");
  std::string order;
  for (std::size_t i = 0; i < run.entries.size() && i < 3; ++i) {
    c.expect(run.entries[i].passage_id == expected[i].second, "rank " + std::to_string(i + 1));
    c.expect(std::abs(run.entries[i].score + expected[i].first) <= 1e-6,
             "score at rank " + std::to_string(i + 1));
    order += (i ? " " : "") + run.entries[i].passage_id;
  }
  c.note = "top-3 " + order;
}

ExperimentManifest toy_manifest(Mode mode, const fs::path& out, int k) {
  ExperimentManifest m;
  m.output_dir = out;
  m.mode = mode;
  m.k = k;
  m.seed = 13;
  m.models = testing::toy_model_config();
  if (mode == Mode::standard) m.retriever = RetrieverConfig{};
  if (mode != Mode::optimal) m.reranker = RerankerConfig{};
  return m;
}

// forge -> label -> retrieve -> rerank(identity) -> fuse -> read -> eval
void end_to_end_once(const fs::path& root) {
  auto raw = load_questions(testing::toy_raw(), false);
  auto forged = forge(raw, LexicalLeakageOracle{});
  Corpus corpus;
  corpus.questions = forged.questions;
  corpus.passages = forged.passages;
  corpus.sort();
  save_corpus(corpus, root / "forged");
  write_file(root / "forged" / "forge_report.json", forged.report.to_json());

  auto models = testing::toy_model_config();
  auto loaded = load_corpus(root / "forged");
  auto endpoints = models.build(models.labelers, loaded.questions);
  auto judge = models.build_judge(loaded.questions);
  auto labeled = label_corpus(loaded, endpoints, *judge, 2);
  save_corpus(labeled.corpus, root / "labeled");

  run_manifest(toy_manifest(Mode::standard, root / "run", 5), load_corpus(root / "labeled"));
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

void deterministic_end_to_end(Checker& c) {
  testing::TempDir a, b;
  auto start = Clock::now();
  end_to_end_once(a.path());
  end_to_end_once(b.path());
  double t = seconds_since(start);
  auto sa = snapshot(a.path());
  auto sb = snapshot(b.path());
  for (const char* f : {"run/qrels.tsv", "run/retrieval.run", "run/rerank.run", "run/report.jsonl",
                        "run/report.md"}) {
    c.expect(sa.count(f) == 1, std::string("missing ") + f);
  }
  c.expect(sa.size() == sb.size(), "different artifact sets");
  for (const auto& [name, content] : sa) {
    auto it = sb.find(name);
    c.expect(it != sb.end() && it->second == content, name + " differs");
  }
  auto corpus = load_corpus(a / "labeled");
  c.expect(corpus.questions.size() == 20, std::to_string(corpus.questions.size()) + " questions");
  c.expect(corpus.passages.size() == 20 * 325, std::to_string(corpus.passages.size()) + " passages");
  c.expect(t < 60.0, fmt("runtime %.1f s", t));
  c.note = std::to_string(sa.size()) + " artifacts identical, " + fmt("%.1f s for two runs", t);
}

double em_of(const PipelineResult& r) {
  for (const auto& row : r.report.rows) {
    auto it = row.values.find("EM");
    if (it != row.values.end()) return it->second;
  }
  throw std::runtime_error("no EM row");
}

void mode_dominance(Checker& c) {
  auto corpus = testing::toy_labeled();
  testing::TempDir dir;
  std::string note;
  for (int k : {1, 3, 5}) {
    auto ks = std::to_string(k);
    double opt = em_of(run_manifest(toy_manifest(Mode::optimal, dir / ("opt" + ks), k), corpus));
    double ora =
        em_of(run_manifest(toy_manifest(Mode::oracle_retriever, dir / ("ora" + ks), k), corpus));
    double std_ = em_of(run_manifest(toy_manifest(Mode::standard, dir / ("std" + ks), k), corpus));
    c.expect(opt >= ora, "k=" + ks + ": optimal < oracle");
    c.expect(ora >= std_, "k=" + ks + ": oracle < bm25");
    if (k == 1) {
      c.expect(opt > ora, "k=1: optimal not strictly above oracle");
      c.expect(ora > std_, "k=1: oracle not strictly above bm25");
    }
    note += (note.empty() ? "" : "; ") + ("k=" + ks) +
            fmt(" optimal %.2f >= oracle %.2f >= bm25 %.2f", opt, ora, std_);
  }
  c.note = note + " (strict at k=1)";
}

struct Always : ChatProvider {
  explicit Always(std::string reply) : reply(std::move(reply)) {}
  std::string complete(const ChatRequest&) override { return reply; }
  std::string reply;
};

Endpoint always(const std::string& name, const std::string& reply) {
  ModelEndpoint cfg;
  cfg.name = name;
  return Endpoint(cfg, std::make_shared<Always>(reply));
}

struct ListJudge : EquivalenceJudge {
  explicit ListJudge(std::set<std::string> ok) : ok(std::move(ok)) {}
  Verdict judge(std::string_view, std::string_view, std::string_view cand) const override {
    return {std::string(cand), ok.count(std::string(cand)) != 0, "", 1};
  }
  std::set<std::string> ok;
};

int count_label(const Corpus& corpus, int label) {
  int n = 0;
  for (const auto& r : corpus.judgments) n += r.label == label;
  return n;
}

void label_updating(Checker& c) {
  auto q = testing::make_question("q1", "Which country is this?", {"China"},
                                  {"Its capital is Beijing", "It has 14 neighbours",
                                   "It uses one time zone", "Its wall is long", "It invented paper"});
  q.split = Split::test;
  std::vector<Question> qs{q};
  auto forged = testing::forged_corpus(qs);
  LexicalLeakageOracle oracle;

  // Model b's "PRC" is the only correct answer on the 25 passages with fewer
  // than three hints; rejecting it must drop those passages to label 1.
  std::vector<Endpoint> eps{testing::mock_endpoint("t3", qs, 3), always("b", "PRC")};
  auto labeled = label_corpus(forged, eps, ListJudge({"China", "PRC"})).corpus;
  auto tasks = export_verification(labeled);
  tasks[0].decisions = std::vector<Decision>{{"China", true}, {"PRC", false}};
  auto once = apply_verification(labeled, tasks, oracle);
  int dropped = 0;
  for (const auto& r : once.corpus.judgments) {
    const auto* before = labeled.find_judgment(r.question_id, r.passage_id);
    if (before->label == 2 && r.label == 1) ++dropped;
  }
  c.expect(count_label(labeled, 2) == 325, "labeling did not give 325 label-2 passages");
  c.expect(dropped == 25, std::to_string(dropped) + " passages went 2->1, expected 25");
  c.expect(once.corpus.questions[0].answers == std::vector<std::string>{"China"},
           "rejected answer still in the pool");
  auto twice = apply_verification(once.corpus, tasks, oracle);
  c.expect(twice.corpus == once.corpus, "second application changed the corpus");

  std::vector<Endpoint> leaky{testing::mock_endpoint("t3", qs, 3), always("b", "Beijing")};
  auto labeled2 = label_corpus(forged, leaky, LexicalJudge{}).corpus;
  auto tasks2 = export_verification(labeled2);
  tasks2[0].decisions = std::vector<Decision>{{"Beijing", true}, {"China", true}};
  auto removed = apply_verification(labeled2, tasks2, oracle);
  c.expect(removed.removed_questions == std::vector<std::string>{"q1"},
           "accepting a hint-contained answer did not remove the question");
  c.expect(removed.corpus.passages.empty(), "passages of the removed question remain");
  c.note = "25 passages 2->1, idempotent, leaking acceptance removes q1";
}

void prompt_fidelity(Checker& c) {
  const std::string judge_template =
      "Question: {question}\n"
      "Answer: {answer}\n"
      "Candidate: {candidate}\n"
      "Is candidate correct? Choose between \"Yes\" or \"No\"";
  c.expect(judge_prompt("{question}", "{answer}", "{candidate}") == judge_template,
           "judge prompt differs from the template");

  const std::string system =
      "You are an assistant that answers questions based on the provided context. You just "
      "answer questions with exact answers. You do not use sentences as the response.";
  const std::vector<std::string> conditions{
      "1. Answer should not be sentences. It should be some words.",
      "2. Do not generate \"sorry\" or \"I cannot ...\" sentences; instead, use \"NO ANSWER\".",
      "3. Do not generate explanations, reasoning, or full sentences\xE2\x80\x94only provide the "
      "exact answer.",
      "4. If the answer cannot be guessed from the context, respond only with \"NO ANSWER\"."};
  auto messages = reader_messages("some context", "some question?");
  std::string rendered;
  for (const auto& m : messages) rendered += m.content + "\n";
  c.expect(!messages.empty() && messages[0].role == "system" && messages[0].content == system,
           "system instruction differs");
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    c.expect(rendered.find(conditions[i]) != std::string::npos,
             "condition " + std::to_string(i + 1) + " missing");
  }
  c.note = "judge template byte-identical; system instruction and 4 conditions present";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Checker&)>>> criteria{
      {"1 combinatorics", combinatorics},
      {"2 union_freq scoring", fusion_fixture},
      {"3 metric oracle equivalence", metric_oracle},
      {"4 BM25 fixture", bm25_fixture},
      {"5 deterministic end-to-end", deterministic_end_to_end},
      {"6 mode dominance", mode_dominance},
      {"7 label-updating semantics", label_updating},
      {"8 prompt fidelity", prompt_fidelity},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Checker c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    if (c.ok()) {
      std::printf("PASS criterion %s: %s\n", name.c_str(), c.note.c_str());
    } else {
      ++failed;
      std::printf("FAIL criterion %s: %s\n", name.c_str(), c.summary().c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
