#include "inferqa/labeler.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

std::string_view to_string(JobStatus status) {
  switch (status) {
    case JobStatus::pending: return "pending";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "pending";
}

RelevanceJudgment label_passage(const Question& question, const Passage& passage,
                                std::span<const Endpoint> endpoints,
                                const EquivalenceJudge& judge) {
  if (passage.source_question != question.id) {
    throw std::invalid_argument("passage " + passage.id + " belongs to question " +
                                passage.source_question + ", not " + question.id);
  }
  if (endpoints.empty()) throw std::invalid_argument("label_passage needs endpoints");
  RelevanceJudgment r;
  r.question_id = question.id;
  r.passage_id = passage.id;
  for (const auto& endpoint : endpoints) {
    ModelAnswer ma;
    ma.model = endpoint.name();
    auto answer = answer_open_book(endpoint, question.text, passage.text);
    ma.answer = answer.text;
    if (answer.text) ma.verdict = judge_against(judge, question.text, question.gold, *answer.text).correct;
    r.model_answers.push_back(std::move(ma));
  }
  bool any = std::any_of(r.model_answers.begin(), r.model_answers.end(),
                         [](const ModelAnswer& a) { return a.verdict; });
  r.label = any ? 2 : 1;
  return r;
}

LabelingOutcome label_corpus(const Corpus& input, std::span<const Endpoint> endpoints,
                             const EquivalenceJudge& judge, std::size_t workers) {
  Corpus corpus = input;
  corpus.sort();
  LabelingOutcome out;
  std::vector<std::string> names;
  for (const auto& e : endpoints) names.push_back(e.name());
  for (const auto& p : corpus.passages) {
    LabelingJob job;
    job.question_id = p.source_question;
    job.passage_id = p.id;
    job.endpoints = names;
    out.jobs.push_back(std::move(job));
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (auto i = next.fetch_add(1); i < out.jobs.size(); i = next.fetch_add(1)) {
      auto& job = out.jobs[i];
      try {
        job.result = label_passage(*corpus.find_question(job.question_id),
                                   *corpus.find_passage(job.passage_id), endpoints, judge);
        job.status = JobStatus::done;
      } catch (const std::exception& e) {
        job.status = JobStatus::failed;
        job.error = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(work);
    work();
  }

  out.corpus = corpus;
  auto& judgments = out.corpus.judgments;
  // Same-question judgments are replaced; cross-question ones are kept.
  std::erase_if(judgments, [&](const RelevanceJudgment& r) {
    const Passage* p = corpus.find_passage(r.passage_id);
    return p != nullptr && p->source_question == r.question_id;
  });
  std::map<std::string, std::vector<std::string>> harvested;
  for (const auto& job : out.jobs) {
    if (job.status != JobStatus::done) {
      ++out.failed;
      continue;
    }
    judgments.push_back(*job.result);
    for (const auto& a : job.result->model_answers) {
      if (a.verdict && a.answer) harvested[job.question_id].push_back(*a.answer);
    }
  }
  for (auto& q : out.corpus.questions) {
    for (const auto& a : harvested[q.id]) {
      if (std::find(q.answers.begin(), q.answers.end(), a) == q.answers.end()) {
        q.answers.push_back(a);
      }
    }
  }
  out.corpus.sort();
  return out;
}

// ---------------------------------------------------------------------------
// Verification

bool VerificationTask::fully_decided() const {
  if (!decisions) return false;
  for (const auto& c : candidates) {
    auto it = std::find_if(decisions->begin(), decisions->end(),
                           [&](const Decision& d) { return d.answer == c.answer; });
    if (it == decisions->end()) return false;
  }
  return true;
}

namespace {

VerificationTask build_task(const Corpus& corpus, const Question& q) {
  VerificationTask task;
  task.question_id = q.id;
  task.question = q.text;
  task.gold = q.gold;
  std::map<std::string, Candidate> by_answer;
  for (const auto& r : corpus.judgments_for(q.id)) {
    if (r.label == 0) continue;
    for (const auto& a : r.model_answers) {
      if (!a.answer || trim(*a.answer).empty()) continue;
      auto& c = by_answer[*a.answer];
      c.answer = *a.answer;
      if (std::find(c.models.begin(), c.models.end(), a.model) == c.models.end()) {
        c.models.push_back(a.model);
      }
      c.judged_correct = c.judged_correct || a.verdict;
    }
  }
  std::set<std::string> gold_norm;
  for (const auto& g : q.gold) gold_norm.insert(normalize_answer(g));
  std::string fingerprint = q.id;
  for (auto& [answer, c] : by_answer) {
    std::sort(c.models.begin(), c.models.end());
    c.matched_gold = gold_norm.count(normalize_answer(answer)) != 0;
    fingerprint += '\x1f' + answer + (c.judged_correct ? "+" : "-");
    task.candidates.push_back(std::move(c));
  }
  task.version = to_hex16(fnv1a64(fingerprint));
  return task;
}

}  // namespace

std::vector<VerificationTask> export_verification(const Corpus& corpus,
                                                  const std::set<Split>& splits) {
  std::vector<VerificationTask> tasks;
  for (const auto& q : corpus.questions) {
    if (splits.count(q.split) == 0) continue;
    tasks.push_back(build_task(corpus, q));
  }
  return tasks;
}

std::optional<VerificationTask> verification_task(const Corpus& corpus,
                                                  std::string_view question_id) {
  const Question* q = corpus.find_question(question_id);
  if (q == nullptr) return std::nullopt;
  return build_task(corpus, *q);
}

DecisionLog::DecisionLog(std::filesystem::path file) : file_(std::move(file)) {}

void DecisionLog::append(std::span<const DecisionRecord> records) {
  std::lock_guard lock(mutex_);
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::binary | std::ios::app);
  if (!out) throw CorpusError("cannot append to " + file_.string());
  for (const auto& r : records) {
    json j{{"question_id", r.question_id},
           {"answer", r.answer},
           {"accepted", r.accepted},
           {"annotator", r.annotator},
           {"task_version", r.task_version}};
    out << j.dump() << '\n';
  }
  out.flush();
  if (!out) throw CorpusError("append failed for " + file_.string());
}

std::vector<DecisionRecord> DecisionLog::records() const {
  std::lock_guard lock(mutex_);
  std::vector<DecisionRecord> out;
  if (!std::filesystem::exists(file_)) return out;
  for (const auto& j : parse_jsonl<json>(read_file(file_), file_.filename().string())) {
    DecisionRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.accepted = j.at("accepted").get<bool>();
    r.annotator = j.value("annotator", std::string());
    r.task_version = j.value("task_version", std::string());
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, std::vector<Decision>> DecisionLog::folded() const {
  std::map<std::string, std::map<std::string, bool>> latest;
  for (const auto& r : records()) latest[r.question_id][r.answer] = r.accepted;
  std::map<std::string, std::vector<Decision>> out;
  for (const auto& [qid, answers] : latest) {
    for (const auto& [answer, accepted] : answers) out[qid].push_back({answer, accepted});
  }
  return out;
}

void attach_decisions(std::vector<VerificationTask>& tasks,
                      const std::map<std::string, std::vector<Decision>>& decisions) {
  for (auto& t : tasks) {
    auto it = decisions.find(t.question_id);
    if (it != decisions.end()) t.decisions = it->second;
  }
}

VerificationResult apply_verification(const Corpus& corpus,
                                      std::span<const VerificationTask> tasks,
                                      const LeakageOracle& oracle) {
  VerificationResult result;
  result.corpus = corpus;
  auto& c = result.corpus;
  c.sort();

  for (const auto& task : tasks) {
    auto current = verification_task(c, task.question_id);
    if (!current) {
      result.changes.push_back(task.question_id + ": question no longer in corpus, skipped");
      continue;
    }
    if (!task.decisions) {
      throw std::invalid_argument("task " + task.question_id + " has no decisions");
    }
    std::map<std::string, bool> decided;
    for (const auto& d : *task.decisions) {
      auto known = std::any_of(current->candidates.begin(), current->candidates.end(),
                               [&](const Candidate& cand) { return cand.answer == d.answer; });
      if (!known) {
        throw std::invalid_argument("decision for " + task.question_id +
                                    " references unknown answer '" + d.answer + "'");
      }
      decided[d.answer] = d.accepted;
    }
    for (const auto& cand : current->candidates) {
      if (decided.count(cand.answer) == 0) {
        throw std::invalid_argument("task " + task.question_id + " is not fully decided");
      }
    }

    auto& q = *std::find_if(c.questions.begin(), c.questions.end(),
                            [&](const Question& x) { return x.id == task.question_id; });
    std::vector<std::string> pool;
    for (const auto& a : q.answers) {
      auto it = decided.find(a);
      bool is_gold = std::find(q.gold.begin(), q.gold.end(), a) != q.gold.end();
      if (it != decided.end() && !it->second && !is_gold) {
        result.changes.push_back(q.id + ": removed answer '" + a + "'");
        continue;
      }
      pool.push_back(a);
    }
    for (const auto& [answer, accepted] : decided) {
      if (accepted && std::find(pool.begin(), pool.end(), answer) == pool.end()) {
        pool.push_back(answer);
        result.changes.push_back(q.id + ": added answer '" + answer + "'");
      }
    }
    q.answers = std::move(pool);

    for (auto& r : c.judgments) {
      if (r.question_id != q.id || r.label == 0) continue;
      bool any = false;
      for (auto& a : r.model_answers) {
        if (a.answer) {
          auto it = decided.find(*a.answer);
          if (it != decided.end()) a.verdict = it->second;
        }
        any = any || a.verdict;
      }
      int label = any ? 2 : 1;
      if (label != r.label) {
        result.changes.push_back(q.id + ": passage " + r.passage_id + " label " +
                                 std::to_string(r.label) + "->" + std::to_string(label));
        r.label = label;
      }
      r.verified = true;
    }
  }

  std::set<std::string> removed;
  for (const auto& q : c.questions) {
    if (detect_leakage(q.hints, q.answers, oracle, q.text)) removed.insert(q.id);
  }
  if (!removed.empty()) {
    std::set<std::string> removed_passages;
    for (const auto& p : c.passages) {
      if (removed.count(p.source_question)) removed_passages.insert(p.id);
    }
    std::erase_if(c.questions, [&](const Question& q) { return removed.count(q.id) != 0; });
    std::erase_if(c.passages,
                  [&](const Passage& p) { return removed_passages.count(p.id) != 0; });
    std::erase_if(c.judgments, [&](const RelevanceJudgment& r) {
      return removed.count(r.question_id) != 0 || removed_passages.count(r.passage_id) != 0;
    });
    for (const auto& id : removed) {
      result.changes.push_back(id + ": removed question, a hint now leaks an answer");
      result.removed_questions.push_back(id);
    }
  }
  return result;
}

std::string task_to_json(const VerificationTask& task) {
  json candidates = json::array();
  for (const auto& cand : task.candidates) {
    candidates.push_back(json{{"answer", cand.answer},
                              {"models", cand.models},
                              {"judged_correct", cand.judged_correct},
                              {"matched_gold", cand.matched_gold}});
  }
  json j{{"question_id", task.question_id}, {"question", task.question},
         {"gold", task.gold},               {"candidates", std::move(candidates)},
         {"version", task.version}};
  if (task.decisions) {
    json decisions = json::array();
    for (const auto& d : *task.decisions) {
      decisions.push_back(json{{"answer", d.answer}, {"accepted", d.accepted}});
    }
    j["decisions"] = std::move(decisions);
  } else {
    j["decisions"] = nullptr;
  }
  return j.dump();
}

VerificationTask task_from_json(std::string_view line) {
  auto j = json::parse(line);
  VerificationTask t;
  t.question_id = j.at("question_id").get<std::string>();
  t.question = j.value("question", std::string());
  t.gold = j.value("gold", std::vector<std::string>{});
  t.version = j.value("version", std::string());
  for (const auto& cj : j.value("candidates", json::array())) {
    Candidate cand;
    cand.answer = cj.at("answer").get<std::string>();
    cand.models = cj.value("models", std::vector<std::string>{});
    cand.judged_correct = cj.value("judged_correct", false);
    cand.matched_gold = cj.value("matched_gold", false);
    t.candidates.push_back(std::move(cand));
  }
  if (j.contains("decisions") && !j["decisions"].is_null()) {
    std::vector<Decision> decisions;
    for (const auto& dj : j["decisions"]) {
      decisions.push_back({dj.at("answer").get<std::string>(), dj.at("accepted").get<bool>()});
    }
    t.decisions = std::move(decisions);
  }
  return t;
}

}  // namespace inferqa
