#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "inferqa/corpus.hpp"
#include "inferqa/forge.hpp"
#include "inferqa/judge.hpp"

namespace inferqa {

enum class JobStatus { pending, done, failed };
std::string_view to_string(JobStatus status);

struct LabelingJob {
  std::string question_id;
  std::string passage_id;
  std::vector<std::string> endpoints;
  JobStatus status = JobStatus::pending;
  std::optional<RelevanceJudgment> result;
  std::string error;
};

/// Every endpoint reads the passage open-book and each answer is judged
/// against the gold answers. Label 2 when any verdict is correct, 1
/// otherwise. Throws std::invalid_argument when the passage belongs to a
/// different question and lets JobFailure through on endpoint failure.
RelevanceJudgment label_passage(const Question& question, const Passage& passage,
                                std::span<const Endpoint> endpoints,
                                const EquivalenceJudge& judge);

struct LabelingOutcome {
  Corpus corpus;
  std::vector<LabelingJob> jobs;
  std::size_t failed = 0;
};

/// Labels every (question, own passage) pair on `workers` threads. Correct
/// answers are appended to the question's answer pool in passage-id order.
/// Failed jobs leave no judgment behind.
LabelingOutcome label_corpus(const Corpus& corpus, std::span<const Endpoint> endpoints,
                             const EquivalenceJudge& judge, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Human verification

struct Candidate {
  std::string answer;
  std::vector<std::string> models;
  bool judged_correct = false;  // any model's verdict was correct
  bool matched_gold = false;    // normalize_answer equals a gold answer

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Decision {
  std::string answer;
  bool accepted = false;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct VerificationTask {
  std::string question_id;
  std::string question;
  std::vector<std::string> gold;
  std::vector<Candidate> candidates;
  std::optional<std::vector<Decision>> decisions;
  /// Hash of the candidate list; changes whenever the corpus does.
  std::string version;

  bool fully_decided() const;
};

/// One task per question in `splits`. Candidates are the distinct non-empty
/// model answers over the question's judgments, sorted by text.
std::vector<VerificationTask> export_verification(
    const Corpus& corpus, const std::set<Split>& splits = {Split::dev, Split::test});

std::optional<VerificationTask> verification_task(const Corpus& corpus,
                                                  std::string_view question_id);

struct DecisionRecord {
  std::string question_id;
  std::string answer;
  bool accepted = false;
  std::string annotator;
  std::string task_version;
};

/// Append-only JSONL log of decisions keyed by (question, answer); the last
/// record for a key wins when folded. Safe for concurrent appends within a
/// process.
class DecisionLog {
 public:
  explicit DecisionLog(std::filesystem::path file);
  void append(std::span<const DecisionRecord> records);
  std::vector<DecisionRecord> records() const;
  /// question id -> decisions in answer order.
  std::map<std::string, std::vector<Decision>> folded() const;
  const std::filesystem::path& path() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
};

/// Attach folded decisions to tasks.
void attach_decisions(std::vector<VerificationTask>& tasks,
                      const std::map<std::string, std::vector<Decision>>& decisions);

struct VerificationResult {
  Corpus corpus;
  std::vector<std::string> changes;
  std::vector<std::string> removed_questions;
};

/// Applies decided tasks: rejected answers leave the pool (gold answers are
/// kept), accepted ones join it, verdicts follow the decisions, label-2
/// passages left without an accepted answer drop to 1, and the leakage
/// filter is re-run over every question with the updated pools.
VerificationResult apply_verification(const Corpus& corpus,
                                      std::span<const VerificationTask> tasks,
                                      const LeakageOracle& oracle);

std::string task_to_json(const VerificationTask& task);
VerificationTask task_from_json(std::string_view line);

}  // namespace inferqa
