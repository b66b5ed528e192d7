#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace inferqa {

/// Raised for malformed or inconsistent corpus files. The message carries
/// "file:line: reason" when the problem is tied to a record.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, dev, test, unassigned };
enum class HintSource { human, machine };

std::string_view to_string(Split split);
Split parse_split(std::string_view s);
std::string_view to_string(HintSource source);
HintSource parse_hint_source(std::string_view s);

inline constexpr std::size_t kMaxSelectedHints = 5;

struct Hint {
  std::string text;
  std::optional<double> convergence;  // absent when the source had no score
  HintSource source = HintSource::human;

  friend bool operator==(const Hint&, const Hint&) = default;
};

struct Question {
  std::string id;
  std::string text;
  /// Answer pool: the original gold answers plus answers harvested during
  /// labeling or accepted by annotators.
  std::vector<std::string> answers;
  /// The original gold answers (subset of `answers`).
  std::vector<std::string> gold;
  std::vector<Hint> hints;
  Split split = Split::unassigned;
  std::optional<std::string> qtype;
  std::optional<double> difficulty;
  std::optional<bool> parametric;

  friend bool operator==(const Question&, const Question&) = default;
};

struct Passage {
  std::string id;
  std::string source_question;
  std::vector<int> hint_seq;
  std::string text;
  /// hint_seq.size() + 1 offsets; span i is [boundaries[i], boundaries[i+1])
  /// and includes the joining space that follows it.
  std::vector<std::size_t> boundaries;

  /// The hint sentences in passage order, without the joining spaces.
  std::vector<std::string> sentences() const;

  friend bool operator==(const Passage&, const Passage&) = default;
};

struct ModelAnswer {
  std::string model;
  std::optional<std::string> answer;  // nullopt is the reader's NO ANSWER
  bool verdict = false;

  friend bool operator==(const ModelAnswer&, const ModelAnswer&) = default;
};

struct RelevanceJudgment {
  std::string question_id;
  std::string passage_id;
  int label = 0;
  std::vector<ModelAnswer> model_answers;
  bool verified = false;

  friend bool operator==(const RelevanceJudgment&, const RelevanceJudgment&) = default;
};

struct RunEntry {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

struct RunList {
  std::string question_id;
  std::vector<RunEntry> entries;
  std::string tag;

  friend bool operator==(const RunList&, const RunList&) = default;
};

/// Ranks 1..n, non-increasing scores, unique passage ids. Throws CorpusError.
void validate_run(const RunList& run);

/// Assigns ranks 1..n in the current entry order.
void assign_ranks(RunList& run);

/// Questions, passages and judgments kept sorted by id (judgments by
/// question then passage). Treat as immutable once built; derive new
/// versions instead of editing one that is shared.
struct Corpus {
  std::vector<Question> questions;
  std::vector<Passage> passages;
  std::vector<RelevanceJudgment> judgments;

  const Question* find_question(std::string_view id) const;
  const Passage* find_passage(std::string_view id) const;
  const RelevanceJudgment* find_judgment(std::string_view question_id,
                                         std::string_view passage_id) const;
  std::span<const RelevanceJudgment> judgments_for(std::string_view question_id) const;
  std::vector<const Passage*> passages_of(std::string_view question_id) const;

  /// Sort all three collections into canonical order.
  void sort();

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Joins hints with a single space, appending a period to any hint that
/// does not already end in terminal punctuation.
std::string render_hint(std::string_view hint);

struct RenderedPassage {
  std::string text;
  std::vector<std::size_t> boundaries;
};
RenderedPassage render_passage(std::span<const Hint> hints, std::span<const int> hint_seq);

/// Deterministic identifier for (question, hint sequence); 16 hex digits.
/// Throws std::invalid_argument on a duplicate or negative index.
std::string passage_id(std::string_view question_id, std::span<const int> hint_seq);

Passage make_passage(const Question& question, std::span<const int> hint_seq);

/// Checks every type invariant and cross reference. Throws CorpusError.
void validate_corpus(const Corpus& corpus);
void validate_question(const Question& q, bool selected);

inline constexpr std::string_view kQuestionsFile = "questions.jsonl";
inline constexpr std::string_view kPassagesFile = "passages.jsonl";
inline constexpr std::string_view kJudgmentsFile = "judgments.jsonl";

/// Reads questions.jsonl (required), passages.jsonl and judgments.jsonl
/// (optional) and validates the result.
Corpus load_corpus(const std::filesystem::path& dir);

/// Validates first, refusing to write an invalid corpus.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Question records without the selected-hint cap; used for raw inputs.
std::vector<Question> load_questions(const std::filesystem::path& file, bool selected);
void save_questions(std::span<const Question> questions, const std::filesystem::path& file);

void save_passages(std::span<const Passage> passages, const std::filesystem::path& file);
std::vector<Passage> load_passages(const std::filesystem::path& file);

// qrels: "qid 0 docid grade"
using Qrels = std::map<std::string, std::map<std::string, int>>;

/// Emits every stored judgment, label preserved. `threshold` must be 1 or
/// 2; it only matters to metric interpretation and does not filter lines.
std::string export_qrels(const Corpus& corpus, int threshold);
Qrels qrels_from_corpus(const Corpus& corpus);
Qrels parse_qrels(std::string_view content);
Qrels read_qrels(const std::filesystem::path& file);

// run files: "qid Q0 docid rank score tag"
std::string format_run(std::span<const RunList> runs);
std::vector<RunList> parse_run(std::string_view content);
std::vector<RunList> read_run(const std::filesystem::path& file);

std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, std::string_view content);

}  // namespace inferqa
