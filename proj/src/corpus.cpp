#include "inferqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(HintSource source) {
  return source == HintSource::human ? "human" : "machine";
}

HintSource parse_hint_source(std::string_view s) {
  if (s == "human") return HintSource::human;
  if (s == "machine") return HintSource::machine;
  throw std::invalid_argument("unknown hint source '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// JSON mappings

void to_json(json& j, const Hint& h) {
  j = json{{"text", h.text}, {"source", to_string(h.source)}};
  if (h.convergence) j["convergence"] = *h.convergence;
}

void from_json(const json& j, Hint& h) {
  h.text = j.at("text").get<std::string>();
  h.convergence.reset();
  if (j.contains("convergence") && !j.at("convergence").is_null()) {
    h.convergence = j.at("convergence").get<double>();
  }
  h.source = parse_hint_source(j.value("source", std::string("human")));
}

void to_json(json& j, const Question& q) {
  j = json{{"id", q.id},           {"text", q.text},   {"answers", q.answers},
           {"gold", q.gold},       {"hints", q.hints}, {"split", to_string(q.split)}};
  if (q.qtype) j["qtype"] = *q.qtype;
  if (q.difficulty) j["difficulty"] = *q.difficulty;
  if (q.parametric) j["parametric"] = *q.parametric;
}

void from_json(const json& j, Question& q) {
  q.id = j.at("id").get<std::string>();
  q.text = j.at("text").get<std::string>();
  q.answers = j.at("answers").get<std::vector<std::string>>();
  q.gold = j.contains("gold") ? j.at("gold").get<std::vector<std::string>>() : q.answers;
  q.hints = j.value("hints", std::vector<Hint>{});
  q.split = parse_split(j.value("split", std::string("unassigned")));
  q.qtype.reset();
  q.difficulty.reset();
  q.parametric.reset();
  if (j.contains("qtype") && !j["qtype"].is_null()) q.qtype = j["qtype"].get<std::string>();
  if (j.contains("difficulty") && !j["difficulty"].is_null()) {
    q.difficulty = j["difficulty"].get<double>();
  }
  if (j.contains("parametric") && !j["parametric"].is_null()) {
    q.parametric = j["parametric"].get<bool>();
  }
}

void to_json(json& j, const Passage& p) {
  j = json{{"id", p.id},
           {"question_id", p.source_question},
           {"hint_seq", p.hint_seq},
           {"text", p.text},
           {"boundaries", p.boundaries}};
}

void from_json(const json& j, Passage& p) {
  p.id = j.at("id").get<std::string>();
  p.source_question = j.at("question_id").get<std::string>();
  p.hint_seq = j.at("hint_seq").get<std::vector<int>>();
  p.text = j.at("text").get<std::string>();
  p.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
}

void to_json(json& j, const ModelAnswer& a) {
  j = json{{"model", a.model}, {"verdict", a.verdict}};
  j["answer"] = a.answer ? json(*a.answer) : json(nullptr);
}

void from_json(const json& j, ModelAnswer& a) {
  a.model = j.at("model").get<std::string>();
  a.answer.reset();
  if (!j.at("answer").is_null()) a.answer = j.at("answer").get<std::string>();
  a.verdict = j.at("verdict").get<bool>();
}

void to_json(json& j, const RelevanceJudgment& r) {
  j = json{{"question_id", r.question_id},
           {"passage_id", r.passage_id},
           {"label", r.label},
           {"model_answers", r.model_answers},
           {"verified", r.verified}};
}

void from_json(const json& j, RelevanceJudgment& r) {
  r.question_id = j.at("question_id").get<std::string>();
  r.passage_id = j.at("passage_id").get<std::string>();
  r.label = j.at("label").get<int>();
  r.model_answers = j.value("model_answers", std::vector<ModelAnswer>{});
  r.verified = j.value("verified", false);
}

std::string dump_jsonl(std::span<const json> records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Passages

std::vector<std::string> Passage::sentences() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    std::string_view span(text);
    span = span.substr(boundaries[i], boundaries[i + 1] - boundaries[i]);
    if (i + 2 < boundaries.size() && !span.empty() && span.back() == ' ') span.remove_suffix(1);
    out.emplace_back(span);
  }
  return out;
}

std::string render_hint(std::string_view hint) {
  std::string s = trim(hint);
  if (s.empty()) return s;
  auto ends_terminal = [](std::string_view t) {
    char last = t.back();
    if (last == '.' || last == '!' || last == '?') return true;
    if ((last == '"' || last == '\'' || last == ')') && t.size() >= 2) {
      char prev = t[t.size() - 2];
      return prev == '.' || prev == '!' || prev == '?';
    }
    return false;
  };
  if (!ends_terminal(s)) s.push_back('.');
  return s;
}

RenderedPassage render_passage(std::span<const Hint> hints, std::span<const int> hint_seq) {
  RenderedPassage out;
  out.boundaries.push_back(0);
  for (std::size_t i = 0; i < hint_seq.size(); ++i) {
    auto idx = hint_seq[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= hints.size()) {
      throw std::out_of_range("hint index " + std::to_string(idx) + " out of range");
    }
    out.text += render_hint(hints[static_cast<std::size_t>(idx)].text);
    if (i + 1 < hint_seq.size()) out.text.push_back(' ');
    out.boundaries.push_back(out.text.size());
  }
  return out;
}

std::string passage_id(std::string_view question_id, std::span<const int> hint_seq) {
  std::set<int> seen;
  std::string key(question_id);
  key.push_back('\x1f');
  for (std::size_t i = 0; i < hint_seq.size(); ++i) {
    if (hint_seq[i] < 0) throw std::invalid_argument("negative hint index");
    if (!seen.insert(hint_seq[i]).second) {
      throw std::invalid_argument("duplicate hint index " + std::to_string(hint_seq[i]));
    }
    if (i > 0) key.push_back(',');
    key += std::to_string(hint_seq[i]);
  }
  return to_hex16(fnv1a64(key));
}

Passage make_passage(const Question& question, std::span<const int> hint_seq) {
  Passage p;
  p.id = passage_id(question.id, hint_seq);
  p.source_question = question.id;
  p.hint_seq.assign(hint_seq.begin(), hint_seq.end());
  auto rendered = render_passage(question.hints, hint_seq);
  p.text = std::move(rendered.text);
  p.boundaries = std::move(rendered.boundaries);
  return p;
}

// ---------------------------------------------------------------------------
// Runs

void validate_run(const RunList& run) {
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < run.entries.size(); ++i) {
    const auto& e = run.entries[i];
    if (e.rank != static_cast<int>(i) + 1) {
      throw CorpusError("run " + run.question_id + ": ranks are not contiguous from 1");
    }
    if (i > 0 && e.score > run.entries[i - 1].score) {
      throw CorpusError("run " + run.question_id + ": scores increase at rank " +
                        std::to_string(e.rank));
    }
    if (!ids.insert(e.passage_id).second) {
      throw CorpusError("run " + run.question_id + ": duplicate passage " + e.passage_id);
    }
  }
}

void assign_ranks(RunList& run) {
  for (std::size_t i = 0; i < run.entries.size(); ++i) {
    run.entries[i].rank = static_cast<int>(i) + 1;
  }
}

// ---------------------------------------------------------------------------
// Corpus

const Question* Corpus::find_question(std::string_view id) const {
  auto it = std::lower_bound(questions.begin(), questions.end(), id,
                             [](const Question& q, std::string_view v) { return q.id < v; });
  return it != questions.end() && it->id == id ? &*it : nullptr;
}

const Passage* Corpus::find_passage(std::string_view id) const {
  auto it = std::lower_bound(passages.begin(), passages.end(), id,
                             [](const Passage& p, std::string_view v) { return p.id < v; });
  return it != passages.end() && it->id == id ? &*it : nullptr;
}

const RelevanceJudgment* Corpus::find_judgment(std::string_view question_id,
                                               std::string_view passage_id) const {
  auto range = judgments_for(question_id);
  auto it = std::lower_bound(
      range.begin(), range.end(), passage_id,
      [](const RelevanceJudgment& r, std::string_view v) { return r.passage_id < v; });
  return it != range.end() && it->passage_id == passage_id ? &*it : nullptr;
}

std::span<const RelevanceJudgment> Corpus::judgments_for(std::string_view question_id) const {
  auto lo = std::lower_bound(
      judgments.begin(), judgments.end(), question_id,
      [](const RelevanceJudgment& r, std::string_view v) { return r.question_id < v; });
  auto hi = std::upper_bound(
      lo, judgments.end(), question_id,
      [](std::string_view v, const RelevanceJudgment& r) { return v < r.question_id; });
  return {lo, hi};
}

std::vector<const Passage*> Corpus::passages_of(std::string_view question_id) const {
  std::vector<const Passage*> out;
  for (const auto& p : passages) {
    if (p.source_question == question_id) out.push_back(&p);
  }
  return out;
}

void Corpus::sort() {
  std::sort(questions.begin(), questions.end(),
            [](const Question& a, const Question& b) { return a.id < b.id; });
  std::sort(passages.begin(), passages.end(),
            [](const Passage& a, const Passage& b) { return a.id < b.id; });
  std::sort(judgments.begin(), judgments.end(),
            [](const RelevanceJudgment& a, const RelevanceJudgment& b) {
              return std::tie(a.question_id, a.passage_id) < std::tie(b.question_id, b.passage_id);
            });
}

namespace {

std::string where(std::string_view file, std::size_t line) {
  if (line == 0) return std::string(file) + ": ";
  return std::string(file) + ":" + std::to_string(line) + ": ";
}

void check_question(const Question& q, bool selected, const std::string& at) {
  if (q.id.empty()) throw CorpusError(at + "empty question id");
  if (q.answers.empty()) throw CorpusError(at + "question " + q.id + " has no answers");
  if (q.gold.empty()) throw CorpusError(at + "question " + q.id + " has no gold answers");
  for (const auto& g : q.gold) {
    if (std::find(q.answers.begin(), q.answers.end(), g) == q.answers.end()) {
      throw CorpusError(at + "gold answer '" + g + "' missing from answer pool of " + q.id);
    }
  }
  if (selected && q.hints.size() > kMaxSelectedHints) {
    throw CorpusError(at + "question " + q.id + " has more than 5 selected hints");
  }
  for (const auto& h : q.hints) {
    if (trim(h.text).empty()) throw CorpusError(at + "empty hint in question " + q.id);
    if (h.convergence && !std::isfinite(*h.convergence)) {
      throw CorpusError(at + "non-finite convergence in question " + q.id);
    }
  }
  if (q.difficulty && (*q.difficulty < 0.0 || *q.difficulty > 1.0)) {
    throw CorpusError(at + "difficulty outside [0,1] in question " + q.id);
  }
}

void check_passage(const Passage& p, const Question* q, const std::string& at) {
  if (q == nullptr) {
    throw CorpusError(at + "passage " + p.id + " references unknown question " +
                      p.source_question);
  }
  if (p.hint_seq.empty() || p.hint_seq.size() > kMaxSelectedHints) {
    throw CorpusError(at + "passage " + p.id + " has an invalid hint count");
  }
  std::string expected_id;
  try {
    expected_id = passage_id(p.source_question, p.hint_seq);
  } catch (const std::invalid_argument& e) {
    throw CorpusError(at + "passage " + p.id + ": " + e.what());
  }
  if (expected_id != p.id) throw CorpusError(at + "passage id mismatch for " + p.id);
  RenderedPassage rendered;
  try {
    rendered = render_passage(q->hints, p.hint_seq);
  } catch (const std::out_of_range& e) {
    throw CorpusError(at + "passage " + p.id + ": " + e.what());
  }
  if (rendered.text != p.text) throw CorpusError(at + "passage text mismatch for " + p.id);
  if (rendered.boundaries != p.boundaries) {
    throw CorpusError(at + "passage boundaries mismatch for " + p.id);
  }
}

void check_judgment(const RelevanceJudgment& r, const Corpus& c, const std::string& at) {
  if (r.label < 0 || r.label > 2) throw CorpusError(at + "label out of range");
  if (c.find_question(r.question_id) == nullptr) {
    throw CorpusError(at + "judgment references unknown question " + r.question_id);
  }
  const Passage* p = c.find_passage(r.passage_id);
  if (p == nullptr) {
    throw CorpusError(at + "judgment references unknown passage " + r.passage_id);
  }
  if (p->source_question != r.question_id && r.label != 0) {
    throw CorpusError(at + "cross-question judgment must have label 0");
  }
  if (r.label == 2 && !r.verified &&
      std::none_of(r.model_answers.begin(), r.model_answers.end(),
                   [](const ModelAnswer& a) { return a.verdict; })) {
    throw CorpusError(at + "label 2 without a correct model answer");
  }
}

struct Lines {
  std::vector<std::size_t> questions, passages, judgments;
};

void validate_with_lines(const Corpus& c, const Lines* lines) {
  auto line_of = [](const std::vector<std::size_t>* v, std::size_t i) -> std::size_t {
    return v != nullptr && i < v->size() ? (*v)[i] : 0;
  };
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < c.questions.size(); ++i) {
    auto at = where(kQuestionsFile, line_of(lines ? &lines->questions : nullptr, i));
    check_question(c.questions[i], true, at);
    if (!seen.insert(c.questions[i].id).second) {
      throw CorpusError(at + "duplicate question id " + c.questions[i].id);
    }
  }
  seen.clear();
  for (std::size_t i = 0; i < c.passages.size(); ++i) {
    auto at = where(kPassagesFile, line_of(lines ? &lines->passages : nullptr, i));
    if (!seen.insert(c.passages[i].id).second) {
      throw CorpusError(at + "duplicate passage id " + c.passages[i].id);
    }
    check_passage(c.passages[i], c.find_question(c.passages[i].source_question), at);
  }
  seen.clear();
  for (std::size_t i = 0; i < c.judgments.size(); ++i) {
    auto at = where(kJudgmentsFile, line_of(lines ? &lines->judgments : nullptr, i));
    check_judgment(c.judgments[i], c, at);
    if (!seen.insert(c.judgments[i].question_id + '\t' + c.judgments[i].passage_id).second) {
      throw CorpusError(at + "duplicate judgment");
    }
  }
}

template <typename T>
std::vector<T> sorted_with_lines(std::vector<T> records, std::vector<std::size_t>& lines,
                                 auto key) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(records[a]) < key(records[b]); });
  std::vector<T> out;
  std::vector<std::size_t> out_lines;
  out.reserve(records.size());
  for (auto i : order) {
    out.push_back(std::move(records[i]));
    out_lines.push_back(lines[i]);
  }
  lines = std::move(out_lines);
  return out;
}

}  // namespace

void validate_question(const Question& q, bool selected) {
  check_question(q, selected, "question " + q.id + ": ");
}

void validate_corpus(const Corpus& corpus) {
  Corpus sorted = corpus;
  sorted.sort();
  validate_with_lines(sorted, nullptr);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, std::string_view content) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + file.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw CorpusError("write failed for " + file.string());
}

Corpus load_corpus(const fs::path& dir) {
  const auto qfile = dir / kQuestionsFile;
  if (!fs::exists(qfile)) throw CorpusError("missing questions file in " + dir.string());
  Lines lines;
  Corpus c;
  c.questions = parse_jsonl<Question>(read_file(qfile), kQuestionsFile, &lines.questions);
  if (fs::exists(dir / kPassagesFile)) {
    c.passages =
        parse_jsonl<Passage>(read_file(dir / kPassagesFile), kPassagesFile, &lines.passages);
  }
  if (fs::exists(dir / kJudgmentsFile)) {
    c.judgments = parse_jsonl<RelevanceJudgment>(read_file(dir / kJudgmentsFile),
                                                 kJudgmentsFile, &lines.judgments);
  }
  c.questions = sorted_with_lines(std::move(c.questions), lines.questions,
                                  [](const Question& q) { return q.id; });
  c.passages = sorted_with_lines(std::move(c.passages), lines.passages,
                                 [](const Passage& p) { return p.id; });
  c.judgments = sorted_with_lines(std::move(c.judgments), lines.judgments,
                                  [](const RelevanceJudgment& r) {
                                    return std::make_pair(r.question_id, r.passage_id);
                                  });
  validate_with_lines(c, &lines);
  return c;
}

namespace {

template <typename T>
std::string to_jsonl(std::span<const T> records) {
  std::string out;
  for (const auto& r : records) {
    out += json(r).dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  Corpus sorted = corpus;
  sorted.sort();
  validate_with_lines(sorted, nullptr);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CorpusError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / kQuestionsFile, to_jsonl<Question>(sorted.questions));
  write_file(dir / kPassagesFile, to_jsonl<Passage>(sorted.passages));
  write_file(dir / kJudgmentsFile, to_jsonl<RelevanceJudgment>(sorted.judgments));
}

std::vector<Question> load_questions(const fs::path& file, bool selected) {
  std::vector<std::size_t> lines;
  auto questions = parse_jsonl<Question>(read_file(file), file.filename().string(), &lines);
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    auto at = where(file.filename().string(), lines[i]);
    check_question(questions[i], selected, at);
    if (!seen.insert(questions[i].id).second) {
      throw CorpusError(at + "duplicate question id " + questions[i].id);
    }
  }
  return questions;
}

void save_questions(std::span<const Question> questions, const fs::path& file) {
  std::vector<Question> sorted(questions.begin(), questions.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Question& a, const Question& b) { return a.id < b.id; });
  write_file(file, to_jsonl<Question>(sorted));
}

void save_passages(std::span<const Passage> passages, const fs::path& file) {
  std::vector<Passage> sorted(passages.begin(), passages.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Passage& a, const Passage& b) { return a.id < b.id; });
  write_file(file, to_jsonl<Passage>(sorted));
}

std::vector<Passage> load_passages(const fs::path& file) {
  return parse_jsonl<Passage>(read_file(file), file.filename().string());
}

// ---------------------------------------------------------------------------
// qrels and run files

std::string export_qrels(const Corpus& corpus, int threshold) {
  if (threshold != 1 && threshold != 2) {
    throw std::invalid_argument("qrels threshold must be 1 or 2");
  }
  Corpus sorted = corpus;
  sorted.sort();
  std::string out;
  for (const auto& r : sorted.judgments) {
    out += r.question_id + " 0 " + r.passage_id + " " + std::to_string(r.label) + "\n";
  }
  return out;
}

Qrels qrels_from_corpus(const Corpus& corpus) {
  Qrels q;
  for (const auto& r : corpus.judgments) q[r.question_id][r.passage_id] = r.label;
  return q;
}

Qrels parse_qrels(std::string_view content) {
  Qrels qrels;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::string qid, iter, docid;
    int grade = 0;
    if (!(fields >> qid >> iter >> docid >> grade)) {
      throw CorpusError("qrels:" + std::to_string(line_no) + ": malformed line");
    }
    qrels[qid][docid] = grade;
  }
  return qrels;
}

Qrels read_qrels(const fs::path& file) { return parse_qrels(read_file(file)); }

std::string format_run(std::span<const RunList> runs) {
  std::vector<const RunList*> order;
  for (const auto& r : runs) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const RunList* a, const RunList* b) {
    return a->question_id < b->question_id;
  });
  std::string out;
  char score[64];
  for (const auto* run : order) {
    validate_run(*run);
    for (const auto& e : run->entries) {
      std::snprintf(score, sizeof score, "%.6f", e.score);
      out += run->question_id + " Q0 " + e.passage_id + " " + std::to_string(e.rank) + " " +
             score + " " + run->tag + "\n";
    }
  }
  return out;
}

std::vector<RunList> parse_run(std::string_view content) {
  std::map<std::string, RunList> by_question;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::string qid, q0, docid, tag;
    RunEntry e;
    if (!(fields >> qid >> q0 >> docid >> e.rank >> e.score >> tag)) {
      throw CorpusError("run:" + std::to_string(line_no) + ": malformed line");
    }
    e.passage_id = docid;
    auto& run = by_question[qid];
    run.question_id = qid;
    run.tag = tag;
    run.entries.push_back(std::move(e));
  }
  std::vector<RunList> out;
  for (auto& [qid, run] : by_question) {
    std::stable_sort(run.entries.begin(), run.entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    validate_run(run);
    out.push_back(std::move(run));
  }
  return out;
}

std::vector<RunList> read_run(const fs::path& file) { return parse_run(read_file(file)); }

}  // namespace inferqa
