#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "inferqa/corpus.hpp"
#include "inferqa/forge.hpp"
#include "inferqa/judge.hpp"
#include "inferqa/labeler.hpp"
#include "inferqa/pipeline.hpp"

namespace testing {

namespace fs = std::filesystem;

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("inferqa-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline fs::path source_dir() { return fs::path(INFERQA_SOURCE_DIR); }
inline fs::path toy_raw() { return source_dir() / "data" / "toy" / "questions_raw.jsonl"; }
inline fs::path toy_models() { return source_dir() / "data" / "toy" / "models.json"; }

inline inferqa::Question make_question(std::string id, std::string text,
                                       std::vector<std::string> answers,
                                       std::vector<std::string> hints) {
  inferqa::Question q;
  q.id = std::move(id);
  q.text = std::move(text);
  q.answers = answers;
  q.gold = std::move(answers);
  for (auto& h : hints) q.hints.push_back({std::move(h), std::nullopt, inferqa::HintSource::human});
  return q;
}

/// Forged (unlabeled) corpus from a list of selected-hint questions.
inline inferqa::Corpus forged_corpus(std::vector<inferqa::Question> questions) {
  inferqa::Corpus c;
  for (const auto& q : questions) {
    auto passages = inferqa::forge_passages(q);
    c.passages.insert(c.passages.end(), passages.begin(), passages.end());
  }
  c.questions = std::move(questions);
  c.sort();
  return c;
}

/// Endpoint backed by the mock provider over `questions`.
inline inferqa::Endpoint mock_endpoint(const std::string& name,
                                       std::span<const inferqa::Question> questions,
                                       int threshold = 3,
                                       const std::set<std::string>& closed_book = {}) {
  inferqa::ModelEndpoint cfg;
  cfg.name = name;
  cfg.model_id = name;
  cfg.backoff = std::chrono::milliseconds(1);
  auto knowledge = inferqa::MockKnowledge::from_questions(questions, threshold, closed_book);
  return inferqa::Endpoint(cfg, std::make_shared<inferqa::MockProvider>(std::move(knowledge)));
}

/// The bundled toy questions after forging with the lexical oracle.
inline inferqa::Corpus toy_forged() {
  auto raw = inferqa::load_questions(toy_raw(), false);
  auto result = inferqa::forge(raw, inferqa::LexicalLeakageOracle{});
  inferqa::Corpus c;
  c.questions = std::move(result.questions);
  c.passages = std::move(result.passages);
  c.sort();
  return c;
}

inline inferqa::ModelConfig toy_model_config() {
  return inferqa::ModelConfig::from_json_text(inferqa::read_file(toy_models()),
                                              toy_models().parent_path());
}

/// The forged toy corpus labeled by the toy labelers and judge.
inline inferqa::Corpus toy_labeled() {
  auto forged = toy_forged();
  auto models = toy_model_config();
  auto endpoints = models.build(models.labelers, forged.questions);
  auto judge = models.build_judge(forged.questions);
  return inferqa::label_corpus(forged, endpoints, *judge).corpus;
}

}  // namespace testing
