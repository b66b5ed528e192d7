#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "inferqa/corpus.hpp"

namespace inferqa {

/// A transport-level failure (timeout, connection refused, 5xx, 429).
/// Endpoint retries these; nothing else is retried.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A call that could not be completed: retries exhausted, a non-retryable
/// HTTP status, or a replay fixture without the requested key.
class JobFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// Canonical JSON body of a chat-completion request.
std::string request_body(const ChatRequest& request);

/// Replay key: 16 hex digits of the hash of request_body().
std::string request_key(const ChatRequest& request);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  /// Returns the assistant message content. Throws TransportError for
  /// retryable failures and JobFailure for permanent ones.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct ModelEndpoint {
  std::string name;
  std::string base_url;
  std::string model_id;
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  int max_in_flight = 4;
  std::chrono::milliseconds backoff{200};
};

/// A named model behind a provider, with bounded in-flight calls and
/// exponential backoff on TransportError. Copies share the same limiter.
class Endpoint {
 public:
  Endpoint(ModelEndpoint config, std::shared_ptr<ChatProvider> provider);

  const ModelEndpoint& config() const { return config_; }
  const std::string& name() const { return config_.name; }

  /// Single request/response; throws JobFailure once retries are spent.
  std::string chat(std::vector<ChatMessage> messages) const;

  std::uint64_t successful_calls() const { return shared_->successes.load(); }
  std::uint64_t failed_attempts() const { return shared_->failures.load(); }

 private:
  struct Shared {
    explicit Shared(int slots) : in_flight(slots) {}
    std::counting_semaphore<> in_flight;
    std::atomic<std::uint64_t> successes{0};
    std::atomic<std::uint64_t> failures{0};
  };

  ModelEndpoint config_;
  std::shared_ptr<ChatProvider> provider_;
  std::shared_ptr<Shared> shared_;
};

/// OpenAI-compatible chat-completions client. `base_url` is the API root,
/// e.g. "http://localhost:8000/v1"; requests go to base_url + "/chat/completions".
class HttpChatProvider : public ChatProvider {
 public:
  HttpChatProvider(std::string base_url, std::string api_key,
                   std::chrono::milliseconds timeout = std::chrono::milliseconds{60000});
  std::string complete(const ChatRequest& request) override;

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(std::string_view url);

/// Serves recorded responses keyed by request_key(). Fixture file: one
/// {"key": ..., "response": ...} object per line.
class ReplayProvider : public ChatProvider {
 public:
  explicit ReplayProvider(std::map<std::string, std::string> responses);
  static ReplayProvider from_file(const std::filesystem::path& file);
  std::string complete(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

/// Forwards to another provider and keeps every response for later saving
/// as a replay fixture.
class RecordingProvider : public ChatProvider {
 public:
  explicit RecordingProvider(std::shared_ptr<ChatProvider> inner);
  std::string complete(const ChatRequest& request) override;
  std::string fixture() const;

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> recorded_;
};

/// What the mock provider knows about the world.
struct MockKnowledge {
  struct Entry {
    std::string answer;
    std::vector<std::string> hint_sentences;  // rendered hint text
  };
  std::map<std::string, Entry> by_question_text;
  /// Question texts answerable closed-book.
  std::set<std::string> closed_book;
  /// Unordered pairs of normalized strings the judge treats as equivalent.
  std::set<std::pair<std::string, std::string>> equivalences;
  /// Open-book rule: the gold answer once the context holds at least this
  /// many of the question's hints, otherwise NO ANSWER.
  int threshold = 3;

  static MockKnowledge from_questions(std::span<const Question> questions, int threshold,
                                      const std::set<std::string>& closed_book_ids = {});
  void add_equivalence(std::string_view a, std::string_view b);
};

/// Deterministic stand-in for a hosted model. Recognises the three prompt
/// shapes this library sends (judge, open-book reader, closed-book) by their
/// rendered text, so the prompt builders are exercised end to end.
class MockProvider : public ChatProvider {
 public:
  explicit MockProvider(MockKnowledge knowledge);
  std::string complete(const ChatRequest& request) override;
  const MockKnowledge& knowledge() const { return knowledge_; }

 private:
  MockKnowledge knowledge_;
};

// ---------------------------------------------------------------------------
// Prompts

inline constexpr std::string_view kNoAnswer = "NO ANSWER";

extern const std::string_view kReaderSystemPrompt;
extern const std::string_view kReaderInstructions;

struct FewShotExample {
  std::string_view context;
  std::string_view question;
  std::string_view answer;
};
std::span<const FewShotExample> reader_examples();

/// The answer-equivalence judge prompt, sent as a single user message.
std::string judge_prompt(std::string_view question, std::string_view gold,
                         std::string_view candidate);

/// "Context:\n<context>\n\nQuestion: <question>"
std::string reader_block(std::string_view context, std::string_view question);

/// System instruction, then the few-shot turns, then the final block with
/// `context` and `question` substituted.
std::vector<ChatMessage> reader_messages(std::string_view context, std::string_view question);

/// The question alone, as one user message.
std::vector<ChatMessage> closed_book_messages(std::string_view question);

// ---------------------------------------------------------------------------
// Answering and judging

/// A reader output; nullopt text is the distinguished no-answer value.
struct ReaderAnswer {
  std::optional<std::string> text;
  bool no_answer() const { return !text.has_value(); }
  friend bool operator==(const ReaderAnswer&, const ReaderAnswer&) = default;
};

ReaderAnswer parse_reader_output(std::string_view raw);

ReaderAnswer answer_closed_book(const Endpoint& endpoint, const Question& question);

/// Throws std::invalid_argument on an empty context.
ReaderAnswer answer_open_book(const Endpoint& endpoint, std::string_view question,
                              std::string_view context);

struct Verdict {
  std::string candidate;
  bool correct = false;
  std::string judge_raw;
  int trials = 1;
};

/// Leading case-insensitive "yes" / "no" word. Anything else is unparsed.
std::optional<bool> parse_yes_no(std::string_view raw);

class EquivalenceJudge {
 public:
  virtual ~EquivalenceJudge() = default;
  virtual Verdict judge(std::string_view question, std::string_view gold,
                        std::string_view candidate) const = 0;
  /// True for the offline string-matching judge; reports flag this.
  virtual bool lexical() const { return false; }
};

class LlmJudge : public EquivalenceJudge {
 public:
  explicit LlmJudge(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}
  Verdict judge(std::string_view question, std::string_view gold,
                std::string_view candidate) const override;

 private:
  Endpoint endpoint_;
};

/// normalize_answer(gold) == normalize_answer(candidate).
class LexicalJudge : public EquivalenceJudge {
 public:
  Verdict judge(std::string_view question, std::string_view gold,
                std::string_view candidate) const override;
  bool lexical() const override { return true; }
};

/// Renders the judge prompt, sends it, parses the verdict. Unparseable
/// replies count as incorrect and keep the raw text in judge_raw.
Verdict judge_equivalence(const Endpoint& endpoint, std::string_view question,
                          std::string_view gold, std::string_view candidate);

/// Correct when the candidate matches any of `golds`; stops at the first match.
Verdict judge_against(const EquivalenceJudge& judge, std::string_view question,
                      std::span<const std::string> golds, std::string_view candidate);

/// Closed-book answer then judge, per endpoint per trial. True as soon as any
/// (endpoint, trial) answer is judged correct.
bool parametric_filter(const Question& question, std::span<const Endpoint> endpoints,
                       const EquivalenceJudge& judge, int trials = 3);

struct SplitAssignment {
  std::map<std::string, Split> splits;
  std::vector<std::string> warnings;
};

/// Train from the parametric pool, test from the non-parametric pool, the
/// rest of the non-parametric pool to dev. Leftover parametric questions and
/// questions without a flag stay unassigned.
SplitAssignment sample_splits(std::span<const Question> questions, std::size_t n_train,
                              std::size_t n_test, std::uint64_t seed);

/// Fisher-Yates with a 64-bit Mersenne Twister and rejection sampling, so the
/// result depends only on the seed and not on the standard library.
void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed);

}  // namespace inferqa
