#include "inferqa/judge.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <iostream>
#include <random>
#include <thread>

#include "httplib.h"
#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

// ---------------------------------------------------------------------------
// Requests and endpoints

std::string request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back(json{{"role", m.role}, {"content", m.content}});
  }
  json body{{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature}};
  return body.dump();
}

std::string request_key(const ChatRequest& request) {
  return to_hex16(fnv1a64(request_body(request)));
}

Endpoint::Endpoint(ModelEndpoint config, std::shared_ptr<ChatProvider> provider)
    : config_(std::move(config)),
      provider_(std::move(provider)),
      shared_(std::make_shared<Shared>(std::max(1, config_.max_in_flight))) {
  if (config_.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (!provider_) throw std::invalid_argument("endpoint " + config_.name + " has no provider");
}

std::string Endpoint::chat(std::vector<ChatMessage> messages) const {
  ChatRequest request{config_.model_id, std::move(messages), config_.temperature};
  auto delay = config_.backoff;
  for (int attempt = 0;; ++attempt) {
    std::string last_error;
    {
      shared_->in_flight.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{shared_->in_flight};
      try {
        auto reply = provider_->complete(request);
        shared_->successes.fetch_add(1);
        return reply;
      } catch (const TransportError& e) {
        shared_->failures.fetch_add(1);
        last_error = e.what();
      }
    }
    if (attempt >= config_.max_retries) {
      throw JobFailure("endpoint " + config_.name + ": retries exhausted: " + last_error);
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

std::pair<std::string, std::string> split_base_url(std::string_view url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string_view::npos) return {std::string(url), ""};
  std::string prefix(url.substr(path_start));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::string(url.substr(0, path_start)), prefix};
}

HttpChatProvider::HttpChatProvider(std::string base_url, std::string api_key,
                                   std::chrono::milliseconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  std::tie(origin_, path_prefix_) = split_base_url(base_url);
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
  httplib::Client client(origin_);
  auto secs = timeout_.count() / 1000;
  auto usecs = (timeout_.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, request_body(request),
                         "application/json");
  if (!res) throw TransportError("chat request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status == 408 || res->status >= 500) {
    throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw JobFailure("chat endpoint returned HTTP " + std::to_string(res->status) + ": " +
                     res->body);
  }
  try {
    auto body = json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw JobFailure(std::string("malformed chat response: ") + e.what());
  }
}

ReplayProvider::ReplayProvider(std::map<std::string, std::string> responses)
    : responses_(std::move(responses)) {}

ReplayProvider ReplayProvider::from_file(const std::filesystem::path& file) {
  std::map<std::string, std::string> responses;
  for (const auto& record : parse_jsonl<json>(read_file(file), file.filename().string())) {
    responses[record.at("key").get<std::string>()] = record.at("response").get<std::string>();
  }
  return ReplayProvider(std::move(responses));
}

std::string ReplayProvider::complete(const ChatRequest& request) {
  auto key = request_key(request);
  auto it = responses_.find(key);
  if (it == responses_.end()) throw JobFailure("no recorded response for request " + key);
  return it->second;
}

RecordingProvider::RecordingProvider(std::shared_ptr<ChatProvider> inner)
    : inner_(std::move(inner)) {}

std::string RecordingProvider::complete(const ChatRequest& request) {
  auto reply = inner_->complete(request);
  std::lock_guard lock(mutex_);
  recorded_[request_key(request)] = reply;
  return reply;
}

std::string RecordingProvider::fixture() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& [key, response] : recorded_) {
    out += json{{"key", key}, {"response", response}}.dump();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock provider

MockKnowledge MockKnowledge::from_questions(std::span<const Question> questions, int threshold,
                                            const std::set<std::string>& closed_book_ids) {
  MockKnowledge k;
  k.threshold = threshold;
  for (const auto& q : questions) {
    Entry e;
    e.answer = q.gold.empty() ? q.answers.front() : q.gold.front();
    for (const auto& h : q.hints) e.hint_sentences.push_back(render_hint(h.text));
    k.by_question_text[q.text] = std::move(e);
    if (closed_book_ids.count(q.id) != 0) k.closed_book.insert(q.text);
  }
  return k;
}

void MockKnowledge::add_equivalence(std::string_view a, std::string_view b) {
  auto x = normalize_answer(a);
  auto y = normalize_answer(b);
  equivalences.emplace(std::min(x, y), std::max(x, y));
}

MockProvider::MockProvider(MockKnowledge knowledge) : knowledge_(std::move(knowledge)) {}

namespace {

std::optional<std::string> between(std::string_view s, std::string_view open,
                                   std::string_view close) {
  auto a = s.find(open);
  if (a == std::string_view::npos) return std::nullopt;
  a += open.size();
  auto b = close.empty() ? s.size() : s.find(close, a);
  if (b == std::string_view::npos) return std::nullopt;
  return std::string(s.substr(a, b - a));
}

}  // namespace

std::string MockProvider::complete(const ChatRequest& request) {
  const ChatMessage* last_user = nullptr;
  bool has_system = false;
  for (const auto& m : request.messages) {
    if (m.role == "user") last_user = &m;
    if (m.role == "system") has_system = true;
  }
  if (last_user == nullptr) throw JobFailure("mock provider: request has no user message");
  std::string_view content = last_user->content;

  if (content.rfind("Question: ", 0) == 0 && content.find("\nIs candidate correct?") != content.npos) {
    auto gold = between(content, "\nAnswer: ", "\nCandidate: ");
    auto candidate = between(content, "\nCandidate: ", "\nIs candidate correct?");
    if (!gold || !candidate) return "Unsure";
    auto g = normalize_answer(*gold);
    auto c = normalize_answer(*candidate);
    if (!c.empty() && (g == c || knowledge_.equivalences.count({std::min(g, c), std::max(g, c)}))) {
      return "Yes";
    }
    return "No";
  }

  if (has_system) {
    auto block = content.substr(content.rfind("Context:\n") == content.npos
                                    ? 0
                                    : content.rfind("Context:\n"));
    auto context = between(block, "Context:\n", "\n\nQuestion: ");
    auto question = between(block, "\n\nQuestion: ", "");
    if (!context || !question) return std::string(kNoAnswer);
    auto it = knowledge_.by_question_text.find(*question);
    if (it == knowledge_.by_question_text.end()) return std::string(kNoAnswer);
    int present = 0;
    for (const auto& h : it->second.hint_sentences) {
      if (context->find(h) != std::string::npos) ++present;
    }
    return present >= knowledge_.threshold ? it->second.answer : std::string(kNoAnswer);
  }

  auto q = std::string(content);
  if (knowledge_.closed_book.count(q) != 0) return knowledge_.by_question_text.at(q).answer;
  return std::string(kNoAnswer);
}

// ---------------------------------------------------------------------------
// Prompts

const std::string_view kReaderSystemPrompt =
    "You are an assistant that answers questions based on the provided context. You just "
    "answer questions with exact answers. You do not use sentences as the response.";

const std::string_view kReaderInstructions =
    "Use the context to answer the question under conditions:\n"
    "1. Answer should not be sentences. It should be some words.\n"
    "2. Do not generate \"sorry\" or \"I cannot ...\" sentences; instead, use \"NO ANSWER\".\n"
    "3. Do not generate explanations, reasoning, or full sentences—only provide the exact "
    "answer.\n"
    "4. If the answer cannot be guessed from the context, respond only with \"NO ANSWER\".";

namespace {

constexpr std::array<FewShotExample, 5> kExamples{{
    {"He was the 44th President of the United States.\n"
     "He served as President from 2009 to 2017.\n"
     "He was the first African-American President of the United States.\n"
     "He was a member of the Democratic Party.\n"
     "He was born on August 4, 1961 in Honolulu, Hawaii.",
     "Who won the Nobel Peace Prize in 2009?", "Barack Obama"},
    {"The capital city of this country is Paris.\n"
     "This country is located in northwestern Europe.\n"
     "This country has a long history and has played a significant role in international "
     "affairs.\n"
     "The official language of this country is French.\n"
     "The currency used in this country is the Euro.",
     "Édouard Daladier became Prime Minister of which country in 1933?", "France"},
    {"It's the coldest season of the year.\n"
     "It's the season when snow falls in many regions.\n"
     "It's the season when many people celebrate Christmas and New Year's Eve.\n"
     "It's the season when days are shorter and nights are longer.\n"
     "It's the season when many animals hibernate.",
     "If you have a 'Mahonia Japonica', in which season will it be in flower?", "Winter"},
    {"It is a team sport that originated in the United States.\n"
     "It is played with an oval-shaped ball.\n"
     "The objective of the game is to score points by advancing the ball into the opposing "
     "team's end zone.\n"
     "Points can be scored by carrying the ball across the opponent's goal line, throwing it "
     "to a teammate in the end zone, or kicking it through the opponent's goalposts.\n"
     "The game is divided into four quarters, each lasting 15 minutes.",
     "Which sport is played under the 'Harvard Rules'?", "AMERICAN FOOTBALL"},
    {"He was born on April 20, 1889, in Braunau am Inn, Austria.\n"
     "He was the leader of the Nazi Party.\n"
     "He became the chancellor of Germany in 1933.\n"
     "He took the title of Führer und Reichskanzler in 1934.\n"
     "He initiated World War II in Europe by invading Poland on September 1, 1939.",
     "Who was made an honorary citizen of Haslach, Austria, in 1938, an honour withdrawn in "
     "2004?",
     "Adolf Hitler"},
}};

}  // namespace

std::span<const FewShotExample> reader_examples() { return kExamples; }

std::string judge_prompt(std::string_view question, std::string_view gold,
                         std::string_view candidate) {
  std::string out;
  out += "Question: ";
  out += question;
  out += "\nAnswer: ";
  out += gold;
  out += "\nCandidate: ";
  out += candidate;
  out += "\nIs candidate correct? Choose between \"Yes\" or \"No\"";
  return out;
}

std::string reader_block(std::string_view context, std::string_view question) {
  std::string out = "Context:\n";
  out += context;
  out += "\n\nQuestion: ";
  out += question;
  return out;
}

std::vector<ChatMessage> reader_messages(std::string_view context, std::string_view question) {
  std::vector<ChatMessage> messages;
  messages.push_back({"system", std::string(kReaderSystemPrompt)});
  bool first = true;
  for (const auto& ex : kExamples) {
    std::string user = first ? std::string(kReaderInstructions) + "\n\n" : std::string();
    user += reader_block(ex.context, ex.question);
    messages.push_back({"user", std::move(user)});
    messages.push_back({"assistant", std::string(ex.answer)});
    first = false;
  }
  messages.push_back({"user", reader_block(context, question)});
  return messages;
}

std::vector<ChatMessage> closed_book_messages(std::string_view question) {
  return {{"user", std::string(question)}};
}

// ---------------------------------------------------------------------------
// Answering and judging

ReaderAnswer parse_reader_output(std::string_view raw) {
  auto text = trim(raw);
  auto bare = text;
  while (!bare.empty() && (bare.back() == '.' || bare.back() == '"')) bare.pop_back();
  while (!bare.empty() && bare.front() == '"') bare.erase(bare.begin());
  if (bare.empty() || to_lower_ascii(bare) == "no answer") return {};
  return {std::move(text)};
}

ReaderAnswer answer_closed_book(const Endpoint& endpoint, const Question& question) {
  return parse_reader_output(endpoint.chat(closed_book_messages(question.text)));
}

ReaderAnswer answer_open_book(const Endpoint& endpoint, std::string_view question,
                              std::string_view context) {
  if (trim(context).empty()) throw std::invalid_argument("open-book answering needs a context");
  return parse_reader_output(endpoint.chat(reader_messages(context, question)));
}

std::optional<bool> parse_yes_no(std::string_view raw) {
  auto s = to_lower_ascii(trim(raw));
  std::size_t start = 0;
  while (start < s.size() && (s[start] == '"' || s[start] == '\'' || s[start] == '*')) ++start;
  auto word_at = [&](std::string_view w) {
    if (s.compare(start, w.size(), w) != 0) return false;
    auto next = start + w.size();
    return next == s.size() || std::isalpha(static_cast<unsigned char>(s[next])) == 0;
  };
  if (word_at("yes")) return true;
  if (word_at("no")) return false;
  return std::nullopt;
}

Verdict judge_equivalence(const Endpoint& endpoint, std::string_view question,
                          std::string_view gold, std::string_view candidate) {
  if (trim(gold).empty() || trim(candidate).empty()) {
    throw std::invalid_argument("judge_equivalence needs a non-empty gold and candidate");
  }
  Verdict v;
  v.candidate = std::string(candidate);
  v.judge_raw = endpoint.chat({{"user", judge_prompt(question, gold, candidate)}});
  auto parsed = parse_yes_no(v.judge_raw);
  if (!parsed) {
    std::clog << "judge " << endpoint.name() << ": unparseable verdict '" << v.judge_raw
              << "' counted as No\n";
  }
  v.correct = parsed.value_or(false);
  return v;
}

Verdict LlmJudge::judge(std::string_view question, std::string_view gold,
                        std::string_view candidate) const {
  return judge_equivalence(endpoint_, question, gold, candidate);
}

Verdict LexicalJudge::judge(std::string_view, std::string_view gold,
                            std::string_view candidate) const {
  Verdict v;
  v.candidate = std::string(candidate);
  auto c = normalize_answer(candidate);
  v.correct = !c.empty() && normalize_answer(gold) == c;
  v.judge_raw = v.correct ? "lexical:match" : "lexical:mismatch";
  return v;
}

Verdict judge_against(const EquivalenceJudge& judge, std::string_view question,
                      std::span<const std::string> golds, std::string_view candidate) {
  Verdict last;
  last.candidate = std::string(candidate);
  for (const auto& gold : golds) {
    last = judge.judge(question, gold, candidate);
    if (last.correct) return last;
  }
  return last;
}

bool parametric_filter(const Question& question, std::span<const Endpoint> endpoints,
                       const EquivalenceJudge& judge, int trials) {
  if (endpoints.empty()) throw std::invalid_argument("parametric_filter needs endpoints");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  for (const auto& endpoint : endpoints) {
    for (int t = 0; t < trials; ++t) {
      auto answer = answer_closed_book(endpoint, question);
      if (answer.no_answer()) continue;
      if (judge_against(judge, question.text, question.gold, *answer.text).correct) return true;
    }
  }
  return false;
}

void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t draw = 0;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(items[i - 1], items[static_cast<std::size_t>(draw % bound)]);
  }
}

SplitAssignment sample_splits(std::span<const Question> questions, std::size_t n_train,
                              std::size_t n_test, std::uint64_t seed) {
  SplitAssignment out;
  std::vector<std::string> parametric, non_parametric;
  for (const auto& q : questions) {
    if (!q.parametric) {
      out.splits[q.id] = Split::unassigned;
      out.warnings.push_back("question " + q.id + " has no parametric flag; left unassigned");
      continue;
    }
    (*q.parametric ? parametric : non_parametric).push_back(q.id);
  }
  std::sort(parametric.begin(), parametric.end());
  std::sort(non_parametric.begin(), non_parametric.end());
  seeded_shuffle(parametric, seed);
  seeded_shuffle(non_parametric, seed ^ 0x9e3779b97f4a7c15ULL);

  if (parametric.size() < n_train) {
    out.warnings.push_back("parametric pool has " + std::to_string(parametric.size()) +
                           " questions, fewer than the " + std::to_string(n_train) +
                           " requested for train; taking all");
  }
  if (non_parametric.size() < n_test) {
    out.warnings.push_back("non-parametric pool has " + std::to_string(non_parametric.size()) +
                           " questions, fewer than the " + std::to_string(n_test) +
                           " requested for test; taking all");
  }
  for (std::size_t i = 0; i < parametric.size(); ++i) {
    out.splits[parametric[i]] = i < n_train ? Split::train : Split::unassigned;
  }
  for (std::size_t i = 0; i < non_parametric.size(); ++i) {
    out.splits[non_parametric[i]] = i < n_test ? Split::test : Split::dev;
  }
  return out;
}

}  // namespace inferqa
