#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "inferqa/corpus.hpp"
#include "inferqa/forge.hpp"
#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"
#include "support.hpp"

using namespace inferqa;
using testing::TempDir;

namespace {

// Two questions: five hints (325 passages) and two hints (4 passages).
Corpus two_question_fixture() {
  auto q1 = testing::make_question(
      "q1", "Which country hosted the 2008 Summer Olympics?", {"China"},
      {"Its capital city is Beijing", "It has a population of over 1 billion people.",
       "It is home to one of the world's oldest continuous civilizations",
       "A great wall stretches across its northern frontier", "Its currency is the renminbi"});
  auto q2 = testing::make_question("q2", "Which planet is known as the Red Planet?", {"Mars"},
                                   {"It is the fourth body from the Sun",
                                    "Two small moons orbit it"});
  return testing::forged_corpus({q1, q2});
}

RelevanceJudgment judgment(const std::string& qid, const std::string& pid, int label) {
  RelevanceJudgment r;
  r.question_id = qid;
  r.passage_id = pid;
  r.label = label;
  if (label == 2) r.model_answers.push_back({"m", std::string("x"), true});
  return r;
}

}  // namespace

TEST_CASE("render_hint appends a period only when terminal punctuation is missing") {
  CHECK(render_hint("Its capital is Beijing") == "Its capital is Beijing.");
  CHECK(render_hint("Is it large?") == "Is it large?");
  CHECK(render_hint("It is huge!") == "It is huge!");
  CHECK(render_hint("He said \"go.\"") == "He said \"go.\"");
  CHECK(render_hint("(see above.)") == "(see above.)");
  CHECK(render_hint("A quote \"here\"") == "A quote \"here\".");
  CHECK(render_hint("  spaced  ") == "spaced.");
}

TEST_CASE("render_passage joins with single spaces and records n+1 boundaries") {
  std::vector<Hint> hints{{"Alpha", std::nullopt, HintSource::human},
                          {"Beta.", std::nullopt, HintSource::human},
                          {"Gamma?", std::nullopt, HintSource::human}};
  std::vector<int> seq{2, 0, 1};
  auto r = render_passage(hints, seq);
  CHECK(r.text == "Gamma? Alpha. Beta.");
  CHECK(r.boundaries == std::vector<std::size_t>{0, 7, 14, 19});
  std::vector<int> bad{3};
  CHECK_THROWS_AS(render_passage(hints, bad), std::out_of_range);
}

TEST_CASE("Passage::sentences recovers the rendered hints") {
  auto q = testing::make_question("q", "?", {"a"}, {"One", "Two!", "Three"});
  std::vector<int> seq{1, 2, 0};
  auto p = make_passage(q, seq);
  CHECK(p.sentences() == std::vector<std::string>{"Two!", "Three.", "One."});
  CHECK(p.text == "Two! Three. One.");
}

TEST_CASE("passage ids are deterministic, order sensitive and reject bad sequences") {
  std::vector<int> a{0, 1}, b{1, 0}, dup{1, 1}, neg{-1};
  CHECK(passage_id("q1", a) == passage_id("q1", a));
  CHECK(passage_id("q1", a) != passage_id("q1", b));
  CHECK(passage_id("q1", a) != passage_id("q2", a));
  CHECK(passage_id("q1", a).size() == 16);
  CHECK_THROWS_AS(passage_id("q1", dup), std::invalid_argument);
  CHECK_THROWS_AS(passage_id("q1", neg), std::invalid_argument);
  // The key is the question id, a unit separator, then comma-joined indices.
  CHECK(passage_id("q1", a) == to_hex16(fnv1a64(std::string("q1\x1f") + "0,1")));
}

TEST_CASE("the two-question fixture has 329 passages and validates") {
  auto c = two_question_fixture();
  CHECK(c.questions.size() == 2);
  CHECK(c.passages.size() == 329);
  CHECK(c.passages_of("q1").size() == 325);
  CHECK(c.passages_of("q2").size() == 4);
  std::set<std::string> ids;
  for (const auto& p : c.passages) ids.insert(p.id);
  CHECK(ids.size() == 329);
  CHECK_NOTHROW(validate_corpus(c));
}

TEST_CASE("lookups find records by id") {
  auto c = two_question_fixture();
  std::vector<int> seq{1, 0};
  auto pid = passage_id("q2", seq);
  c.judgments.push_back(judgment("q2", pid, 1));
  c.sort();
  REQUIRE(c.find_question("q2") != nullptr);
  CHECK(c.find_question("nope") == nullptr);
  REQUIRE(c.find_passage(pid) != nullptr);
  CHECK(c.find_passage(pid)->text == "Two small moons orbit it. It is the fourth body from the Sun.");
  REQUIRE(c.find_judgment("q2", pid) != nullptr);
  CHECK(c.find_judgment("q1", pid) == nullptr);
  CHECK(c.judgments_for("q2").size() == 1);
  CHECK(c.judgments_for("q1").empty());
}

TEST_CASE("save then load round-trips byte for byte") {
  TempDir dir;
  auto c = two_question_fixture();
  for (const auto* p : c.passages_of("q2")) c.judgments.push_back(judgment("q2", p->id, 2));
  c.sort();
  save_corpus(c, dir.path());
  auto loaded = load_corpus(dir.path());
  CHECK(loaded == c);
  TempDir again;
  save_corpus(loaded, again.path());
  for (auto name : {kQuestionsFile, kPassagesFile, kJudgmentsFile}) {
    CHECK(read_file(dir / std::string(name)) == read_file(again / std::string(name)));
  }
}

TEST_CASE("question records keep optional metadata") {
  auto q = testing::make_question("q", "Who?", {"Ann", "Anne"}, {"hint"});
  q.gold = {"Ann"};
  q.qtype = "person";
  q.difficulty = 0.25;
  q.parametric = false;
  q.split = Split::dev;
  q.hints[0].convergence = 0.5;
  q.hints[0].source = HintSource::machine;
  json j = q;
  CHECK(j.get<Question>() == q);
  // A raw record without "gold" treats every answer as gold.
  auto raw = json::parse(R"({"id":"r","text":"t","answers":["a","b"]})").get<Question>();
  CHECK(raw.gold == std::vector<std::string>{"a", "b"});
  CHECK(raw.split == Split::unassigned);
}

TEST_CASE("load_corpus reports file and line for bad records") {
  TempDir dir;
  auto c = two_question_fixture();
  save_corpus(c, dir.path());

  SUBCASE("missing questions file") {
    std::filesystem::remove(dir / "questions.jsonl");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("missing questions file"),
                         CorpusError);
  }
  SUBCASE("malformed JSON line") {
    write_file(dir / "questions.jsonl", read_file(dir / "questions.jsonl") + "{not json\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()),
                         doctest::Contains("questions.jsonl:3: malformed record"), CorpusError);
  }
  SUBCASE("label out of range") {
    auto pid = c.passages_of("q2").front()->id;
    write_file(dir / "judgments.jsonl",
               json(judgment("q2", pid, 2)).dump() + "\n" + json(judgment("q2", pid, 3)).dump() +
                   "\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()),
                         doctest::Contains("judgments.jsonl:2: label out of range"), CorpusError);
  }
  SUBCASE("judgment for an unknown passage") {
    write_file(dir / "judgments.jsonl", json(judgment("q2", "ffffffffffffffff", 1)).dump() + "\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("unknown passage"),
                         CorpusError);
  }
  SUBCASE("duplicate question id") {
    auto lines = read_file(dir / "questions.jsonl");
    write_file(dir / "questions.jsonl", lines + lines.substr(0, lines.find('\n') + 1));
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("duplicate question id q1"),
                         CorpusError);
  }
  SUBCASE("tampered passage text") {
    auto text = read_file(dir / "passages.jsonl");
    auto pos = text.find("Beijing");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "Shanghai");
    write_file(dir / "passages.jsonl", text);
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("passage text mismatch"),
                         CorpusError);
  }
  SUBCASE("label 2 needs a correct model answer") {
    auto r = judgment("q2", c.passages_of("q2").front()->id, 2);
    r.model_answers.clear();
    write_file(dir / "judgments.jsonl", json(r).dump() + "\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("label 2 without"),
                         CorpusError);
  }
  SUBCASE("cross-question judgment must be irrelevant") {
    write_file(dir / "judgments.jsonl",
               json(judgment("q1", c.passages_of("q2").front()->id, 1)).dump() + "\n");
    CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("cross-question"),
                         CorpusError);
  }
}

TEST_CASE("selected questions hold at most five hints") {
  auto q = testing::make_question("q", "?", {"a"}, {"1", "2", "3", "4", "5", "6"});
  CHECK_THROWS_AS(validate_question(q, true), CorpusError);
  CHECK_NOTHROW(validate_question(q, false));
  q.gold = {"b"};
  CHECK_THROWS_WITH_AS(validate_question(q, false), doctest::Contains("missing from answer pool"),
                       CorpusError);
}

TEST_CASE("qrels export keeps every label and parses back") {
  auto c = two_question_fixture();
  auto ps = c.passages_of("q2");
  c.judgments.push_back(judgment("q2", ps[0]->id, 2));
  c.judgments.push_back(judgment("q2", ps[1]->id, 1));
  c.judgments.push_back(judgment("q1", ps[2]->id, 0));
  c.sort();
  auto text = export_qrels(c, 2);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(export_qrels(c, 1) == text);
  CHECK_THROWS_AS(export_qrels(c, 3), std::invalid_argument);
  auto parsed = parse_qrels(text);
  CHECK(parsed == qrels_from_corpus(c));
  CHECK(parsed["q1"][ps[2]->id] == 0);
  CHECK(text.find("q2 0 " + ps[0]->id + " 2\n") != std::string::npos);
  CHECK_THROWS_AS(parse_qrels("q1 0 doc\n"), CorpusError);
}

TEST_CASE("run files round-trip and are validated") {
  RunList run{"q1", {{"a", 2.5, 1}, {"b", 2.5, 2}, {"c", 0.125, 3}}, "bm25"};
  RunList other{"q0", {{"z", 1.0, 1}}, "bm25"};
  std::vector<RunList> runs{run, other};
  auto text = format_run(runs);
  CHECK(text ==
        "q0 Q0 z 1 1.000000 bm25\n"
        "q1 Q0 a 1 2.500000 bm25\n"
        "q1 Q0 b 2 2.500000 bm25\n"
        "q1 Q0 c 3 0.125000 bm25\n");
  auto parsed = parse_run(text);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1] == run);
  CHECK(parsed[0] == other);

  RunList rising{"q", {{"a", 1.0, 1}, {"b", 2.0, 2}}, "t"};
  CHECK_THROWS_AS(validate_run(rising), CorpusError);
  RunList dup{"q", {{"a", 2.0, 1}, {"a", 1.0, 2}}, "t"};
  CHECK_THROWS_AS(validate_run(dup), CorpusError);
  RunList gap{"q", {{"a", 2.0, 1}, {"b", 1.0, 3}}, "t"};
  CHECK_THROWS_AS(validate_run(gap), CorpusError);
  assign_ranks(gap);
  CHECK_NOTHROW(validate_run(gap));
  CHECK_THROWS_AS(parse_run("q Q0 a x 1.0 t\n"), CorpusError);
}
