#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <thread>

#include "httplib.h"
#include "inferqa/judge.hpp"
#include "inferqa/json_io.hpp"
#include "inferqa/retrieval.hpp"

#include "bm25_oracle.hpp"
#include "support.hpp"

using namespace inferqa;
using oracle::doc;
using oracle::kDocs;
using oracle::reference_bm25;
using oracle::words;

namespace {

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("BM25 scores match a textbook evaluation") {
  const std::string query = "spanish footballer titles";
  auto index = build_lexical_index(kDocs);
  CHECK(index.doc_count == 5);
  CHECK(index.doc_lengths.at("d1") == 8);
  CHECK(index.postings.at("titles").size() == 4);
  CHECK(index.postings.at("titles")[1] == Posting{"d2", 2});

  for (auto [k1, b] : {std::pair{0.9, 0.4}, std::pair{1.2, 0.75}, std::pair{0.0, 0.0}}) {
    auto run = search_bm25(index, "q", query, 10, {k1, b});
    validate_run(run);
    std::vector<std::pair<double, std::string>> expected;
    for (std::size_t i = 0; i < kDocs.size(); ++i) {
      double s = reference_bm25(kDocs, i, query, k1, b);
      if (s > 0) expected.push_back({-s, kDocs[i].id});
    }
    std::sort(expected.begin(), expected.end());
    REQUIRE(run.entries.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(run.entries[i].passage_id == expected[i].second);
      CHECK(run.entries[i].score == doctest::Approx(-expected[i].first).epsilon(1e-12));
      CHECK(run.entries[i].rank == static_cast<int>(i) + 1);
    }
  }
  CHECK(bm25_idf(5, 4) == doctest::Approx(std::log(1 + 1.5 / 4.5)));
}

TEST_CASE("BM25 result shape") {
  auto index = build_lexical_index(kDocs);
  auto run = search_bm25(index, "q7", "spanish footballer titles", 2);
  CHECK(run.entries.size() == 2);
  CHECK(run.question_id == "q7");
  CHECK(run.tag == "bm25");
  CHECK(search_bm25(index, "q", "zebra quantum", 10).entries.empty());
  CHECK_THROWS_AS(search_bm25(index, "q", "x", 0), std::invalid_argument);
  // Repeated query terms count once per occurrence.
  auto once = search_bm25(index, "q", "paella", 5);
  auto twice = search_bm25(index, "q", "paella paella", 5);
  CHECK(twice.entries[0].score == doctest::Approx(2 * once.entries[0].score));
}

TEST_CASE("equal scores are ordered by passage id") {
  std::vector<Passage> docs{doc("b", "red fox"), doc("a", "red fox"), doc("c", "blue fish")};
  auto run = search_bm25(build_lexical_index(docs), "q", "fox", 10);
  REQUIRE(run.entries.size() == 2);
  CHECK(run.entries[0].passage_id == "a");
  CHECK(run.entries[1].passage_id == "b");
}

TEST_CASE("index construction errors and warnings") {
  CHECK_THROWS_AS(build_lexical_index(std::vector<Passage>{}), std::invalid_argument);
  std::vector<Passage> dup{doc("a", "x"), doc("a", "y")};
  CHECK_THROWS_AS(build_lexical_index(dup), std::invalid_argument);
  std::vector<std::string> warnings;
  std::vector<Passage> with_empty{doc("a", "x"), doc("b", "")};
  auto index = build_lexical_index(with_empty, &warnings);
  CHECK(index.doc_lengths.at("b") == 0);
  CHECK(warnings.size() == 1);
}

TEST_CASE("hash embeddings follow the signed feature-hashing rule") {
  HashEmbeddingProvider provider(16);
  CHECK(provider.tag() == "hash-16");
  std::vector<std::string> texts{"Red fox, red FOX jumps", ""};
  auto vs = provider.embed(texts);
  REQUIRE(vs.size() == 2);
  std::vector<double> expected(16, 0.0);
  for (const auto& t : words(texts[0])) {
    auto h = fnv(t);
    expected[h % 16] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0;
  for (double x : expected) norm += x * x;
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(vs[0][i] == doctest::Approx(expected[i] / std::sqrt(norm)).epsilon(1e-6));
  }
  CHECK(std::all_of(vs[1].begin(), vs[1].end(), [](float x) { return x == 0.0F; }));
}

TEST_CASE("dense search is exact brute force") {
  std::vector<std::string> ids{"c", "a", "b", "d"};
  std::vector<std::vector<float>> vectors{{0, 1}, {1, 0}, {2, 2}, {-1, 0}};
  auto index = build_vector_index(ids, vectors, "t");
  CHECK(index.ids == std::vector<std::string>{"a", "b", "c", "d"});
  std::vector<float> q{1.0F, 0.2F};

  auto ip = search_dense(index, "q", q, "t", 4, DenseMetric::inner_product);
  std::vector<std::string> ip_order;
  for (const auto& e : ip.entries) ip_order.push_back(e.passage_id);
  CHECK(ip_order == std::vector<std::string>{"b", "a", "c", "d"});
  CHECK(ip.entries[0].score == doctest::Approx(2.4));

  auto cos = search_dense(index, "q", q, "t", 2, DenseMetric::cosine);
  REQUIRE(cos.entries.size() == 2);
  CHECK(cos.entries[0].passage_id == "a");
  CHECK(cos.entries[0].score == doctest::Approx(1.0 / std::sqrt(1.04)));
  CHECK(cos.entries[1].passage_id == "b");
  validate_run(cos);

  CHECK_THROWS_AS(search_dense(index, "q", q, "other", 2), std::invalid_argument);
  std::vector<float> wrong{1, 2, 3};
  CHECK_THROWS_AS(search_dense(index, "q", wrong, "t", 2), std::invalid_argument);
  std::vector<std::vector<float>> ragged{{1, 0}, {1}};
  std::vector<std::string> two{"a", "b"};
  CHECK_THROWS_AS(build_vector_index(two, ragged, "t"), std::invalid_argument);
}

TEST_CASE("dense retrieval over hash embeddings prefers lexical overlap") {
  HashEmbeddingProvider provider(256);
  auto index = embed_corpus(kDocs, provider, 2);
  CHECK(index.ids.size() == 5);
  CHECK(index.provider_tag == "hash-256");
  std::vector<std::string> query{"Spanish cuisine includes paella and tapas"};
  auto qv = provider.embed(query);
  auto run = search_dense(index, "q", qv[0], provider.tag(), 3);
  CHECK(run.entries[0].passage_id == "d3");
  CHECK(run.entries[0].score == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("HTTP embedding provider") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    if (body["model"] != "emb") {
      res.status = 400;
      return;
    }
    json data = json::array();
    for (const auto& text : body["input"]) {
      data.push_back(json{{"embedding", {static_cast<double>(text.get<std::string>().size()), 1.0}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  auto base = "http://127.0.0.1:" + std::to_string(port) + "/v1";

  HttpEmbeddingProvider provider(base, "emb", "", std::chrono::milliseconds(2000), 2);
  CHECK(provider.tag() == "http:emb");
  std::vector<std::string> texts{"ab", "abcd"};
  auto vs = provider.embed(texts);
  CHECK(vs == std::vector<std::vector<float>>{{2, 1}, {4, 1}});
  CHECK(hits.load() == 2);

  HttpEmbeddingProvider wrong_model(base, "other", "", std::chrono::milliseconds(2000), 2);
  CHECK_THROWS_AS(wrong_model.embed(texts), JobFailure);

  server.stop();
  t.join();
}
