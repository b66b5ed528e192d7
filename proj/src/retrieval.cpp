#include "inferqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "inferqa/judge.hpp"
#include "inferqa/json_io.hpp"
#include "inferqa/text.hpp"

namespace inferqa {

namespace {

struct Scored {
  const std::string* id;
  double score;
};

RunList top_k(std::string_view question_id, std::vector<Scored> scored, std::size_t k,
              std::string tag) {
  auto better = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return *a.id < *b.id;
  };
  auto n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    better);
  RunList run;
  run.question_id = std::string(question_id);
  run.tag = std::move(tag);
  for (std::size_t i = 0; i < n; ++i) {
    run.entries.push_back({*scored[i].id, scored[i].score, static_cast<int>(i) + 1});
  }
  return run;
}

}  // namespace

LexicalIndex build_lexical_index(std::span<const Passage> passages,
                                 std::vector<std::string>* warnings) {
  if (passages.empty()) throw std::invalid_argument("cannot index an empty passage set");
  LexicalIndex index;
  std::size_t total = 0;
  for (const auto& p : passages) {
    if (index.doc_lengths.count(p.id) != 0) {
      throw std::invalid_argument("duplicate passage id " + p.id);
    }
    auto tokens = analyze(p.text);
    if (tokens.empty() && warnings != nullptr) {
      warnings->push_back("passage " + p.id + " has no indexable text");
    }
    index.doc_lengths[p.id] = tokens.size();
    total += tokens.size();
    std::map<std::string, int> tf;
    for (auto& t : tokens) ++tf[std::move(t)];
    for (auto& [term, freq] : tf) index.postings[term].push_back({p.id, freq});
  }
  for (auto& [term, list] : index.postings) {
    std::sort(list.begin(), list.end(),
              [](const Posting& a, const Posting& b) { return a.passage_id < b.passage_id; });
  }
  index.doc_count = index.doc_lengths.size();
  index.avg_doc_length = static_cast<double>(total) / static_cast<double>(index.doc_count);
  return index;
}

double bm25_idf(std::size_t doc_count, std::size_t doc_freq) {
  auto n = static_cast<double>(doc_count);
  auto df = static_cast<double>(doc_freq);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

RunList search_bm25(const LexicalIndex& index, std::string_view question_id,
                    std::string_view query, std::size_t k, Bm25Params params, std::string tag) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  std::map<std::string, int> query_tf;
  for (auto& t : analyze(query)) ++query_tf[std::move(t)];

  std::unordered_map<std::string_view, double> acc;
  for (const auto& [term, qtf] : query_tf) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const double idf = bm25_idf(index.doc_count, it->second.size());
    for (const auto& posting : it->second) {
      const double tf = posting.term_frequency;
      const double dl = static_cast<double>(index.doc_lengths.at(posting.passage_id));
      const double norm =
          params.k1 * (1.0 - params.b + params.b * dl / std::max(index.avg_doc_length, 1e-12));
      acc[posting.passage_id] += qtf * idf * tf * (params.k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<Scored> scored;
  scored.reserve(acc.size());
  for (const auto& [id, score] : acc) {
    scored.push_back({&index.doc_lengths.find(std::string(id))->first, score});
  }
  return top_k(question_id, std::move(scored), k, std::move(tag));
}

// ---------------------------------------------------------------------------
// Dense

std::vector<std::vector<float>> HashEmbeddingProvider::embed(std::span<const std::string> texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<float> v(dim_, 0.0F);
    for (const auto& token : analyze(text)) {
      auto h = fnv1a64(token);
      float sign = ((h >> 63) & 1U) != 0 ? -1.0F : 1.0F;
      v[h % dim_] += sign;
    }
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    if (norm > 0.0) {
      auto inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (float& x : v) x *= inv;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::string model,
                                             std::string api_key,
                                             std::chrono::milliseconds timeout, int max_retries)
    : model_(std::move(model)),
      api_key_(std::move(api_key)),
      timeout_(timeout),
      max_retries_(max_retries) {
  std::tie(origin_, path_prefix_) = split_base_url(base_url);
}

std::vector<std::vector<float>> HttpEmbeddingProvider::embed(std::span<const std::string> texts) {
  json body{{"model", model_}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries_; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
    httplib::Client client(origin_);
    auto secs = timeout_.count() / 1000;
    client.set_read_timeout(secs, (timeout_.count() % 1000) * 1000);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path_prefix_ + "/embeddings", headers, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw JobFailure("embedding endpoint returned HTTP " +
                                             std::to_string(res->status));
    auto reply = json::parse(res->body);
    std::vector<std::vector<float>> out;
    for (const auto& item : reply.at("data")) {
      out.push_back(item.at("embedding").get<std::vector<float>>());
    }
    if (out.size() != texts.size()) throw JobFailure("embedding count mismatch");
    return out;
  }
  throw JobFailure("embedding endpoint: retries exhausted: " + last_error);
}

VectorIndex build_vector_index(std::span<const std::string> ids,
                               std::vector<std::vector<float>> vectors,
                               std::string provider_tag) {
  if (ids.size() != vectors.size()) throw std::invalid_argument("ids and vectors differ in size");
  VectorIndex index;
  index.provider_tag = std::move(provider_tag);
  index.dim = vectors.empty() ? 0 : vectors.front().size();
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  for (auto i : order) {
    if (vectors[i].size() != index.dim) {
      throw std::invalid_argument("vector for " + ids[i] + " has dimension " +
                                  std::to_string(vectors[i].size()) + ", expected " +
                                  std::to_string(index.dim));
    }
    if (!index.ids.empty() && index.ids.back() == ids[i]) {
      throw std::invalid_argument("duplicate passage id " + ids[i]);
    }
    index.ids.push_back(ids[i]);
    index.vectors.push_back(std::move(vectors[i]));
  }
  return index;
}

VectorIndex embed_corpus(std::span<const Passage> passages, EmbeddingProvider& provider,
                         std::size_t batch_size) {
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vectors;
  for (std::size_t start = 0; start < passages.size(); start += batch_size) {
    auto end = std::min(passages.size(), start + batch_size);
    std::vector<std::string> texts;
    for (auto i = start; i < end; ++i) {
      ids.push_back(passages[i].id);
      texts.push_back(passages[i].text);
    }
    auto batch = provider.embed(texts);
    if (batch.size() != texts.size()) throw std::runtime_error("embedding count mismatch");
    for (auto& v : batch) vectors.push_back(std::move(v));
  }
  return build_vector_index(ids, std::move(vectors), provider.tag());
}

RunList search_dense(const VectorIndex& index, std::string_view question_id,
                     std::span<const float> query, std::string_view query_tag, std::size_t k,
                     DenseMetric metric, std::string tag) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (query_tag != index.provider_tag) {
    throw std::invalid_argument("query embedded by '" + std::string(query_tag) +
                                "' but index built with '" + index.provider_tag + "'");
  }
  if (query.size() != index.dim) {
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) +
                                " does not match index dimension " + std::to_string(index.dim));
  }
  double qnorm = 0.0;
  for (float x : query) qnorm += static_cast<double>(x) * x;
  qnorm = std::sqrt(qnorm);
  std::vector<Scored> scored;
  scored.reserve(index.ids.size());
  for (std::size_t i = 0; i < index.ids.size(); ++i) {
    double dot = 0.0;
    double vnorm = 0.0;
    const auto& v = index.vectors[i];
    for (std::size_t d = 0; d < index.dim; ++d) {
      dot += static_cast<double>(v[d]) * query[d];
      vnorm += static_cast<double>(v[d]) * v[d];
    }
    double score = dot;
    if (metric == DenseMetric::cosine) {
      auto denom = qnorm * std::sqrt(vnorm);
      score = denom > 0.0 ? dot / denom : 0.0;
    }
    scored.push_back({&index.ids[i], score});
  }
  return top_k(question_id, std::move(scored), k, std::move(tag));
}

}  // namespace inferqa
