#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "inferqa/corpus.hpp"

namespace inferqa {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

struct Posting {
  std::string passage_id;
  int term_frequency = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

/// Inverted index over analyze()d passage text. Immutable after build.
struct LexicalIndex {
  std::map<std::string, std::vector<Posting>> postings;  // sorted by passage id
  std::map<std::string, std::size_t> doc_lengths;
  double avg_doc_length = 0.0;
  std::size_t doc_count = 0;

  friend bool operator==(const LexicalIndex&, const LexicalIndex&) = default;
};

/// Throws std::invalid_argument on an empty input or duplicate ids. Empty
/// passage text is indexed with length 0 and reported through `warnings`.
LexicalIndex build_lexical_index(std::span<const Passage> passages,
                                 std::vector<std::string>* warnings = nullptr);

/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
double bm25_idf(std::size_t doc_count, std::size_t doc_freq);

/// idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)), summed per
/// query-term occurrence. Entries sorted by score descending then passage
/// id; at most k entries; only passages sharing a term with the query.
RunList search_bm25(const LexicalIndex& index, std::string_view question_id,
                    std::string_view query, std::size_t k = 100, Bm25Params params = {},
                    std::string tag = "bm25");

// ---------------------------------------------------------------------------
// Dense retrieval

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) = 0;
  /// Identifies the embedding space; query and passage vectors from
  /// different tags are never compared.
  virtual std::string tag() const = 0;
};

/// Feature-hashing embedder: each analyze()d token adds +-1 to one of `dim`
/// buckets chosen by FNV-1a, then the vector is L2-normalized.
class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 64) : dim_(dim) {}
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override;
  std::string tag() const override { return "hash-" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

/// HTTP JSON embedding client: POST {base_url}/embeddings with
/// {"model": ..., "input": [texts]} and read data[i].embedding.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, std::string model, std::string api_key,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds{60000},
                        int max_retries = 3);
  std::vector<std::vector<float>> embed(std::span<const std::string> texts) override;
  std::string tag() const override { return "http:" + model_; }

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string model_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
  int max_retries_;
};

enum class DenseMetric { inner_product, cosine };

struct VectorIndex {
  std::size_t dim = 0;
  std::vector<std::string> ids;             // sorted
  std::vector<std::vector<float>> vectors;  // parallel to ids
  std::string provider_tag;
};

/// Throws std::invalid_argument on inconsistent dimensions.
VectorIndex build_vector_index(std::span<const std::string> ids,
                               std::vector<std::vector<float>> vectors, std::string provider_tag);

VectorIndex embed_corpus(std::span<const Passage> passages, EmbeddingProvider& provider,
                         std::size_t batch_size = 64);

/// Exact top-k by brute force; ties by passage id. Throws on a dimension or
/// provider-tag mismatch.
RunList search_dense(const VectorIndex& index, std::string_view question_id,
                     std::span<const float> query, std::string_view query_tag, std::size_t k,
                     DenseMetric metric = DenseMetric::cosine, std::string tag = "dense");

}  // namespace inferqa
