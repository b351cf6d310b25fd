// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-topic long documents, their span hierarchy, and training
// batch iteration.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace fgd::corpus {

using TokenId = int;
using DocId = std::uint32_t;
using QueryId = std::uint32_t;
using Rng = std::mt19937_64;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kCls = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kFirstRegularToken = 3;

/// Half-open token id range [begin, end) owned by one topic.
struct TopicRange {
  TokenId begin = 0;
  TokenId end = 0;
  bool contains(TokenId t) const { return t >= begin && t < end; }
  std::size_t size() const { return static_cast<std::size_t>(end - begin); }
};

class Vocabulary {
 public:
  /// Splits the non-special ids into `num_topics` contiguous disjoint ranges.
  static Vocabulary make(std::size_t size, std::size_t num_topics);

  std::size_t size() const { return size_; }
  std::size_t num_topics() const { return topics_.size(); }
  const TopicRange& topic(std::size_t t) const { return topics_.at(t); }
  std::optional<std::size_t> topic_of(TokenId token) const;

 private:
  std::size_t size_ = 0;
  std::vector<TopicRange> topics_;
};

/// A token range of a document at one granularity. `begin` and `end` are
/// inclusive document token indices; `index` is 1-based within the level.
struct SpanRef {
  int granularity = 0;
  int index = 1;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin + 1; }
  friend bool operator==(const SpanRef&, const SpanRef&) = default;
};

struct Document {
  DocId id = 0;
  std::vector<TokenId> tokens;
  std::vector<int> topic_ids;        // one label per generated topic block
  std::vector<std::size_t> block_starts;
  std::vector<SpanRef> spans;        // j = 0 first, then j = 1..M in order

  /// Number of sub-document granularities M.
  int granularity_count() const;
  std::vector<SpanRef> spans_at(int granularity) const;
  std::size_t span_count(int granularity) const;
  const SpanRef& span(int granularity, int index) const;
  std::span<const TokenId> span_tokens(const SpanRef& span) const;
};

struct QueryRecord {
  QueryId id = 0;
  std::vector<TokenId> tokens;
  DocId positive = 0;
  int topic = 0;
  std::size_t block = 0;  // block of the positive document the query targets
};

struct CorpusConfig {
  std::size_t num_docs = 200;
  std::size_t topics_per_doc = 3;
  std::size_t doc_length = 512;
  std::size_t vocab_size = 1024;
  std::size_t num_topics = 8;
  double topic_purity = 0.9;
  std::size_t query_length = 8;
  std::vector<std::size_t> fragment_lengths = {128, 64};
  std::size_t max_doc_length = 512;
  std::size_t max_query_length = 32;
  std::uint64_t seed = 42;
};

struct Collection {
  CorpusConfig config;
  Vocabulary vocab;
  std::vector<Document> documents;  // documents[i].id == i
  std::vector<QueryRecord> queries;

  const Document& doc(DocId id) const;
  const QueryRecord& query(QueryId id) const;
};

/// Deterministic in (config, seed). Each query draws its tokens from the
/// topic-pure tokens of exactly one block of its positive document.
Collection generate_collection(const CorpusConfig& config);

/// Replaces `doc.spans` with the j = 0 span plus consecutive non-overlapping
/// windows for every configured length (coarse to fine).
void segment(Document& doc, std::span<const std::size_t> fragment_lengths);

/// Throws ConfigError unless lengths are non-zero and strictly decreasing.
void validate_fragment_lengths(std::span<const std::size_t> fragment_lengths);

void save_collection(const std::filesystem::path& dir,
                     const Collection& collection);
Collection load_collection(const std::filesystem::path& dir);

/// Content address of the collection files, stable across save/load.
/// A query drawn the way the generator draws one: topic-pure tokens of a
/// random block of `doc`. Leaves `id` at 0.
QueryRecord sample_query(const Collection& collection, const Document& doc,
                         Rng& rng);

std::string collection_fingerprint(const Collection& collection);

struct BatchItem {
  const QueryRecord* query = nullptr;
  DocId positive = 0;
  std::vector<DocId> negatives;
};

using Batch = std::vector<BatchItem>;

/// Supplies document negatives for a query.
class NegativeSampler {
 public:
  virtual ~NegativeSampler() = default;
  /// Throws MiningRequiredError if `count` negatives cannot be supplied.
  virtual void require(const QueryRecord& query, std::size_t count) const = 0;
  virtual std::vector<DocId> sample(const QueryRecord& query,
                                    std::size_t count, Rng& rng) const = 0;
};

/// Uniform negatives from the whole collection, excluding the positive.
class UniformNegativeSampler final : public NegativeSampler {
 public:
  explicit UniformNegativeSampler(std::size_t num_docs) : num_docs_(num_docs) {}
  void require(const QueryRecord& query, std::size_t count) const override;
  std::vector<DocId> sample(const QueryRecord& query, std::size_t count,
                            Rng& rng) const override;

 private:
  std::size_t num_docs_;
};

/// Deterministic shuffled epochs of (query, positive, negatives) items.
class BatchIterator {
 public:
  BatchIterator(std::vector<const QueryRecord*> queries,
                std::shared_ptr<const NegativeSampler> sampler,
                std::size_t batch_size, std::size_t negatives_per_query,
                std::uint64_t seed);

  Batch next();
  std::size_t batches_per_epoch() const;
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::vector<const QueryRecord*> queries_;
  std::shared_ptr<const NegativeSampler> sampler_;
  std::size_t batch_size_;
  std::size_t negatives_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace fgd::corpus
