// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Hard negative mining: documents first, then spans top-down through the
// granularity hierarchy.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fgd/corpus.hpp"
#include "fgd/encoder.hpp"
#include "fgd/index.hpp"

namespace fgd::mining {

using corpus::DocId;
using corpus::QueryId;
using corpus::SpanRef;

struct SpanNegative {
  DocId doc = 0;
  SpanRef span;  // the j = 0 span for document negatives
  double score = 0.0;
  friend bool operator==(const SpanNegative&, const SpanNegative&) = default;
};

/// levels[0] holds document negatives, levels[j] the shared span negatives
/// at granularity j, each sorted by descending retriever score.
struct NegativePool {
  QueryId query = 0;
  DocId positive = 0;
  std::vector<std::vector<SpanNegative>> levels;
  bool truncated = false;  // fewer documents than the requested depth

  const std::vector<SpanNegative>& at(int granularity) const;
};

struct MiningConfig {
  /// depths[0] is the document depth; depths[j] the span depth at level j.
  std::vector<std::size_t> depths = {100, 32, 32};

  void validate(int granularities) const;
};

struct PoolSet {
  std::string stage;  // "stage1" or "stage2"
  std::vector<std::size_t> depths;
  std::string retriever_fingerprint;
  std::string collection_fingerprint;
  std::map<QueryId, NegativePool> pools;

  const NegativePool& pool(QueryId query) const;
};

struct DocumentMining {
  std::vector<SpanNegative> negatives;
  bool truncated = false;
};

/// Top-`depth` documents by <u, v^d> excluding the positive; ties by doc id.
DocumentMining mine_document_negatives(std::span<const double> query,
                                       DocId positive,
                                       const index::DenseIndex& index,
                                       std::size_t depth);

/// Span levels j = 1..M. Candidates at level j are the level-j spans of the
/// positive-free negatives at level j - 1 (overlapping a parent span of the
/// same document); the top depths[j] are kept. Throws MiningRequiredError on
/// an empty parent level and ConfigError on a zero depth.
std::vector<std::vector<SpanNegative>> mine_hierarchical_negatives(
    std::span<const double> query, DocId positive,
    const std::vector<SpanNegative>& document_negatives,
    const index::DenseIndex& index, std::span<const std::size_t> depths);

/// Document plus hierarchical mining for one query.
NegativePool mine_pool(const corpus::QueryRecord& query,
                       const index::DenseIndex& index,
                       const encoder::EncoderParams& retriever,
                       const MiningConfig& config);

/// Mines every query with `retriever` and tags the result with `stage`.
PoolSet refresh_negatives(const std::string& stage,
                          const corpus::Collection& collection,
                          std::span<const corpus::QueryRecord* const> queries,
                          const encoder::EncoderParams& retriever,
                          const MiningConfig& config);
/// Same, loading the retriever from a checkpoint file (ConfigError if it is
/// missing).
PoolSet refresh_negatives(const std::string& stage,
                          const corpus::Collection& collection,
                          std::span<const corpus::QueryRecord* const> queries,
                          const std::filesystem::path& checkpoint,
                          const encoder::EncoderConfig& encoder_config,
                          const MiningConfig& config);

/// Throws IntegrityError unless the pool excludes the positive document at
/// every level, each list is sorted, and every level descends from its
/// parent.
void validate_pool(const NegativePool& pool);

void save_pools(const std::filesystem::path& path, const PoolSet& pools);
PoolSet load_pools(const std::filesystem::path& path);

/// Document negatives drawn from mined pools. Half of each draw comes from
/// the owners of the finest-level span negatives, the rest from the
/// document pool, so span candidates are available inside the batch.
class PoolNegativeSampler final : public corpus::NegativeSampler {
 public:
  /// The last `random` of each draw are uniform over the `num_docs`
  /// collection instead of mined.
  explicit PoolNegativeSampler(std::shared_ptr<const PoolSet> pools,
                               std::size_t num_docs = 0, std::size_t random = 0);
  void require(const corpus::QueryRecord& query,
               std::size_t count) const override;
  std::vector<DocId> sample(const corpus::QueryRecord& query, std::size_t count,
                            corpus::Rng& rng) const override;

 private:
  std::shared_ptr<const PoolSet> pools_;
  std::size_t num_docs_ = 0;
  std::size_t random_ = 0;
};

}  // namespace fgd::mining
