// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Exact dense retrieval over a collection, IR metrics and score margins.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fgd/corpus.hpp"
#include "fgd/encoder.hpp"

namespace fgd::index {

using corpus::DocId;
using corpus::QueryId;
using corpus::SpanRef;

struct SpanKey {
  DocId doc = 0;
  SpanRef span;
};

/// Row-major packed vectors. Document i has id doc_ids[i]; its spans
/// (granularity >= 1) occupy [span_offsets[i], span_offsets[i+1]).
struct DenseIndex {
  std::size_t hidden = 0;
  std::vector<DocId> doc_ids;
  std::vector<double> doc_vectors;
  bool has_spans = false;
  std::vector<SpanKey> span_keys;
  std::vector<double> span_vectors;
  std::vector<std::size_t> span_offsets;
  std::string encoder_fingerprint;
  std::string collection_fingerprint;

  std::size_t size() const { return doc_ids.size(); }
  std::span<const double> doc_vector(std::size_t row) const;
  std::span<const double> span_vector(std::size_t row) const;
  /// Row of a document id; throws IndexError if absent.
  std::size_t row_of(DocId doc) const;
};

DenseIndex build_index(const corpus::Collection& collection,
                       const encoder::EncoderParams& params, bool include_spans,
                       encoder::SpanPooling pooling =
                           encoder::SpanPooling::kGlobalAttention);

void save_index(const std::filesystem::path& path, const DenseIndex& index);
/// Throws IntegrityError when `expected_encoder` is given and differs from
/// the stored fingerprint, FormatError on a malformed file.
DenseIndex load_index(const std::filesystem::path& path,
                      const std::optional<std::string>& expected_encoder = {});

/// Query vector as plain values, computed without recording gradients.
std::vector<double> query_vector(std::span<const corpus::TokenId> tokens,
                                 const encoder::EncoderParams& params);

double dot(std::span<const double> a, std::span<const double> b);

struct Hit {
  DocId doc = 0;
  double score = 0.0;
  friend bool operator==(const Hit&, const Hit&) = default;
};

struct SearchResult {
  std::vector<Hit> hits;
  bool empty_index = false;
};

/// Exact top-k by dot product, descending, ties by ascending doc id.
SearchResult search(std::span<const double> query, const DenseIndex& index,
                    std::size_t k);

/// Ranks by s(q,d) + gamma * sum_j max_i s(q, x^j_i). Throws ConfigError if
/// the index has no spans or gamma < 0.
SearchResult ensemble_search(std::span<const double> query,
                             const DenseIndex& index, std::size_t k,
                             double gamma);

/// Sorts hits descending with doc-id tie-break and truncates to k.
void rank_hits(std::vector<Hit>& hits, std::size_t k);

using Qrels = std::map<QueryId, std::set<DocId>>;
using Run = std::map<QueryId, std::vector<DocId>>;

struct MetricValue {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // run queries without qrels
};

MetricValue mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k);
MetricValue recall_at_k(const Run& run, const Qrels& qrels, std::size_t k);
MetricValue ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k);

/// Parses "mrr@100", "r@100" / "recall@100", "ndcg@10".
struct MetricSpec {
  std::string name;
  std::size_t k = 10;
  std::string label() const;
};
MetricSpec parse_metric(const std::string& text);
MetricValue compute_metric(const MetricSpec& spec, const Run& run,
                           const Qrels& qrels);

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<QueryId, double> reciprocal_ranks;  // at the largest MRR cutoff
  std::size_t excluded = 0;
};
EvalReport evaluate(const Run& run, const Qrels& qrels,
                    std::span<const MetricSpec> metrics);

struct ScoredPair {
  double positive = 0.0;
  double negative = 0.0;
};

struct MarginSummary {
  std::vector<double> margins;
  double beta = 0.0;
  double mean = 0.0;
  std::vector<std::size_t> histogram;  // equal bins over [-1, 1]
};

/// (s+ - s-) / beta with beta = max - min over every score in `pairs`.
/// Throws DegenerateRangeError when beta is 0.
MarginSummary margin_distribution(std::span<const ScoredPair> pairs,
                                  std::size_t bins = 20);

}  // namespace fgd::index
