// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Training stages, evaluation and the ablation matrix.
//
//   gen-corpus -> train-teacher -> warm-start -> mine (stage1) -> train 1
//              -> mine (stage2) -> train 2 (FGD and ablations) -> eval

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fgd/config.hpp"
#include "fgd/corpus.hpp"
#include "fgd/encoder.hpp"
#include "fgd/index.hpp"
#include "fgd/mining.hpp"
#include "fgd/scoring.hpp"
#include "json.hpp"

namespace fgd::pipeline {

using corpus::Collection;
using corpus::DocId;
using corpus::QueryId;
using corpus::QueryRecord;
using QueryList = std::vector<const QueryRecord*>;

using Logger = std::function<void(const std::string&)>;

/// Disjoint warm / train / dev query sets, drawn by a permutation seeded
/// from the corpus seed.
struct Splits {
  QueryList warm, train, dev;
};
Splits make_splits(const Collection& collection, const SplitConfig& config);
index::Qrels qrels_for(const QueryList& queries);

/// Generator-derived relevance of `text` to a query: `scale` times the
/// fraction of distinct query tokens that occur in `text`.
double teacher_label(std::span<const corpus::TokenId> query,
                     std::span<const corpus::TokenId> text, double scale);

/// Frozen teacher with a score cache keyed by (query, doc, span).
class TeacherScorer {
 public:
  TeacherScorer(std::shared_ptr<const scoring::CrossEncoderParams> params,
                const Collection& collection);

  double score(const QueryRecord& query, DocId doc, const corpus::SpanRef& span);
  const scoring::CrossEncoderParams& params() const { return *params_; }
  std::size_t cached() const { return cache_.size(); }

 private:
  std::shared_ptr<const scoring::CrossEncoderParams> params_;
  const Collection& collection_;
  std::map<std::tuple<QueryId, DocId, int, int>, double> cache_;
};

struct StepRecord {
  std::size_t step = 0;
  double cl = 0.0;
  double doc_kd = 0.0;
  std::vector<double> fkd;  // per granularity j = 1..M (enabled levels)
  double total = 0.0;

  nlohmann::json to_json() const;
};

struct TeacherResult {
  scoring::CrossEncoderParams params;
  std::vector<double> epoch_loss;
};

/// Pointwise regression of the cross-encoder on teacher_label over spans of
/// every granularity.
TeacherResult train_teacher(const Collection& collection,
                            const QueryList& queries, const TrainConfig& config,
                            const Logger& log = {});

/// Fraction of queries whose top-scored level-j span of the positive
/// document is one with the highest generator label.
double teacher_span_accuracy(TeacherScorer& teacher,
                             const Collection& collection,
                             const QueryList& queries, int granularity,
                             double label_scale);
double student_span_accuracy(const encoder::EncoderParams& params,
                             const Collection& collection,
                             const QueryList& queries, int granularity,
                             encoder::SpanPooling pooling, double label_scale);

struct TrainResult {
  encoder::EncoderParams params;
  std::vector<StepRecord> log;
};

struct TrainInputs {
  const Collection* collection = nullptr;
  QueryList queries;
  std::shared_ptr<const corpus::NegativeSampler> sampler;
  const mining::PoolSet* pools = nullptr;  // span negatives for fkd
  TeacherScorer* teacher = nullptr;        // needed by any kd term
};

/// One trainer for every stage: the loss flags are the only difference
/// between stages and ablations. Data order depends on `seed` only.
TrainResult train_retriever(const encoder::EncoderParams& init,
                            const TrainInputs& inputs, const TrainConfig& config,
                            const scoring::LossConfig& loss,
                            encoder::SpanPooling pooling, std::size_t epochs,
                            std::uint64_t seed, const Logger& log = {});

encoder::EncoderParams init_retriever(const TrainConfig& config,
                                      std::uint64_t seed);

/// Contrastive training on the warm slice with negatives mined by the
/// untrained encoder.
/// Throws TrainingError unless dev MRR@10 beats the untrained encoder.
struct WarmStartResult {
  TrainResult train;
  double untrained_mrr10 = 0.0;
  double warm_mrr10 = 0.0;
};
WarmStartResult train_warm_start(const Collection& collection,
                                 const Splits& splits, const TrainConfig& config,
                                 std::uint64_t seed, const Logger& log = {});

/// Throws ConfigError unless `pools` carry `stage` and were mined with the
/// retriever whose fingerprint is `retriever`.
void check_lineage(const mining::PoolSet& pools, const std::string& stage,
                   const std::string& retriever);

TrainResult train_stage1(const encoder::EncoderParams& warm,
                         const Collection& collection, const QueryList& queries,
                         const mining::PoolSet& pools, const TrainConfig& config,
                         std::uint64_t seed, const Logger& log = {});

/// Throws ConfigError when a kd term is enabled without a teacher.
TrainResult train_stage2_fgd(const encoder::EncoderParams& stage1,
                             const Collection& collection,
                             const QueryList& queries,
                             const mining::PoolSet& pools, TeacherScorer* teacher,
                             const TrainConfig& config,
                             const scoring::LossConfig& loss,
                             encoder::SpanPooling pooling, std::uint64_t seed,
                             const Logger& log = {});

index::Run retrieve(const index::DenseIndex& index,
                    const encoder::EncoderParams& params,
                    const QueryList& queries, std::size_t k,
                    std::optional<double> gamma = {});

std::vector<index::MetricSpec> metric_specs(const TrainConfig& config);

/// Metrics over `queries`, ranking the whole collection.
index::EvalReport evaluate_retriever(const Collection& collection,
                                     const encoder::EncoderParams& params,
                                     const QueryList& queries,
                                     const TrainConfig& config,
                                     std::optional<double> gamma = {},
                                     encoder::SpanPooling pooling =
                                         encoder::SpanPooling::kGlobalAttention);

/// For each query, the top `count` non-positive documents under `params`.
std::map<QueryId, std::vector<DocId>> fixed_negatives(
    const Collection& collection, const encoder::EncoderParams& params,
    const QueryList& queries, std::size_t count);

/// (s(q,d+), s(q,d-)) for every query and each of its fixed negatives.
std::vector<index::ScoredPair> margin_pairs(
    const Collection& collection, const encoder::EncoderParams& params,
    const QueryList& queries,
    const std::map<QueryId, std::vector<DocId>>& negatives);

double median(std::vector<double> values);

/// Which rows the matrix trains; each is one flag combination.
struct AblationRow {
  std::string name;
  scoring::LossFlags flags;
  encoder::SpanPooling pooling = encoder::SpanPooling::kGlobalAttention;
};
std::vector<AblationRow> ablation_rows();

struct RowResult {
  std::string name;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
  std::optional<double> margin_median;
  double final_loss = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double untrained_mrr10 = 0.0;
  double warm_mrr10 = 0.0;
  std::map<std::string, double> stage1_metrics;
  double teacher_span_accuracy = 0.0;
  double student_span_accuracy = 0.0;
  std::vector<RowResult> rows;
  std::map<double, double> gamma_sweep;  // gamma -> dev MRR@10 of FGD

  const RowResult* row(const std::string& name) const;
};

struct MatrixReport {
  std::string config_hash;
  std::string collection_fingerprint;
  std::string teacher_fingerprint;
  std::vector<double> teacher_loss;
  std::vector<SeedResult> seeds;

  nlohmann::json to_json() const;
  /// Rows in table order, medians over seeds.
  std::string to_markdown() const;
};

/// Generates the corpus, trains the teacher once, then for every seed runs
/// warm start, both mining rounds, stage 1, every ablation row and the
/// gamma sweep. A failing row or seed is recorded and the matrix continues.
MatrixReport run_experiment_matrix(const TrainConfig& config,
                                   const std::vector<AblationRow>& rows,
                                   const Logger& log = {});

/// Stage bookkeeping persisted next to checkpoints.
struct StageState {
  std::string stage;  // "warm", "stage1", "stage2"
  std::string encoder_checkpoint;
  std::string encoder_fingerprint;
  std::string parent_fingerprint;  // checkpoint this stage started from
  std::string teacher_fingerprint;
  std::string pools;
  std::vector<nlohmann::json> metrics;

  nlohmann::json to_json() const;
  static StageState from_json(const nlohmann::json& j);
};

}  // namespace fgd::pipeline
