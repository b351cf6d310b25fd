// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fgd/errors.hpp"
#include "fgd/ops.hpp"
#include "fgd/optim.hpp"
#include "fgd/pipeline.hpp"

namespace fgd::pipeline {

using nlohmann::json;

Splits make_splits(const Collection& collection, const SplitConfig& config) {
  const std::size_t need =
      config.warm_queries + config.train_queries + config.dev_queries;
  if (need > collection.queries.size()) {
    throw ConfigError("splits need " + std::to_string(need) + " queries, the "
                      "collection has " +
                      std::to_string(collection.queries.size()));
  }
  std::vector<std::size_t> order(collection.queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  corpus::Rng rng(collection.config.seed ^ 0x5eed5eedULL);
  std::shuffle(order.begin(), order.end(), rng);
  Splits s;
  auto take = [&](std::size_t from, std::size_t n, QueryList& out) {
    for (std::size_t i = from; i < from + n; ++i) {
      out.push_back(&collection.queries[order[i]]);
    }
    std::sort(out.begin(), out.end(),
              [](auto* a, auto* b) { return a->id < b->id; });
  };
  take(0, config.warm_queries, s.warm);
  take(config.warm_queries, config.train_queries, s.train);
  take(config.warm_queries + config.train_queries, config.dev_queries, s.dev);
  return s;
}

index::Qrels qrels_for(const QueryList& queries) {
  index::Qrels q;
  for (const QueryRecord* r : queries) q[r->id] = {r->positive};
  return q;
}

json StepRecord::to_json() const {
  return json{{"step", step},
              {"L_cl", cl},
              {"L_kd_doc", doc_kd},
              {"L_fkd", fkd},
              {"total", total}};
}

encoder::EncoderParams init_retriever(const TrainConfig& config,
                                      std::uint64_t seed) {
  return encoder::EncoderParams::init(config.encoder_config(), seed);
}

namespace {

// Encodes documents at most once per batch item.
class ItemEncoder {
 public:
  ItemEncoder(const Collection& c, const encoder::EncoderParams& p)
      : collection_(c), params_(p) {}

  const encoder::EncodeOutput& get(DocId doc) {
    auto it = outputs_.find(doc);
    if (it == outputs_.end()) {
      it = outputs_
               .emplace(doc, encoder::encode_document(collection_.doc(doc),
                                                      params_))
               .first;
    }
    return it->second;
  }

 private:
  const Collection& collection_;
  const encoder::EncoderParams& params_;
  std::map<DocId, encoder::EncodeOutput> outputs_;
};

Tensor teacher_vector(std::vector<double> values) {
  return Tensor::vector(std::move(values));
}

scoring::ItemScores assemble_item(const corpus::BatchItem& item,
                                  const TrainInputs& in,
                                  const encoder::EncoderParams& params,
                                  const scoring::LossConfig& loss,
                                  encoder::SpanPooling pooling,
                                  std::size_t max_span_negatives) {
  const QueryRecord& q = *item.query;
  const Collection& collection = *in.collection;
  const auto& flags = loss.flags;
  ItemEncoder enc(collection, params);
  const Tensor u = encoder::encode_query(q, params);

  scoring::ItemScores s;
  std::vector<Tensor> doc_scores;
  doc_scores.push_back(scoring::bi_score(u, enc.get(item.positive).cls));
  for (DocId n : item.negatives) {
    doc_scores.push_back(scoring::bi_score(u, enc.get(n).cls));
  }
  s.doc_student = ops::concat(doc_scores, 0);

  if (flags.doc_kd) {
    std::vector<double> t;
    t.push_back(in.teacher->score(q, item.positive,
                                  collection.doc(item.positive).span(0, 1)));
    for (DocId n : item.negatives) {
      t.push_back(in.teacher->score(q, n, collection.doc(n).span(0, 1)));
    }
    s.doc_teacher = teacher_vector(std::move(t));
  }

  if (!flags.any_fkd()) return s;
  const mining::NegativePool& pool = in.pools->pool(q.id);
  const std::set<DocId> encoded(item.negatives.begin(), item.negatives.end());
  const corpus::Document& pos_doc = collection.doc(item.positive);
  for (int j = 1; j <= pos_doc.granularity_count(); ++j) {
    if (!flags.level_enabled(j)) continue;
    std::vector<Tensor> neg_student;
    std::vector<double> neg_teacher;
    for (const mining::SpanNegative& n : pool.at(j)) {
      if (neg_student.size() == max_span_negatives) break;
      if (!encoded.count(n.doc)) continue;
      neg_student.push_back(scoring::bi_score(
          u, encoder::span_embedding(enc.get(n.doc), n.span, pooling)));
      neg_teacher.push_back(in.teacher->score(q, n.doc, n.span));
    }
    if (neg_student.empty()) {
      throw MiningRequiredError("query " + std::to_string(q.id) +
                                ": no mined j=" + std::to_string(j) +
                                " negatives among the batch documents");
    }
    scoring::LevelScores level;
    level.granularity = j;
    const encoder::EncodeOutput& pos_out = enc.get(item.positive);
    for (const corpus::SpanRef& span : pos_doc.spans_at(j)) {
      std::vector<Tensor> student = {scoring::bi_score(
          u, encoder::span_embedding(pos_out, span, pooling))};
      student.insert(student.end(), neg_student.begin(), neg_student.end());
      std::vector<double> teacher = {in.teacher->score(q, item.positive, span)};
      teacher.insert(teacher.end(), neg_teacher.begin(), neg_teacher.end());
      level.slots.push_back(
          {ops::concat(student, 0), teacher_vector(std::move(teacher))});
    }
    s.levels.push_back(std::move(level));
  }
  return s;
}

}  // namespace

TrainResult train_retriever(const encoder::EncoderParams& init,
                            const TrainInputs& inputs, const TrainConfig& config,
                            const scoring::LossConfig& loss,
                            encoder::SpanPooling pooling, std::size_t epochs,
                            std::uint64_t seed, const Logger& log) {
  loss.validate();
  if (!inputs.collection || !inputs.sampler) {
    throw ConfigError("trainer needs a collection and a negative sampler");
  }
  if ((loss.flags.doc_kd || loss.flags.any_fkd()) && !inputs.teacher) {
    throw ConfigError("distillation terms are enabled but no teacher is "
                      "loaded");
  }
  if (loss.flags.any_fkd() && !inputs.pools) {
    throw MiningRequiredError("fine-grained distillation needs mined span "
                              "pools");
  }
  TrainResult result{init.clone(), {}};
  encoder::EncoderParams& params = result.params;
  corpus::BatchIterator batches(inputs.queries, inputs.sampler,
                                config.schedule.batch_size,
                                config.schedule.negatives, seed);
  const std::size_t total = epochs * batches.batches_per_epoch();
  AdamW optimizer(params.tensors(), config.optim, total);
  optimizer.zero_grad();

  for (std::size_t step = 0; step < total; ++step) {
    const corpus::Batch batch = batches.next();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    StepRecord record;
    record.step = step;
    bool any_gradient = false;
    for (const corpus::BatchItem& item : batch) {
      Tape tape;
      TapeScope scope(tape);
      const scoring::ItemScores scores =
          assemble_item(item, inputs, params, loss, pooling,
                        config.schedule.max_span_negatives);
      const scoring::LossBreakdown b =
          scoring::fgd_total_loss(std::span(&scores, 1), loss);
      const double value = b.total.item();
      if (!std::isfinite(value)) {
        throw TrainingError("loss became " + std::to_string(value) +
                            " at step " + std::to_string(step) +
                            " (query " + std::to_string(item.query->id) + ")");
      }
      record.cl += b.cl * inv_b;
      record.doc_kd += b.doc_kd * inv_b;
      record.total += value * inv_b;
      if (record.fkd.size() < b.fkd_per_level.size()) {
        record.fkd.resize(b.fkd_per_level.size(), 0.0);
      }
      for (std::size_t j = 0; j < b.fkd_per_level.size(); ++j) {
        record.fkd[j] += b.fkd_per_level[j] * inv_b;
      }
      if (b.total.requires_grad()) {
        tape.backward(ops::scale(b.total, inv_b));
        any_gradient = true;
      }
    }
    // A constant objective leaves the parameters untouched.
    if (any_gradient) {
      optimizer.step();
      optimizer.zero_grad();
    }
    if (log && (step % 50 == 0 || step + 1 == total)) {
      std::ostringstream os;
      os << "step " << step + 1 << "/" << total << " loss " << record.total;
      log(os.str());
    }
    result.log.push_back(std::move(record));
  }
  return result;
}

WarmStartResult train_warm_start(const Collection& collection,
                                 const Splits& splits, const TrainConfig& config,
                                 std::uint64_t seed, const Logger& log) {
  WarmStartResult out{{init_retriever(config, seed), {}}, 0.0, 0.0};
  const encoder::EncoderParams untrained = init_retriever(config, seed);
  out.untrained_mrr10 =
      index::mrr_at_k(retrieve(index::build_index(collection, untrained, false),
                               untrained, splits.dev, 10),
                      qrels_for(splits.dev), 10)
          .value;
  TrainInputs in;
  in.collection = &collection;
  in.queries = splits.warm;
  // Negatives come from the untrained encoder's own top ranks: uniform ones
  // mostly differ in topic and teach nothing the random embeddings lack.
  in.sampler = std::make_shared<mining::PoolNegativeSampler>(
      std::make_shared<const mining::PoolSet>(mining::refresh_negatives(
          "warm", collection, splits.warm, untrained, config.mining)),
      collection.documents.size(), config.schedule.random_negatives);
  scoring::LossConfig loss = config.loss;
  loss.lambda = 1.0;
  loss.flags = {true, false, false, false};
  out.train = train_retriever(untrained, in, config, loss,
                              encoder::SpanPooling::kGlobalAttention,
                              config.schedule.epochs_warm, seed, log);
  out.warm_mrr10 =
      index::mrr_at_k(retrieve(index::build_index(collection, out.train.params,
                                                  false),
                               out.train.params, splits.dev, 10),
                      qrels_for(splits.dev), 10)
          .value;
  if (!(out.warm_mrr10 > out.untrained_mrr10)) {
    throw TrainingError("warm start did not improve on the untrained encoder "
                        "(dev MRR@10 " + std::to_string(out.warm_mrr10) +
                        " vs " + std::to_string(out.untrained_mrr10) + ")");
  }
  return out;
}

void check_lineage(const mining::PoolSet& pools, const std::string& stage,
                   const std::string& retriever) {
  if (pools.stage != stage) {
    throw ConfigError("pools are tagged '" + pools.stage + "', expected '" +
                      stage + "'");
  }
  if (pools.retriever_fingerprint != retriever) {
    throw ConfigError("pools were mined with retriever " +
                      pools.retriever_fingerprint + ", expected " + retriever);
  }
}

TrainResult train_stage1(const encoder::EncoderParams& warm,
                         const Collection& collection, const QueryList& queries,
                         const mining::PoolSet& pools, const TrainConfig& config,
                         std::uint64_t seed, const Logger& log) {
  check_lineage(pools, "stage1", warm.fingerprint());
  TrainInputs in;
  in.collection = &collection;
  in.queries = queries;
  in.sampler = std::make_shared<mining::PoolNegativeSampler>(
      std::make_shared<const mining::PoolSet>(pools),
      collection.documents.size(), config.schedule.random_negatives);
  scoring::LossConfig loss = config.loss;
  loss.lambda = 1.0;
  loss.flags = {true, false, false, false};
  return train_retriever(warm, in, config, loss, config.span_pooling,
                         config.schedule.epochs_stage1, seed, log);
}

TrainResult train_stage2_fgd(const encoder::EncoderParams& stage1,
                             const Collection& collection,
                             const QueryList& queries,
                             const mining::PoolSet& pools, TeacherScorer* teacher,
                             const TrainConfig& config,
                             const scoring::LossConfig& loss,
                             encoder::SpanPooling pooling, std::uint64_t seed,
                             const Logger& log) {
  check_lineage(pools, "stage2", stage1.fingerprint());
  if ((loss.flags.doc_kd || loss.flags.any_fkd()) && !teacher) {
    throw ConfigError("stage 2 distillation needs a trained teacher");
  }
  TrainInputs in;
  in.collection = &collection;
  in.queries = queries;
  in.sampler = std::make_shared<mining::PoolNegativeSampler>(
      std::make_shared<const mining::PoolSet>(pools),
      collection.documents.size(), config.schedule.random_negatives);
  in.pools = &pools;
  in.teacher = teacher;
  return train_retriever(stage1, in, config, loss, pooling,
                         config.schedule.epochs_stage2, seed, log);
}

json StageState::to_json() const {
  return json{{"stage", stage},
              {"encoder_checkpoint", encoder_checkpoint},
              {"encoder_fingerprint", encoder_fingerprint},
              {"parent_fingerprint", parent_fingerprint},
              {"teacher_fingerprint", teacher_fingerprint},
              {"pools", pools},
              {"metrics", metrics}};
}

StageState StageState::from_json(const json& j) {
  StageState s;
  try {
    s.stage = j.at("stage").get<std::string>();
    s.encoder_checkpoint = j.at("encoder_checkpoint").get<std::string>();
    s.encoder_fingerprint = j.at("encoder_fingerprint").get<std::string>();
    s.parent_fingerprint = j.value("parent_fingerprint", "");
    s.teacher_fingerprint = j.value("teacher_fingerprint", "");
    s.pools = j.value("pools", "");
    if (j.contains("metrics")) {
      for (const json& m : j.at("metrics")) s.metrics.push_back(m);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("stage state: ") + e.what());
  }
  return s;
}

}  // namespace fgd::pipeline
