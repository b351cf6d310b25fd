// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "fgd/errors.hpp"
#include "fgd/pipeline.hpp"

namespace fgd::pipeline {

using nlohmann::json;

index::Run retrieve(const index::DenseIndex& index,
                    const encoder::EncoderParams& params,
                    const QueryList& queries, std::size_t k,
                    std::optional<double> gamma) {
  index::Run run;
  for (const QueryRecord* q : queries) {
    const std::vector<double> u = index::query_vector(q->tokens, params);
    const index::SearchResult r = gamma ? index::ensemble_search(u, index, k, *gamma)
                                        : index::search(u, index, k);
    auto& ranking = run[q->id];
    for (const index::Hit& h : r.hits) ranking.push_back(h.doc);
  }
  return run;
}

std::vector<index::MetricSpec> metric_specs(const TrainConfig& config) {
  std::vector<index::MetricSpec> specs;
  bool has_mrr10 = false;
  for (const std::string& m : config.eval.metrics) {
    specs.push_back(index::parse_metric(m));
    has_mrr10 |= specs.back().label() == "mrr@10";
  }
  if (!has_mrr10) specs.push_back(index::parse_metric("mrr@10"));
  return specs;
}

index::EvalReport evaluate_retriever(const Collection& collection,
                                     const encoder::EncoderParams& params,
                                     const QueryList& queries,
                                     const TrainConfig& config,
                                     std::optional<double> gamma,
                                     encoder::SpanPooling pooling) {
  const auto specs = metric_specs(config);
  std::size_t k = config.eval.k;
  for (const auto& s : specs) k = std::max(k, s.k);
  const index::DenseIndex idx =
      index::build_index(collection, params, gamma.has_value(), pooling);
  return index::evaluate(retrieve(idx, params, queries, k, gamma),
                         qrels_for(queries), specs);
}

std::map<QueryId, std::vector<DocId>> fixed_negatives(
    const Collection& collection, const encoder::EncoderParams& params,
    const QueryList& queries, std::size_t count) {
  const index::DenseIndex idx = index::build_index(collection, params, false);
  std::map<QueryId, std::vector<DocId>> out;
  for (const QueryRecord* q : queries) {
    const auto u = index::query_vector(q->tokens, params);
    auto& list = out[q->id];
    for (const index::Hit& h : index::search(u, idx, count + 1).hits) {
      if (h.doc != q->positive && list.size() < count) list.push_back(h.doc);
    }
  }
  return out;
}

std::vector<index::ScoredPair> margin_pairs(
    const Collection& collection, const encoder::EncoderParams& params,
    const QueryList& queries,
    const std::map<QueryId, std::vector<DocId>>& negatives) {
  const index::DenseIndex idx = index::build_index(collection, params, false);
  std::vector<index::ScoredPair> pairs;
  for (const QueryRecord* q : queries) {
    auto it = negatives.find(q->id);
    if (it == negatives.end()) continue;
    const auto u = index::query_vector(q->tokens, params);
    const double pos = index::dot(u, idx.doc_vector(idx.row_of(q->positive)));
    for (DocId d : it->second) {
      pairs.push_back({pos, index::dot(u, idx.doc_vector(idx.row_of(d)))});
    }
  }
  return pairs;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AblationRow> ablation_rows() {
  using encoder::SpanPooling;
  return {
      {"FGD", {true, false, true, true}, SpanPooling::kGlobalAttention},
      {"w/o pass-distill", {true, false, false, true}, SpanPooling::kGlobalAttention},
      {"w/o sent-distill", {true, false, true, false}, SpanPooling::kGlobalAttention},
      {"w/ doc-distill", {true, true, true, true}, SpanPooling::kGlobalAttention},
      {"w/ FG pooling", {true, false, true, true}, SpanPooling::kMean},
      {"only doc-distill", {true, true, false, false}, SpanPooling::kGlobalAttention},
      {"w/o ALL", {true, false, false, false}, SpanPooling::kGlobalAttention},
  };
}

const RowResult* SeedResult::row(const std::string& name) const {
  for (const RowResult& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

json MatrixReport::to_json() const {
  json seeds_json = json::array();
  for (const SeedResult& s : seeds) {
    json rows = json::array();
    for (const RowResult& r : s.rows) {
      json row{{"name", r.name},
               {"ok", r.ok},
               {"metrics", r.metrics},
               {"final_loss", r.final_loss}};
      if (!r.error.empty()) row["error"] = r.error;
      if (r.margin_median) row["margin_median"] = *r.margin_median;
      rows.push_back(row);
    }
    json sweep = json::array();
    for (const auto& [g, v] : s.gamma_sweep) sweep.push_back({g, v});
    json entry{{"seed", s.seed},
               {"ok", s.ok},
               {"untrained_mrr@10", s.untrained_mrr10},
               {"warm_mrr@10", s.warm_mrr10},
               {"stage1", s.stage1_metrics},
               {"teacher_span_accuracy", s.teacher_span_accuracy},
               {"student_span_accuracy", s.student_span_accuracy},
               {"rows", rows},
               {"gamma_sweep", sweep}};
    if (!s.error.empty()) entry["error"] = s.error;
    seeds_json.push_back(entry);
  }
  return json{{"config_hash", config_hash},
              {"collection", collection_fingerprint},
              {"teacher", teacher_fingerprint},
              {"teacher_loss", teacher_loss},
              {"seeds", seeds_json}};
}

std::string MatrixReport::to_markdown() const {
  const std::vector<std::string> columns = {"mrr@100", "r@100", "mrr@10",
                                            "ndcg@10"};
  std::vector<std::string> names;
  for (const SeedResult& s : seeds) {
    for (const RowResult& r : s.rows) {
      if (std::find(names.begin(), names.end(), r.name) == names.end()) {
        names.push_back(r.name);
      }
    }
  }
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "| Row |";
  for (const auto& c : columns) os << " " << c << " |";
  os << " margin median | runs |\n|---|";
  for (std::size_t i = 0; i <= columns.size(); ++i) os << "---|";
  os << "---|\n";
  for (const std::string& name : names) {
    os << "| " << name << " |";
    std::size_t ok = 0;
    for (const auto& c : columns) {
      std::vector<double> v;
      for (const SeedResult& s : seeds) {
        const RowResult* r = s.row(name);
        if (r && r->ok && r->metrics.count(c)) v.push_back(r->metrics.at(c));
      }
      ok = v.size();
      if (v.empty()) {
        os << " - |";
      } else {
        os << " " << median(v) << " |";
      }
    }
    std::vector<double> m;
    for (const SeedResult& s : seeds) {
      const RowResult* r = s.row(name);
      if (r && r->ok && r->margin_median) m.push_back(*r->margin_median);
    }
    if (m.empty()) {
      os << " - |";
    } else {
      os << " " << median(m) << " |";
    }
    os << " " << ok << "/" << seeds.size() << " |\n";
  }
  std::map<double, std::vector<double>> sweep;
  for (const SeedResult& s : seeds) {
    for (const auto& [g, v] : s.gamma_sweep) sweep[g].push_back(v);
  }
  if (!sweep.empty()) {
    os << "\n| gamma | mrr@10 (FGD, ensemble) |\n|---|---|\n";
    for (const auto& [g, v] : sweep) {
      os << "| " << std::setprecision(1) << g << std::setprecision(4) << " | "
         << median(v) << " |\n";
    }
  }
  for (const SeedResult& s : seeds) {
    if (!s.error.empty()) os << "\nseed " << s.seed << " failed: " << s.error << "\n";
    for (const RowResult& r : s.rows) {
      if (!r.ok) {
        os << "\nseed " << s.seed << ", " << r.name << " failed: " << r.error << "\n";
      }
    }
  }
  return os.str();
}

namespace {

void say(const Logger& log, const std::string& text) {
  if (log) log(text);
}

}  // namespace

MatrixReport run_experiment_matrix(const TrainConfig& config,
                                   const std::vector<AblationRow>& rows,
                                   const Logger& log) {
  config.validate();
  MatrixReport report;
  report.config_hash = config.hash();
  say(log, "generating corpus");
  const Collection collection = corpus::generate_collection(config.corpus);
  report.collection_fingerprint = corpus::collection_fingerprint(collection);
  const Splits splits = make_splits(collection, config.splits);

  say(log, "training teacher");
  TeacherResult teacher = train_teacher(collection, splits.train, config, log);
  report.teacher_loss = teacher.epoch_loss;
  auto teacher_params =
      std::make_shared<const scoring::CrossEncoderParams>(std::move(teacher.params));
  report.teacher_fingerprint = teacher_params->fingerprint();
  TeacherScorer scorer(teacher_params, collection);
  const Logger quiet;

  for (std::uint64_t seed : config.seeds) {
    SeedResult sr;
    sr.seed = seed;
    try {
      say(log, "seed " + std::to_string(seed) + ": warm start");
      const WarmStartResult warm =
          train_warm_start(collection, splits, config, seed, quiet);
      sr.untrained_mrr10 = warm.untrained_mrr10;
      sr.warm_mrr10 = warm.warm_mrr10;

      say(log, "seed " + std::to_string(seed) + ": stage 1");
      const mining::PoolSet pools1 = mining::refresh_negatives(
          "stage1", collection, splits.train, warm.train.params, config.mining);
      const TrainResult s1 = train_stage1(warm.train.params, collection,
                                          splits.train, pools1, config, seed, quiet);
      sr.stage1_metrics =
          evaluate_retriever(collection, s1.params, splits.dev, config).metrics;

      sr.teacher_span_accuracy = teacher_span_accuracy(
          scorer, collection, splits.dev, 1, config.teacher.label_scale);
      sr.student_span_accuracy =
          student_span_accuracy(s1.params, collection, splits.dev, 1,
                                config.span_pooling, config.teacher.label_scale);
      if (!(sr.teacher_span_accuracy > sr.student_span_accuracy)) {
        throw TrainingError("teacher span accuracy " +
                            std::to_string(sr.teacher_span_accuracy) +
                            " does not exceed the stage-1 student's " +
                            std::to_string(sr.student_span_accuracy));
      }

      const mining::PoolSet pools2 = mining::refresh_negatives(
          "stage2", collection, splits.train, s1.params, config.mining);
      const auto margin_negs = fixed_negatives(collection, s1.params, splits.dev,
                                               config.eval.margin_negatives);

      for (const AblationRow& row : rows) {
        RowResult rr;
        rr.name = row.name;
        try {
          say(log, "seed " + std::to_string(seed) + ": " + row.name);
          scoring::LossConfig loss = config.loss;
          loss.flags = row.flags;
          const TrainResult r2 =
              train_stage2_fgd(s1.params, collection, splits.train, pools2,
                               &scorer, config, loss, row.pooling, seed, quiet);
          rr.final_loss = r2.log.empty() ? 0.0 : r2.log.back().total;
          rr.metrics = evaluate_retriever(collection, r2.params, splits.dev,
                                          config)
                           .metrics;
          const auto pairs =
              margin_pairs(collection, r2.params, splits.dev, margin_negs);
          rr.margin_median = median(index::margin_distribution(pairs).margins);
          if (row.name == "FGD") {
            const index::DenseIndex idx =
                index::build_index(collection, r2.params, true, row.pooling);
            for (double g : config.eval.gamma_grid) {
              sr.gamma_sweep[g] =
                  index::mrr_at_k(retrieve(idx, r2.params, splits.dev, 10, g),
                                  qrels_for(splits.dev), 10)
                      .value;
            }
          }
          rr.ok = true;
          std::ostringstream os;
          os << "seed " << seed << ": " << row.name << " mrr@10 "
             << rr.metrics["mrr@10"];
          say(log, os.str());
        } catch (const std::exception& e) {
          rr.error = e.what();
          say(log, "seed " + std::to_string(seed) + ": " + row.name +
                       " failed: " + rr.error);
        }
        sr.rows.push_back(std::move(rr));
      }
      sr.ok = true;
    } catch (const std::exception& e) {
      sr.error = e.what();
      say(log, "seed " + std::to_string(seed) + " failed: " + sr.error);
    }
    report.seeds.push_back(std::move(sr));
  }
  return report;
}

}  // namespace fgd::pipeline
