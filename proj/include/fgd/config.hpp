// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Declarative experiment configuration. Defaults follow the reference
// training recipe; desk-scale runs override them from a JSON file and
// `key.path=value` command-line assignments.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgd/corpus.hpp"
#include "fgd/encoder.hpp"
#include "fgd/mining.hpp"
#include "fgd/scoring.hpp"
#include "json.hpp"

namespace fgd::pipeline {

struct TeacherConfig {
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 64;
  std::size_t head_hidden = 32;
  std::size_t epochs = 3;
  std::size_t pairs_per_query = 8;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double label_scale = 4.0;
  bool fresh_queries = true;  // new query per training pair
  std::uint64_t seed = 7;
};

struct SplitConfig {
  std::size_t warm_queries = 40;  // held-out slice for the warm start
  std::size_t train_queries = 120;
  std::size_t dev_queries = 40;
};

struct OptimConfig {
  double lr = 1e-3;
  double large_model_lr = 3e-6;  // recorded only; small encoders need a larger rate
  double weight_decay = 0.01;
  double warmup_fraction = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ScheduleConfig {
  std::size_t epochs_warm = 2;
  std::size_t epochs_stage1 = 2;
  std::size_t epochs_stage2 = 20;
  std::size_t batch_size = 64;
  std::size_t positives = 1;
  std::size_t negatives = 8;
  std::size_t random_negatives = 0;  // of `negatives`, drawn uniformly
  std::size_t max_span_negatives = 16;  // per (query, j) inside a batch item
};

struct EvalConfig {
  std::vector<std::string> metrics = {"mrr@100", "r@100", "ndcg@10", "mrr@10"};
  std::size_t k = 100;
  std::size_t margin_negatives = 10;
  std::vector<double> gamma_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                    0.6, 0.7, 0.8, 0.9, 1.0};
};

struct TrainConfig {
  corpus::CorpusConfig corpus;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 256;
  TeacherConfig teacher;
  SplitConfig splits;
  OptimConfig optim;
  ScheduleConfig schedule;
  scoring::LossConfig loss;
  encoder::SpanPooling span_pooling = encoder::SpanPooling::kGlobalAttention;
  double gamma = 0.4;
  mining::MiningConfig mining;
  EvalConfig eval;
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds = {42, 43, 44};

  encoder::EncoderConfig encoder_config() const;
  scoring::CrossEncoderConfig teacher_config() const;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;

  nlohmann::json to_json() const;
  /// Keys absent from `j` keep their defaults; unknown keys are an error.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies "a.b.c=value" assignments; value is parsed as JSON, falling
  /// back to a plain string.
  TrainConfig with_overrides(const std::vector<std::string>& assignments) const;

  /// Content hash of the canonical JSON form.
  std::string hash() const;
};

std::string to_string(encoder::SpanPooling pooling);
encoder::SpanPooling span_pooling_from_string(const std::string& name);

}  // namespace fgd::pipeline
