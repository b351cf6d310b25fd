// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Relevance scores, score distributions and the training objectives.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fgd/encoder.hpp"
#include "fgd/tensor.hpp"

namespace fgd::scoring {

using corpus::TokenId;

/// Dot product <u, v>; no normalization.
Tensor bi_score(const Tensor& u, const Tensor& v);

struct CrossEncoderConfig {
  encoder::EncoderConfig encoder;
  std::size_t head_hidden = 64;
};

/// Transformer encoder followed by a one-output MLP on the [CLS] vector.
class CrossEncoderParams {
 public:
  static CrossEncoderParams init(const CrossEncoderConfig& config,
                                 std::uint64_t seed);
  static CrossEncoderParams from_tensors(const CrossEncoderConfig& config,
                                         const NamedTensors& tensors);

  const CrossEncoderConfig& config() const { return config_; }
  const encoder::EncoderParams& encoder() const { return encoder_; }
  const NamedTensors& head() const { return head_; }
  /// Handles to every tensor: encoder names plus "head.*".
  NamedTensors all_tensors() const;
  std::string fingerprint() const;

 private:
  CrossEncoderConfig config_;
  encoder::EncoderParams encoder_;
  NamedTensors head_;
};

/// Teacher score of [CLS] q [SEP] x [SEP]. Only `text` is seen, never the
/// document around it.
Tensor cross_score(std::span<const TokenId> query,
                   std::span<const TokenId> text,
                   const CrossEncoderParams& params);

/// Softmax over candidate scores divided by a temperature; the positive
/// candidate sits at index 0.
struct ScoreDistribution {
  std::vector<std::uint64_t> candidate_ids;  // optional; empty when unnamed
  Tensor logits;
  Tensor probs;
  Tensor log_probs;
  double temperature = 1.0;

  std::size_t size() const { return logits.numel(); }
};

/// Throws ConfigError when tau <= 0 and DimensionError with fewer than two
/// candidates.
ScoreDistribution score_distribution(const Tensor& scores, double tau,
                                     std::vector<std::uint64_t> ids = {});
ScoreDistribution score_distribution(std::span<const double> scores, double tau,
                                     std::vector<std::uint64_t> ids = {});

/// -log p[positive].
Tensor contrastive_loss(const ScoreDistribution& dist);

/// KL(student || teacher). The teacher side is detached.
Tensor kd_loss(const ScoreDistribution& student,
               const ScoreDistribution& teacher);

/// Scores of one positive slot x^j_k: the positive first, then the shared
/// negatives, for both models.
struct SlotScores {
  Tensor student;
  Tensor teacher;
};

struct LevelScores {
  int granularity = 1;
  std::vector<SlotScores> slots;  // one per k in 1..K^j
};

/// sum_j (1/K^j) sum_k KL(p_be_{j,k} || p_ce_{j,k}); j = 0 never enters.
/// `per_level`, when given, receives each level's contribution.
Tensor fkd_loss(std::span<const LevelScores> levels, double tau,
                std::vector<double>* per_level = nullptr);

/// Which loss terms assemble. Every ablation is one combination.
struct LossFlags {
  bool cl = true;
  bool doc_kd = false;
  bool pass_kd = true;  // j = 1
  bool sent_kd = true;  // j = 2 and any finer level

  bool level_enabled(int granularity) const {
    return granularity == 1 ? pass_kd : sent_kd;
  }
  bool any_fkd() const { return pass_kd || sent_kd; }
};

struct LossConfig {
  double lambda = 1.0;
  double tau = 1.0;
  LossFlags flags;

  void validate() const;
};

/// Everything the objective needs for one query of a batch.
struct ItemScores {
  Tensor doc_student;           // [1 + n] bi-encoder scores, positive first
  Tensor doc_teacher;           // [1 + n] teacher scores; needed for doc_kd
  std::vector<LevelScores> levels;  // j = 1..M; needed for fkd
};

struct LossBreakdown {
  Tensor total;
  double cl = 0.0;
  double doc_kd = 0.0;
  double fkd = 0.0;
  std::vector<double> fkd_per_level;
};

/// Mean over items of lambda*L_cl + L_kd (if enabled) + L_fkd (enabled
/// levels). With every term disabled the total is a constant zero.
LossBreakdown fgd_total_loss(std::span<const ItemScores> batch,
                             const LossConfig& config);

}  // namespace fgd::scoring
