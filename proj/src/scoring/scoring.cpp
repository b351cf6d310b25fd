// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/scoring.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fgd/errors.hpp"
#include "fgd/ops.hpp"

namespace fgd::scoring {

Tensor bi_score(const Tensor& u, const Tensor& v) {
  if (u.numel() != v.numel()) {
    throw DimensionError("bi_score: width mismatch " +
                         shape_to_string(u.shape()) + " vs " +
                         shape_to_string(v.shape()));
  }
  return ops::dot(u, v);
}

CrossEncoderParams CrossEncoderParams::init(const CrossEncoderConfig& config,
                                            std::uint64_t seed) {
  CrossEncoderParams p;
  p.config_ = config;
  p.encoder_ = encoder::EncoderParams::init(config.encoder, seed);
  const std::size_t h = config.encoder.hidden, m = config.head_hidden;
  if (m == 0) throw ConfigError("cross-encoder: head_hidden must be positive");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto xavier = [&](std::size_t in, std::size_t out) {
    Tensor t = Tensor::zeros({in, out}, true);
    std::normal_distribution<double> dist(
        0.0, std::sqrt(2.0 / static_cast<double>(in + out)));
    for (double& v : t.mutable_data()) v = dist(rng);
    return t;
  };
  p.head_.add("head.w1", xavier(h, m));
  p.head_.add("head.b1", Tensor::zeros({m}, true));
  p.head_.add("head.w2", xavier(m, 1));
  p.head_.add("head.b2", Tensor::zeros({1}, true));
  return p;
}

CrossEncoderParams CrossEncoderParams::from_tensors(
    const CrossEncoderConfig& config, const NamedTensors& tensors) {
  CrossEncoderParams p;
  p.config_ = config;
  NamedTensors enc;
  for (const auto& [name, t] : tensors) {
    if (name.rfind("head.", 0) == 0) {
      Tensor h = t;
      h.set_requires_grad(true);
      p.head_.add(name, h);
    } else {
      enc.add(name, t);
    }
  }
  p.encoder_ = encoder::EncoderParams::from_tensors(config.encoder,
                                                    std::move(enc));
  const Shape w1 = {config.encoder.hidden, config.head_hidden};
  if (!p.head_.contains("head.w1") || p.head_.at("head.w1").shape() != w1 ||
      !p.head_.contains("head.w2") ||
      p.head_.at("head.w2").shape() != Shape{config.head_hidden, 1} ||
      !p.head_.contains("head.b1") || !p.head_.contains("head.b2") ||
      p.head_.at("head.b2").numel() != 1) {
    throw IntegrityError("cross-encoder checkpoint head does not match the "
                         "configured shape");
  }
  return p;
}

NamedTensors CrossEncoderParams::all_tensors() const {
  NamedTensors all;
  for (const auto& [name, t] : encoder_.tensors()) all.add(name, t);
  for (const auto& [name, t] : head_) all.add(name, t);
  return all;
}

std::string CrossEncoderParams::fingerprint() const {
  return checkpoint_fingerprint(all_tensors());
}

Tensor cross_score(std::span<const TokenId> query,
                   std::span<const TokenId> text,
                   const CrossEncoderParams& params) {
  const encoder::EncoderConfig& c = params.config().encoder;
  if (query.size() > c.max_query_length) {
    throw LengthError("cross_score: query of " + std::to_string(query.size()) +
                      " tokens exceeds " + std::to_string(c.max_query_length));
  }
  const std::size_t total = query.size() + text.size() + 3;
  if (total > c.max_positions) {
    throw LengthError("cross_score: [CLS] q [SEP] x [SEP] has " +
                      std::to_string(total) + " positions, maximum is " +
                      std::to_string(c.max_positions));
  }
  std::vector<TokenId> seq;
  seq.reserve(total);
  seq.push_back(corpus::kCls);
  seq.insert(seq.end(), query.begin(), query.end());
  seq.push_back(corpus::kSep);
  seq.insert(seq.end(), text.begin(), text.end());
  seq.push_back(corpus::kSep);
  const encoder::EncodeOutput out = encoder::encode_tokens(seq, params.encoder());
  const NamedTensors& head = params.head();
  const Tensor cls = ops::reshape(out.cls, {1, out.cls.numel()});
  const Tensor hidden = ops::tanh(ops::add(ops::matmul(cls, head.at("head.w1")),
                                           head.at("head.b1")));
  const Tensor score = ops::add(ops::matmul(hidden, head.at("head.w2")),
                                head.at("head.b2"));
  return ops::reshape(score, {1});
}

ScoreDistribution score_distribution(const Tensor& scores, double tau,
                                     std::vector<std::uint64_t> ids) {
  if (!(tau > 0.0)) {
    throw ConfigError("score_distribution: temperature must be positive, got " +
                      std::to_string(tau));
  }
  if (scores.numel() < 2) {
    throw DimensionError("score_distribution: need at least 2 candidates, got " +
                         std::to_string(scores.numel()));
  }
  if (!ids.empty() && ids.size() != scores.numel()) {
    throw DimensionError("score_distribution: " + std::to_string(ids.size()) +
                         " ids for " + std::to_string(scores.numel()) +
                         " scores");
  }
  ScoreDistribution d;
  d.candidate_ids = std::move(ids);
  d.temperature = tau;
  d.logits = scores.rank() == 1 ? scores : ops::reshape(scores, {scores.numel()});
  const Tensor scaled = tau == 1.0 ? d.logits : ops::scale(d.logits, 1.0 / tau);
  d.probs = ops::softmax(scaled, 0);
  d.log_probs = ops::log_softmax(scaled, 0);
  return d;
}

ScoreDistribution score_distribution(std::span<const double> scores, double tau,
                                     std::vector<std::uint64_t> ids) {
  if (scores.size() < 2) {
    throw DimensionError("score_distribution: need at least 2 candidates, got " +
                         std::to_string(scores.size()));
  }
  return score_distribution(
      Tensor::vector(std::vector<double>(scores.begin(), scores.end())), tau,
      std::move(ids));
}

Tensor contrastive_loss(const ScoreDistribution& dist) {
  return ops::neg(ops::pick(dist.log_probs, 0));
}

Tensor kd_loss(const ScoreDistribution& student,
               const ScoreDistribution& teacher) {
  if (student.size() != teacher.size()) {
    throw DimensionError("kd_loss: student has " +
                         std::to_string(student.size()) +
                         " candidates, teacher " +
                         std::to_string(teacher.size()));
  }
  if (!student.candidate_ids.empty() && !teacher.candidate_ids.empty() &&
      student.candidate_ids != teacher.candidate_ids) {
    throw ConfigError("kd_loss: candidate lists differ between student and "
                      "teacher");
  }
  return ops::kl_divergence(student.probs, teacher.probs.detach());
}

Tensor fkd_loss(std::span<const LevelScores> levels, double tau,
                std::vector<double>* per_level) {
  if (levels.empty()) {
    throw MiningRequiredError("fkd_loss: no granularity levels supplied");
  }
  Tensor total;
  if (per_level) per_level->clear();
  for (const LevelScores& level : levels) {
    if (level.granularity < 1) {
      throw ConfigError("fkd_loss: granularity 0 is learned by the "
                        "contrastive term only");
    }
    if (level.slots.empty()) {
      throw MiningRequiredError("fkd_loss: no positive slots at j=" +
                                std::to_string(level.granularity));
    }
    Tensor level_sum;
    for (std::size_t k = 0; k < level.slots.size(); ++k) {
      const SlotScores& slot = level.slots[k];
      if (!slot.student.defined() || slot.student.numel() < 2) {
        throw MiningRequiredError("fkd_loss: no negatives for (j=" +
                                  std::to_string(level.granularity) +
                                  ", k=" + std::to_string(k + 1) + ")");
      }
      const Tensor kl = kd_loss(score_distribution(slot.student, tau),
                                score_distribution(slot.teacher, tau));
      level_sum = level_sum.defined() ? ops::add(level_sum, kl) : kl;
    }
    const Tensor averaged =
        ops::scale(level_sum, 1.0 / static_cast<double>(level.slots.size()));
    if (per_level) per_level->push_back(averaged.item());
    total = total.defined() ? ops::add(total, averaged) : averaged;
  }
  return total;
}

void LossConfig::validate() const {
  if (lambda < 0.0) {
    throw ConfigError("lambda must be non-negative, got " +
                      std::to_string(lambda));
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

LossBreakdown fgd_total_loss(std::span<const ItemScores> batch,
                             const LossConfig& config) {
  config.validate();
  if (batch.empty()) throw ConfigError("fgd_total_loss: empty batch");
  const LossFlags& f = config.flags;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;
  Tensor total;
  auto accumulate = [&](const Tensor& term) {
    total = total.defined() ? ops::add(total, term) : term;
  };
  for (const ItemScores& item : batch) {
    const ScoreDistribution student =
        score_distribution(item.doc_student, config.tau);
    if (f.cl) {
      const Tensor cl = contrastive_loss(student);
      out.cl += cl.item() * inv_b;
      if (config.lambda != 0.0) accumulate(ops::scale(cl, config.lambda));
    }
    if (f.doc_kd) {
      if (!item.doc_teacher.defined()) {
        throw ConfigError("fgd_total_loss: doc_kd enabled without teacher "
                          "document scores");
      }
      const Tensor kd =
          kd_loss(student, score_distribution(item.doc_teacher, config.tau));
      out.doc_kd += kd.item() * inv_b;
      accumulate(kd);
    }
    if (f.any_fkd()) {
      std::vector<LevelScores> enabled;
      for (const LevelScores& level : item.levels) {
        if (f.level_enabled(level.granularity)) enabled.push_back(level);
      }
      if (enabled.empty()) {
        throw MiningRequiredError("fgd_total_loss: fine-grained terms enabled "
                                  "but no span scores supplied");
      }
      std::vector<double> per_level;
      const Tensor fkd = fkd_loss(enabled, config.tau, &per_level);
      out.fkd += fkd.item() * inv_b;
      if (out.fkd_per_level.size() < per_level.size()) {
        out.fkd_per_level.resize(per_level.size(), 0.0);
      }
      for (std::size_t j = 0; j < per_level.size(); ++j) {
        out.fkd_per_level[j] += per_level[j] * inv_b;
      }
      accumulate(fkd);
    }
  }
  out.total = total.defined() ? ops::scale(total, inv_b) : Tensor::scalar(0.0);
  return out;
}

}  // namespace fgd::scoring
