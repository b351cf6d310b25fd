// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "fgd/errors.hpp"
#include "fgd/grad_check.hpp"
#include "fgd/ops.hpp"
#include "fgd/scoring.hpp"

using namespace fgd;
using namespace fgd::scoring;

namespace {

std::vector<double> softmax_ref(const std::vector<double>& s, double tau) {
  double m = s[0];
  for (double v : s) m = std::max(m, v);
  std::vector<double> p(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += p[i] = std::exp((s[i] - m) / tau);
  for (double& v : p) v /= z;
  return p;
}

double kl_ref(const std::vector<double>& p, const std::vector<double>& q) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  }
  return total;
}

std::vector<double> random_scores(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 2.0);
  std::vector<double> s(n);
  for (double& v : s) v = d(rng);
  return s;
}

CrossEncoderConfig tiny_cross() {
  CrossEncoderConfig c;
  c.encoder.vocab_size = 32;
  c.encoder.hidden = 8;
  c.encoder.heads = 2;
  c.encoder.layers = 2;
  c.encoder.ffn_hidden = 12;
  c.encoder.max_doc_length = 24;
  c.encoder.max_query_length = 6;
  c.encoder.max_positions = 33;
  c.head_hidden = 8;
  return c;
}

}  // namespace

TEST_CASE("bi score is a plain dot product") {
  const Tensor u = Tensor::vector({1.0, 2.0, 3.0});
  const Tensor v = Tensor::vector({-1.0, 0.5, 2.0});
  CHECK(bi_score(u, v).item() == doctest::Approx(6.0).epsilon(1e-12));
  CHECK_THROWS_AS(bi_score(u, Tensor::vector({1.0, 2.0})), DimensionError);
}

TEST_CASE("score distribution closed forms") {
  const std::vector<double> two = {std::log(2.0), 0.0};
  const ScoreDistribution d = score_distribution(two, 1.0);
  CHECK(d.probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d.probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const std::vector<double> flat(9, 0.3);
  CHECK(contrastive_loss(score_distribution(flat, 1.0)).item() ==
        doctest::Approx(std::log(9.0)).epsilon(1e-12));

  const std::vector<double> spread = {5.0, -3.0, 1.0, 0.0};
  const ScoreDistribution hot = score_distribution(spread, 1e6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(hot.probs[i] - 0.25) < 1e-5);
}

TEST_CASE("score distribution rejects bad input") {
  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(score_distribution(two, 0.0), ConfigError);
  CHECK_THROWS_AS(score_distribution(two, -1.0), ConfigError);
  CHECK_THROWS_AS(score_distribution(one, 1.0), DimensionError);
  CHECK_THROWS_AS(score_distribution(two, 1.0, {1, 2, 3}), DimensionError);
}

TEST_CASE("distributions are shift invariant and match a reference softmax") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    const double tau = 0.1 + static_cast<double>(rng() % 100) / 20.0;
    std::vector<double> s = random_scores(n, rng);
    std::vector<double> shifted = s;
    for (double& v : shifted) v += 17.5;
    const ScoreDistribution a = score_distribution(s, tau);
    const ScoreDistribution b = score_distribution(shifted, tau);
    const std::vector<double> ref = softmax_ref(s, tau);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(a.probs[i] - b.probs[i]) < 1e-12);
      CHECK(std::abs(a.probs[i] - ref[i]) < 1e-12);
      total += a.probs[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("kd loss requires aligned candidate lists") {
  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {1.0, 2.0};
  CHECK_THROWS_AS(kd_loss(score_distribution(a, 1.0), score_distribution(b, 1.0)),
                  DimensionError);
  CHECK_THROWS_AS(kd_loss(score_distribution(a, 1.0, {7, 8, 9}),
                          score_distribution(a, 1.0, {7, 9, 8})),
                  ConfigError);
  CHECK(kd_loss(score_distribution(a, 1.0), score_distribution(a, 1.0)).item() ==
        doctest::Approx(0.0));
}

TEST_CASE("fine-grained loss matches a hand-assembled oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double tau = 0.5 + static_cast<double>(rng() % 10) / 4.0;
    std::vector<LevelScores> levels;
    double expected = 0.0;
    std::vector<double> expected_levels;
    for (int j = 1; j <= 2; ++j) {
      LevelScores level;
      level.granularity = j;
      const std::size_t k_count = 1 + rng() % 4;
      const std::size_t n = 2 + rng() % 5;
      double level_sum = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        const auto s = random_scores(n, rng);
        const auto t = random_scores(n, rng);
        level.slots.push_back({Tensor::vector(s), Tensor::vector(t)});
        level_sum += kl_ref(softmax_ref(s, tau), softmax_ref(t, tau));
      }
      expected_levels.push_back(level_sum / static_cast<double>(k_count));
      expected += expected_levels.back();
      levels.push_back(std::move(level));
    }
    std::vector<double> per_level;
    const double got = fkd_loss(levels, tau, &per_level).item();
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
    REQUIRE(per_level.size() == 2);
    CHECK(per_level[0] == doctest::Approx(expected_levels[0]).epsilon(1e-10));
    // Linear over granularities.
    const double first = fkd_loss(std::span(levels).first(1), tau).item();
    const double second = fkd_loss(std::span(levels).last(1), tau).item();
    CHECK(first + second == doctest::Approx(got).epsilon(1e-10));
  }
}

TEST_CASE("fine-grained loss needs mined negatives") {
  std::vector<LevelScores> none;
  CHECK_THROWS_AS(fkd_loss(none, 1.0), MiningRequiredError);
  LevelScores empty;
  empty.granularity = 1;
  CHECK_THROWS_AS(fkd_loss(std::span(&empty, 1), 1.0), MiningRequiredError);
  LevelScores lonely;
  lonely.granularity = 2;
  lonely.slots.push_back({Tensor::vector({1.0}), Tensor::vector({1.0})});
  CHECK_THROWS_AS(fkd_loss(std::span(&lonely, 1), 1.0), MiningRequiredError);
  LevelScores coarse;
  coarse.granularity = 0;
  coarse.slots.push_back({Tensor::vector({1.0, 0.0}), Tensor::vector({1.0, 0.0})});
  CHECK_THROWS_AS(fkd_loss(std::span(&coarse, 1), 1.0), ConfigError);
}

TEST_CASE("teacher parameters receive no gradient") {
  const CrossEncoderParams teacher = CrossEncoderParams::init(tiny_cross(), 3);
  const std::vector<int> q = {4, 5, 6};
  const std::vector<std::vector<int>> texts = {{4, 5, 9, 10}, {11, 12, 13}, {6, 20}};
  Tensor student = Tensor::vector({0.3, -0.2, 0.8}, true);

  Tape tape;
  TapeScope scope(tape);
  std::vector<Tensor> t_scores;
  for (const auto& x : texts) t_scores.push_back(cross_score(q, x, teacher));
  const Tensor teacher_scores = ops::concat(t_scores, 0);
  CHECK(teacher_scores.requires_grad());

  ItemScores item;
  item.doc_student = student;
  item.doc_teacher = teacher_scores;
  LevelScores level;
  level.granularity = 1;
  level.slots.push_back({student, teacher_scores});
  item.levels.push_back(level);
  LossConfig config;
  config.flags.doc_kd = true;
  config.flags.sent_kd = false;
  const LossBreakdown loss = fgd_total_loss(std::span(&item, 1), config);
  tape.backward(loss.total);

  CHECK(student.has_grad());
  for (const auto& [name, t] : teacher.all_tensors()) {
    INFO(name);
    if (!t.has_grad()) continue;
    for (double g : t.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("cross score input limits") {
  const CrossEncoderParams teacher = CrossEncoderParams::init(tiny_cross(), 3);
  const std::vector<int> long_q(7, 4);
  const std::vector<int> x(4, 5);
  CHECK_THROWS_AS(cross_score(long_q, x, teacher), LengthError);
  const std::vector<int> q(6, 4);
  const std::vector<int> long_x(25, 5);
  CHECK_THROWS_AS(cross_score(q, long_x, teacher), LengthError);
  CHECK(std::isfinite(cross_score(q, x, teacher).item()));
}

TEST_CASE("cross-encoder checkpoints round-trip") {
  const CrossEncoderParams a = CrossEncoderParams::init(tiny_cross(), 3);
  const auto bytes = serialize_checkpoint(a.all_tensors());
  const CrossEncoderParams b =
      CrossEncoderParams::from_tensors(tiny_cross(), deserialize_checkpoint(bytes));
  CHECK(a.fingerprint() == b.fingerprint());
  const std::vector<int> q = {4, 5};
  const std::vector<int> x = {5, 6, 7};
  CHECK(cross_score(q, x, a).item() == cross_score(q, x, b).item());
  CrossEncoderConfig other = tiny_cross();
  other.head_hidden = 4;
  CHECK_THROWS_AS(CrossEncoderParams::from_tensors(other,
                                                   deserialize_checkpoint(bytes)),
                  IntegrityError);
}

TEST_CASE("loss configuration") {
  LossConfig c;
  c.lambda = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  ItemScores item;
  item.doc_student = Tensor::vector({0.5, 0.1, -0.3}, true);
  LossConfig off;
  off.lambda = 0.0;
  off.flags.pass_kd = false;
  off.flags.sent_kd = false;
  const LossBreakdown zero = fgd_total_loss(std::span(&item, 1), off);
  CHECK(zero.total.item() == 0.0);
  CHECK_FALSE(zero.total.requires_grad());

  LossConfig doc_only;
  doc_only.flags = {true, true, false, false};
  CHECK_THROWS_AS(fgd_total_loss(std::span(&item, 1), doc_only), ConfigError);
  LossConfig fine;
  CHECK_THROWS_AS(fgd_total_loss(std::span(&item, 1), fine), MiningRequiredError);
}

TEST_CASE("full objective gradient matches finite differences") {
  // Two queries; every score is a slice of one parameter vector so a single
  // grad check covers all terms and both granularities.
  std::mt19937_64 rng(4);
  const Tensor theta = Tensor::vector(random_scores(32, rng), true);
  const Tensor teach = Tensor::vector(random_scores(32, rng));
  LossConfig config;
  config.lambda = 0.7;
  config.tau = 0.8;
  config.flags = {true, true, true, true};
  auto objective = [&](const Tensor&) {
    std::vector<ItemScores> batch(2);
    std::size_t offset = 0;
    auto take = [&](const Tensor& src, std::size_t n) {
      return ops::slice(src, 0, offset, offset + n);
    };
    for (ItemScores& item : batch) {
      item.doc_student = take(theta, 4);
      item.doc_teacher = take(teach, 4);
      offset += 4;
      for (int j = 1; j <= 2; ++j) {
        LevelScores level;
        level.granularity = j;
        for (int k = 0; k < 2; ++k) {
          level.slots.push_back({take(theta, 3), take(teach, 3)});
          offset += 3;
        }
        item.levels.push_back(level);
      }
    }
    return fgd_total_loss(batch, config).total;
  };
  const GradCheckReport report = grad_check(objective, theta, 1e-5);
  CHECK(report.max_relative_error < 1e-3);
}
