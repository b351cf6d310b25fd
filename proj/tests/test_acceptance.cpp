// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   test_acceptance [--only N,M,...] [--config PATH] [--report DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "fgd/corpus.hpp"
#include "fgd/encoder.hpp"
#include "fgd/errors.hpp"
#include "fgd/grad_check.hpp"
#include "fgd/index.hpp"
#include "fgd/mining.hpp"
#include "fgd/ops.hpp"
#include "fgd/pipeline.hpp"
#include "fgd/scoring.hpp"

#ifndef FGD_ACCEPTANCE_CONFIG
#define FGD_ACCEPTANCE_CONFIG "configs/desk.json"
#endif

using namespace fgd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor weighted_sum(const Tensor& t) {
  std::vector<double> w(t.numel());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::sin(1.3 * static_cast<double>(i) + 0.7);
  }
  return ops::dot(t, Tensor::from(t.shape(), std::move(w)));
}

corpus::CorpusConfig small_corpus(std::size_t docs, std::uint64_t seed) {
  corpus::CorpusConfig c;
  c.num_docs = docs;
  c.doc_length = 48;
  c.fragment_lengths = {16, 8};
  c.max_doc_length = 64;
  c.max_query_length = 16;
  c.seed = seed;
  return c;
}

encoder::EncoderConfig encoder_for(const corpus::CorpusConfig& c,
                                   std::size_t hidden) {
  encoder::EncoderConfig e;
  e.vocab_size = c.vocab_size;
  e.hidden = hidden;
  e.heads = 4;
  e.layers = 2;
  e.ffn_hidden = 2 * hidden;
  e.max_doc_length = c.max_doc_length;
  e.max_query_length = c.max_query_length;
  e.max_positions = c.max_doc_length + 2;
  return e;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = a.numel() == b.numel() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.numel(), b.numel()); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// 1. gradients --------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(11);
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor row = random_tensor({3}, rng);
  const Tensor other = random_tensor({2, 3}, rng);
  const Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({3}, rng);
  const std::vector<int> ids = {0, 2, 2, 1};
  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> op;
    Shape shape;
    double lo = -1.0, hi = 1.0;
  };
  const std::vector<Case> cases = {
      {"add", [&](const Tensor& x) { return ops::add(x, row); }, {2, 3}},
      {"sub", [&](const Tensor& x) { return ops::sub(x, other); }, {2, 3}},
      {"mul", [&](const Tensor& x) { return ops::mul(x, x); }, {2, 3}},
      {"scale", [&](const Tensor& x) { return ops::scale(x, -2.5); }, {2, 3}},
      {"matmul", [&](const Tensor& x) { return ops::matmul(x, w); }, {2, 4}},
      {"transpose", [&](const Tensor& x) { return ops::transpose(x); }, {2, 3}},
      {"reshape", [&](const Tensor& x) { return ops::reshape(x, {6}); }, {2, 3}},
      {"concat", [&](const Tensor& x) {
         return ops::concat(std::vector<Tensor>{x, other}, 0); }, {2, 3}},
      {"slice", [&](const Tensor& x) { return ops::slice(x, 0, 1, 3); }, {4, 3}},
      {"pick", [&](const Tensor& x) { return ops::pick(x, 4); }, {2, 3}},
      {"sum", [&](const Tensor& x) { return ops::sum(x, 1); }, {2, 3, 2}},
      {"sum_all", [&](const Tensor& x) { return ops::sum_all(x); }, {2, 3}},
      {"dot", [&](const Tensor& x) { return ops::dot(x, row); }, {3}},
      {"exp", [&](const Tensor& x) { return ops::exp(x); }, {2, 3}},
      {"log", [&](const Tensor& x) { return ops::log(x); }, {2, 3}, 0.5, 2.0},
      {"tanh", [&](const Tensor& x) { return ops::tanh(x); }, {2, 3}},
      {"gelu", [&](const Tensor& x) { return ops::gelu(x); }, {2, 3}, -3.0, 3.0},
      {"layer_norm", [&](const Tensor& x) {
         return ops::layer_norm(x, gamma, beta); }, {2, 3}},
      {"softmax", [&](const Tensor& x) { return ops::softmax(x, 1); }, {3, 2}},
      {"log_softmax", [&](const Tensor& x) { return ops::log_softmax(x, 0); }, {3, 2}},
      {"embedding", [&](const Tensor& x) { return ops::embedding(x, ids); }, {3, 2}},
      {"kl_divergence", [&](const Tensor& x) {
         return ops::kl_divergence(ops::softmax(x, 0), ops::softmax(row, 0)); }, {3}},
  };
  double worst = 0.0;
  std::string worst_name;
  for (const Case& c : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      Tensor x = random_tensor(c.shape, rng, c.lo, c.hi);
      const auto r = grad_check(
          [&](const Tensor& p) { return weighted_sum(c.op(p)); }, x, 1e-4);
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_name = c.name;
      }
    }
  }

  // The full objective on a 2-query batch, differentiated with respect to
  // every parameter tensor of a small encoder.
  const corpus::CorpusConfig cc = small_corpus(6, 3);
  const corpus::Collection col = corpus::generate_collection(cc);
  encoder::EncoderConfig ec = encoder_for(cc, 8);
  ec.heads = 2;
  ec.ffn_hidden = 8;
  ec.layers = 2;
  encoder::EncoderParams params = encoder::EncoderParams::init(ec, 5);
  std::uniform_real_distribution<double> teacher_dist(-2.0, 2.0);
  std::vector<double> teacher_scores(256);
  for (double& t : teacher_scores) t = teacher_dist(rng);
  scoring::LossConfig loss;
  loss.lambda = 0.7;
  loss.tau = 0.9;
  loss.flags = {true, true, true, true};
  auto objective = [&](const Tensor&) {
    std::size_t t = 0;
    auto teacher = [&](std::size_t n) {
      std::vector<double> v(teacher_scores.begin() + t, teacher_scores.begin() + t + n);
      t += n;
      return Tensor::vector(std::move(v));
    };
    std::vector<scoring::ItemScores> batch;
    for (int qi = 0; qi < 2; ++qi) {
      const corpus::QueryRecord& q = col.queries[qi];
      const Tensor u = encoder::encode_query(q, params);
      const std::vector<corpus::DocId> docs = {q.positive,
                                               static_cast<corpus::DocId>(qi + 2),
                                               static_cast<corpus::DocId>(qi + 4)};
      std::vector<encoder::EncodeOutput> outs;
      std::vector<Tensor> doc_scores;
      for (corpus::DocId d : docs) {
        outs.push_back(encoder::encode_document(col.doc(d), params));
        doc_scores.push_back(ops::reshape(ops::dot(u, outs.back().cls), {1}));
      }
      scoring::ItemScores item;
      item.doc_student = ops::concat(doc_scores, 0);
      item.doc_teacher = teacher(docs.size());
      for (int j = 1; j <= 2; ++j) {
        scoring::LevelScores level;
        level.granularity = j;
        std::vector<Tensor> negs;
        for (std::size_t n = 1; n < docs.size(); ++n) {
          for (const auto& s : col.doc(docs[n]).spans_at(j)) {
            negs.push_back(ops::reshape(
                ops::dot(u, encoder::span_embedding(outs[n], s)), {1}));
          }
        }
        for (const auto& s : col.doc(q.positive).spans_at(j)) {
          std::vector<Tensor> slot = {ops::reshape(
              ops::dot(u, encoder::span_embedding(outs[0], s)), {1})};
          slot.insert(slot.end(), negs.begin(), negs.end());
          level.slots.push_back({ops::concat(slot, 0), teacher(slot.size())});
        }
        item.levels.push_back(level);
      }
      batch.push_back(item);
    }
    return scoring::fgd_total_loss(batch, loss).total;
  };
  double worst_loss = 0.0;
  std::string worst_tensor;
  for (auto& [name, tensor] : params.tensors()) {
    const auto r = grad_check(objective, tensor, 1e-4);
    if (r.max_relative_error > worst_loss) {
      worst_loss = r.max_relative_error;
      worst_tensor = name;
    }
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst < 1e-3 && worst_loss < 1e-3 && elapsed < 60.0;
  o.detail = std::to_string(cases.size()) + " ops, worst " + fmt(worst, 3) + " (" +
             worst_name + "); full objective over " +
             std::to_string(params.tensors().size()) + " encoder tensors, worst " +
             fmt(worst_loss, 3) + " (" + worst_tensor + "); " + fmt(elapsed, 3) + " s";
  return o;
}

// 2. pooling -----------------------------------------------------------------

Outcome pooling_consistency() {
  const auto start = Clock::now();
  corpus::CorpusConfig cc = small_corpus(100, 21);
  cc.doc_length = 64;
  const corpus::Collection col = corpus::generate_collection(cc);
  const encoder::EncoderParams params =
      encoder::EncoderParams::init(encoder_for(cc, 32), 17);
  double worst_cls = 0.0, worst_add = 0.0;
  for (const corpus::Document& d : col.documents) {
    const encoder::EncodeOutput out = encoder::encode_document(d, params);
    const corpus::SpanRef& whole = d.span(0, 1);
    worst_cls = std::max(worst_cls, max_abs_diff(encoder::span_embedding(out, whole), out.cls));
    Tensor total = encoder::special_token_pooling(out);
    for (const auto& s : d.spans_at(1)) {
      total = ops::add(total, encoder::pre_ffn_pooling(out, s));
    }
    worst_add = std::max(worst_add,
                         max_abs_diff(total, encoder::pre_ffn_pooling(out, whole)));
  }
  const double elapsed = seconds_since(start);
  return {worst_cls <= 1e-9 && worst_add <= 1e-9 && elapsed < 30.0,
          "100 docs; |span(j=0) - cls| " + fmt(worst_cls, 3) +
              ", additivity error " + fmt(worst_add, 3) + "; " + fmt(elapsed, 3) + " s"};
}

// 3. losses ------------------------------------------------------------------

Outcome loss_closed_forms() {
  const std::vector<double> flat(9, 0.37);
  const double cl = scoring::contrastive_loss(scoring::score_distribution(
                                                  std::span<const double>(flat), 1.0))
                        .item();
  const double e1 = std::abs(cl - std::log(9.0));
  const double kl2 =
      ops::kl_divergence(Tensor::vector({1.0, 0.0}), Tensor::vector({0.5, 0.5})).item();
  const double e2 = std::abs(kl2 - std::log(2.0));
  const double kl3 =
      ops::kl_divergence(Tensor::vector({0.5, 0.5}), Tensor::vector({0.9, 0.1})).item();
  const double e3 = std::abs(kl3 - (0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(5.0)));
  const double e3_fixture = std::abs(kl3 - 0.510826);
  const std::vector<double> logits = {0.3, -1.2, 2.0, 0.0};
  const auto p = scoring::score_distribution(std::span<const double>(logits), 0.7);
  const double self = std::abs(scoring::kd_loss(p, p).item());
  const bool ok = e1 <= 1e-9 && e2 <= 1e-9 && e3 <= 1e-9 && e3_fixture < 1e-6 &&
                  self <= 1e-9;
  return {ok, "|cl - ln 9| " + fmt(e1, 3) + ", |KL - ln 2| " + fmt(e2, 3) +
                  ", KL fixture " + fmt(kl3, 9) + ", KL(p||p) " + fmt(self, 3)};
}

// 4. mining ------------------------------------------------------------------

bool overlaps(const corpus::SpanRef& a, const corpus::SpanRef& b) {
  return a.begin <= b.end && b.begin <= a.end;
}

Outcome mining_containment() {
  const corpus::CorpusConfig cc = small_corpus(500, 31);
  const corpus::Collection col = corpus::generate_collection(cc);
  const encoder::EncoderParams params =
      encoder::EncoderParams::init(encoder_for(cc, 16), 2);
  const index::DenseIndex idx = index::build_index(col, params, true);
  mining::MiningConfig mc;
  mc.depths = {20, 10, 10};
  std::size_t violations = 0, pools = 0, spans = 0;
  for (const corpus::QueryRecord& q : col.queries) {
    const mining::NegativePool pool = mining::mine_pool(q, idx, params, mc);
    ++pools;
    try {
      mining::validate_pool(pool);
    } catch (const Error&) {
      ++violations;
    }
    std::set<corpus::DocId> parents;
    for (const auto& n : pool.levels[0]) {
      violations += n.doc == q.positive;
      parents.insert(n.doc);
    }
    for (std::size_t j = 1; j < pool.levels.size(); ++j) {
      for (const auto& n : pool.levels[j]) {
        ++spans;
        violations += n.doc == q.positive;
        violations += n.span.granularity != static_cast<int>(j);
        bool inside = parents.count(n.doc) > 0;
        if (j >= 2) {
          inside = std::any_of(pool.levels[j - 1].begin(), pool.levels[j - 1].end(),
                               [&](const auto& p) {
                                 return p.doc == n.doc && overlaps(p.span, n.span);
                               });
        }
        violations += !inside;
      }
    }
  }
  return {violations == 0, std::to_string(pools) + " pools, " + std::to_string(spans) +
                               " span negatives, " + std::to_string(violations) +
                               " violations"};
}

// 5. retrieval ---------------------------------------------------------------

std::vector<std::pair<corpus::DocId, double>> brute_rank(
    std::vector<std::pair<corpus::DocId, double>> scored) {
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return scored;
}

Outcome retrieval_exactness() {
  const corpus::CorpusConfig cc = small_corpus(500, 41);
  const corpus::Collection col = corpus::generate_collection(cc);
  const encoder::EncoderParams params =
      encoder::EncoderParams::init(encoder_for(cc, 16), 4);
  const index::DenseIndex idx = index::build_index(col, params, true);
  NoGradScope no_grad;
  std::vector<encoder::EncodeOutput> outs;
  for (const auto& d : col.documents) outs.push_back(encoder::encode_document(d, params));
  const double gamma = 0.4;
  std::size_t mismatches = 0, gamma0 = 0;
  for (std::size_t qi = 0; qi < 50; ++qi) {
    const auto& q = col.queries[qi * 7 % col.queries.size()];
    const Tensor u = encoder::encode_query(q, params);
    std::vector<std::pair<corpus::DocId, double>> single, multi;
    for (const auto& d : col.documents) {
      const double s = ops::dot(u, outs[d.id].cls).item();
      double extra = 0.0;
      for (int j = 1; j <= 2; ++j) {
        double best = -INFINITY;
        for (const auto& sp : d.spans_at(j)) {
          best = std::max(best, ops::dot(u, encoder::span_embedding(outs[d.id], sp)).item());
        }
        extra += best;
      }
      single.push_back({d.id, s});
      multi.push_back({d.id, s + gamma * extra});
    }
    single = brute_rank(single);
    multi = brute_rank(multi);
    const auto a = index::search(u.data(), idx, col.documents.size());
    const auto b = index::ensemble_search(u.data(), idx, col.documents.size(), gamma);
    const auto c = index::ensemble_search(u.data(), idx, col.documents.size(), 0.0);
    for (std::size_t r = 0; r < col.documents.size(); ++r) {
      mismatches += a.hits[r].doc != single[r].first ||
                    std::abs(a.hits[r].score - single[r].second) > 1e-9;
      mismatches += b.hits[r].doc != multi[r].first ||
                    std::abs(b.hits[r].score - multi[r].second) > 1e-9;
      gamma0 += !(c.hits[r] == a.hits[r]);
    }
  }
  return {mismatches == 0 && gamma0 == 0,
          "50 queries x 500 docs, full rankings; " + std::to_string(mismatches) +
              " rank mismatches, " + std::to_string(gamma0) +
              " differences between gamma=0 and single-vector search"};
}

// 6. metrics -----------------------------------------------------------------

Outcome metric_fixtures() {
  index::Run run;
  run[0] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  run[1] = {0, 2, 3, 1, 4, 5, 6, 7, 8, 9};
  run[2] = {0, 1, 3, 4, 5, 6, 7, 8, 9, 2};
  run[3] = {4, 3, 0, 1, 2, 5, 6, 7, 8, 9};
  run[4] = {4, 0, 7, 1, 2, 3, 5, 6, 8, 9};
  const index::Qrels qrels{{0, {0}}, {1, {1}}, {2, {2}}, {3, {3}}, {4, {4, 7}}};
  const double l2_3 = std::log2(3.0), l2_4 = 2.0, l2_5 = std::log2(5.0),
               l2_11 = std::log2(11.0);
  const double mrr10 = (1.0 + 0.25 + 0.1 + 0.5 + 1.0) / 5.0;
  const double r3 = (1.0 + 0.0 + 0.0 + 1.0 + 1.0) / 5.0;
  const double r1 = (1.0 + 0.5) / 5.0;
  const double ndcg10 =
      (1.0 + 1.0 / l2_5 + 1.0 / l2_11 + 1.0 / l2_3 + (1.0 + 1.0 / l2_4) / (1.0 + 1.0 / l2_3)) /
      5.0;
  const index::Run single{{1, run[1]}};
  double worst = 0.0;
  auto diff = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
  };
  diff(index::mrr_at_k(run, qrels, 10).value, mrr10);
  diff(index::recall_at_k(run, qrels, 3).value, r3);
  diff(index::recall_at_k(run, qrels, 1).value, r1);
  diff(index::recall_at_k(run, qrels, 10).value, 1.0);
  diff(index::ndcg_at_k(run, qrels, 10).value, ndcg10);
  diff(index::ndcg_at_k(single, qrels, 10).value, 1.0 / l2_5);
  return {worst <= 1e-12, "max deviation from hand-computed values " + fmt(worst, 3)};
}

// 7-9. matrix ----------------------------------------------------------------

struct MatrixRun {
  pipeline::MatrixReport report;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

double median_over_seeds(const pipeline::MatrixReport& r, const std::string& row,
                         const std::function<std::optional<double>(const pipeline::RowResult&)>& get,
                         std::size_t* runs = nullptr) {
  std::vector<double> v;
  for (const auto& s : r.seeds) {
    const auto* x = s.row(row);
    if (!x || !x->ok) continue;
    if (const auto value = get(*x)) v.push_back(*value);
  }
  if (runs) *runs = v.size();
  return v.empty() ? NAN : pipeline::median(v);
}

std::optional<double> mrr10(const pipeline::RowResult& r) {
  const auto it = r.metrics.find("mrr@10");
  if (it == r.metrics.end()) return std::nullopt;
  return it->second;
}

std::optional<double> margin(const pipeline::RowResult& r) { return r.margin_median; }

Outcome ablation_direction(const MatrixRun& m) {
  if (!m.ok) return {false, "matrix failed: " + m.error};
  std::size_t n_fgd = 0, n_all = 0;
  const double fgd = median_over_seeds(m.report, "FGD", mrr10, &n_fgd);
  const double none = median_over_seeds(m.report, "w/o ALL", mrr10, &n_all);
  const double pass = median_over_seeds(m.report, "w/o pass-distill", mrr10);
  const double sent = median_over_seeds(m.report, "w/o sent-distill", mrr10);
  const bool ok = n_fgd == 3 && n_all == 3 && fgd > none && pass >= none &&
                  sent >= none && m.seconds < 1800.0;
  return {ok, "median dev MRR@10 over " + std::to_string(n_fgd) + " seeds: FGD " +
                  fmt(fgd, 4) + ", w/o pass-distill " + fmt(pass, 4) +
                  ", w/o sent-distill " + fmt(sent, 4) + ", w/o ALL " + fmt(none, 4) +
                  "; matrix " + fmt(m.seconds, 4) + " s"};
}

Outcome margin_direction(const MatrixRun& m) {
  if (!m.ok) return {false, "matrix failed: " + m.error};
  std::size_t n = 0;
  const double fgd = median_over_seeds(m.report, "FGD", margin, &n);
  const double doc = median_over_seeds(m.report, "only doc-distill", margin);
  return {n == 3 && fgd > doc, "median normalized margin: FGD " + fmt(fgd, 4) +
                                   ", only doc-distill " + fmt(doc, 4)};
}

Outcome gamma_direction(const MatrixRun& m) {
  if (!m.ok) return {false, "matrix failed: " + m.error};
  std::map<double, std::vector<double>> by_gamma;
  for (const auto& s : m.report.seeds) {
    for (const auto& [g, v] : s.gamma_sweep) by_gamma[g].push_back(v);
  }
  if (by_gamma.empty() || by_gamma.begin()->first != 0.0) {
    return {false, "gamma sweep missing or without gamma = 0"};
  }
  double best_gamma = 0.0, best = -1.0;
  std::ostringstream curve;
  for (const auto& [g, values] : by_gamma) {
    const double v = pipeline::median(values);
    curve << g << ":" << std::setprecision(4) << v << " ";
    if (v > best) {
      best = v;
      best_gamma = g;
    }
  }
  return {best_gamma > 0.0, "peak at gamma " + fmt(best_gamma, 2) +
                                " (median MRR@10 by gamma: " + curve.str() + ")"};
}

// 10. determinism ------------------------------------------------------------

Outcome determinism() {
  const auto c = pipeline::TrainConfig::load(FGD_TINY_CONFIG);
  const auto rows = pipeline::ablation_rows();
  const auto first_run = pipeline::run_experiment_matrix(c, rows);
  for (const auto& s : first_run.seeds) {
    if (!s.ok) return {false, "seed " + std::to_string(s.seed) + " failed: " + s.error};
    for (const auto& r : rows) {
      const auto* got = s.row(r.name);
      if (!got || !got->ok) return {false, "row " + r.name + " did not finish"};
    }
  }
  const auto a = first_run.to_json().dump();
  const auto b = pipeline::run_experiment_matrix(c, rows).to_json().dump();
  std::size_t first = 0;
  while (first < std::min(a.size(), b.size()) && a[first] == b[first]) ++first;
  const bool same = a == b;
  return {same, same ? "two full runs of every row produced byte-identical reports (" +
                           std::to_string(a.size()) + " bytes)"
                     : "reports differ from byte " + std::to_string(first)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::string config_path = FGD_ACCEPTANCE_CONFIG;
  fs::path report_dir = ".";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string x; std::getline(ss, x, ',');) only.insert(std::stoi(x));
    } else if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (arg == "--report" && i + 1 < argc) {
      report_dir = argv[++i];
    } else {
      std::cerr << "usage: test_acceptance [--only N,...] [--config PATH] [--report DIR]\n";
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  MatrixRun matrix;
  bool matrix_done = false;
  auto run_matrix = [&]() -> const MatrixRun& {
    if (matrix_done) return matrix;
    matrix_done = true;
    const auto start = Clock::now();
    try {
      const auto config = pipeline::TrainConfig::load(config_path);
      matrix.report = pipeline::run_experiment_matrix(
          config, pipeline::ablation_rows(),
          [](const std::string& s) { std::cerr << "  [matrix] " << s << '\n'; });
      matrix.ok = true;
      fs::create_directories(report_dir);
      std::ofstream(report_dir / "acceptance-matrix.json") << matrix.report.to_json().dump(2);
      std::ofstream(report_dir / "acceptance-matrix.md") << matrix.report.to_markdown();
    } catch (const std::exception& e) {
      matrix.error = e.what();
    }
    matrix.seconds = seconds_since(start);
    return matrix;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"pooling consistency", pooling_consistency},
      {"loss closed forms", loss_closed_forms},
      {"mining containment", mining_containment},
      {"retrieval exactness", retrieval_exactness},
      {"metric fixtures", metric_fixtures},
      {"FGD beats contrastive-only stage 2", [&] { return ablation_direction(run_matrix()); }},
      {"FGD margin exceeds doc-level distillation", [&] { return margin_direction(run_matrix()); }},
      {"ensemble peaks at gamma > 0", [&] { return gamma_direction(run_matrix()); }},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " ("
              << criteria[i].first << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
