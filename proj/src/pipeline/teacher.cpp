// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "fgd/errors.hpp"
#include "fgd/ops.hpp"
#include "fgd/optim.hpp"
#include "fgd/pipeline.hpp"

namespace fgd::pipeline {

double teacher_label(std::span<const corpus::TokenId> query,
                     std::span<const corpus::TokenId> text, double scale) {
  const std::set<corpus::TokenId> wanted(query.begin(), query.end());
  if (wanted.empty()) return 0.0;
  const std::set<corpus::TokenId> present(text.begin(), text.end());
  std::size_t hit = 0;
  for (corpus::TokenId t : wanted) hit += present.count(t);
  return scale * static_cast<double>(hit) / static_cast<double>(wanted.size());
}

TeacherScorer::TeacherScorer(
    std::shared_ptr<const scoring::CrossEncoderParams> params,
    const Collection& collection)
    : params_(std::move(params)), collection_(collection) {
  if (!params_) throw ConfigError("teacher scorer needs teacher parameters");
}

double TeacherScorer::score(const QueryRecord& query, DocId doc,
                            const corpus::SpanRef& span) {
  const auto key = std::make_tuple(query.id, doc, span.granularity, span.index);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  NoGradScope no_grad;
  const corpus::Document& d = collection_.doc(doc);
  const double s =
      scoring::cross_score(query.tokens, d.span_tokens(span), *params_).item();
  cache_.emplace(key, s);
  return s;
}

namespace {

struct TeacherPair {
  const QueryRecord* query;
  DocId doc;
  corpus::SpanRef span;
};

corpus::SpanRef random_span(const corpus::Document& d, corpus::Rng& rng) {
  return d.spans[rng() % d.spans.size()];
}

}  // namespace

TeacherResult train_teacher(const Collection& collection,
                            const QueryList& queries, const TrainConfig& config,
                            const Logger& log) {
  const TeacherConfig& tc = config.teacher;
  TeacherResult result{
      scoring::CrossEncoderParams::init(config.teacher_config(), tc.seed), {}};
  if (queries.empty()) throw ConfigError("teacher training needs queries");
  std::map<int, std::vector<DocId>> by_topic;
  for (const auto& d : collection.documents) {
    for (int t : std::set<int>(d.topic_ids.begin(), d.topic_ids.end())) {
      by_topic[t].push_back(d.id);
    }
  }
  corpus::Rng rng(tc.seed);
  const std::size_t pairs_per_epoch = queries.size() * tc.pairs_per_query;
  const std::size_t steps_per_epoch =
      (pairs_per_epoch + tc.batch_size - 1) / tc.batch_size;
  OptimConfig opt = config.optim;
  opt.lr = tc.lr;
  AdamW optimizer(result.params.all_tensors(), opt, tc.epochs * steps_per_epoch);
  optimizer.zero_grad();

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    // Half the pairs come from the positive document, a quarter from a
    // document sharing the query topic, a quarter from anywhere.
    // With fresh_queries every pair gets a newly drawn query on the same
    // positive document, so the teacher cannot memorise the query set.
    std::deque<QueryRecord> fresh;
    std::vector<TeacherPair> pairs;
    for (const QueryRecord* base : queries) {
      for (std::size_t i = 0; i < tc.pairs_per_query; ++i) {
        const QueryRecord* q = base;
        if (tc.fresh_queries) {
          fresh.push_back(
              corpus::sample_query(collection, collection.doc(base->positive), rng));
          fresh.back().id = base->id;
          q = &fresh.back();
        }
        DocId doc = q->positive;
        if (i % 4 == 2) {
          const auto& same = by_topic[q->topic];
          doc = same[rng() % same.size()];
        } else if (i % 4 == 3) {
          doc = static_cast<DocId>(rng() % collection.documents.size());
        }
        pairs.push_back({q, doc, random_span(collection.doc(doc), rng)});
      }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += tc.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + tc.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (std::size_t p = start; p < end; ++p) {
        const TeacherPair& pair = pairs[p];
        const corpus::Document& d = collection.doc(pair.doc);
        const auto text = d.span_tokens(pair.span);
        const double label =
            teacher_label(pair.query->tokens, text, tc.label_scale);
        Tape tape;
        TapeScope scope(tape);
        const Tensor diff = ops::sub(
            scoring::cross_score(pair.query->tokens, text, result.params),
            Tensor::scalar(label));
        const Tensor loss = ops::mul(diff, diff);
        if (!std::isfinite(loss.item())) {
          throw TrainingError("teacher loss became non-finite in epoch " +
                              std::to_string(epoch));
        }
        epoch_loss += loss.item();
        tape.backward(ops::scale(loss, inv_b));
      }
      optimizer.step();
      optimizer.zero_grad();
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
    if (log) {
      std::ostringstream os;
      os << "teacher epoch " << epoch + 1 << "/" << tc.epochs << " mse "
         << result.epoch_loss.back();
      log(os.str());
    }
  }
  return result;
}

namespace {

// Whether the best-scored span is among the spans with the top label.
bool picks_best(const std::vector<double>& scores,
                const std::vector<double>& labels) {
  const auto best = static_cast<std::size_t>(
      std::max_element(scores.begin(), scores.end()) - scores.begin());
  return labels[best] == *std::max_element(labels.begin(), labels.end());
}

}  // namespace

double teacher_span_accuracy(TeacherScorer& teacher,
                             const Collection& collection,
                             const QueryList& queries, int granularity,
                             double label_scale) {
  if (queries.empty()) return 0.0;
  std::size_t correct = 0;
  for (const QueryRecord* q : queries) {
    const corpus::Document& d = collection.doc(q->positive);
    std::vector<double> scores, labels;
    for (const auto& span : d.spans_at(granularity)) {
      scores.push_back(teacher.score(*q, d.id, span));
      labels.push_back(teacher_label(q->tokens, d.span_tokens(span), label_scale));
    }
    correct += picks_best(scores, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(queries.size());
}

double student_span_accuracy(const encoder::EncoderParams& params,
                             const Collection& collection,
                             const QueryList& queries, int granularity,
                             encoder::SpanPooling pooling, double label_scale) {
  if (queries.empty()) return 0.0;
  NoGradScope no_grad;
  std::size_t correct = 0;
  for (const QueryRecord* q : queries) {
    const corpus::Document& d = collection.doc(q->positive);
    const Tensor u = encoder::encode_query(*q, params);
    const encoder::EncodeOutput out = encoder::encode_document(d, params);
    std::vector<double> scores, labels;
    for (const auto& span : d.spans_at(granularity)) {
      scores.push_back(
          ops::dot(u, encoder::span_embedding(out, span, pooling)).item());
      labels.push_back(teacher_label(q->tokens, d.span_tokens(span), label_scale));
    }
    correct += picks_best(scores, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(queries.size());
}

}  // namespace fgd::pipeline
