// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/config.hpp"

#include <fstream>

#include "fgd/checkpoint.hpp"
#include "fgd/errors.hpp"
#include "fgd/index.hpp"

namespace fgd::pipeline {

using nlohmann::json;

namespace {

void require_positive(std::size_t v, const std::string& name) {
  if (v == 0) throw ConfigError(name + " must be positive");
}

// Recursively rejects keys of `user` that `defaults` does not have.
void check_known(const json& user, const json& defaults, const std::string& at) {
  if (!user.is_object()) return;
  if (!defaults.is_object()) {
    throw ConfigError("config key '" + at + "' is not a section");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string path = at.empty() ? key : at + "." + key;
    if (!defaults.contains(key)) {
      throw ConfigError("unknown config key '" + path + "'");
    }
    if (defaults[key].is_object()) check_known(value, defaults[key], path);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

std::string to_string(encoder::SpanPooling pooling) {
  return pooling == encoder::SpanPooling::kMean ? "mean" : "global_attention";
}

encoder::SpanPooling span_pooling_from_string(const std::string& name) {
  if (name == "global_attention") return encoder::SpanPooling::kGlobalAttention;
  if (name == "mean") return encoder::SpanPooling::kMean;
  throw ConfigError("unknown span pooling '" + name + "'");
}

encoder::EncoderConfig TrainConfig::encoder_config() const {
  encoder::EncoderConfig c;
  c.vocab_size = corpus.vocab_size;
  c.hidden = hidden;
  c.heads = heads;
  c.layers = layers;
  c.ffn_hidden = ffn_hidden;
  c.max_doc_length = corpus.max_doc_length;
  c.max_query_length = corpus.max_query_length;
  c.max_positions = corpus.max_doc_length + 2;
  return c;
}

scoring::CrossEncoderConfig TrainConfig::teacher_config() const {
  scoring::CrossEncoderConfig c;
  c.encoder.vocab_size = corpus.vocab_size;
  c.encoder.hidden = teacher.hidden;
  c.encoder.heads = teacher.heads;
  c.encoder.layers = teacher.layers;
  c.encoder.ffn_hidden = teacher.ffn_hidden;
  c.encoder.max_doc_length = corpus.max_doc_length;
  c.encoder.max_query_length = corpus.max_query_length;
  c.encoder.max_positions = corpus.max_query_length + corpus.max_doc_length + 3;
  c.head_hidden = teacher.head_hidden;
  return c;
}

void TrainConfig::validate() const {
  require_positive(corpus.num_docs, "corpus.num_docs");
  require_positive(corpus.doc_length, "corpus.doc_length");
  require_positive(corpus.query_length, "corpus.query_length");
  if (corpus.doc_length > corpus.max_doc_length) {
    throw ConfigError("corpus.doc_length exceeds corpus.max_doc_length");
  }
  if (corpus.query_length > corpus.max_query_length) {
    throw ConfigError("corpus.query_length exceeds corpus.max_query_length");
  }
  corpus::validate_fragment_lengths(corpus.fragment_lengths);
  encoder_config().validate();
  teacher_config().encoder.validate();
  require_positive(teacher.head_hidden, "teacher.head_hidden");
  require_positive(teacher.epochs, "teacher.epochs");
  require_positive(teacher.pairs_per_query, "teacher.pairs_per_query");
  require_positive(teacher.batch_size, "teacher.batch_size");
  if (!(teacher.lr > 0.0)) throw ConfigError("teacher.lr must be positive");
  if (!(teacher.label_scale > 0.0)) {
    throw ConfigError("teacher.label_scale must be positive");
  }
  require_positive(splits.warm_queries, "splits.warm_queries");
  require_positive(splits.train_queries, "splits.train_queries");
  require_positive(splits.dev_queries, "splits.dev_queries");
  if (splits.warm_queries + splits.train_queries + splits.dev_queries >
      corpus.num_docs) {
    throw ConfigError("splits need more queries than the corpus has (one "
                      "query per document)");
  }
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (optim.weight_decay < 0.0) {
    throw ConfigError("optim.weight_decay must be non-negative");
  }
  if (optim.warmup_fraction < 0.0 || optim.warmup_fraction >= 1.0) {
    throw ConfigError("optim.warmup_fraction must lie in [0, 1)");
  }
  require_positive(schedule.epochs_warm, "schedule.epochs_warm");
  require_positive(schedule.epochs_stage1, "schedule.epochs_stage1");
  require_positive(schedule.epochs_stage2, "schedule.epochs_stage2");
  require_positive(schedule.batch_size, "schedule.batch_size");
  require_positive(schedule.negatives, "schedule.negatives");
  require_positive(schedule.max_span_negatives, "schedule.max_span_negatives");
  if (schedule.random_negatives > schedule.negatives) {
    throw ConfigError("schedule.random_negatives exceeds schedule.negatives");
  }
  if (schedule.positives != 1) {
    throw ConfigError("schedule.positives: only one positive per query is "
                      "supported");
  }
  loss.validate();
  if (gamma < 0.0) throw ConfigError("gamma must be non-negative");
  for (double g : eval.gamma_grid) {
    if (g < 0.0) throw ConfigError("eval.gamma_grid entries must be >= 0");
  }
  mining.validate(static_cast<int>(corpus.fragment_lengths.size()));
  if (mining.depths[0] < schedule.negatives) {
    throw ConfigError("mining depth is smaller than the negatives per query");
  }
  for (const auto& m : eval.metrics) index::parse_metric(m);
  require_positive(eval.k, "eval.k");
  require_positive(eval.margin_negatives, "eval.margin_negatives");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
}

json TrainConfig::to_json() const {
  const corpus::CorpusConfig& c = corpus;
  return json{
      {"corpus",
       {{"num_docs", c.num_docs},
        {"topics_per_doc", c.topics_per_doc},
        {"doc_length", c.doc_length},
        {"vocab_size", c.vocab_size},
        {"num_topics", c.num_topics},
        {"topic_purity", c.topic_purity},
        {"query_length", c.query_length},
        {"fragment_lengths", c.fragment_lengths},
        {"max_doc_length", c.max_doc_length},
        {"max_query_length", c.max_query_length},
        {"seed", c.seed}}},
      {"encoder",
       {{"hidden", hidden},
        {"heads", heads},
        {"layers", layers},
        {"ffn_hidden", ffn_hidden},
        {"span_pooling", to_string(span_pooling)}}},
      {"teacher",
       {{"hidden", teacher.hidden},
        {"heads", teacher.heads},
        {"layers", teacher.layers},
        {"ffn_hidden", teacher.ffn_hidden},
        {"head_hidden", teacher.head_hidden},
        {"epochs", teacher.epochs},
        {"pairs_per_query", teacher.pairs_per_query},
        {"batch_size", teacher.batch_size},
        {"lr", teacher.lr},
        {"label_scale", teacher.label_scale},
        {"fresh_queries", teacher.fresh_queries},
        {"seed", teacher.seed}}},
      {"splits",
       {{"warm_queries", splits.warm_queries},
        {"train_queries", splits.train_queries},
        {"dev_queries", splits.dev_queries}}},
      {"optim",
       {{"lr", optim.lr},
        {"large_model_lr", optim.large_model_lr},
        {"weight_decay", optim.weight_decay},
        {"warmup_fraction", optim.warmup_fraction},
        {"beta1", optim.beta1},
        {"beta2", optim.beta2},
        {"eps", optim.eps}}},
      {"schedule",
       {{"epochs_warm", schedule.epochs_warm},
        {"epochs_stage1", schedule.epochs_stage1},
        {"epochs_stage2", schedule.epochs_stage2},
        {"batch_size", schedule.batch_size},
        {"positives", schedule.positives},
        {"negatives", schedule.negatives},
        {"random_negatives", schedule.random_negatives},
        {"max_span_negatives", schedule.max_span_negatives}}},
      {"loss",
       {{"lambda", loss.lambda},
        {"tau", loss.tau},
        {"cl", loss.flags.cl},
        {"doc_kd", loss.flags.doc_kd},
        {"pass_kd", loss.flags.pass_kd},
        {"sent_kd", loss.flags.sent_kd}}},
      {"mining", {{"depths", mining.depths}}},
      {"eval",
       {{"metrics", eval.metrics},
        {"k", eval.k},
        {"gamma", gamma},
        {"gamma_grid", eval.gamma_grid},
        {"margin_negatives", eval.margin_negatives}}},
      {"seed", seed},
      {"seeds", seeds},
  };
}

TrainConfig TrainConfig::from_json(const json& user) {
  const TrainConfig defaults;
  json j = defaults.to_json();
  check_known(user, j, "");
  j.merge_patch(user);

  TrainConfig t;
  const json& c = j["corpus"];
  read(c, "num_docs", t.corpus.num_docs);
  read(c, "topics_per_doc", t.corpus.topics_per_doc);
  read(c, "doc_length", t.corpus.doc_length);
  read(c, "vocab_size", t.corpus.vocab_size);
  read(c, "num_topics", t.corpus.num_topics);
  read(c, "topic_purity", t.corpus.topic_purity);
  read(c, "query_length", t.corpus.query_length);
  read(c, "fragment_lengths", t.corpus.fragment_lengths);
  read(c, "max_doc_length", t.corpus.max_doc_length);
  read(c, "max_query_length", t.corpus.max_query_length);
  read(c, "seed", t.corpus.seed);

  const json& e = j["encoder"];
  read(e, "hidden", t.hidden);
  read(e, "heads", t.heads);
  read(e, "layers", t.layers);
  read(e, "ffn_hidden", t.ffn_hidden);
  std::string pooling;
  read(e, "span_pooling", pooling);
  t.span_pooling = span_pooling_from_string(pooling);

  const json& th = j["teacher"];
  read(th, "hidden", t.teacher.hidden);
  read(th, "heads", t.teacher.heads);
  read(th, "layers", t.teacher.layers);
  read(th, "ffn_hidden", t.teacher.ffn_hidden);
  read(th, "head_hidden", t.teacher.head_hidden);
  read(th, "epochs", t.teacher.epochs);
  read(th, "pairs_per_query", t.teacher.pairs_per_query);
  read(th, "batch_size", t.teacher.batch_size);
  read(th, "lr", t.teacher.lr);
  read(th, "label_scale", t.teacher.label_scale);
  read(th, "fresh_queries", t.teacher.fresh_queries);
  read(th, "seed", t.teacher.seed);

  const json& s = j["splits"];
  read(s, "warm_queries", t.splits.warm_queries);
  read(s, "train_queries", t.splits.train_queries);
  read(s, "dev_queries", t.splits.dev_queries);

  const json& o = j["optim"];
  read(o, "lr", t.optim.lr);
  read(o, "large_model_lr", t.optim.large_model_lr);
  read(o, "weight_decay", t.optim.weight_decay);
  read(o, "warmup_fraction", t.optim.warmup_fraction);
  read(o, "beta1", t.optim.beta1);
  read(o, "beta2", t.optim.beta2);
  read(o, "eps", t.optim.eps);

  const json& sc = j["schedule"];
  read(sc, "epochs_warm", t.schedule.epochs_warm);
  read(sc, "epochs_stage1", t.schedule.epochs_stage1);
  read(sc, "epochs_stage2", t.schedule.epochs_stage2);
  read(sc, "batch_size", t.schedule.batch_size);
  read(sc, "positives", t.schedule.positives);
  read(sc, "negatives", t.schedule.negatives);
  read(sc, "random_negatives", t.schedule.random_negatives);
  read(sc, "max_span_negatives", t.schedule.max_span_negatives);

  const json& l = j["loss"];
  read(l, "lambda", t.loss.lambda);
  read(l, "tau", t.loss.tau);
  read(l, "cl", t.loss.flags.cl);
  read(l, "doc_kd", t.loss.flags.doc_kd);
  read(l, "pass_kd", t.loss.flags.pass_kd);
  read(l, "sent_kd", t.loss.flags.sent_kd);

  read(j["mining"], "depths", t.mining.depths);

  const json& ev = j["eval"];
  read(ev, "metrics", t.eval.metrics);
  read(ev, "k", t.eval.k);
  read(ev, "gamma", t.gamma);
  read(ev, "gamma_grid", t.eval.gamma_grid);
  read(ev, "margin_negatives", t.eval.margin_negatives);

  read(j, "seed", t.seed);
  read(j, "seeds", t.seeds);
  t.validate();
  return t;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing config file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json().dump(2) << '\n';
}

TrainConfig TrainConfig::with_overrides(
    const std::vector<std::string>& assignments) const {
  json j = to_json();
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + a + "' is not of the form key=value");
    }
    const std::string key = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (!node->is_object() || !node->contains(part)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = value;
  }
  return from_json(j);
}

std::string TrainConfig::hash() const {
  const std::string text = to_json().dump();
  return fnv1a_hex(reinterpret_cast<const std::uint8_t*>(text.data()),
                   text.size());
}

}  // namespace fgd::pipeline
