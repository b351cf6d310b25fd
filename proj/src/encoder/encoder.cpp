// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/encoder.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "fgd/errors.hpp"
#include "fgd/ops.hpp"

namespace fgd::encoder {

namespace {

std::string layer_name(std::size_t l, const char* suffix) {
  return "layer." + std::to_string(l) + "." + suffix;
}

// Expected parameter names and shapes, in registration order.
std::vector<std::pair<std::string, Shape>> layout(const EncoderConfig& c) {
  const std::size_t h = c.hidden, f = c.ffn_hidden;
  std::vector<std::pair<std::string, Shape>> out = {
      {"emb.token", {c.vocab_size, h}},
      {"emb.pos", {c.max_positions, h}},
      {"emb.ln.gamma", {h}},
      {"emb.ln.beta", {h}},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      out.emplace_back(layer_name(l, w), Shape{h, h});
    }
    // No key bias: it shifts every score of a row equally and cannot change
    // the attention probabilities.
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo"}) {
      out.emplace_back(layer_name(l, b), Shape{h});
    }
    out.emplace_back(layer_name(l, "ln1.gamma"), Shape{h});
    out.emplace_back(layer_name(l, "ln1.beta"), Shape{h});
    out.emplace_back(layer_name(l, "ffn.w1"), Shape{h, f});
    out.emplace_back(layer_name(l, "ffn.b1"), Shape{f});
    out.emplace_back(layer_name(l, "ffn.w2"), Shape{f, h});
    out.emplace_back(layer_name(l, "ffn.b2"), Shape{h});
    out.emplace_back(layer_name(l, "ln2.gamma"), Shape{h});
    out.emplace_back(layer_name(l, "ln2.beta"), Shape{h});
  }
  return out;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::string t(suffix);
  return s.size() >= t.size() && s.compare(s.size() - t.size(), t.size(), t) == 0;
}

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t width) {
  return ops::slice(x, 1, head * width, (head + 1) * width);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add(ops::matmul(x, w), b);
}

Tensor self_attention_block(const Tensor& x, const EncoderParams& p,
                            std::size_t l) {
  const EncoderConfig& c = p.config();
  const std::size_t dh = c.hidden / c.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = linear(x, p.get(layer_name(l, "attn.wq")),
                          p.get(layer_name(l, "attn.bq")));
  const Tensor k = ops::matmul(x, p.get(layer_name(l, "attn.wk")));
  const Tensor v = linear(x, p.get(layer_name(l, "attn.wv")),
                          p.get(layer_name(l, "attn.bv")));
  std::vector<Tensor> heads;
  heads.reserve(c.heads);
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Tensor scores =
        ops::scale(ops::matmul(head_slice(q, h, dh),
                               ops::transpose(head_slice(k, h, dh))),
                   inv_sqrt);
    heads.push_back(
        ops::matmul(ops::softmax(scores, 1), head_slice(v, h, dh)));
  }
  const Tensor attn = linear(ops::concat(heads, 1),
                             p.get(layer_name(l, "attn.wo")),
                             p.get(layer_name(l, "attn.bo")));
  const Tensor h1 = ops::layer_norm(ops::add(x, attn),
                                    p.get(layer_name(l, "ln1.gamma")),
                                    p.get(layer_name(l, "ln1.beta")));
  const Tensor mlp = linear(
      ops::gelu(linear(h1, p.get(layer_name(l, "ffn.w1")),
                       p.get(layer_name(l, "ffn.b1")))),
      p.get(layer_name(l, "ffn.w2")), p.get(layer_name(l, "ffn.b2")));
  return ops::layer_norm(ops::add(h1, mlp), p.get(layer_name(l, "ln2.gamma")),
                         p.get(layer_name(l, "ln2.beta")));
}

// Head-averaged attention row from position 0 over all positions, [1,n].
Tensor cls_attention_row(const Tensor& hidden, const EncoderParams& p) {
  const EncoderConfig& c = p.config();
  const std::size_t l = c.layers - 1;
  const std::size_t dh = c.hidden / c.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor cls = ops::slice(hidden, 0, 0, 1);
  const Tensor q = linear(cls, p.get(layer_name(l, "attn.wq")),
                          p.get(layer_name(l, "attn.bq")));
  const Tensor k = ops::matmul(hidden, p.get(layer_name(l, "attn.wk")));
  Tensor total;
  for (std::size_t h = 0; h < c.heads; ++h) {
    const Tensor scores = ops::scale(
        ops::matmul(head_slice(q, h, dh), ops::transpose(head_slice(k, h, dh))),
        inv_sqrt);
    const Tensor probs = ops::softmax(scores, 1);
    total = total.defined() ? ops::add(total, probs) : probs;
  }
  return ops::scale(total, 1.0 / static_cast<double>(c.heads));
}

// Maps a span to its [first, last) sequence positions.
std::pair<std::size_t, std::size_t> positions_of(const EncodeOutput& out,
                                                 const corpus::SpanRef& span) {
  if (span.granularity == 0) return {0, out.positions()};
  if (span.begin > span.end || span.end >= out.content_tokens) {
    throw IndexError("span [" + std::to_string(span.begin) + "," +
                     std::to_string(span.end) + "] out of range for " +
                     std::to_string(out.content_tokens) + " encoded tokens");
  }
  return {span.begin + 1, span.end + 2};
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("encoder: hidden width must be a positive multiple of "
                      "the head count");
  }
  if (layers == 0) throw ConfigError("encoder: need at least one layer");
  if (vocab_size == 0 || ffn_hidden == 0) {
    throw ConfigError("encoder: vocab_size and ffn_hidden must be positive");
  }
  if (max_positions < max_doc_length + 2 ||
      max_positions < max_query_length + 2) {
    throw ConfigError("encoder: max_positions must cover the longest input "
                      "plus [CLS] and [SEP]");
  }
}

EncoderParams EncoderParams::init(const EncoderConfig& config,
                                  std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.config_ = config;
  for (auto& [name, shape] : layout(config)) {
    Tensor t = Tensor::zeros(shape, true);
    auto values = t.mutable_data();
    double stddev = 0.0;
    if (name == "emb.token") {
      stddev = 1.0;
    } else if (name == "emb.pos") {
      stddev = 0.1;
    } else if (ends_with(name, "gamma")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (shape.size() == 2) {
      stddev = std::sqrt(2.0 / static_cast<double>(shape[0] + shape[1]));
    }
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& v : values) v = dist(rng);
    }
    p.tensors_.add(name, std::move(t));
  }
  return p;
}

EncoderParams EncoderParams::from_tensors(const EncoderConfig& config,
                                          NamedTensors tensors) {
  config.validate();
  const auto expected = layout(config);
  if (tensors.size() != expected.size()) {
    throw IntegrityError("encoder checkpoint has " +
                         std::to_string(tensors.size()) +
                         " tensors, expected " +
                         std::to_string(expected.size()));
  }
  EncoderParams p;
  p.config_ = config;
  for (const auto& [name, shape] : expected) {
    if (!tensors.contains(name)) {
      throw IntegrityError("encoder checkpoint lacks '" + name + "'");
    }
    Tensor t = tensors.at(name);
    if (t.shape() != shape) {
      throw IntegrityError("encoder tensor '" + name + "' has shape " +
                           shape_to_string(t.shape()) + ", expected " +
                           shape_to_string(shape));
    }
    t.set_requires_grad(true);
    p.tensors_.add(name, t);
  }
  return p;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams p;
  p.config_ = config_;
  p.tensors_ = tensors_.clone();
  return p;
}

PoolingHead PoolingHead::of(const EncoderParams& params) {
  const std::size_t l = params.config().layers - 1;
  PoolingHead h;
  h.wv = params.get(layer_name(l, "attn.wv"));
  h.bv = params.get(layer_name(l, "attn.bv"));
  h.wo = params.get(layer_name(l, "attn.wo"));
  h.bo = params.get(layer_name(l, "attn.bo"));
  h.ln1_gamma = params.get(layer_name(l, "ln1.gamma"));
  h.ln1_beta = params.get(layer_name(l, "ln1.beta"));
  h.w1 = params.get(layer_name(l, "ffn.w1"));
  h.b1 = params.get(layer_name(l, "ffn.b1"));
  h.w2 = params.get(layer_name(l, "ffn.w2"));
  h.b2 = params.get(layer_name(l, "ffn.b2"));
  h.ln2_gamma = params.get(layer_name(l, "ln2.gamma"));
  h.ln2_beta = params.get(layer_name(l, "ln2.beta"));
  return h;
}

Tensor PoolingHead::apply(const Tensor& pooled) const {
  const Tensor attn = linear(linear(pooled, wv, bv), wo, bo);
  const Tensor t = ops::layer_norm(ops::add(pooled, attn), ln1_gamma, ln1_beta);
  const Tensor mlp = linear(ops::gelu(linear(t, w1, b1)), w2, b2);
  const Tensor out = ops::layer_norm(ops::add(t, mlp), ln2_gamma, ln2_beta);
  return ops::reshape(out, {out.numel()});
}

EncodeOutput encode_tokens(std::span<const TokenId> sequence,
                           const EncoderParams& params) {
  const EncoderConfig& c = params.config();
  if (sequence.size() < 2) {
    throw LengthError("encode: sequence needs at least [CLS] and [SEP]");
  }
  if (sequence.size() > c.max_positions) {
    throw LengthError("encode: " + std::to_string(sequence.size()) +
                      " positions exceed the maximum of " +
                      std::to_string(c.max_positions));
  }
  const std::size_t n = sequence.size();
  const Tensor tok = ops::embedding(params.get("emb.token"), sequence);
  const Tensor pos = ops::slice(params.get("emb.pos"), 0, 0, n);
  Tensor x = ops::layer_norm(ops::add(tok, pos), params.get("emb.ln.gamma"),
                             params.get("emb.ln.beta"));
  for (std::size_t l = 0; l + 1 < c.layers; ++l) {
    x = self_attention_block(x, params, l);
  }
  EncodeOutput out;
  out.hidden = x;
  out.content_tokens = n - 2;
  out.attention = cls_attention_row(x, params);
  out.head = PoolingHead::of(params);
  out.cls = out.head.apply(ops::matmul(out.attention, x));
  return out;
}

EncodeOutput encode_content(std::span<const TokenId> content,
                            const EncoderParams& params) {
  std::vector<TokenId> seq;
  seq.reserve(content.size() + 2);
  seq.push_back(corpus::kCls);
  seq.insert(seq.end(), content.begin(), content.end());
  seq.push_back(corpus::kSep);
  return encode_tokens(seq, params);
}

EncodeOutput encode_document(const corpus::Document& doc,
                             const EncoderParams& params) {
  const std::size_t limit = params.config().max_doc_length;
  if (doc.tokens.size() > limit) {
    throw LengthError("document " + std::to_string(doc.id) + " has " +
                      std::to_string(doc.tokens.size()) +
                      " tokens, maximum is " + std::to_string(limit));
  }
  return encode_content(doc.tokens, params);
}

Tensor encode_query(std::span<const TokenId> query_tokens,
                    const EncoderParams& params) {
  const std::size_t limit = params.config().max_query_length;
  if (query_tokens.size() > limit) {
    throw LengthError("query has " + std::to_string(query_tokens.size()) +
                      " tokens, maximum is " + std::to_string(limit));
  }
  return encode_content(query_tokens, params).cls;
}

Tensor encode_query(const corpus::QueryRecord& query,
                    const EncoderParams& params) {
  return encode_query(query.tokens, params);
}

Tensor pre_ffn_pooling(const EncodeOutput& out, const corpus::SpanRef& span) {
  const auto [first, last] = positions_of(out, span);
  if (first == 0 && last == out.positions()) {
    return ops::matmul(out.attention, out.hidden);
  }
  return ops::matmul(ops::slice(out.attention, 1, first, last),
                     ops::slice(out.hidden, 0, first, last));
}

Tensor special_token_pooling(const EncodeOutput& out) {
  const std::size_t last = out.positions() - 1;
  const Tensor cls = ops::matmul(ops::slice(out.attention, 1, 0, 1),
                                 ops::slice(out.hidden, 0, 0, 1));
  const Tensor sep = ops::matmul(ops::slice(out.attention, 1, last, last + 1),
                                 ops::slice(out.hidden, 0, last, last + 1));
  return ops::add(cls, sep);
}

Tensor span_embedding(const EncodeOutput& out, const corpus::SpanRef& span,
                      SpanPooling pooling) {
  if (pooling == SpanPooling::kMean) {
    const auto [first, last] = positions_of(out, span);
    const Tensor rows = ops::slice(out.hidden, 0, first, last);
    const Tensor mean = ops::scale(ops::sum(rows, 0),
                                   1.0 / static_cast<double>(last - first));
    return out.head.apply(ops::reshape(mean, {1, mean.numel()}));
  }
  return out.head.apply(pre_ffn_pooling(out, span));
}

}  // namespace fgd::encoder
