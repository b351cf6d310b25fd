// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Small post-LN transformer encoder with [CLS] attention pooling.
//
// Layers 0..L-2 are ordinary self-attention blocks producing contextual
// states. The last layer is evaluated for the [CLS] row only: its per-head
// attention probabilities from [CLS] are averaged into one row alpha, the
// penultimate states h' are pooled as sum_i alpha_i h'_i, and the pooled
// vector goes through the layer's value/output projection, residual,
// layer norms and feed-forward block (PoolingHead). Because that head is a
// fixed function of the pooled vector, any token span can reuse the
// document-wide alpha to get an embedding consistent with the [CLS] vector.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "fgd/checkpoint.hpp"
#include "fgd/corpus.hpp"
#include "fgd/tensor.hpp"

namespace fgd::encoder {

using corpus::TokenId;

struct EncoderConfig {
  std::size_t vocab_size = 1024;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_hidden = 256;
  std::size_t max_positions = 514;
  std::size_t max_doc_length = 512;
  std::size_t max_query_length = 32;

  void validate() const;
};

enum class SpanPooling {
  kGlobalAttention,  // document-wide [CLS] attention restricted to the span
  kMean,             // mean of penultimate states over the span
};

class EncoderParams {
 public:
  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  /// Adopts named tensors, checking every expected name and shape.
  static EncoderParams from_tensors(const EncoderConfig& config,
                                    NamedTensors tensors);

  const EncoderConfig& config() const { return config_; }
  const NamedTensors& tensors() const { return tensors_; }
  NamedTensors& tensors() { return tensors_; }
  const Tensor& get(const std::string& name) const { return tensors_.at(name); }
  std::string fingerprint() const { return checkpoint_fingerprint(tensors_); }

  /// Deep copy; the copy shares no storage with this one.
  EncoderParams clone() const;

 private:
  EncoderConfig config_;
  NamedTensors tensors_;
};

/// Post-processing applied to a pooled [1,H] vector by the last layer.
struct PoolingHead {
  Tensor wv, bv, wo, bo;
  Tensor ln1_gamma, ln1_beta;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gamma, ln2_beta;

  static PoolingHead of(const EncoderParams& params);
  /// [1,H] pooled vector -> [H] embedding.
  Tensor apply(const Tensor& pooled) const;
};

struct EncodeOutput {
  Tensor hidden;     // [n+2, H] penultimate states; row 0 is [CLS]
  Tensor attention;  // [1, n+2] head-averaged [CLS] attention of last layer
  Tensor cls;        // [H]
  std::size_t content_tokens = 0;
  PoolingHead head;

  std::size_t positions() const { return content_tokens + 2; }
};

/// Encodes a full input sequence (special tokens included by the caller).
EncodeOutput encode_tokens(std::span<const TokenId> sequence,
                           const EncoderParams& params);

/// Encodes [CLS] content [SEP].
EncodeOutput encode_content(std::span<const TokenId> content,
                            const EncoderParams& params);

/// Throws LengthError beyond max_doc_length tokens.
EncodeOutput encode_document(const corpus::Document& doc,
                             const EncoderParams& params);

/// Query vector u; throws LengthError beyond max_query_length tokens.
Tensor encode_query(std::span<const TokenId> query_tokens,
                    const EncoderParams& params);
Tensor encode_query(const corpus::QueryRecord& query,
                    const EncoderParams& params);

/// sum over the span's positions of alpha_i h'_i, as [1,H]. The j = 0 span
/// covers every position including [CLS] and [SEP].
Tensor pre_ffn_pooling(const EncodeOutput& out, const corpus::SpanRef& span);

/// Pooled contribution of the [CLS] and [SEP] positions, as [1,H].
Tensor special_token_pooling(const EncodeOutput& out);

/// Global-consistent span embedding, [H]. For the j = 0 span it equals
/// `out.cls`.
Tensor span_embedding(const EncodeOutput& out, const corpus::SpanRef& span,
                      SpanPooling pooling = SpanPooling::kGlobalAttention);

}  // namespace fgd::encoder
