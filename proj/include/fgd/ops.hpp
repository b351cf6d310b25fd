// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fgd/tensor.hpp"

namespace fgd::ops {

// Binary elementwise ops broadcast `b` over `a` when b's shape equals the
// trailing dimensions of a's shape, or when b holds a single value.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

/// [n,k] x [k,m] -> [n,m].
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Single element of a flat view, as a scalar.
Tensor pick(const Tensor& a, std::size_t index);
/// Concatenates scalars into a 1-D tensor.
Tensor stack_scalars(std::span<const Tensor> scalars);

/// Reduces `axis` away; a rank-1 input yields shape {1}.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& a);
/// Throws DomainError on any non-positive input.
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
/// tanh approximation.
Tensor gelu(const Tensor& a);

/// Normalizes over the last dimension, then applies gamma and beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& logits, std::size_t axis);
Tensor log_softmax(const Tensor& logits, std::size_t axis);

/// Rows of `table` ([V,H]) selected by `ids`, as [n,H].
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// Floor applied to both arguments before the log in kl_divergence.
inline constexpr double kKlFloor = 1e-12;

/// sum_i p_i log(p_i / q_i) over two probability vectors; 0 log 0 = 0.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

}  // namespace fgd::ops
