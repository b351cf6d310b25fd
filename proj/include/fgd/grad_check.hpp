// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fgd/tensor.hpp"

namespace fgd {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Compares the tape gradient of `fn` at `point` with central differences.
///
/// `point` is perturbed in place and restored, so a function that closes over
/// a model parameter can be checked by passing that parameter as the point.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8). The
/// point's accumulated gradient is left zeroed.
GradCheckReport grad_check(const ScalarFn& fn, Tensor point, double eps = 1e-4);

}  // namespace fgd
