// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fgd/errors.hpp"

namespace fgd {

GradCheckReport grad_check(const ScalarFn& fn, Tensor point, double eps) {
  const bool had_grad_flag = point.requires_grad();
  point.set_requires_grad(true);
  point.zero_grad();

  GradCheckReport report;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor value = fn(point);
    if (!std::isfinite(value.item())) {
      throw DomainError("grad_check: non-finite value at the base point");
    }
    tape.backward(value);
  }
  report.analytic = point.grad();
  point.zero_grad();

  NoGradScope no_grad;
  auto values = point.mutable_data();
  report.numeric.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = fn(point).item();
    values[i] = saved - eps;
    const double down = fn(point).item();
    values[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DomainError("grad_check: non-finite value perturbing coordinate " +
                        std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * eps);
    report.numeric[i] = numeric;
    const double analytic = report.analytic[i];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = i;
    }
  }
  point.set_requires_grad(had_grad_flag);
  return report;
}

}  // namespace fgd
