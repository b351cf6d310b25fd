// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "fgd/optim.hpp"

#include <cmath>

#include "fgd/errors.hpp"

namespace fgd::pipeline {

double warmup_linear_rate(double peak, std::size_t step, std::size_t warmup,
                          std::size_t total) {
  if (step < warmup) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (total <= warmup) return peak;
  const double remaining = static_cast<double>(total - step);
  return peak * std::max(0.0, remaining / static_cast<double>(total - warmup));
}

AdamW::AdamW(NamedTensors params, const OptimConfig& config,
             std::size_t total_steps)
    : params_(std::move(params)),
      config_(config),
      total_(total_steps),
      warmup_(static_cast<std::size_t>(
          std::ceil(config.warmup_fraction * static_cast<double>(total_steps)))) {
  if (total_steps == 0) throw ConfigError("optimizer needs at least one step");
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

double AdamW::current_rate() const {
  return warmup_linear_rate(config_.lr, step_, warmup_, total_);
}

void AdamW::step() {
  const double lr = current_rate();
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  std::size_t e = 0;
  for (auto& [name, t] : params_) {
    auto& m = m_[e];
    auto& v = v_[e];
    ++e;
    auto values = t.mutable_data();
    const std::vector<double> grad =
        t.has_grad() ? t.grad() : std::vector<double>(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      values[i] -= lr * (update + config_.weight_decay * values[i]);
    }
  }
}

}  // namespace fgd::pipeline
