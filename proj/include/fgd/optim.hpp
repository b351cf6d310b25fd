// Copyright 2026 The FGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "fgd/checkpoint.hpp"
#include "fgd/config.hpp"

namespace fgd::pipeline {

/// Linear warmup to the peak rate, then linear decay to zero.
double warmup_linear_rate(double peak, std::size_t step, std::size_t warmup,
                          std::size_t total);

/// Adam with decoupled weight decay. Holds handles to the trained tensors
/// and updates them in place from their accumulated gradients.
class AdamW {
 public:
  AdamW(NamedTensors params, const OptimConfig& config,
        std::size_t total_steps);

  void step();
  void zero_grad() { params_.zero_grad(); }
  std::size_t steps_taken() const { return step_; }
  double current_rate() const;

 private:
  NamedTensors params_;
  OptimConfig config_;
  std::size_t total_;
  std::size_t warmup_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace fgd::pipeline
