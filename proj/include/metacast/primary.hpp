// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "metacast/tensor.hpp"

namespace metacast {

// Popularity head: 2d -> d (ReLU) -> 1 with a softplus output, so predictions
// are nonnegative.
struct MacroHeadParams {
  Tensor w1, b1, w2, b2;

  static MacroHeadParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Next-user head: linear 2d -> N over real users (the MASK row is never
// scored).
struct MicroHeadParams {
  Tensor w;  // 2d x N
  Tensor b;  // 1 x N

  static MicroHeadParams init(std::size_t dim, std::size_t num_users, Rng& rng);
  std::vector<Tensor> parameters() const;
  std::size_t num_users() const { return w.cols(); }
};

Tensor macro_predict(const MacroHeadParams& head, const Tensor& summary);  // 1 x 1, >= 0
Tensor micro_logits(const MicroHeadParams& head, const Tensor& states);    // P x N

// Mean squared logarithmic error over a batch of (prediction, truth) pairs;
// natural log, inputs must be nonnegative.
Tensor macro_msle_loss(const std::vector<Tensor>& preds, const std::vector<double>& truths);
double msle_value(double pred, double truth);

// Summed cross-entropy over positions; at position index r the model scores
// the user arriving next, restricted to users not already seen.
Tensor micro_ce_loss(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::vector<std::uint8_t>>& eligible);

// Builds the per-position eligibility masks for one cascade (positions
// 2..|c|): everything already in the running prefix is excluded unless
// seen_mask is off.
std::vector<std::vector<std::uint8_t>> eligibility_masks(const std::vector<int>& users,
                                                         std::size_t num_users, bool seen_mask);

// (1 - lambda) * micro + lambda * macro, lambda in [0, 1].
Tensor primary_loss(const Tensor& micro, const Tensor& macro_loss_term, double lambda);

}  // namespace metacast
