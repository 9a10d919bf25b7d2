// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/primary.hpp"

#include <cmath>

namespace metacast {

MacroHeadParams MacroHeadParams::init(std::size_t dim, Rng& rng) {
  MacroHeadParams p;
  p.w1 = Tensor::randn({2 * dim, dim}, rng, 0.1).set_requires_grad(true);
  p.b1 = Tensor::zeros({1, dim}).set_requires_grad(true);
  p.w2 = Tensor::randn({dim, 1}, rng, 0.1).set_requires_grad(true);
  p.b2 = Tensor::zeros({1, 1}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> MacroHeadParams::parameters() const { return {w1, b1, w2, b2}; }

MicroHeadParams MicroHeadParams::init(std::size_t dim, std::size_t num_users, Rng& rng) {
  MicroHeadParams p;
  p.w = Tensor::randn({2 * dim, num_users}, rng, 0.1).set_requires_grad(true);
  p.b = Tensor::zeros({1, num_users}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> MicroHeadParams::parameters() const { return {w, b}; }

Tensor macro_predict(const MacroHeadParams& head, const Tensor& summary) {
  Tensor hidden = relu(add_rowvec(matmul(summary, head.w1), head.b1));
  return softplus(add_rowvec(matmul(hidden, head.w2), head.b2));
}

Tensor micro_logits(const MicroHeadParams& head, const Tensor& states) {
  return add_rowvec(matmul(states, head.w), head.b);
}

double msle_value(double pred, double truth) {
  if (pred < 0.0 || truth < 0.0) throw TensorError("msle: negative input");
  const double d = std::log1p(pred) - std::log1p(truth);
  return d * d;
}

Tensor macro_msle_loss(const std::vector<Tensor>& preds, const std::vector<double>& truths) {
  if (preds.empty() || preds.size() != truths.size()) {
    throw TensorError("macro_msle_loss: need matching nonempty predictions and truths");
  }
  Tensor acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (truths[i] < 0.0) throw TensorError("macro_msle_loss: negative truth");
    for (double v : preds[i].values()) {
      if (v < 0.0) throw TensorError("macro_msle_loss: negative prediction");
    }
    Tensor diff = add(log(add(reshape(preds[i], {1}), 1.0)), -std::log1p(truths[i]));
    Tensor sq = mul(diff, diff);
    acc = acc.defined() ? add(acc, sq) : sq;
  }
  return mul(acc, 1.0 / static_cast<double>(preds.size()));
}

Tensor micro_ce_loss(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::vector<std::uint8_t>>& eligible) {
  return cross_entropy_masked(logits, targets, eligible);
}

std::vector<std::vector<std::uint8_t>> eligibility_masks(const std::vector<int>& users,
                                                         std::size_t num_users, bool seen_mask) {
  if (users.size() < 2) return {};
  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(users.size() - 1);
  std::vector<std::uint8_t> eligible(num_users, 1);
  for (std::size_t i = 1; i < users.size(); ++i) {
    const int prev = users[i - 1];
    if (seen_mask && prev >= 0 && static_cast<std::size_t>(prev) < num_users) {
      eligible[prev] = 0;  // running prefix through position i-1
    }
    masks.push_back(eligible);
  }
  return masks;
}

Tensor primary_loss(const Tensor& micro, const Tensor& macro_loss_term, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) {
    throw TensorError("primary_loss: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  return add(mul(micro, 1.0 - lambda), mul(macro_loss_term, lambda));
}

}  // namespace metacast
