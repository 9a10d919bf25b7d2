// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "metacast/tensor.hpp"

namespace metacast {

// Gate order: input, forget, output, candidate.
struct LstmParams {
  std::array<Tensor, 4> wx;  // in x d
  std::array<Tensor, 4> wh;  // d x d (the FiLM-modulated matrices)
  std::array<Tensor, 4> b;   // 1 x d

  static LstmParams init(std::size_t in, std::size_t hidden, Rng& rng);
  std::vector<Tensor> parameters() const;
  std::size_t hidden() const { return wh[0].rows(); }
};

// Generic feature encoder F: a shared LSTM over [x_S || x_D] plus one
// task-specific LSTM per prediction scale.
struct EncoderParams {
  LstmParams shared;      // 2d -> d
  LstmParams micro;       // d -> d
  LstmParams macro_side;  // d -> d
  std::size_t dim = 0;

  static EncoderParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Adaptation parameters: one (gamma, beta) pair of d x d blocks per LSTM,
// shared across that LSTM's four recurrent gate matrices.
struct FilmParams {
  std::array<Tensor, 3> gamma;  // shared, micro, macro
  std::array<Tensor, 3> beta;
};

// 2-layer MLP 4d -> 2d -> 6*d^2 emitting raw FiLM blocks. gamma passes
// through 1 + 0.5*tanh(raw) so a zero-initialized head yields the identity
// modulation; beta is raw.
struct AdaptorParams {
  Tensor w1, b1;  // 4d x 2d, 1 x 2d
  Tensor w2, b2;  // 2d x 6d^2, 1 x 6d^2 (zero-initialized)

  static AdaptorParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Per-sequence encoder outputs. h_* are L x d, h_sm/h_sp are L x 2d, and
// pooled is the 1 x 4d adaptor input [mean_t(h_sm) || mean_t(h_sp)].
struct SequenceFeatures {
  Tensor h_s, h_m, h_p;
  Tensor h_sm, h_sp;
  Tensor pooled;
};

// Runs all three LSTMs over the user sequence (rows of the embedding tables).
SequenceFeatures encode_sequence(const std::vector<int>& users, const Tensor& social,
                                 const Tensor& diffusion, const EncoderParams& f);

// Adaptor MLP: pooled summary -> FiLM blocks.
FilmParams adapt(const Tensor& pooled, const AdaptorParams& adaptor);

// FiLM application W_h <- W_h * gamma + beta on each LSTM's recurrent gate
// matrices; input weights and biases pass through untouched. The source
// encoder is not modified.
EncoderParams customize(const EncoderParams& f, const FilmParams& film);

// The full two-pass protocol: encode -> adapt -> customize -> encode again.
struct BackboneOutput {
  SequenceFeatures first_pass;
  FilmParams film;
  SequenceFeatures adapted;
};

BackboneOutput run_backbone(const std::vector<int>& users, const Tensor& social,
                            const Tensor& diffusion, const EncoderParams& f,
                            const AdaptorParams& adaptor);

}  // namespace metacast
