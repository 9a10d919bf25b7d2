// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "metacast/backbone.hpp"
#include "metacast/data.hpp"
#include "metacast/tensor.hpp"

namespace metacast {

// Two augmented views of one cascade plus the descriptors needed to replay
// them deterministically.
struct AugmentedPair {
  std::vector<int> view_a;  // user masking
  std::vector<int> view_b;  // span shuffling
  std::vector<std::size_t> mask_positions;
  std::size_t span_begin = 0;
  std::vector<std::size_t> span_order;  // permutation applied within the span
  std::uint64_t seed = 0;
};

struct AugmentOptions {
  double mask_prob = 0.2;
  double span_frac = 0.2;
};

AugmentedPair augment(const std::vector<int>& users, std::uint64_t seed, int mask_index,
                      const AugmentOptions& opts = {});

// Rebuilds both views from the recorded descriptors.
AugmentedPair replay(const std::vector<int>& users, const AugmentedPair& descriptors,
                     int mask_index);

// Projector: 2-layer MLP 2d -> 2d -> d applied to each pooled representation.
struct ProjectorParams {
  Tensor w1, b1, w2, b2;

  static ProjectorParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Predictor: residual 2-layer MLP d -> d -> d with a zero-initialized final
// layer, so it starts as the identity.
struct PredictorParams {
  Tensor w1, b1, w2, b2;

  static PredictorParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

Tensor project(const ProjectorParams& q, const Tensor& x);
Tensor predict(const PredictorParams& p, const Tensor& x);

// 2 - 2 * cos(r, z), in [0, 4]. Both arguments must be nonzero vectors.
Tensor byol_loss(const Tensor& online_pred, const Tensor& target_proj);

// Online branch r = [P(Q(pool(h'_sm))) || P(Q(pool(h'_sp)))] over the adapted
// second-pass features of one view.
Tensor online_representation(const std::vector<int>& view, const Tensor& social,
                             const Tensor& diffusion, const EncoderParams& f,
                             const AdaptorParams& adaptor, const ProjectorParams& projector,
                             const PredictorParams& predictor);

// Target branch z = [Q(pool(h'_sm)) || Q(pool(h'_sp))], always under no-grad.
Tensor target_projection(const std::vector<int>& view, const Tensor& social,
                         const Tensor& diffusion, const EncoderParams& f,
                         const AdaptorParams& adaptor, const ProjectorParams& projector);

// Symmetric objective L(r_a, z_b) + L(r_b, z_a) for the two views of one
// cascade. Target projections may be supplied precomputed (meta inner loops
// reuse them across steps).
struct AuxObjectiveInputs {
  const Tensor* social = nullptr;
  const Tensor* diffusion = nullptr;
  const EncoderParams* encoder = nullptr;
  const AdaptorParams* online_adaptor = nullptr;
  const ProjectorParams* online_projector = nullptr;
  const PredictorParams* online_predictor = nullptr;
  const AdaptorParams* target_adaptor = nullptr;
  const ProjectorParams* target_projector = nullptr;
};

Tensor aux_objective(const AugmentedPair& views, const AuxObjectiveInputs& in);
Tensor aux_objective_cached(const AugmentedPair& views, const AuxObjectiveInputs& in,
                            const Tensor& z_a, const Tensor& z_b);

}  // namespace metacast
