// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/auxiliary.hpp"

#include <algorithm>
#include <cmath>

namespace metacast {

AugmentedPair augment(const std::vector<int>& users, std::uint64_t seed, int mask_index,
                      const AugmentOptions& opts) {
  if (users.empty()) throw TensorError("augment: empty sequence");
  const std::size_t n = users.size();
  Rng rng(seed);
  AugmentedPair pair;
  pair.seed = seed;
  pair.view_a = users;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < opts.mask_prob) {
      pair.view_a[i] = mask_index;
      pair.mask_positions.push_back(i);
    }
  }
  pair.view_b = users;
  const auto span_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opts.span_frac * static_cast<double>(n))));
  pair.span_begin = rng.uniform_int(n - span_len + 1);
  pair.span_order.resize(span_len);
  for (std::size_t i = 0; i < span_len; ++i) pair.span_order[i] = i;
  for (std::size_t i = span_len; i > 1; --i) {  // Fisher-Yates
    std::swap(pair.span_order[i - 1], pair.span_order[rng.uniform_int(i)]);
  }
  for (std::size_t i = 0; i < span_len; ++i) {
    pair.view_b[pair.span_begin + i] = users[pair.span_begin + pair.span_order[i]];
  }
  // guarantee at least one view differs for sequences longer than one
  if (n >= 2 && pair.view_a == users && pair.view_b == users) {
    const std::size_t forced = static_cast<std::size_t>(seed % n);
    pair.view_a[forced] = mask_index;
    pair.mask_positions.push_back(forced);
  }
  return pair;
}

AugmentedPair replay(const std::vector<int>& users, const AugmentedPair& d, int mask_index) {
  AugmentedPair pair = d;
  pair.view_a = users;
  for (std::size_t i : d.mask_positions) pair.view_a[i] = mask_index;
  pair.view_b = users;
  for (std::size_t i = 0; i < d.span_order.size(); ++i) {
    pair.view_b[d.span_begin + i] = users[d.span_begin + d.span_order[i]];
  }
  return pair;
}

ProjectorParams ProjectorParams::init(std::size_t dim, Rng& rng) {
  ProjectorParams p;
  p.w1 = Tensor::randn({2 * dim, 2 * dim}, rng, 0.1).set_requires_grad(true);
  p.b1 = Tensor::zeros({1, 2 * dim}).set_requires_grad(true);
  p.w2 = Tensor::randn({2 * dim, dim}, rng, 0.1).set_requires_grad(true);
  p.b2 = Tensor::zeros({1, dim}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> ProjectorParams::parameters() const { return {w1, b1, w2, b2}; }

PredictorParams PredictorParams::init(std::size_t dim, Rng& rng) {
  PredictorParams p;
  p.w1 = Tensor::randn({dim, dim}, rng, 0.1).set_requires_grad(true);
  p.b1 = Tensor::zeros({1, dim}).set_requires_grad(true);
  p.w2 = Tensor::zeros({dim, dim}).set_requires_grad(true);
  p.b2 = Tensor::zeros({1, dim}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> PredictorParams::parameters() const { return {w1, b1, w2, b2}; }

Tensor project(const ProjectorParams& q, const Tensor& x) {
  return add_rowvec(matmul(relu(add_rowvec(matmul(x, q.w1), q.b1)), q.w2), q.b2);
}

Tensor predict(const PredictorParams& p, const Tensor& x) {
  return add(x, add_rowvec(matmul(relu(add_rowvec(matmul(x, p.w1), p.b1)), p.w2), p.b2));
}

Tensor byol_loss(const Tensor& online_pred, const Tensor& target_proj) {
  if (online_pred.shape() != target_proj.shape()) {
    throw TensorError("byol_loss: shape mismatch " + shape_str(online_pred.shape()) + " vs " +
                      shape_str(target_proj.shape()));
  }
  Tensor cos = sum(mul(l2_normalize(online_pred), l2_normalize(target_proj)));
  return add(mul(cos, -2.0), 2.0);
}

namespace {

void branch_features(const std::vector<int>& view, const Tensor& social, const Tensor& diffusion,
                     const EncoderParams& f, const AdaptorParams& adaptor, Tensor* pooled_sm,
                     Tensor* pooled_sp) {
  BackboneOutput bb = run_backbone(view, social, diffusion, f, adaptor);
  *pooled_sm = mean_axis0(bb.adapted.h_sm);
  *pooled_sp = mean_axis0(bb.adapted.h_sp);
}

}  // namespace

Tensor online_representation(const std::vector<int>& view, const Tensor& social,
                             const Tensor& diffusion, const EncoderParams& f,
                             const AdaptorParams& adaptor, const ProjectorParams& projector,
                             const PredictorParams& predictor) {
  Tensor sm, sp;
  branch_features(view, social, diffusion, f, adaptor, &sm, &sp);
  Tensor r_sm = predict(predictor, project(projector, sm));
  Tensor r_sp = predict(predictor, project(projector, sp));
  return concat({r_sm, r_sp}, 1);
}

Tensor target_projection(const std::vector<int>& view, const Tensor& social,
                         const Tensor& diffusion, const EncoderParams& f,
                         const AdaptorParams& adaptor, const ProjectorParams& projector) {
  NoGradGuard ng;
  Tensor sm, sp;
  branch_features(view, social, diffusion, f, adaptor, &sm, &sp);
  return concat({project(projector, sm), project(projector, sp)}, 1);
}

Tensor aux_objective_cached(const AugmentedPair& views, const AuxObjectiveInputs& in,
                            const Tensor& z_a, const Tensor& z_b) {
  Tensor r_a = online_representation(views.view_a, *in.social, *in.diffusion, *in.encoder,
                                     *in.online_adaptor, *in.online_projector, *in.online_predictor);
  Tensor r_b = online_representation(views.view_b, *in.social, *in.diffusion, *in.encoder,
                                     *in.online_adaptor, *in.online_projector, *in.online_predictor);
  return add(byol_loss(r_a, z_b), byol_loss(r_b, z_a));
}

Tensor aux_objective(const AugmentedPair& views, const AuxObjectiveInputs& in) {
  Tensor z_a = target_projection(views.view_a, *in.social, *in.diffusion, *in.encoder,
                                 *in.target_adaptor, *in.target_projector);
  Tensor z_b = target_projection(views.view_b, *in.social, *in.diffusion, *in.encoder,
                                 *in.target_adaptor, *in.target_projector);
  return aux_objective_cached(views, in, z_a, z_b);
}

}  // namespace metacast
