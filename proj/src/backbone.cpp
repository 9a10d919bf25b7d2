// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/backbone.hpp"

#include <cmath>

namespace metacast {

LstmParams LstmParams::init(std::size_t in, std::size_t hidden, Rng& rng) {
  LstmParams p;
  for (int g = 0; g < 4; ++g) {
    p.wx[g] = Tensor::randn({in, hidden}, rng, 0.1).set_requires_grad(true);
    p.wh[g] = Tensor::randn({hidden, hidden}, rng, 0.1).set_requires_grad(true);
    p.b[g] = Tensor::zeros({1, hidden}).set_requires_grad(true);
  }
  return p;
}

std::vector<Tensor> LstmParams::parameters() const {
  std::vector<Tensor> out;
  for (int g = 0; g < 4; ++g) out.push_back(wx[g]);
  for (int g = 0; g < 4; ++g) out.push_back(wh[g]);
  for (int g = 0; g < 4; ++g) out.push_back(b[g]);
  return out;
}

EncoderParams EncoderParams::init(std::size_t dim, Rng& rng) {
  EncoderParams p;
  p.dim = dim;
  p.shared = LstmParams::init(2 * dim, dim, rng);
  p.micro = LstmParams::init(dim, dim, rng);
  p.macro_side = LstmParams::init(dim, dim, rng);
  return p;
}

std::vector<Tensor> EncoderParams::parameters() const {
  std::vector<Tensor> out;
  for (const Tensor& t : shared.parameters()) out.push_back(t);
  for (const Tensor& t : micro.parameters()) out.push_back(t);
  for (const Tensor& t : macro_side.parameters()) out.push_back(t);
  return out;
}

AdaptorParams AdaptorParams::init(std::size_t dim, Rng& rng) {
  AdaptorParams p;
  p.w1 = Tensor::randn({4 * dim, 2 * dim}, rng, 0.1).set_requires_grad(true);
  p.b1 = Tensor::zeros({1, 2 * dim}).set_requires_grad(true);
  p.w2 = Tensor::zeros({2 * dim, 6 * dim * dim}).set_requires_grad(true);
  p.b2 = Tensor::zeros({1, 6 * dim * dim}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> AdaptorParams::parameters() const { return {w1, b1, w2, b2}; }

namespace {

// One LSTM pass over a precomputed input sequence, returning stacked hidden
// states (L x d).
Tensor run_lstm(const Tensor& inputs, const LstmParams& p) {
  const std::size_t steps = inputs.rows();
  const std::size_t d = p.hidden();
  Tensor h = Tensor::zeros({1, d});
  Tensor c = Tensor::zeros({1, d});
  std::vector<Tensor> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x = slice(inputs, 0, t, t + 1);
    Tensor gi = sigmoid(add(add_rowvec(matmul(x, p.wx[0]), p.b[0]), matmul(h, p.wh[0])));
    Tensor gf = sigmoid(add(add_rowvec(matmul(x, p.wx[1]), p.b[1]), matmul(h, p.wh[1])));
    Tensor go = sigmoid(add(add_rowvec(matmul(x, p.wx[2]), p.b[2]), matmul(h, p.wh[2])));
    Tensor gc = tanh(add(add_rowvec(matmul(x, p.wx[3]), p.b[3]), matmul(h, p.wh[3])));
    c = add(mul(gf, c), mul(gi, gc));
    h = mul(go, tanh(c));
    states.push_back(h);
  }
  return states.size() == 1 ? states[0] : concat(states, 0);
}

}  // namespace

SequenceFeatures encode_sequence(const std::vector<int>& users, const Tensor& social,
                                 const Tensor& diffusion, const EncoderParams& f) {
  if (users.empty()) throw TensorError("encode_sequence: empty sequence");
  Tensor xs = gather_rows(social, users);
  Tensor xd = gather_rows(diffusion, users);
  SequenceFeatures out;
  out.h_s = run_lstm(concat({xs, xd}, 1), f.shared);
  out.h_m = run_lstm(xs, f.micro);
  out.h_p = run_lstm(xd, f.macro_side);
  out.h_sm = concat({out.h_s, out.h_m}, 1);
  out.h_sp = concat({out.h_s, out.h_p}, 1);
  out.pooled = concat({mean_axis0(out.h_sm), mean_axis0(out.h_sp)}, 1);
  return out;
}

FilmParams adapt(const Tensor& pooled, const AdaptorParams& adaptor) {
  const std::size_t d2 = adaptor.w2.cols() / 6;  // d^2 per block
  const std::size_t d = static_cast<std::size_t>(std::sqrt(static_cast<double>(d2)));
  Tensor hidden = relu(add_rowvec(matmul(pooled, adaptor.w1), adaptor.b1));
  Tensor raw = add_rowvec(matmul(hidden, adaptor.w2), adaptor.b2);  // 1 x 6d^2
  FilmParams film;
  for (int k = 0; k < 3; ++k) {
    Tensor g_raw = slice(raw, 1, (2 * k) * d2, (2 * k + 1) * d2);
    Tensor b_raw = slice(raw, 1, (2 * k + 1) * d2, (2 * k + 2) * d2);
    film.gamma[k] = reshape(add(mul(tanh(g_raw), 0.5), 1.0), {d, d});
    film.beta[k] = reshape(b_raw, {d, d});
  }
  return film;
}

namespace {

LstmParams film_lstm(const LstmParams& p, const Tensor& gamma, const Tensor& beta) {
  LstmParams out;
  for (int g = 0; g < 4; ++g) {
    out.wx[g] = p.wx[g];
    out.b[g] = p.b[g];
    out.wh[g] = add(mul(p.wh[g], gamma), beta);
  }
  return out;
}

}  // namespace

EncoderParams customize(const EncoderParams& f, const FilmParams& film) {
  EncoderParams out;
  out.dim = f.dim;
  out.shared = film_lstm(f.shared, film.gamma[0], film.beta[0]);
  out.micro = film_lstm(f.micro, film.gamma[1], film.beta[1]);
  out.macro_side = film_lstm(f.macro_side, film.gamma[2], film.beta[2]);
  return out;
}

BackboneOutput run_backbone(const std::vector<int>& users, const Tensor& social,
                            const Tensor& diffusion, const EncoderParams& f,
                            const AdaptorParams& adaptor) {
  BackboneOutput out;
  out.first_pass = encode_sequence(users, social, diffusion, f);
  out.film = adapt(out.first_pass.pooled, adaptor);
  out.adapted = encode_sequence(users, social, diffusion, customize(f, out.film));
  return out;
}

}  // namespace metacast
