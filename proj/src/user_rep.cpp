// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/user_rep.hpp"

#include <map>

namespace metacast {

GcnParams GcnParams::init(std::size_t layers, std::size_t dim, Rng& rng) {
  GcnParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    p.weights.push_back(Tensor::randn({dim, dim}, rng, 0.1).set_requires_grad(true));
    p.biases.push_back(Tensor::zeros({1, dim}).set_requires_grad(true));
  }
  return p;
}

std::vector<Tensor> GcnParams::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

HgnnParams HgnnParams::init(std::size_t layers, std::size_t dim, Rng& rng) {
  HgnnParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    p.w_user.push_back(Tensor::randn({dim, dim}, rng, 0.1).set_requires_grad(true));
    p.w_edge.push_back(Tensor::randn({dim, dim}, rng, 0.1).set_requires_grad(true));
  }
  return p;
}

std::vector<Tensor> HgnnParams::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < w_user.size(); ++l) {
    out.push_back(w_user[l]);
    out.push_back(w_edge[l]);
  }
  return out;
}

FusionParams FusionParams::init(std::size_t dim, Rng& rng) {
  FusionParams p;
  p.gate_w = Tensor::randn({2 * dim, 1}, rng, 0.1).set_requires_grad(true);
  p.gate_b = Tensor::zeros({1, 1}).set_requires_grad(true);
  return p;
}

std::vector<Tensor> FusionParams::parameters() const { return {gate_w, gate_b}; }

UserRepParams UserRepParams::init(std::size_t num_users, std::size_t dim, std::size_t gcn_layers,
                                  std::size_t hgnn_layers, bool separate_tables, Rng& rng) {
  UserRepParams p;
  p.x0 = Tensor::randn({num_users + 1, dim}, rng, 0.1).set_requires_grad(true);
  p.separate_tables = separate_tables;
  if (separate_tables) {
    p.x0_diff = Tensor::randn({num_users + 1, dim}, rng, 0.1).set_requires_grad(true);
  }
  p.gcn = GcnParams::init(gcn_layers, dim, rng);
  p.hgnn = HgnnParams::init(hgnn_layers, dim, rng);
  p.fusion = FusionParams::init(dim, rng);
  return p;
}

std::vector<Tensor> UserRepParams::parameters() const {
  std::vector<Tensor> out{x0};
  if (separate_tables) out.push_back(x0_diff);
  for (const Tensor& t : gcn.parameters()) out.push_back(t);
  for (const Tensor& t : hgnn.parameters()) out.push_back(t);
  for (const Tensor& t : fusion.parameters()) out.push_back(t);
  return out;
}

Tensor encode_social(const SparseMatrix& norm_adj, const Tensor& x0_core, const GcnParams& params) {
  Tensor x = x0_core;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor z = add_rowvec(matmul(spmm(norm_adj, x), params.weights[l]), params.biases[l]);
    x = (l + 1 < layers) ? relu(z) : z;  // final layer linear
  }
  return x;
}

SparseMatrix hyperedge_mean_incidence(const DiffusionHypergraphs& hg, std::size_t t,
                                      std::size_t num_users) {
  const auto& edges = hg.hyperedges[t];
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    const double w = 1.0 / static_cast<double>(edges[j].size());
    for (int u : edges[j]) trips.emplace_back(j, static_cast<std::size_t>(u), w);
  }
  return SparseMatrix::from_triplets(edges.size(), num_users, std::move(trips));
}

SparseMatrix node_mean_incidence(const DiffusionHypergraphs& hg, std::size_t t) {
  const auto& edges = hg.hyperedges[t];
  const auto& active = hg.active_users[t];
  std::map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < active.size(); ++i) row_of[active[i]] = i;
  std::vector<std::size_t> edge_count(active.size(), 0);
  for (const auto& e : edges) {
    for (int u : e) edge_count[row_of[u]]++;
  }
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    for (int u : edges[j]) {
      const std::size_t r = row_of[u];
      trips.emplace_back(r, j, 1.0 / static_cast<double>(edge_count[r]));
    }
  }
  return SparseMatrix::from_triplets(active.size(), edges.size(), std::move(trips));
}

Tensor encode_diffusion(const DiffusionHypergraphs& hg, const Tensor& x0_core,
                        const HgnnParams& params, const FusionParams& fusion) {
  const std::size_t num_users = x0_core.rows();
  Tensor state = x0_core;
  for (std::size_t t = 0; t < hg.intervals; ++t) {
    if (hg.hyperedges[t].empty()) continue;  // empty interval: carry forward
    const SparseMatrix edge_mean = hyperedge_mean_incidence(hg, t, num_users);
    const SparseMatrix node_mean = node_mean_incidence(hg, t);
    const std::vector<int>& active = hg.active_users[t];

    Tensor x = state;
    Tensor x_active;
    for (std::size_t l = 0; l < params.w_user.size(); ++l) {
      Tensor messages = relu(spmm(edge_mean, matmul(x, params.w_user[l])));
      x_active = relu(matmul(spmm(node_mean, messages), params.w_edge[l]));
      // deeper layers see updated active rows, untouched rows elsewhere
      if (l + 1 < params.w_user.size()) x = scatter_rows(x, active, x_active);
    }
    Tensor x_prev = gather_rows(state, active);
    Tensor gate = sigmoid(add_rowvec(matmul(concat({x_prev, x_active}, 1), fusion.gate_w),
                                     fusion.gate_b));
    Tensor fused = add(row_scale(x_prev, gate), row_scale(x_active, sub(Tensor::full({active.size(), 1}, 1.0), gate)));
    state = scatter_rows(state, active, fused);
  }
  return state;
}

UserEmbeddings encode_users(const SocialGraph& graph, const DiffusionHypergraphs& hg,
                            const UserRepParams& params) {
  const std::size_t n = params.num_users();
  Tensor social_core = slice(params.x0, 0, 0, n);
  Tensor diff_core = params.separate_tables ? slice(params.x0_diff, 0, 0, n) : social_core;
  Tensor mask_row = slice(params.x0, 0, n, n + 1);
  Tensor mask_row_diff = params.separate_tables ? slice(params.x0_diff, 0, n, n + 1) : mask_row;

  UserEmbeddings emb;
  emb.social = concat({encode_social(graph.normalized_adjacency(), social_core, params.gcn), mask_row}, 0);
  emb.diffusion =
      concat({encode_diffusion(hg, diff_core, params.hgnn, params.fusion), mask_row_diff}, 0);
  return emb;
}

}  // namespace metacast
