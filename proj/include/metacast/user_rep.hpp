// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "metacast/data.hpp"
#include "metacast/tensor.hpp"

namespace metacast {

struct GcnParams {
  std::vector<Tensor> weights;  // per layer, d x d
  std::vector<Tensor> biases;   // per layer, 1 x d

  static GcnParams init(std::size_t layers, std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

struct HgnnParams {
  std::vector<Tensor> w_user;  // per layer, d x d
  std::vector<Tensor> w_edge;  // per layer, d x d

  static HgnnParams init(std::size_t layers, std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

struct FusionParams {
  Tensor gate_w;  // 2d x 1
  Tensor gate_b;  // 1 x 1

  static FusionParams init(std::size_t dim, Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Both encoders share one trainable init table of N+1 rows; the extra row is
// the MASK token used by sequence augmentation. An optional second table
// decouples the two encoders' inits.
struct UserRepParams {
  Tensor x0;       // (N+1) x d
  Tensor x0_diff;  // (N+1) x d, only when separate_tables
  bool separate_tables = false;
  GcnParams gcn;
  HgnnParams hgnn;
  FusionParams fusion;

  static UserRepParams init(std::size_t num_users, std::size_t dim, std::size_t gcn_layers,
                            std::size_t hgnn_layers, bool separate_tables, Rng& rng);
  std::vector<Tensor> parameters() const;
  std::size_t num_users() const { return x0.rows() - 1; }
  std::size_t dim() const { return x0.cols(); }
};

struct UserEmbeddings {
  Tensor social;     // (N+1) x d
  Tensor diffusion;  // (N+1) x d
};

// Stacked GCN layers over the normalized adjacency; ReLU between layers,
// final layer linear.
Tensor encode_social(const SparseMatrix& norm_adj, const Tensor& x0_core, const GcnParams& params);

// Per-interval HGNN (mean node-to-hyperedge then mean hyperedge-to-node, ReLU)
// followed by a scalar sigmoid gate fusing each active user's previous state
// with the interval output. Users absent from an interval carry forward.
Tensor encode_diffusion(const DiffusionHypergraphs& hg, const Tensor& x0_core,
                        const HgnnParams& params, const FusionParams& fusion);

// Full module: graph + hypergraphs -> both tables, MASK row appended verbatim.
UserEmbeddings encode_users(const SocialGraph& graph, const DiffusionHypergraphs& hg,
                            const UserRepParams& params);

// Row-normalized incidence operators for one interval, exposed for testing.
// edge_mean: |E_t| x N with 1/|e_j| over members; node_mean: K x |E_t| with
// 1/|edges containing active user i| (rows follow hg.active_users[t] order).
SparseMatrix hyperedge_mean_incidence(const DiffusionHypergraphs& hg, std::size_t t,
                                      std::size_t num_users);
SparseMatrix node_mean_incidence(const DiffusionHypergraphs& hg, std::size_t t);

}  // namespace metacast
