// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "metacast/tensor.hpp"

namespace metacast {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CascadeEvent {
  int user = 0;
  double ts = 0.0;
};

// One time-ordered adoption sequence. final_size keeps the pre-truncation
// event count so popularity labels survive the max-length cap.
struct Cascade {
  std::string id;
  std::vector<CascadeEvent> events;
  std::size_t final_size = 0;

  std::size_t size() const { return events.size(); }
  double start_time() const { return events.empty() ? 0.0 : events.front().ts; }
  std::vector<int> users() const;
};

struct SocialGraph {
  std::size_t num_users = 0;
  bool directed = false;
  std::vector<std::pair<int, int>> edges;  // deduplicated; canonical (min,max) when undirected

  // D^{-1/2} (A + I) D^{-1/2}; symmetric when undirected.
  SparseMatrix normalized_adjacency() const;
  std::vector<std::size_t> degrees() const;  // neighbor count incl. both directions
};

struct DiffusionHypergraphs {
  std::size_t intervals = 0;
  double t_min = 0.0;
  double t_max = 0.0;
  // per interval: hyperedges (each a sorted user set, one per active cascade)
  std::vector<std::vector<std::vector<int>>> hyperedges;
  // per interval: sorted union of hyperedge members
  std::vector<std::vector<int>> active_users;

  std::vector<double> inner_boundaries() const;  // T-1 cut points
};

struct DatasetSplit {
  std::vector<Cascade> train, valid, test;
};

struct Dataset {
  SocialGraph graph;
  std::vector<Cascade> cascades;
};

struct LoadOptions {
  std::size_t max_cascade_length = 200;
  bool directed = false;
};

// Parses the tab/space cascade grammar and the edge-list graph file. User ids
// are re-indexed densely in order of first appearance (cascades first, then
// graph). Duplicate users within a cascade are dropped with a warning; any
// other malformed content is a hard error naming the file location.
Dataset load_dataset(const std::string& cascade_path, const std::string& graph_path,
                     const LoadOptions& opts = {}, std::vector<std::string>* warnings = nullptr);

void write_dataset(const Dataset& data, const std::string& cascade_path,
                   const std::string& graph_path);

// Equal-width partition of [min_ts, max_ts] into T intervals (last one
// right-closed); one hyperedge per (cascade, interval) with at least one event.
DiffusionHypergraphs build_hypergraphs(const std::vector<Cascade>& train_cascades, std::size_t T);

// Sorts by (start time, id) and cuts contiguous slices; floor allocation with
// the remainder going to train.
DatasetSplit chronological_split(std::vector<Cascade> cascades,
                                 std::array<double, 3> fractions = {0.8, 0.1, 0.1});

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t pa_edges_per_node = 2;
  std::size_t n_cascades = 300;
  double activation_p = 0.15;
  double shift_fraction = 0.0;
  double shift_factor = 1.0;
  std::size_t hub_dropout_k = 0;
  std::uint64_t seed = 1;
};

// Preferential-attachment graph plus independent-cascade simulations. The
// chronologically last shift_fraction of cascades run with activation
// probability scaled by shift_factor and the top-k-degree hubs deactivated.
Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace metacast
