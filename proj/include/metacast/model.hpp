// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "metacast/auxiliary.hpp"
#include "metacast/backbone.hpp"
#include "metacast/primary.hpp"
#include "metacast/user_rep.hpp"

namespace metacast {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Phase { joint, meta };

const char* phase_name(Phase p);
Phase phase_from_name(const std::string& s);

struct ModelConfig {
  std::size_t num_users = 0;
  std::size_t dim = 64;
  std::size_t intervals = 8;
  std::size_t gcn_layers = 2;
  std::size_t hgnn_layers = 1;
  bool separate_tables = false;

  bool operator==(const ModelConfig&) const = default;
};

// All trainable state, grouped into the partitions the training phases
// freeze and clone. The target copies mirror the online adaptor/projector
// and are maintained by EMA, never by gradients.
struct ModelState {
  ModelConfig cfg;
  Phase phase = Phase::joint;

  UserRepParams user_rep;
  EncoderParams encoder;
  AdaptorParams adaptor;
  ProjectorParams projector;
  PredictorParams predictor;
  MacroHeadParams macro_head;
  MicroHeadParams micro_head;
  AdaptorParams target_adaptor;
  ProjectorParams target_projector;

  static ModelState init(const ModelConfig& cfg, std::uint64_t seed);
  ModelState clone() const;

  // Manifest order is fixed; checkpoints and checksums depend on it.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> partition(const std::string& name) const;
  std::vector<Tensor> all_parameters() const;
  std::vector<Tensor> trainable_parameters() const;  // per current phase

  std::uint64_t partition_checksum(const std::string& name) const;

  // Phase transitions toggle requires_grad on the frozen partitions so no
  // tape ever records through them.
  void enter_phase(Phase p);

  int mask_index() const { return static_cast<int>(cfg.num_users); }
};

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace metacast
