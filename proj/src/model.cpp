// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metacast {

static_assert(sizeof(double) == 8);
static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian float64");

const char* phase_name(Phase p) { return p == Phase::joint ? "joint" : "meta"; }

Phase phase_from_name(const std::string& s) {
  if (s == "joint") return Phase::joint;
  if (s == "meta") return Phase::meta;
  throw CheckpointError("unknown phase '" + s + "'");
}

ModelState ModelState::init(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ModelState s;
  s.cfg = cfg;
  s.user_rep = UserRepParams::init(cfg.num_users, cfg.dim, cfg.gcn_layers, cfg.hgnn_layers,
                                   cfg.separate_tables, rng);
  s.encoder = EncoderParams::init(cfg.dim, rng);
  s.adaptor = AdaptorParams::init(cfg.dim, rng);
  s.projector = ProjectorParams::init(cfg.dim, rng);
  s.predictor = PredictorParams::init(cfg.dim, rng);
  s.macro_head = MacroHeadParams::init(cfg.dim, rng);
  s.micro_head = MicroHeadParams::init(cfg.dim, cfg.num_users, rng);
  // target starts as a copy of the online side; cloned so EMA writes do not
  // alias the online parameters
  s.target_adaptor.w1 = s.adaptor.w1.clone().set_requires_grad(false);
  s.target_adaptor.b1 = s.adaptor.b1.clone().set_requires_grad(false);
  s.target_adaptor.w2 = s.adaptor.w2.clone().set_requires_grad(false);
  s.target_adaptor.b2 = s.adaptor.b2.clone().set_requires_grad(false);
  s.target_projector.w1 = s.projector.w1.clone().set_requires_grad(false);
  s.target_projector.b1 = s.projector.b1.clone().set_requires_grad(false);
  s.target_projector.w2 = s.projector.w2.clone().set_requires_grad(false);
  s.target_projector.b2 = s.projector.b2.clone().set_requires_grad(false);
  s.enter_phase(Phase::joint);
  return s;
}

ModelState ModelState::clone() const {
  ModelState out = *this;
  auto named_src = named_parameters();
  // rebuild every tensor as a deep copy, preserving structure by re-assigning
  // through the same accessors
  ModelState fresh = *this;
  auto copy_all = [](ModelState& st) {
    auto fix = [](Tensor& t) { t = t.clone(); };
    fix(st.user_rep.x0);
    if (st.user_rep.separate_tables) fix(st.user_rep.x0_diff);
    for (auto& t : st.user_rep.gcn.weights) fix(t);
    for (auto& t : st.user_rep.gcn.biases) fix(t);
    for (auto& t : st.user_rep.hgnn.w_user) fix(t);
    for (auto& t : st.user_rep.hgnn.w_edge) fix(t);
    fix(st.user_rep.fusion.gate_w);
    fix(st.user_rep.fusion.gate_b);
    for (auto* l : {&st.encoder.shared, &st.encoder.micro, &st.encoder.macro_side}) {
      for (int g = 0; g < 4; ++g) {
        fix(l->wx[g]);
        fix(l->wh[g]);
        fix(l->b[g]);
      }
    }
    for (auto* a : {&st.adaptor, &st.target_adaptor}) {
      fix(a->w1);
      fix(a->b1);
      fix(a->w2);
      fix(a->b2);
    }
    for (auto* q : {&st.projector, &st.target_projector}) {
      fix(q->w1);
      fix(q->b1);
      fix(q->w2);
      fix(q->b2);
    }
    fix(st.predictor.w1);
    fix(st.predictor.b1);
    fix(st.predictor.w2);
    fix(st.predictor.b2);
    fix(st.macro_head.w1);
    fix(st.macro_head.b1);
    fix(st.macro_head.w2);
    fix(st.macro_head.b2);
    fix(st.micro_head.w);
    fix(st.micro_head.b);
  };
  copy_all(fresh);
  (void)named_src;
  (void)out;
  return fresh;
}

std::vector<std::pair<std::string, Tensor>> ModelState::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push = [&out](const std::string& name, const Tensor& t) { out.emplace_back(name, t); };
  push("user_rep.x0", user_rep.x0);
  if (user_rep.separate_tables) push("user_rep.x0_diff", user_rep.x0_diff);
  for (std::size_t l = 0; l < user_rep.gcn.weights.size(); ++l) {
    push("user_rep.gcn." + std::to_string(l) + ".w", user_rep.gcn.weights[l]);
    push("user_rep.gcn." + std::to_string(l) + ".b", user_rep.gcn.biases[l]);
  }
  for (std::size_t l = 0; l < user_rep.hgnn.w_user.size(); ++l) {
    push("user_rep.hgnn." + std::to_string(l) + ".wu", user_rep.hgnn.w_user[l]);
    push("user_rep.hgnn." + std::to_string(l) + ".we", user_rep.hgnn.w_edge[l]);
  }
  push("user_rep.fusion.w", user_rep.fusion.gate_w);
  push("user_rep.fusion.b", user_rep.fusion.gate_b);
  const char* gates = "ifoc";
  auto push_lstm = [&](const std::string& prefix, const LstmParams& l) {
    for (int g = 0; g < 4; ++g) push(prefix + ".wx" + gates[g], l.wx[g]);
    for (int g = 0; g < 4; ++g) push(prefix + ".wh" + gates[g], l.wh[g]);
    for (int g = 0; g < 4; ++g) push(prefix + ".b" + gates[g], l.b[g]);
  };
  push_lstm("encoder.shared", encoder.shared);
  push_lstm("encoder.micro", encoder.micro);
  push_lstm("encoder.macro", encoder.macro_side);
  push("adaptor.w1", adaptor.w1);
  push("adaptor.b1", adaptor.b1);
  push("adaptor.w2", adaptor.w2);
  push("adaptor.b2", adaptor.b2);
  push("projector.w1", projector.w1);
  push("projector.b1", projector.b1);
  push("projector.w2", projector.w2);
  push("projector.b2", projector.b2);
  push("predictor.w1", predictor.w1);
  push("predictor.b1", predictor.b1);
  push("predictor.w2", predictor.w2);
  push("predictor.b2", predictor.b2);
  push("macro_head.w1", macro_head.w1);
  push("macro_head.b1", macro_head.b1);
  push("macro_head.w2", macro_head.w2);
  push("macro_head.b2", macro_head.b2);
  push("micro_head.w", micro_head.w);
  push("micro_head.b", micro_head.b);
  push("target_adaptor.w1", target_adaptor.w1);
  push("target_adaptor.b1", target_adaptor.b1);
  push("target_adaptor.w2", target_adaptor.w2);
  push("target_adaptor.b2", target_adaptor.b2);
  push("target_projector.w1", target_projector.w1);
  push("target_projector.b1", target_projector.b1);
  push("target_projector.w2", target_projector.w2);
  push("target_projector.b2", target_projector.b2);
  return out;
}

std::vector<Tensor> ModelState::partition(const std::string& name) const {
  if (name == "user_rep") return user_rep.parameters();
  if (name == "encoder") return encoder.parameters();
  if (name == "adaptor") return adaptor.parameters();
  if (name == "projector") return projector.parameters();
  if (name == "predictor") return predictor.parameters();
  if (name == "heads") {
    std::vector<Tensor> out = macro_head.parameters();
    for (const Tensor& t : micro_head.parameters()) out.push_back(t);
    return out;
  }
  if (name == "target") {
    std::vector<Tensor> out = target_adaptor.parameters();
    for (const Tensor& t : target_projector.parameters()) out.push_back(t);
    return out;
  }
  throw TensorError("unknown partition '" + name + "'");
}

std::vector<Tensor> ModelState::all_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<Tensor> ModelState::trainable_parameters() const {
  std::vector<Tensor> out;
  std::vector<std::string> parts = (phase == Phase::joint)
                                       ? std::vector<std::string>{"user_rep", "encoder", "adaptor",
                                                                  "projector", "predictor", "heads"}
                                       : std::vector<std::string>{"adaptor", "projector",
                                                                  "predictor", "heads"};
  for (const std::string& p : parts) {
    for (const Tensor& t : partition(p)) out.push_back(t);
  }
  return out;
}

std::uint64_t ModelState::partition_checksum(const std::string& name) const {
  return checksum(partition(name));
}

void ModelState::enter_phase(Phase p) {
  phase = p;
  const bool joint = (p == Phase::joint);
  for (const std::string& part : {"user_rep", "encoder"}) {
    for (Tensor t : partition(part)) t.set_requires_grad(joint);
  }
  for (const std::string& part : {"adaptor", "projector", "predictor", "heads"}) {
    for (Tensor t : partition(part)) t.set_requires_grad(true);
  }
  for (Tensor t : partition("target")) t.set_requires_grad(false);
}

// ---------------------------------------------------------------------------
// Checkpoint container: UTF-8 header (version, config, manifest) followed by
// raw little-endian float64 payload in manifest order.

namespace {
constexpr const char* kMagic = "metacast-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write '" + path + "'");
  std::ostringstream header;
  header << kMagic << " v" << kVersion << "\n";
  header << "phase = " << phase_name(state.phase) << "\n";
  header << "num_users = " << state.cfg.num_users << "\n";
  header << "dim = " << state.cfg.dim << "\n";
  header << "intervals = " << state.cfg.intervals << "\n";
  header << "gcn_layers = " << state.cfg.gcn_layers << "\n";
  header << "hgnn_layers = " << state.cfg.hgnn_layers << "\n";
  header << "separate_tables = " << (state.cfg.separate_tables ? 1 : 0) << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : state.named_parameters()) {
    header << "tensor " << name << " " << shape_str(t.shape()) << " " << offset << " " << t.numel()
           << "\n";
    offset += t.numel();
  }
  header << "payload " << offset << "\n";
  header << "end-header\n";
  const std::string h = header.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, t] : state.named_parameters()) {
    f.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!f) throw CheckpointError("write failed for '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw CheckpointError("'" + path + "': empty file");
  {
    std::istringstream ls(line);
    std::string magic, ver;
    ls >> magic >> ver;
    if (magic != kMagic) throw CheckpointError("'" + path + "': not a checkpoint file");
    const std::string expect = "v" + std::to_string(kVersion);
    if (ver != expect) {
      throw CheckpointError("'" + path + "': format version " + ver + ", expected " + expect);
    }
  }
  ModelConfig cfg;
  Phase phase = Phase::joint;
  struct ManifestEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  std::vector<ManifestEntry> manifest;
  std::size_t payload = 0;
  bool saw_end = false;
  while (std::getline(f, line)) {
    if (line == "end-header") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor") {
      ManifestEntry e;
      std::string shape;
      ls >> e.name >> shape >> e.offset >> e.count;
      manifest.push_back(e);
    } else if (key == "payload") {
      ls >> payload;
    } else {
      std::string eq, value;
      ls >> eq >> value;
      if (eq != "=") throw CheckpointError("'" + path + "': malformed header line '" + line + "'");
      if (key == "phase") phase = phase_from_name(value);
      else if (key == "num_users") cfg.num_users = std::stoull(value);
      else if (key == "dim") cfg.dim = std::stoull(value);
      else if (key == "intervals") cfg.intervals = std::stoull(value);
      else if (key == "gcn_layers") cfg.gcn_layers = std::stoull(value);
      else if (key == "hgnn_layers") cfg.hgnn_layers = std::stoull(value);
      else if (key == "separate_tables") cfg.separate_tables = (value == "1");
      else throw CheckpointError("'" + path + "': unknown header key '" + key + "'");
    }
  }
  if (!saw_end) throw CheckpointError("'" + path + "': truncated header");

  ModelState state = ModelState::init(cfg, 0);
  state.phase = phase;
  auto named = state.named_parameters();
  if (named.size() != manifest.size()) {
    throw CheckpointError("'" + path + "': manifest has " + std::to_string(manifest.size()) +
                          " tensors, model expects " + std::to_string(named.size()));
  }
  std::vector<double> buffer(payload);
  f.read(reinterpret_cast<char*>(buffer.data()),
         static_cast<std::streamsize>(payload * sizeof(double)));
  if (static_cast<std::size_t>(f.gcount()) != payload * sizeof(double)) {
    throw CheckpointError("'" + path + "': truncated payload");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    const auto& e = manifest[i];
    if (e.name != name) {
      throw CheckpointError("'" + path + "': manifest tensor '" + e.name + "', model expects '" +
                            name + "'");
    }
    if (e.count != t.numel()) {
      throw CheckpointError("'" + path + "': tensor '" + name + "' has " + std::to_string(e.count) +
                            " values, model shape " + shape_str(t.shape()) + " expects " +
                            std::to_string(t.numel()));
    }
    if (e.offset + e.count > payload) throw CheckpointError("'" + path + "': manifest out of range");
    std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(e.offset),
              buffer.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count),
              const_cast<Tensor&>(t).mutable_values().begin());
  }
  state.enter_phase(phase);
  return state;
}

}  // namespace metacast
