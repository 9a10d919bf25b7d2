// Copyright 2026 The metacast Authors
// SPDX-License-Identifier: Apache-2.0

#include "metacast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace metacast {

std::vector<int> Cascade::users() const {
  std::vector<int> us;
  us.reserve(events.size());
  for (const auto& e : events) us.push_back(e.user);
  return us;
}

// ---------------------------------------------------------------------------
// SocialGraph

std::vector<std::size_t> SocialGraph::degrees() const {
  std::vector<std::size_t> deg(num_users, 0);
  for (const auto& [u, v] : edges) {
    deg[u]++;
    deg[v]++;
  }
  return deg;
}

SparseMatrix SocialGraph::normalized_adjacency() const {
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  trips.reserve(edges.size() * 2 + num_users);
  std::vector<double> row_deg(num_users, 1.0);  // self loop
  std::vector<double> col_deg(num_users, 1.0);
  for (const auto& [u, v] : edges) {
    row_deg[u] += 1.0;
    col_deg[v] += 1.0;
    if (!directed) {
      row_deg[v] += 1.0;
      col_deg[u] += 1.0;
    }
  }
  auto push = [&](std::size_t r, std::size_t c) {
    trips.emplace_back(r, c, 1.0 / std::sqrt(row_deg[r] * col_deg[c]));
  };
  for (std::size_t i = 0; i < num_users; ++i) push(i, i);
  for (const auto& [u, v] : edges) {
    push(u, v);
    if (!directed) push(v, u);
  }
  return SparseMatrix::from_triplets(num_users, num_users, std::move(trips));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

long long parse_int(const std::string& tok, const std::string& where) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse integer '" + tok + "'");
  }
}

double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse number '" + tok + "'");
  }
}

std::string format_ts(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_dataset(const std::string& cascade_path, const std::string& graph_path,
                     const LoadOptions& opts, std::vector<std::string>* warnings) {
  std::ifstream cf(cascade_path);
  if (!cf) throw DataError("cannot open cascade file '" + cascade_path + "'");
  std::ifstream gf(graph_path);
  if (!gf) throw DataError("cannot open graph file '" + graph_path + "'");

  Dataset data;
  data.graph.directed = opts.directed;
  std::unordered_map<long long, int> index;
  auto dense = [&index](long long raw) {
    auto it = index.find(raw);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(index.size());
    index.emplace(raw, id);
    return id;
  };

  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(cf, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(location(cascade_path, lineno) + ": missing tab separator");
    }
    Cascade c;
    c.id = line.substr(0, tab);
    if (c.id.empty()) throw DataError(location(cascade_path, lineno) + ": empty cascade id");
    if (!seen_ids.insert(c.id).second) {
      throw DataError(location(cascade_path, lineno) + ": duplicate cascade id '" + c.id + "'");
    }
    std::istringstream events(line.substr(tab + 1));
    std::string tok;
    std::unordered_set<int> members;
    std::size_t raw_count = 0;
    double prev_ts = -std::numeric_limits<double>::infinity();
    while (events >> tok) {
      const auto comma = tok.find(',');
      if (comma == std::string::npos) {
        throw DataError(location(cascade_path, lineno) + ": event '" + tok +
                        "' is not <user>,<timestamp>");
      }
      const std::string where = location(cascade_path, lineno);
      const long long raw_user = parse_int(tok.substr(0, comma), where);
      const double ts = parse_double(tok.substr(comma + 1), where);
      if (!std::isfinite(ts) || ts < 0.0) {
        throw DataError(where + ": invalid timestamp '" + tok.substr(comma + 1) + "'");
      }
      if (ts < prev_ts) {
        throw DataError(where + ": non-monotone timestamps");
      }
      prev_ts = ts;
      ++raw_count;
      const int u = dense(raw_user);
      if (!members.insert(u).second) {
        if (warnings) {
          warnings->push_back(location(cascade_path, lineno) + ": duplicate user " +
                              std::to_string(raw_user) + " in cascade '" + c.id + "', dropped");
        }
        continue;
      }
      if (c.events.size() < opts.max_cascade_length) {
        c.events.push_back({u, ts});
      }
    }
    (void)raw_count;
    if (c.events.empty()) {
      throw DataError(location(cascade_path, lineno) + ": cascade '" + c.id + "' has no events");
    }
    c.final_size = members.size();  // pre-truncation distinct adopters
    data.cascades.push_back(std::move(c));
  }

  std::set<std::pair<int, int>> edge_set;
  lineno = 0;
  while (std::getline(gf, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a >> b) || (ls >> extra)) {
      throw DataError(location(graph_path, lineno) + ": expected '<user> <user>'");
    }
    const std::string where = location(graph_path, lineno);
    int u = dense(parse_int(a, where));
    int v = dense(parse_int(b, where));
    if (u == v) continue;  // self loops are implicit in the normalization
    if (!opts.directed && u > v) std::swap(u, v);
    edge_set.emplace(u, v);
  }
  data.graph.edges.assign(edge_set.begin(), edge_set.end());
  data.graph.num_users = index.size();
  return data;
}

void write_dataset(const Dataset& data, const std::string& cascade_path,
                   const std::string& graph_path) {
  std::ofstream cf(cascade_path);
  if (!cf) throw DataError("cannot write '" + cascade_path + "'");
  for (const Cascade& c : data.cascades) {
    cf << c.id << '\t';
    for (std::size_t i = 0; i < c.events.size(); ++i) {
      if (i) cf << ' ';
      cf << c.events[i].user << ',' << format_ts(c.events[i].ts);
    }
    cf << '\n';
  }
  std::ofstream gf(graph_path);
  if (!gf) throw DataError("cannot write '" + graph_path + "'");
  for (const auto& [u, v] : data.graph.edges) gf << u << ' ' << v << '\n';
}

// ---------------------------------------------------------------------------
// Hypergraphs

std::vector<double> DiffusionHypergraphs::inner_boundaries() const {
  std::vector<double> b;
  if (intervals < 2) return b;
  const double width = (t_max - t_min) / static_cast<double>(intervals);
  for (std::size_t k = 1; k < intervals; ++k) b.push_back(t_min + width * static_cast<double>(k));
  return b;
}

DiffusionHypergraphs build_hypergraphs(const std::vector<Cascade>& train_cascades, std::size_t T) {
  if (T < 1) throw DataError("build_hypergraphs: interval count must be >= 1");
  DiffusionHypergraphs hg;
  hg.intervals = T;
  bool any = false;
  for (const Cascade& c : train_cascades) {
    for (const auto& e : c.events) {
      if (!any) {
        hg.t_min = hg.t_max = e.ts;
        any = true;
      } else {
        hg.t_min = std::min(hg.t_min, e.ts);
        hg.t_max = std::max(hg.t_max, e.ts);
      }
    }
  }
  if (!any) throw DataError("build_hypergraphs: no training events");
  hg.hyperedges.assign(T, {});
  hg.active_users.assign(T, {});
  const double width = (hg.t_max - hg.t_min) / static_cast<double>(T);
  auto interval_of = [&](double ts) -> std::size_t {
    if (width <= 0.0) return 0;
    const auto k = static_cast<std::size_t>((ts - hg.t_min) / width);
    return std::min(k, T - 1);  // right-close the last interval
  };
  for (const Cascade& c : train_cascades) {
    std::vector<std::set<int>> per_interval(T);
    for (const auto& e : c.events) per_interval[interval_of(e.ts)].insert(e.user);
    for (std::size_t t = 0; t < T; ++t) {
      if (per_interval[t].empty()) continue;
      hg.hyperedges[t].emplace_back(per_interval[t].begin(), per_interval[t].end());
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    std::set<int> users;
    for (const auto& e : hg.hyperedges[t]) users.insert(e.begin(), e.end());
    hg.active_users[t].assign(users.begin(), users.end());
  }
  return hg;
}

// ---------------------------------------------------------------------------
// Split

DatasetSplit chronological_split(std::vector<Cascade> cascades, std::array<double, 3> fractions) {
  const double fsum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(fsum - 1.0) > 1e-9) {
    throw DataError("chronological_split: fractions sum to " + std::to_string(fsum));
  }
  if (cascades.size() < 3) {
    throw DataError("chronological_split: need at least 3 cascades, got " +
                    std::to_string(cascades.size()));
  }
  std::stable_sort(cascades.begin(), cascades.end(), [](const Cascade& a, const Cascade& b) {
    if (a.start_time() != b.start_time()) return a.start_time() < b.start_time();
    return a.id < b.id;
  });
  const std::size_t n = cascades.size();
  std::size_t n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n)));
  const std::size_t n_valid = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n)));
  const std::size_t n_test = static_cast<std::size_t>(std::floor(fractions[2] * static_cast<double>(n)));
  n_train += n - (n_train + n_valid + n_test);  // remainder to train
  DatasetSplit split;
  split.train.assign(cascades.begin(), cascades.begin() + n_train);
  split.valid.assign(cascades.begin() + n_train, cascades.begin() + n_train + n_valid);
  split.test.assign(cascades.begin() + n_train + n_valid, cascades.end());
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

std::vector<std::vector<int>> preferential_attachment(std::size_t n, std::size_t m, Rng& rng) {
  if (n < 2) throw DataError("generate_synthetic: need at least 2 users");
  const std::size_t m_eff = std::max<std::size_t>(1, std::min(m, n - 1));
  std::vector<std::set<int>> adj(n);
  std::vector<int> endpoint_pool;
  // seed clique over the first m_eff+1 nodes
  const std::size_t seed_n = m_eff + 1;
  for (std::size_t i = 0; i < seed_n; ++i) {
    for (std::size_t j = i + 1; j < seed_n; ++j) {
      adj[i].insert(static_cast<int>(j));
      adj[j].insert(static_cast<int>(i));
      endpoint_pool.push_back(static_cast<int>(i));
      endpoint_pool.push_back(static_cast<int>(j));
    }
  }
  for (std::size_t v = seed_n; v < n; ++v) {
    std::set<int> targets;
    std::size_t guard = 0;
    while (targets.size() < m_eff && guard++ < 1000) {
      const int t = endpoint_pool[rng.uniform_int(endpoint_pool.size())];
      if (static_cast<std::size_t>(t) != v) targets.insert(t);
    }
    for (int t : targets) {
      adj[v].insert(t);
      adj[t].insert(static_cast<int>(v));
      endpoint_pool.push_back(static_cast<int>(v));
      endpoint_pool.push_back(t);
    }
  }
  std::vector<std::vector<int>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(adj[i].begin(), adj[i].end());
  return out;
}

struct IcDraw {
  std::vector<CascadeEvent> events;
};

IcDraw simulate_cascade(const std::vector<std::vector<int>>& adj,
                        const std::vector<std::uint8_t>& active_ok, double p, Rng& rng) {
  IcDraw draw;
  std::vector<int> eligible;
  for (std::size_t u = 0; u < adj.size(); ++u) {
    if (active_ok[u]) eligible.push_back(static_cast<int>(u));
  }
  if (eligible.empty()) return draw;
  const int seed_user = eligible[rng.uniform_int(eligible.size())];
  std::vector<std::uint8_t> infected(adj.size(), 0);
  infected[seed_user] = 1;
  draw.events.push_back({seed_user, rng.uniform(0.0, 0.5)});
  std::vector<int> frontier{seed_user};
  double depth = 0.0;
  while (!frontier.empty()) {
    depth += 1.0;
    std::vector<int> next;
    for (int u : frontier) {
      for (int v : adj[u]) {
        if (infected[v] || !active_ok[v]) continue;
        if (rng.uniform() < p) {
          infected[v] = 1;
          next.push_back(v);
          draw.events.push_back({v, depth + rng.uniform(0.0, 0.5)});
        }
      }
    }
    frontier = std::move(next);
  }
  return draw;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_users < 2 || cfg.n_cascades < 1 || cfg.pa_edges_per_node < 1) {
    throw DataError("generate_synthetic: config fields must be positive");
  }
  if (cfg.activation_p < 0.0 || cfg.activation_p > 1.0) {
    throw DataError("generate_synthetic: activation_p outside [0, 1]");
  }
  Rng rng(cfg.seed);
  auto adj = preferential_attachment(cfg.n_users, cfg.pa_edges_per_node, rng);

  Dataset data;
  data.graph.num_users = cfg.n_users;
  std::set<std::pair<int, int>> edge_set;
  for (std::size_t u = 0; u < adj.size(); ++u) {
    for (int v : adj[u]) {
      edge_set.emplace(std::min<int>(static_cast<int>(u), v), std::max<int>(static_cast<int>(u), v));
    }
  }
  data.graph.edges.assign(edge_set.begin(), edge_set.end());

  // top-k-degree hubs (deactivated in the shifted regime)
  std::vector<std::size_t> deg = data.graph.degrees();
  std::vector<int> by_degree(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) by_degree[i] = static_cast<int>(i);
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&deg](int a, int b) { return deg[a] > deg[b]; });

  std::vector<std::uint8_t> normal_ok(cfg.n_users, 1);
  std::vector<std::uint8_t> shifted_ok(cfg.n_users, 1);
  for (std::size_t i = 0; i < std::min<std::size_t>(cfg.hub_dropout_k, cfg.n_users); ++i) {
    shifted_ok[by_degree[i]] = 0;
  }

  const auto n_shifted =
      static_cast<std::size_t>(std::llround(cfg.shift_fraction * static_cast<double>(cfg.n_cascades)));
  const std::size_t first_shifted = cfg.n_cascades - std::min(n_shifted, cfg.n_cascades);

  for (std::size_t i = 0; i < cfg.n_cascades; ++i) {
    const bool shifted = i >= first_shifted;
    const double p = shifted ? cfg.activation_p * cfg.shift_factor : cfg.activation_p;
    const auto& ok = shifted ? shifted_ok : normal_ok;
    IcDraw draw;
    for (int attempt = 0; attempt < 50; ++attempt) {
      draw = simulate_cascade(adj, ok, p, rng);
      if (draw.events.size() > 1) break;
    }
    if (draw.events.empty()) continue;  // all users deactivated
    std::stable_sort(draw.events.begin(), draw.events.end(),
                     [](const CascadeEvent& a, const CascadeEvent& b) { return a.ts < b.ts; });
    Cascade c;
    c.id = "c" + std::to_string(i);
    c.final_size = draw.events.size();
    const double start = static_cast<double>(i);  // cascades are spaced in time
    for (const auto& e : draw.events) {
      if (c.events.size() >= 200) break;
      c.events.push_back({e.user, start + e.ts});
    }
    data.cascades.push_back(std::move(c));
  }
  return data;
}

}  // namespace metacast
