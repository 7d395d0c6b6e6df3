#pragma once

// Brute-force counterparts of the graph combinatorics, run over random
// stage-ordered graphs. Shared by unit and acceptance tests.

#include <algorithm>
#include <climits>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "crosstraj/graph.hpp"
#include "crosstraj/rng.hpp"
#include "test_util.hpp"

namespace oracle {

using crosstraj::graph::GlobalGraph;
using crosstraj::graph::InstanceEdge;

struct RandomGraph {
  GlobalGraph graph;
  std::vector<InstanceEdge> raw;
};

// Up to `max_nodes` nodes over 4 stages, 2 samples per stage and 5 types,
// plus random raw edges of which some violate the filter predicate.
inline RandomGraph random_graph(crosstraj::Rng& rng, std::size_t max_nodes = 25) {
  const std::vector<std::string> types = {"A", "B", "C", "D", "E"};
  std::vector<std::pair<std::string, int>> slots;  // (sample, stage)
  for (int stage = 0; stage < 4; ++stage)
    for (int r = 0; r < 2; ++r) slots.push_back({"s" + std::to_string(stage) + "_" + std::to_string(r), stage});
  std::vector<crosstraj::ingest::PopulationNode> nodes;
  std::set<std::string> used;
  const std::size_t want = 4 + rng.index(max_nodes - 3);
  while (nodes.size() < want) {
    const auto& [sample, stage] = slots[rng.index(slots.size())];
    const auto& type = types[rng.index(types.size())];
    auto n = testutil::node(sample, stage, type);
    if (used.insert(n.node_id).second) nodes.push_back(std::move(n));
  }
  RandomGraph out;
  out.graph = crosstraj::graph::build_global_graph(std::move(nodes));
  const std::size_t n = out.graph.size();
  const std::size_t edges = rng.index(4 * n + 1);
  for (std::size_t k = 0; k < edges; ++k) {
    const std::size_t a = rng.index(n), b = rng.index(n);
    if (a == b) continue;
    out.raw.push_back({out.graph.node(a).node_id, out.graph.node(b).node_id, rng.uniform(0.0, 1.0)});
  }
  return out;
}

inline bool admissible(const GlobalGraph& g, const InstanceEdge& e) {
  const auto& a = g.node(e.src);
  const auto& b = g.node(e.dst);
  return a.cell_type != b.cell_type && a.stage < b.stage;
}

// Type sequence -> number of distinct node tuples (length 2..max_len) whose
// consecutive pairs are all edges, by scanning every tuple.
inline std::map<std::vector<std::string>, std::size_t> path_counts(const GlobalGraph& g, std::size_t max_len) {
  const std::size_t n = g.size();
  std::vector<std::vector<char>> has(n, std::vector<char>(n, 0));
  for (const auto& e : g.instance_edges()) has[*g.index_of(e.src)][*g.index_of(e.dst)] = 1;
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t len = 2; len <= max_len; ++len) {
    std::vector<std::size_t> t(len, 0);
    while (true) {
      bool ok = true;
      for (std::size_t i = 0; i + 1 < len && ok; ++i) ok = has[t[i]][t[i + 1]];
      if (ok) {
        std::vector<std::string> seq;
        for (auto v : t) seq.push_back(g.node(v).cell_type);
        ++out[seq];
      }
      std::size_t pos = 0;
      while (pos < len && ++t[pos] == n) t[pos++] = 0;
      if (pos == len) break;
    }
  }
  return out;
}

inline std::map<std::pair<std::string, std::string>, std::size_t> merged_counts(
    const GlobalGraph& g, const std::vector<InstanceEdge>& filtered) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& e : filtered) ++counts[g.node(e.src).cell_type + "\x1f" + g.node(e.dst).cell_type];
  std::map<std::pair<std::string, std::string>, std::size_t> out;
  for (const auto& [k, v] : counts) {
    const auto sep = k.find('\x1f');
    out[{k.substr(0, sep), k.substr(sep + 1)}] = v;
  }
  return out;
}

// Shortest hop counts over type-level edges with weight >= min_freq
// (Floyd-Warshall). dist[a][b] = hops from a to b, INT_MAX if unreachable.
inline std::map<std::string, std::map<std::string, int>> type_distances(
    const std::map<std::pair<std::string, std::string>, std::size_t>& merged, std::size_t min_freq) {
  std::set<std::string> types;
  for (const auto& [k, w] : merged) {
    types.insert(k.first);
    types.insert(k.second);
  }
  std::map<std::string, std::map<std::string, int>> d;
  for (const auto& a : types)
    for (const auto& b : types) d[a][b] = a == b ? 0 : INT_MAX;
  for (const auto& [k, w] : merged)
    if (w >= min_freq) d[k.first][k.second] = std::min(d[k.first][k.second], 1);
  for (const auto& k : types)
    for (const auto& a : types)
      for (const auto& b : types)
        if (d[a][k] != INT_MAX && d[k][b] != INT_MAX) d[a][b] = std::min(d[a][b], d[a][k] + d[k][b]);
  return d;
}

// Kept type sequences under "ceil(fraction * n), ties at the cut kept";
// fraction given in percent to stay in integers.
inline std::set<std::vector<std::string>> top_cut(const std::map<std::vector<std::string>, std::size_t>& counts,
                                                  std::size_t percent) {
  std::vector<std::size_t> freqs;
  for (const auto& [_, f] : counts) freqs.push_back(f);
  std::set<std::vector<std::string>> out;
  if (freqs.empty()) return out;
  std::sort(freqs.rbegin(), freqs.rend());
  const std::size_t keep = std::max<std::size_t>(1, (percent * freqs.size() + 99) / 100);
  const std::size_t cut = freqs[keep - 1];
  for (const auto& [seq, f] : counts)
    if (f >= cut) out.insert(seq);
  return out;
}

struct CombinatoricsReport {
  std::size_t graphs = 0;
  std::size_t filter_mismatch = 0, merge_mismatch = 0, path_mismatch = 0, bfs_mismatch = 0, top_mismatch = 0;
  std::size_t total() const { return filter_mismatch + merge_mismatch + path_mismatch + bfs_mismatch + top_mismatch; }
};

// Compares the library against the brute-force oracles on `count` graphs.
inline CombinatoricsReport check_combinatorics(std::uint64_t seed, std::size_t count) {
  namespace graph = crosstraj::graph;
  crosstraj::Rng rng(seed);
  CombinatoricsReport rep;
  for (std::size_t it = 0; it < count; ++it) {
    RandomGraph rg = random_graph(rng);
    GlobalGraph& g = rg.graph;
    ++rep.graphs;

    std::vector<InstanceEdge> expect;
    for (const auto& e : rg.raw)
      if (admissible(g, e)) expect.push_back(e);
    const auto filtered = graph::filter_edges(g, rg.raw);
    if (filtered.kept != expect ||
        filtered.kept.size() + filtered.dropped_same_type + filtered.dropped_stage_order != rg.raw.size() ||
        graph::filter_edges(g, filtered.kept).kept != filtered.kept)
      ++rep.filter_mismatch;

    const auto merged = graph::merge_edges(g, filtered.kept);
    const auto mc = merged_counts(g, filtered.kept);
    std::map<std::pair<std::string, std::string>, std::size_t> got;
    std::size_t total = 0;
    for (const auto& m : merged) {
      got[{m.src_type, m.dst_type}] = m.weight;
      total += m.weight;
      if (m.instances.size() != m.weight) ++rep.merge_mismatch;
    }
    if (got != mc || total != filtered.kept.size()) ++rep.merge_mismatch;

    // Duplicate raw edges collapse to one adjacency for path counting.
    g.set_instance_edges(filtered.kept);
    const std::size_t max_len = g.stages().size();
    const auto paths = graph::group_paths(g, max_len);
    std::map<std::vector<std::string>, std::size_t> pc;
    {
      GlobalGraph dedup = g;
      std::set<std::pair<std::string, std::string>> seen;
      std::vector<InstanceEdge> uniq;
      for (const auto& e : filtered.kept)
        if (seen.insert({e.src, e.dst}).second) uniq.push_back(e);
      dedup.set_instance_edges(uniq);
      pc = path_counts(dedup, max_len);
    }
    std::map<std::vector<std::string>, std::size_t> got_paths;
    for (const auto& p : paths) {
      got_paths[p.type_sequence] = p.frequency;
      if (p.trajectories.size() != p.frequency) ++rep.path_mismatch;
      for (const auto& t : p.trajectories)
        for (std::size_t i = 0; i + 1 < t.steps.size(); ++i)
          if (g.node(t.steps[i]).stage >= g.node(t.steps[i + 1]).stage) ++rep.path_mismatch;
    }
    if (got_paths != pc) ++rep.path_mismatch;
    if (max_len >= 2) {
      for (const auto& [seq, f] : pc)
        if (graph::enumerate_instances(g, seq).size() != f) ++rep.path_mismatch;
    }

    const auto top = graph::top_frequency_paths(paths, 0.15);
    std::set<std::vector<std::string>> top_got;
    for (const auto& p : top) top_got.insert(p.type_sequence);
    if (top_got != top_cut(pc, 15)) ++rep.top_mismatch;

    if (!merged.empty()) {
      const std::size_t min_freq = rng.index(3);
      const auto dist = type_distances(mc, min_freq);
      for (const auto& [core, _] : dist) {
        const auto tree = graph::bfs_hierarchy(merged, core, min_freq);
        std::set<std::pair<std::string, int>> seen;
        std::map<std::string, int> desc, anc;
        for (const auto& n : tree.nodes) {
          if (!seen.insert({n.cell_type, static_cast<int>(n.relation)}).second) ++rep.bfs_mismatch;
          if (n.relation == graph::Relation::Descendant) desc[n.cell_type] = n.distance;
          if (n.relation == graph::Relation::Ancestor) anc[n.cell_type] = n.distance;
        }
        std::map<std::string, int> want_desc, want_anc;
        for (const auto& [t, d] : dist.at(core))
          if (t != core && d != INT_MAX) want_desc[t] = d;
        for (const auto& [t, row] : dist)
          if (t != core && row.at(core) != INT_MAX) want_anc[t] = row.at(core);
        if (desc != want_desc || anc != want_anc) ++rep.bfs_mismatch;
      }
    }
  }
  return rep;
}

}  // namespace oracle
