#include "crosstraj/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>

#include "crosstraj/error.hpp"

namespace crosstraj::graph {

const PopulationNode& GlobalGraph::node(const std::string& id) const {
  const auto idx = index_of(id);
  if (!idx) fail(ErrorKind::NotFound, "unknown node '" + id + "'");
  return nodes_[*idx];
}

std::optional<std::size_t> GlobalGraph::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void GlobalGraph::set_instance_edges(std::vector<InstanceEdge> edges) {
  for (const InstanceEdge& e : edges) {
    const auto s = index_of(e.src), d = index_of(e.dst);
    if (!s || !d)
      fail(ErrorKind::Validation, "edge " + e.src + " -> " + e.dst + " has a dangling endpoint");
    if (*s == *d) fail(ErrorKind::Validation, "self-loop on " + e.src);
    if (nodes_[*s].stage == nodes_[*d].stage)
      fail(ErrorKind::Validation, "edge " + e.src + " -> " + e.dst + " joins nodes of one stage");
    if (!std::isfinite(e.probability))
      fail(ErrorKind::Numeric, "edge " + e.src + " -> " + e.dst + " has non-finite probability");
  }
  edges_ = std::move(edges);
}

std::vector<std::string> GlobalGraph::cell_types() const {
  std::set<std::string> types;
  for (const auto& n : nodes_) types.insert(n.cell_type);
  return {types.begin(), types.end()};
}

std::vector<int> GlobalGraph::stages() const {
  std::set<int> s;
  for (const auto& n : nodes_) s.insert(n.stage);
  return {s.begin(), s.end()};
}

GlobalGraph build_global_graph(std::vector<PopulationNode> nodes) {
  if (nodes.empty()) fail(ErrorKind::Precondition, "cannot build a graph without nodes");
  std::sort(nodes.begin(), nodes.end(),
            [](const PopulationNode& a, const PopulationNode& b) { return a.node_id < b.node_id; });
  GlobalGraph g;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!g.index_.emplace(nodes[i].node_id, i).second)
      fail(ErrorKind::Validation, "duplicate node id '" + nodes[i].node_id + "'");
    g.subgraphs_[nodes[i].sample_id].push_back(nodes[i].node_id);
  }
  g.nodes_ = std::move(nodes);
  return g;
}

FilterResult filter_edges(const GlobalGraph& graph, std::span<const InstanceEdge> raw) {
  FilterResult out;
  for (const InstanceEdge& e : raw) {
    const auto s = graph.index_of(e.src), d = graph.index_of(e.dst);
    if (!s || !d)
      fail(ErrorKind::Validation, "edge " + e.src + " -> " + e.dst + " has a dangling endpoint");
    const PopulationNode& a = graph.node(*s);
    const PopulationNode& b = graph.node(*d);
    if (a.cell_type == b.cell_type) {
      ++out.dropped_same_type;
    } else if (a.stage >= b.stage) {
      ++out.dropped_stage_order;
    } else {
      out.kept.push_back(e);
    }
  }
  return out;
}

std::vector<MergedEdge> merge_edges(const GlobalGraph& graph,
                                    std::span<const InstanceEdge> filtered) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    const auto& e = filtered[i];
    groups[{graph.node(e.src).cell_type, graph.node(e.dst).cell_type}].push_back(i);
  }
  std::vector<MergedEdge> out;
  out.reserve(groups.size());
  for (auto& [key, idx] : groups) {
    assert(key.first != key.second);
    out.push_back({key.first, key.second, idx.size(), std::move(idx)});
  }
  return out;
}

double graph_density(std::size_t node_count, std::size_t edge_count) {
  if (node_count < 2) fail(ErrorKind::Precondition, "density needs at least 2 nodes");
  const double v = static_cast<double>(node_count);
  return static_cast<double>(edge_count) / (v * (v - 1.0));
}

double graph_density(const GlobalGraph& graph) {
  return graph_density(graph.size(), graph.instance_edges().size());
}

namespace {

// Successor lists by node index, deduplicated and sorted by node id.
std::vector<std::vector<std::size_t>> successors(const GlobalGraph& graph) {
  std::vector<std::vector<std::size_t>> adj(graph.size());
  for (const InstanceEdge& e : graph.instance_edges())
    adj[*graph.index_of(e.src)].push_back(*graph.index_of(e.dst));
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());  // index order == node id order
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

TrajectoryInstance make_instance(const GlobalGraph& graph, const std::vector<std::size_t>& chain) {
  TrajectoryInstance t;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i > 0 && graph.node(chain[i - 1]).stage >= graph.node(chain[i]).stage)
      fail(ErrorKind::Validation, "trajectory stages must strictly increase");
    t.steps.push_back(graph.node(chain[i]).node_id);
  }
  return t;
}

}  // namespace

std::vector<TrajectoryInstance> enumerate_instances(const GlobalGraph& graph,
                                                    std::span<const std::string> type_sequence) {
  if (type_sequence.size() < 2)
    fail(ErrorKind::Precondition, "type sequence needs at least 2 entries");
  const auto types = graph.cell_types();
  for (const auto& t : type_sequence)
    if (!std::binary_search(types.begin(), types.end(), t))
      fail(ErrorKind::NotFound, "unknown cell type '" + t + "'");

  const auto adj = successors(graph);
  std::vector<TrajectoryInstance> out;
  std::vector<std::size_t> chain;
  auto dfs = [&](auto&& self, std::size_t at) -> void {
    if (chain.size() == type_sequence.size()) {
      out.push_back(make_instance(graph, chain));
      return;
    }
    for (std::size_t next : adj[at]) {
      if (graph.node(next).cell_type != type_sequence[chain.size()]) continue;
      chain.push_back(next);
      self(self, next);
      chain.pop_back();
    }
  };
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.node(i).cell_type != type_sequence[0]) continue;
    chain.assign(1, i);
    dfs(dfs, i);
  }
  return out;
}

std::vector<DevPath> group_paths(const GlobalGraph& graph, std::size_t max_len) {
  std::map<std::vector<std::string>, std::vector<TrajectoryInstance>> groups;
  if (max_len >= 2) {
    const auto adj = successors(graph);
    std::vector<std::size_t> chain;
    auto dfs = [&](auto&& self, std::size_t at) -> void {
      if (chain.size() >= 2) {
        std::vector<std::string> seq;
        for (std::size_t n : chain) seq.push_back(graph.node(n).cell_type);
        groups[std::move(seq)].push_back(make_instance(graph, chain));
      }
      if (chain.size() == max_len) return;
      for (std::size_t next : adj[at]) {
        chain.push_back(next);
        self(self, next);
        chain.pop_back();
      }
    };
    for (std::size_t i = 0; i < graph.size(); ++i) {
      chain.assign(1, i);
      dfs(dfs, i);
    }
  }

  std::vector<DevPath> out;
  out.reserve(groups.size());
  for (auto& [seq, trajectories] : groups) {
    std::sort(trajectories.begin(), trajectories.end());
    out.push_back({seq, trajectories.size(), std::move(trajectories)});
  }
  std::stable_sort(out.begin(), out.end(), [](const DevPath& a, const DevPath& b) {
    return a.frequency > b.frequency;
  });
  return out;
}

std::vector<DevPath> top_frequency_paths(std::span<const DevPath> paths, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    fail(ErrorKind::Precondition, "fraction must lie in (0, 1]");
  std::vector<DevPath> sorted(paths.begin(), paths.end());
  if (sorted.empty()) return sorted;
  std::stable_sort(sorted.begin(), sorted.end(), [](const DevPath& a, const DevPath& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.type_sequence < b.type_sequence;
  });
  // The epsilon absorbs representation error, e.g. 0.15 * 20.
  auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(sorted.size()) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, sorted.size());
  while (keep < sorted.size() && sorted[keep].frequency == sorted[keep - 1].frequency) ++keep;
  sorted.resize(keep);
  return sorted;
}

const char* to_string(Relation r) {
  switch (r) {
    case Relation::Root: return "root";
    case Relation::Ancestor: return "ancestor";
    case Relation::Descendant: return "descendant";
  }
  return "?";
}

const TreeNode* HierarchyTree::find(const std::string& type, Relation relation) const {
  for (const TreeNode& n : nodes)
    if (n.cell_type == type && n.relation == relation) return &n;
  return nullptr;
}

bool HierarchyTree::contains(const std::string& type) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [&](const TreeNode& n) { return n.cell_type == type; });
}

HierarchyTree bfs_hierarchy(std::span<const MergedEdge> merged, const std::string& core_type,
                            std::size_t min_freq, std::span<const std::string> known_types) {
  const bool known =
      std::any_of(merged.begin(), merged.end(),
                  [&](const MergedEdge& e) { return e.src_type == core_type || e.dst_type == core_type; }) ||
      std::find(known_types.begin(), known_types.end(), core_type) != known_types.end();
  if (!known) fail(ErrorKind::NotFound, "unknown core cell type '" + core_type + "'");

  std::map<std::string, std::vector<const MergedEdge*>> out_edges, in_edges;
  std::map<std::string, std::size_t> incident;
  for (const MergedEdge& e : merged) {
    if (e.weight < min_freq) continue;
    out_edges[e.src_type].push_back(&e);
    in_edges[e.dst_type].push_back(&e);
    incident[e.src_type] += e.weight;
    incident[e.dst_type] += e.weight;
  }

  HierarchyTree tree;
  tree.root = core_type;
  tree.min_freq = min_freq;
  tree.nodes.push_back({core_type, Relation::Root, 0, incident[core_type]});

  auto walk = [&](Relation side) {
    const bool forward = side == Relation::Descendant;
    std::map<std::string, int> dist{{core_type, 0}};
    std::deque<std::string> queue{core_type};
    while (!queue.empty()) {
      const std::string at = queue.front();
      queue.pop_front();
      const auto& edges = forward ? out_edges[at] : in_edges[at];
      for (const MergedEdge* e : edges) {
        const std::string& next = forward ? e->dst_type : e->src_type;
        const auto it = dist.find(next);
        if (it == dist.end()) {
          dist[next] = dist[at] + 1;
          tree.nodes.push_back({next, side, dist[at] + 1, incident[next]});
          queue.push_back(next);
        }
        if (dist[next] == dist[at] + 1)
          tree.links.push_back({e->src_type, e->dst_type, e->weight, side});
      }
    }
  };
  walk(Relation::Descendant);
  walk(Relation::Ancestor);
  return tree;
}

SelectionCheck validate_path_selection(const HierarchyTree& tree,
                                       std::span<const MergedEdge> merged,
                                       std::span<const std::string> selected_types) {
  SelectionCheck out;
  if (selected_types.size() < 2) {
    if (!selected_types.empty()) out.broken = {{selected_types[0], ""}};
    return out;
  }
  for (std::size_t i = 0; i + 1 < selected_types.size(); ++i) {
    const auto& a = selected_types[i];
    const auto& b = selected_types[i + 1];
    const bool linked = tree.contains(a) && tree.contains(b) &&
                        std::any_of(merged.begin(), merged.end(), [&](const MergedEdge& e) {
                          return e.src_type == a && e.dst_type == b && e.weight >= tree.min_freq;
                        });
    if (!linked) {
      out.broken = {{a, b}};
      return out;
    }
  }
  out.valid = true;
  return out;
}

CellCounts cell_counts_by_stage(const ingest::Dataset& dataset) {
  CellCounts out;
  std::map<int, std::size_t> samples_at_stage;
  std::map<std::string, std::map<int, std::size_t>> totals;
  for (const auto& s : dataset.samples) {
    ++samples_at_stage[s.stage];
    for (const auto& c : s.cells) ++totals[c.cell_type][s.stage];
  }
  for (const auto& [stage, n] : samples_at_stage) out.stages.push_back(stage);
  for (const auto& [type, per_stage] : totals) {
    std::vector<double> series;
    for (int stage : out.stages) {
      const auto it = per_stage.find(stage);
      const double total = it == per_stage.end() ? 0.0 : static_cast<double>(it->second);
      series.push_back(total / static_cast<double>(samples_at_stage[stage]));
    }
    out.series[type] = std::move(series);
  }
  return out;
}

}  // namespace crosstraj::graph
