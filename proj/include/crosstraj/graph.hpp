#pragma once

// Global population graph: edge filtering and merging, trajectory and path
// enumeration, and the BFS hierarchy around a core cell type.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosstraj/ingest.hpp"

namespace crosstraj::graph {

using ingest::PopulationNode;

struct InstanceEdge {
  std::string src;
  std::string dst;
  double probability = 1.0;

  friend bool operator==(const InstanceEdge&, const InstanceEdge&) = default;
};

class GlobalGraph {
 public:
  GlobalGraph() = default;

  const std::vector<PopulationNode>& nodes() const noexcept { return nodes_; }
  const PopulationNode& node(std::size_t index) const { return nodes_[index]; }
  const PopulationNode& node(const std::string& id) const;
  std::optional<std::size_t> index_of(const std::string& id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // sample_id -> node ids of that sample's subgraph (sorted).
  const std::map<std::string, std::vector<std::string>>& subgraphs() const noexcept {
    return subgraphs_;
  }

  const std::vector<InstanceEdge>& instance_edges() const noexcept { return edges_; }
  // Replaces the edge set; every endpoint must exist and no edge may join
  // two nodes of the same stage.
  void set_instance_edges(std::vector<InstanceEdge> edges);

  std::vector<std::string> cell_types() const;  // sorted, distinct
  std::vector<int> stages() const;              // sorted, distinct

 private:
  friend GlobalGraph build_global_graph(std::vector<PopulationNode> nodes);

  std::vector<PopulationNode> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::string>> subgraphs_;
  std::vector<InstanceEdge> edges_;
};

// Edgeless graph over the given nodes, which are reordered by node_id.
GlobalGraph build_global_graph(std::vector<PopulationNode> nodes);

struct FilterResult {
  std::vector<InstanceEdge> kept;
  std::size_t dropped_same_type = 0;
  std::size_t dropped_stage_order = 0;  // stage(src) >= stage(dst)
};

// Keeps edges with type(src) != type(dst) and stage(src) < stage(dst).
FilterResult filter_edges(const GlobalGraph& graph, std::span<const InstanceEdge> raw);

struct MergedEdge {
  std::string src_type;
  std::string dst_type;
  std::size_t weight = 0;
  std::vector<std::size_t> instances;  // indices into the filtered edge list
};

// One merged edge per (src_type, dst_type), weight = instance count; sorted
// lexicographically by type pair.
std::vector<MergedEdge> merge_edges(const GlobalGraph& graph,
                                    std::span<const InstanceEdge> filtered);

// |E| / (|V| (|V| - 1)) over the graph's instance edges.
double graph_density(const GlobalGraph& graph);
double graph_density(std::size_t node_count, std::size_t edge_count);

struct TrajectoryInstance {
  std::vector<std::string> steps;  // node ids, stages strictly increasing

  friend bool operator==(const TrajectoryInstance&, const TrajectoryInstance&) = default;
  friend auto operator<=>(const TrajectoryInstance&, const TrajectoryInstance&) = default;
};

struct DevPath {
  std::vector<std::string> type_sequence;
  std::size_t frequency = 0;  // == trajectories.size()
  std::vector<TrajectoryInstance> trajectories;
};

// All chains of the graph's instance edges whose cell types follow
// `type_sequence`, in lexicographic node-id order.
std::vector<TrajectoryInstance> enumerate_instances(const GlobalGraph& graph,
                                                    std::span<const std::string> type_sequence);

// Every type sequence of 2..max_len nodes realized by at least one chain.
// Sorted by descending frequency, then type sequence.
std::vector<DevPath> group_paths(const GlobalGraph& graph, std::size_t max_len);

inline constexpr double kTopPathFraction = 0.15;

// Keeps ceil(fraction * |paths|) most frequent paths plus any paths tied
// with the last one kept.
std::vector<DevPath> top_frequency_paths(std::span<const DevPath> paths,
                                         double fraction = kTopPathFraction);

enum class Relation { Root, Ancestor, Descendant };
const char* to_string(Relation r);

struct TreeNode {
  std::string cell_type;
  Relation relation = Relation::Root;
  int distance = 0;
  std::size_t connected_paths = 0;  // summed weight of qualifying merged edges at this type
};

struct TreeLink {
  std::string src_type;  // developmental direction: src gives rise to dst
  std::string dst_type;
  std::size_t weight = 0;
  Relation side = Relation::Descendant;
};

struct HierarchyTree {
  std::string root;
  std::size_t min_freq = 0;
  std::vector<TreeNode> nodes;  // root first, then BFS order per side
  std::vector<TreeLink> links;

  const TreeNode* find(const std::string& type, Relation relation) const;
  bool contains(const std::string& type) const;
};

// Descendants follow edge direction, ancestors run against it; merged edges
// with weight < min_freq are ignored on both sides.
HierarchyTree bfs_hierarchy(std::span<const MergedEdge> merged, const std::string& core_type,
                            std::size_t min_freq = 0,
                            std::span<const std::string> known_types = {});

struct SelectionCheck {
  bool valid = false;
  std::optional<std::pair<std::string, std::string>> broken;  // first failing pair
};

// Valid iff every selected type is in the tree and each consecutive pair is
// joined by a merged edge (in order) that the tree's frequency filter admits.
SelectionCheck validate_path_selection(const HierarchyTree& tree,
                                       std::span<const MergedEdge> merged,
                                       std::span<const std::string> selected_types);

struct CellCounts {
  std::vector<int> stages;                             // sorted distinct stage ordinals
  std::map<std::string, std::vector<double>> series;   // type -> mean cells per sample per stage
};

CellCounts cell_counts_by_stage(const ingest::Dataset& dataset);

// ---- serialization -------------------------------------------------------

nlohmann::json to_json(const GlobalGraph& graph, std::span<const MergedEdge> merged = {});
GlobalGraph graph_from_json(const nlohmann::json& doc);
std::vector<MergedEdge> merged_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const DevPath& path);
DevPath path_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const HierarchyTree& tree);
nlohmann::json to_json(const CellCounts& counts);

// Edge list file: one "src<TAB>dst" pair of node ids per line.
std::vector<std::pair<std::string, std::string>> read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::filesystem::path& path,
                     std::span<const std::pair<std::string, std::string>> edges);

}  // namespace crosstraj::graph
