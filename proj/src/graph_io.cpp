#include <fstream>
#include <sstream>

#include "crosstraj/error.hpp"
#include "crosstraj/graph.hpp"

namespace crosstraj::graph {

using nlohmann::json;

namespace {

json node_to_json(const PopulationNode& n) {
  json degs = json::array();
  for (const auto& d : n.degs) degs.push_back({{"gene", d.gene}, {"score", d.score}, {"p", d.p_value}});
  json coords = json::array();
  for (const auto& p : n.coords) coords.push_back({p.x, p.y});
  return {{"node_id", n.node_id},
          {"sample_id", n.sample_id},
          {"stage", n.stage},
          {"cell_type", n.cell_type},
          {"count", n.count},
          {"centroid", {n.centroid.x, n.centroid.y}},
          {"degs", std::move(degs)},
          {"cell_indices", n.cell_indices},
          {"coords", std::move(coords)},
          {"features", n.features}};
}

PopulationNode node_from_json(const json& j) {
  PopulationNode n;
  n.node_id = j.at("node_id").get<std::string>();
  n.sample_id = j.at("sample_id").get<std::string>();
  n.stage = j.at("stage").get<int>();
  n.cell_type = j.at("cell_type").get<std::string>();
  n.count = j.at("count").get<std::size_t>();
  n.centroid = {j.at("centroid").at(0).get<double>(), j.at("centroid").at(1).get<double>()};
  for (const auto& d : j.at("degs"))
    n.degs.push_back({d.at("gene").get<std::string>(), d.at("score").get<double>(),
                      d.at("p").get<double>()});
  n.cell_indices = j.at("cell_indices").get<std::vector<std::size_t>>();
  for (const auto& p : j.at("coords")) n.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  n.features = j.at("features").get<std::vector<double>>();
  if (n.features.size() != ingest::kFeatureDim)
    fail(ErrorKind::Format, "node '" + n.node_id + "' has " + std::to_string(n.features.size()) +
                                " features, expected " + std::to_string(ingest::kFeatureDim));
  return n;
}

}  // namespace

json to_json(const GlobalGraph& graph, std::span<const MergedEdge> merged) {
  json nodes = json::array();
  for (const auto& n : graph.nodes()) nodes.push_back(node_to_json(n));

  std::vector<InstanceEdge> edges = graph.instance_edges();
  std::sort(edges.begin(), edges.end(), [](const InstanceEdge& a, const InstanceEdge& b) {
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  json jedges = json::array();
  for (const auto& e : edges) jedges.push_back({{"src", e.src}, {"dst", e.dst}, {"probability", e.probability}});

  json jmerged = json::array();
  for (const auto& m : merged)
    jmerged.push_back({{"src_type", m.src_type},
                       {"dst_type", m.dst_type},
                       {"weight", m.weight},
                       {"instances", m.instances}});

  json subgraphs = json::object();
  for (const auto& [sample, ids] : graph.subgraphs()) subgraphs[sample] = ids;

  return {{"format", "crosstraj.graph/1"},
          {"nodes", std::move(nodes)},
          {"subgraphs", std::move(subgraphs)},
          {"instance_edges", std::move(jedges)},
          {"merged_edges", std::move(jmerged)}};
}

GlobalGraph graph_from_json(const json& doc) {
  try {
    std::vector<PopulationNode> nodes;
    for (const auto& j : doc.at("nodes")) nodes.push_back(node_from_json(j));
    GlobalGraph g = build_global_graph(std::move(nodes));
    std::vector<InstanceEdge> edges;
    for (const auto& e : doc.at("instance_edges"))
      edges.push_back({e.at("src").get<std::string>(), e.at("dst").get<std::string>(),
                       e.at("probability").get<double>()});
    g.set_instance_edges(std::move(edges));
    return g;
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("graph document: ") + e.what());
  }
}

std::vector<MergedEdge> merged_from_json(const json& doc) {
  std::vector<MergedEdge> out;
  try {
    for (const auto& m : doc.at("merged_edges"))
      out.push_back({m.at("src_type").get<std::string>(), m.at("dst_type").get<std::string>(),
                     m.at("weight").get<std::size_t>(),
                     m.at("instances").get<std::vector<std::size_t>>()});
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("merged edges: ") + e.what());
  }
  return out;
}

json to_json(const DevPath& path) {
  json trajectories = json::array();
  for (const auto& t : path.trajectories) trajectories.push_back(t.steps);
  return {{"type_sequence", path.type_sequence},
          {"frequency", path.frequency},
          {"trajectories", std::move(trajectories)}};
}

DevPath path_from_json(const json& doc) {
  DevPath p;
  p.type_sequence = doc.at("type_sequence").get<std::vector<std::string>>();
  p.frequency = doc.at("frequency").get<std::size_t>();
  for (const auto& t : doc.at("trajectories"))
    p.trajectories.push_back({t.get<std::vector<std::string>>()});
  return p;
}

json to_json(const HierarchyTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes)
    nodes.push_back({{"cell_type", n.cell_type},
                     {"relation", to_string(n.relation)},
                     {"distance", n.distance},
                     {"connected_paths", n.connected_paths}});
  json links = json::array();
  for (const auto& l : tree.links)
    links.push_back({{"src_type", l.src_type},
                     {"dst_type", l.dst_type},
                     {"weight", l.weight},
                     {"side", to_string(l.side)}});
  return {{"root", tree.root}, {"min_freq", tree.min_freq}, {"nodes", nodes}, {"links", links}};
}

json to_json(const CellCounts& counts) {
  json series = json::object();
  for (const auto& [type, values] : counts.series) series[type] = values;
  return {{"stages", counts.stages}, {"series", series}};
}

std::vector<std::pair<std::string, std::string>> read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      fail(ErrorKind::Format, path.string() + " line " + std::to_string(line_no) +
                                  ": expected 'src<TAB>dst'");
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

void write_edge_list(const std::filesystem::path& path,
                     std::span<const std::pair<std::string, std::string>> edges) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [a, b] : edges) out << a << '\t' << b << '\n';
}

}  // namespace crosstraj::graph
