#include "crosstraj/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crosstraj/enrich.hpp"
#include "crosstraj/error.hpp"
#include "crosstraj/rng.hpp"
#include "crosstraj/spatial.hpp"

namespace crosstraj::pipeline {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

namespace {

void require(const fs::path& project, const char* file, const char* stage) {
  if (!fs::exists(project / file))
    fail(ErrorKind::Conflict, std::string("stage '") + stage + "' has not been run (missing " + file + ")");
}

fs::path dataset_root(const fs::path& project) {
  require(project, files::kIngest, "ingest");
  return read_json(project / files::kIngest).at("dataset").get<std::string>();
}

graph::GlobalGraph load_graph(const fs::path& project, const char* file, const char* stage) {
  require(project, file, stage);
  return graph::graph_from_json(read_json(project / file));
}

}  // namespace

// ---- ingest ----------------------------------------------------------------

IngestResult build_graph(const IngestOptions& options) {
  ingest::Dataset data = ingest::load_dataset(options.dataset);
  const std::size_t loaded_cells = [&] {
    std::size_t n = 0;
    for (const auto& s : data.samples) n += s.cells.size();
    return n;
  }();
  const auto norm = ingest::normalize_expression(data);
  const auto table = options.embeddings ? ingest::GeneEmbeddingTable::load(*options.embeddings)
                                        : ingest::GeneEmbeddingTable::fallback(options.embedding_seed);
  auto built = ingest::build_population_nodes(data, table, options.min_cells, options.deg_count);
  if (built.nodes.empty()) fail(ErrorKind::Validation, "dataset yields no population nodes");

  IngestResult out;
  out.cells = graph::cell_counts_by_stage(data);
  out.graph = graph::build_global_graph(std::move(built.nodes));
  std::vector<std::string> warnings = norm.warnings;
  warnings.insert(warnings.end(), built.warnings.begin(), built.warnings.end());
  json samples = json::object();
  for (const auto& s : data.samples) samples[s.sample_id] = {{"stage", s.stage}, {"cells", s.cells.size()}};
  out.report = {
      {"dataset", fs::absolute(options.dataset).lexically_normal().string()},
      {"embeddings", table.provenance() == ingest::GeneEmbeddingTable::Provenance::File ? "file" : "fallback"},
      {"genes", data.genes.size()},
      {"samples", std::move(samples)},
      {"cells_loaded", loaded_cells},
      {"cells_dropped", norm.dropped_cells},
      {"nodes", out.graph.size()},
      {"cell_types", out.graph.cell_types()},
      {"stages", out.graph.stages()},
      {"min_cells", options.min_cells},
      {"deg_count", options.deg_count},
      {"warnings", warnings},
  };
  return out;
}

json run_ingest(const IngestOptions& options, const fs::path& project) {
  IngestResult r = build_graph(options);
  fs::create_directories(project);
  write_json(project / files::kGraph, graph::to_json(r.graph));
  write_json(project / files::kCells, graph::to_json(r.cells));
  write_json(project / files::kIngest, r.report);
  return r.report;
}

// ---- train / predict ---------------------------------------------------------

fs::path default_labels(const fs::path& project) { return dataset_root(project) / "truth_edges.tsv"; }

gnn::TrainReport run_train(const fs::path& project, const TrainOptions& options,
                           const gnn::ProgressFn& progress) {
  const auto g = load_graph(project, files::kGraph, "ingest");
  const fs::path labels = options.labels ? *options.labels : default_labels(project);
  const auto ids = graph::read_edge_list(labels);
  const auto positives = gnn::resolve_pairs(g, ids);
  const auto split = gnn::split_edges(g, positives, options.config.seed);
  gnn::Model model = gnn::init_model(options.config);
  const auto report = gnn::train(model, g, split, progress);
  write_json(project / files::kSplit, gnn::to_json(split, g));
  gnn::save_model(model, project / files::kModel);
  write_json(project / files::kTrainReport, gnn::to_json(report));
  return report;
}

json run_predict(const fs::path& project, const PredictOptions& options) {
  require(project, files::kModel, "train");
  graph::GlobalGraph g = load_graph(project, files::kGraph, "ingest");
  const gnn::Model model = gnn::load_model(project / files::kModel);
  const gnn::EdgeSplit split = gnn::split_from_json(read_json(project / files::kSplit), g);
  const double threshold =
      options.threshold ? *options.threshold
                        : read_json(project / files::kTrainReport).at("chosen_threshold").get<double>();
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorKind::Precondition, "threshold must be in [0, 1]");

  const auto raw = gnn::predict_edges(model, g, threshold, std::span<const gnn::NodePair>(split.train_pos));
  const auto filtered = graph::filter_edges(g, raw);
  const auto merged = graph::merge_edges(g, filtered.kept);
  g.set_instance_edges(filtered.kept);
  write_json(project / files::kPredicted, graph::to_json(g, merged));

  const json report = {
      {"threshold", threshold},
      {"candidates", gnn::candidate_pairs(g).size()},
      {"predicted", raw.size()},
      {"kept", filtered.kept.size()},
      {"dropped_same_type", filtered.dropped_same_type},
      {"dropped_stage_order", filtered.dropped_stage_order},
      {"density", g.size() >= 2 ? graph::graph_density(g) : 0.0},
      {"merged_edges", merged.size()},
  };
  write_json(project / files::kPredict, report);
  return report;
}

std::string path_id(std::span<const std::string> type_sequence) {
  std::string out;
  for (std::size_t i = 0; i < type_sequence.size(); ++i) {
    if (i) out += '>';
    out += type_sequence[i];
  }
  return out;
}

std::string trajectory_id(const std::string& path, std::size_t index) {
  return path + "#" + std::to_string(index);
}

namespace {

json path_record(const graph::DevPath& p, bool top) {
  json j = graph::to_json(p);
  j["id"] = path_id(p.type_sequence);
  j["top"] = top;
  return j;
}

}  // namespace

json run_paths(const fs::path& project, const PathsOptions& options) {
  const auto g = load_graph(project, files::kPredicted, "predict");
  const std::size_t max_len = options.max_len ? *options.max_len : g.stages().size();
  if (max_len < 2) fail(ErrorKind::Precondition, "paths need max_len >= 2 (at least two stages)");
  const auto all = graph::group_paths(g, max_len);
  const auto top = graph::top_frequency_paths(all, options.fraction);
  std::set<std::string> top_ids;
  for (const auto& p : top) top_ids.insert(path_id(p.type_sequence));

  json paths = json::array();
  for (const auto& p : all) paths.push_back(path_record(p, top_ids.count(path_id(p.type_sequence)) != 0));
  json top_list = json::array();
  for (const auto& p : top) top_list.push_back(path_id(p.type_sequence));
  const json doc = {{"max_len", max_len},
                    {"fraction", options.fraction},
                    {"total", all.size()},
                    {"top", std::move(top_list)},
                    {"paths", std::move(paths)}};
  write_json(project / files::kPaths, doc);
  return {{"max_len", max_len}, {"total", all.size()}, {"top", doc.at("top")}};
}

// ---- summarize -------------------------------------------------------------------

namespace {

struct NodeGeometry {
  spatial::ContourSet contours;
  std::optional<spatial::DirectionSummary> direction;
  std::vector<Point> vertices;
};

NodeGeometry node_geometry(std::span<const Point> coords, std::span<const double> counts) {
  NodeGeometry g;
  g.contours = spatial::build_contours(coords);
  try {
    g.direction = spatial::direction_summary(coords, counts);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric) throw;
  }
  g.vertices = spatial::similarity_vertices(g.contours);
  if (g.vertices.empty()) g.vertices.assign(coords.begin(), coords.end());
  return g;
}

json geometry_json(const NodeGeometry& g, Point origin) {
  return {{"contours", spatial::to_json(g.contours, origin)},
          {"direction", g.direction ? spatial::to_json(*g.direction, origin) : json(nullptr)}};
}

}  // namespace

json run_summarize(const fs::path& project) {
  const auto g = load_graph(project, files::kPredicted, "predict");
  json nodes = json::object();
  std::map<std::string, std::vector<Point>> vertices;
  std::map<std::string, std::vector<Point>> sample_coords;
  for (const auto& n : g.nodes()) {
    const double count = static_cast<double>(n.count);
    const auto geo = node_geometry(n.coords, std::span<const double>(&count, 1));
    nodes[n.node_id] = geometry_json(geo, {});
    vertices[n.node_id] = geo.vertices;
    auto& sc = sample_coords[n.sample_id];
    sc.insert(sc.end(), n.coords.begin(), n.coords.end());
  }
  json edges = json::array();
  for (const auto& e : g.instance_edges()) {
    const auto s = spatial::contour_similarity(vertices.at(e.src), vertices.at(e.dst));
    json j = spatial::to_json(s);
    j["src"] = e.src;
    j["dst"] = e.dst;
    edges.push_back(std::move(j));
  }
  json boundaries = json::object();
  for (const auto& [sample, coords] : sample_coords) {
    json rings = json::array();
    try {
      for (const auto& r : spatial::alpha_shape(coords)) rings.push_back(spatial::polygon_json(r));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::Precondition) throw;
    }
    boundaries[sample] = std::move(rings);
  }
  const json doc = {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"boundaries", std::move(boundaries)}};
  write_json(project / files::kSummary, doc);
  return {{"nodes", g.size()}, {"edges", g.instance_edges().size()}, {"samples", sample_coords.size()}};
}

// ---- lookups -------------------------------------------------------------------

graph::DevPath find_path(const fs::path& project, const std::string& id) {
  require(project, files::kPaths, "paths");
  const json doc = read_json(project / files::kPaths);
  for (const auto& p : doc.at("paths"))
    if (p.at("id").get<std::string>() == id) return graph::path_from_json(p);
  if (fs::exists(project / files::kSelections)) {
    const json sel = read_json(project / files::kSelections);
    if (sel.contains(id)) return graph::path_from_json(sel.at(id));
  }
  fail(ErrorKind::NotFound, "unknown path '" + id + "'");
}

// ---- enrich ---------------------------------------------------------------------

json run_enrich(const fs::path& project, const EnrichOptions& options) {
  const auto hash = options.trajectory_id.rfind('#');
  if (hash == std::string::npos)
    fail(ErrorKind::NotFound, "trajectory id '" + options.trajectory_id + "' is not of the form <path>#<index>");
  const std::string pid = options.trajectory_id.substr(0, hash);
  const graph::DevPath path = find_path(project, pid);
  std::size_t index = 0;
  try {
    std::size_t used = 0;
    index = std::stoul(options.trajectory_id.substr(hash + 1), &used);
    if (used != options.trajectory_id.size() - hash - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    fail(ErrorKind::NotFound, "bad trajectory index in '" + options.trajectory_id + "'");
  }
  if (index >= path.trajectories.size())
    fail(ErrorKind::NotFound, "trajectory '" + options.trajectory_id + "' does not exist");

  const auto g = load_graph(project, files::kPredicted, "predict");
  const fs::path root = dataset_root(project);
  const auto terms = enrich::load_term_graph(options.obo ? *options.obo : root / "go" / "go.obo");
  const auto ann = enrich::load_annotations(options.gaf ? *options.gaf : root / "go" / "annotations.gaf", terms);

  std::set<std::string> background, target;
  for (const auto& n : g.nodes())
    for (const auto& d : n.degs) background.insert(d.gene);
  for (const auto& id : path.trajectories[index].steps)
    for (const auto& d : g.node(id).degs) target.insert(d.gene);
  const std::vector<std::string> tv(target.begin(), target.end()), bv(background.begin(), background.end());
  const auto rows = enrich::enrich(tv, bv, ann.annotations, terms);

  const json doc = {{"trajectory_id", options.trajectory_id},
                    {"path_id", pid},
                    {"steps", path.trajectories[index].steps},
                    {"target_genes", tv},
                    {"background_size", bv.size()},
                    {"annotation_warnings", ann.warnings},
                    {"rows", enrich::to_json(rows)}};
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.json",
                static_cast<unsigned long long>(fnv1a(options.trajectory_id)));
  write_json(project / files::kEnrichDir / name, doc);
  return doc;
}

// ---- evaluation -------------------------------------------------------------------

EvalResult evaluate(const EvalOptions& options,
                    const std::function<void(std::uint64_t, const gnn::TrainReport&)>& on_run) {
  if (options.seeds.empty()) fail(ErrorKind::Precondition, "evaluate: no seeds");
  const IngestResult data = build_graph(options.ingest);
  const fs::path labels = options.labels ? *options.labels : options.ingest.dataset / "truth_edges.tsv";
  const auto positives = gnn::resolve_pairs(data.graph, graph::read_edge_list(labels));
  EvalResult out;
  out.min_acc = 1.0;
  for (std::uint64_t seed : options.seeds) {
    gnn::ModelConfig config = options.config;
    config.seed = seed;
    const auto split = gnn::split_edges(data.graph, positives, seed);
    gnn::Model model = gnn::init_model(config);
    out.runs.push_back(gnn::train(model, data.graph, split));
    out.mean_acc += out.runs.back().test_acc;
    out.min_acc = std::min(out.min_acc, out.runs.back().test_acc);
    if (on_run) on_run(seed, out.runs.back());
  }
  out.mean_acc /= static_cast<double>(out.runs.size());
  return out;
}

json to_json(const EvalResult& result) {
  json runs = json::array();
  for (const auto& r : result.runs) {
    json j = gnn::to_json(r);
    j["wall_seconds"] = r.wall_seconds;
    runs.push_back(std::move(j));
  }
  return {{"mean_acc", result.mean_acc}, {"min_acc", result.min_acc}, {"runs", std::move(runs)}};
}

// ---- views ----------------------------------------------------------------------

json cells_view(const fs::path& project) {
  require(project, files::kCells, "ingest");
  return read_json(project / files::kCells);
}

namespace {

std::vector<graph::MergedEdge> load_merged(const fs::path& project) {
  require(project, files::kPredicted, "predict");
  return graph::merged_from_json(read_json(project / files::kPredicted));
}

std::vector<std::string> known_types(const fs::path& project) {
  return read_json(project / files::kIngest).at("cell_types").get<std::vector<std::string>>();
}

}  // namespace

json path_tree_view(const fs::path& project, const std::string& core, std::size_t min_freq) {
  const auto merged = load_merged(project);
  const auto types = known_types(project);
  const auto tree = graph::bfs_hierarchy(merged, core, min_freq, types);

  // Columns by signed hop distance; rows by connected paths, descending.
  std::map<int, std::vector<const graph::TreeNode*>> columns;
  for (const auto& n : tree.nodes) {
    const int offset = n.relation == graph::Relation::Ancestor ? -n.distance : n.distance;
    columns[offset].push_back(&n);
  }
  json cols = json::array();
  for (auto& [offset, nodes] : columns) {
    std::stable_sort(nodes.begin(), nodes.end(), [](const auto* a, const auto* b) {
      return a->connected_paths != b->connected_paths ? a->connected_paths > b->connected_paths
                                                      : a->cell_type < b->cell_type;
    });
    json rows = json::array();
    for (const auto* n : nodes)
      rows.push_back({{"cell_type", n->cell_type},
                      {"relation", graph::to_string(n->relation)},
                      {"connected_paths", n->connected_paths}});
    cols.push_back({{"offset", offset}, {"rows", std::move(rows)}});
  }
  json doc = graph::to_json(tree);
  doc["columns"] = std::move(cols);
  return doc;
}

json select_paths(const fs::path& project, const std::vector<std::vector<std::string>>& sequences,
                  const std::optional<std::string>& core, std::size_t min_freq) {
  const auto merged = load_merged(project);
  const auto types = known_types(project);
  const auto g = load_graph(project, files::kPredicted, "predict");
  json selections = fs::exists(project / files::kSelections) ? read_json(project / files::kSelections)
                                                              : json::object();
  json verdicts = json::array();
  bool changed = false;
  for (const auto& seq : sequences) {
    json v = {{"type_sequence", seq}};
    if (seq.size() < 2) {
      v["accepted"] = false;
      v["reason"] = "a path needs at least two cell types";
      verdicts.push_back(std::move(v));
      continue;
    }
    const std::string root = core ? *core : seq.front();
    graph::HierarchyTree tree;
    try {
      tree = graph::bfs_hierarchy(merged, root, min_freq, types);
    } catch (const Error& e) {
      v["accepted"] = false;
      v["reason"] = e.what();
      verdicts.push_back(std::move(v));
      continue;
    }
    const auto check = graph::validate_path_selection(tree, merged, seq);
    if (!check.valid) {
      v["accepted"] = false;
      v["reason"] = "broken link";
      if (check.broken) v["broken"] = {check.broken->first, check.broken->second};
      verdicts.push_back(std::move(v));
      continue;
    }
    graph::DevPath p;
    p.type_sequence = seq;
    p.trajectories = graph::enumerate_instances(g, seq);
    p.frequency = p.trajectories.size();
    if (p.frequency == 0) {
      v["accepted"] = false;
      v["reason"] = "no trajectory realizes this sequence";
      verdicts.push_back(std::move(v));
      continue;
    }
    const std::string id = path_id(seq);
    v["accepted"] = true;
    v["path_id"] = id;
    v["frequency"] = p.frequency;
    verdicts.push_back(std::move(v));
    if (!selections.contains(id)) {
      selections[id] = path_record(p, false);
      changed = true;
    }
  }
  if (changed) write_json(project / files::kSelections, selections);
  return {{"results", std::move(verdicts)}};
}

namespace {

std::size_t core_position(const graph::DevPath& p, const std::optional<std::string>& core) {
  if (core) {
    for (std::size_t k = 0; k < p.type_sequence.size(); ++k)
      if (p.type_sequence[k] == *core) return k;
  }
  return 0;
}

}  // namespace

json path_summary_view(const fs::path& project, const std::vector<std::string>& ids,
                       const std::optional<std::string>& core) {
  require(project, files::kSummary, "summarize");
  const auto g = load_graph(project, files::kPredicted, "predict");

  struct Row {
    graph::DevPath path;
    std::vector<NodeGeometry> positions;
    std::vector<std::vector<std::string>> members;
  };
  std::vector<Row> rows;
  for (const auto& id : ids) {
    Row row;
    row.path = find_path(project, id);
    for (std::size_t k = 0; k < row.path.type_sequence.size(); ++k) {
      std::set<std::string> members;
      for (const auto& t : row.path.trajectories) members.insert(t.steps[k]);
      std::vector<Point> coords;
      std::vector<double> counts;
      for (const auto& m : members) {
        const auto& n = g.node(m);
        coords.insert(coords.end(), n.coords.begin(), n.coords.end());
        counts.push_back(static_cast<double>(n.count));
      }
      row.positions.push_back(node_geometry(coords, counts));
      row.members.emplace_back(members.begin(), members.end());
    }
    rows.push_back(std::move(row));
  }

  // Columns line up by offset from each row's core position; shapes are
  // compared in the aligned frame.
  std::vector<std::size_t> anchors;
  std::vector<Point> origins;
  for (const Row& row : rows) {
    anchors.push_back(core_position(row.path, core));
    const auto& d = row.positions[anchors.back()].direction;
    origins.push_back(d ? d->centroid : Point{});
  }
  auto aligned = [&](std::size_t r, std::size_t k) {
    std::vector<Point> v = rows[r].positions[k].vertices;
    for (auto& p : v) p = p - origins[r];
    return v;
  };

  json out = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    const std::size_t anchor = anchors[i];
    const Point origin = origins[i];
    json nodes = json::array();
    for (std::size_t k = 0; k < row.positions.size(); ++k) {
      json n = geometry_json(row.positions[k], origin);
      n["cell_type"] = row.path.type_sequence[k];
      n["members"] = row.members[k];
      json column = json::array();
      const auto mine = aligned(i, k);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        if (j == i) continue;
        const long long other = static_cast<long long>(anchors[j]) + static_cast<long long>(k) -
                                static_cast<long long>(anchor);
        if (other < 0 || other >= static_cast<long long>(rows[j].positions.size())) continue;
        const auto s = spatial::contour_similarity(mine, aligned(j, static_cast<std::size_t>(other)));
        column.push_back({{"path_id", path_id(rows[j].path.type_sequence)}, {"d_sym", s.d_sym}});
      }
      n["column_similarity"] = std::move(column);
      nodes.push_back(std::move(n));
    }
    json links = json::array();
    for (std::size_t k = 0; k + 1 < row.positions.size(); ++k) {
      json l = spatial::to_json(
          spatial::contour_similarity(row.positions[k].vertices, row.positions[k + 1].vertices));
      l["from"] = k;
      l["to"] = k + 1;
      links.push_back(std::move(l));
    }
    out.push_back({{"path_id", path_id(row.path.type_sequence)},
                   {"type_sequence", row.path.type_sequence},
                   {"frequency", row.path.frequency},
                   {"anchor", anchor},
                   {"origin", {origin.x, origin.y}},
                   {"nodes", std::move(nodes)},
                   {"links", std::move(links)}});
  }
  return {{"rows", std::move(out)}};
}

namespace {

void shift_pairs(json& arr, Point origin) {
  for (auto& p : arr) {
    p[0] = p[0].get<double>() - origin.x;
    p[1] = p[1].get<double>() - origin.y;
  }
}

json shifted_node(json node, Point origin) {
  auto& c = node.at("contours");
  auto& b = c.at("bounds");
  b["xmin"] = b["xmin"].get<double>() - origin.x;
  b["xmax"] = b["xmax"].get<double>() - origin.x;
  b["ymin"] = b["ymin"].get<double>() - origin.y;
  b["ymax"] = b["ymax"].get<double>() - origin.y;
  for (auto& ring : c.at("outer")) shift_pairs(ring, origin);
  for (auto& ring : c.at("inner")) shift_pairs(ring, origin);
  if (!node.at("direction").is_null()) {
    auto& cen = node["direction"]["centroid"];
    cen[0] = cen[0].get<double>() - origin.x;
    cen[1] = cen[1].get<double>() - origin.y;
  }
  return node;
}

}  // namespace

json trajectories_view(const fs::path& project, const std::string& path,
                       const std::optional<std::string>& core) {
  require(project, files::kSummary, "summarize");
  const graph::DevPath p = find_path(project, path);
  const json summary = read_json(project / files::kSummary);
  const auto g = load_graph(project, files::kPredicted, "predict");
  std::map<std::pair<std::string, std::string>, const json*> edge_scores;
  for (const auto& e : summary.at("edges"))
    edge_scores[{e.at("src").get<std::string>(), e.at("dst").get<std::string>()}] = &e;

  const std::size_t anchor = core_position(p, core);
  json trajectories = json::array();
  for (std::size_t t = 0; t < p.trajectories.size(); ++t) {
    const auto& steps = p.trajectories[t].steps;
    const Point origin = g.node(steps[anchor]).centroid;
    json nodes = json::array();
    for (const auto& id : steps) {
      const auto& n = g.node(id);
      json j = shifted_node(summary.at("nodes").at(id), origin);
      j["node_id"] = id;
      j["sample_id"] = n.sample_id;
      j["stage"] = n.stage;
      j["cell_type"] = n.cell_type;
      j["count"] = n.count;
      nodes.push_back(std::move(j));
    }
    json links = json::array();
    for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
      auto it = edge_scores.find({steps[k], steps[k + 1]});
      if (it == edge_scores.end()) fail(ErrorKind::NotFound, "no summary for edge " + steps[k] + " -> " + steps[k + 1]);
      links.push_back(*it->second);
    }
    trajectories.push_back({{"id", trajectory_id(path_id(p.type_sequence), t)},
                            {"origin", {origin.x, origin.y}},
                            {"nodes", std::move(nodes)},
                            {"links", std::move(links)}});
  }
  return {{"path_id", path_id(p.type_sequence)},
          {"type_sequence", p.type_sequence},
          {"frequency", p.frequency},
          {"anchor", anchor},
          {"trajectories", std::move(trajectories)},
          {"boundaries", summary.at("boundaries")}};
}

}  // namespace crosstraj::pipeline
