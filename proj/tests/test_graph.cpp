#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "crosstraj/error.hpp"
#include "crosstraj/graph.hpp"
#include "graph_oracle.hpp"
#include "test_util.hpp"

using namespace crosstraj;
using namespace crosstraj::graph;
using testutil::node;

namespace {

std::string id(const std::string& sample, const std::string& type) { return ingest::make_node_id(sample, type); }

// Stage s has sample "s<s>"; one node per listed type.
GlobalGraph staged(const std::vector<std::vector<std::string>>& types_per_stage) {
  std::vector<PopulationNode> nodes;
  for (std::size_t s = 0; s < types_per_stage.size(); ++s)
    for (const auto& t : types_per_stage[s]) nodes.push_back(node("s" + std::to_string(s), static_cast<int>(s), t));
  return build_global_graph(std::move(nodes));
}

MergedEdge merged(const std::string& a, const std::string& b, std::size_t w) {
  MergedEdge m;
  m.src_type = a;
  m.dst_type = b;
  m.weight = w;
  return m;
}

std::vector<std::string> seq(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST_CASE("filter keeps forward edges between different types") {
  const GlobalGraph g = staged({{"A", "B"}, {"A", "C"}});
  const std::vector<InstanceEdge> raw = {
      {id("s0", "A"), id("s1", "C"), 0.9},  // kept
      {id("s0", "A"), id("s1", "A"), 0.9},  // same type
      {id("s1", "C"), id("s0", "B"), 0.9},  // backwards
      {id("s0", "A"), id("s0", "B"), 0.9},  // same stage
  };
  const auto r = filter_edges(g, raw);
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0] == raw[0]);
  CHECK(r.dropped_same_type == 1);
  CHECK(r.dropped_stage_order == 2);

  const std::vector<InstanceEdge> dangling = {{id("s0", "A"), "nope", 1.0}};
  CHECK_THROWS_AS(filter_edges(g, dangling), Error);
}

TEST_CASE("merge counts instances per type pair") {
  const GlobalGraph g = staged({{"A"}, {"B"}, {"A", "B"}, {"C"}});
  std::vector<PopulationNode> more(g.nodes().begin(), g.nodes().end());
  more.push_back(node("t0", 0, "A"));
  more.push_back(node("t1", 1, "B"));
  const GlobalGraph g2 = build_global_graph(std::move(more));
  const std::vector<InstanceEdge> kept = {
      {id("s0", "A"), id("s1", "B")},
      {id("t0", "A"), id("t1", "B")},
      {id("s0", "A"), id("s2", "B")},
      {id("s1", "B"), id("s2", "A")},
      {id("s2", "A"), id("s3", "C")},
  };
  const auto m = merge_edges(g2, kept);
  REQUIRE(m.size() == 3);
  CHECK(m[0].src_type == "A");
  CHECK(m[0].dst_type == "B");
  CHECK(m[0].weight == 3);
  CHECK(m[0].instances == std::vector<std::size_t>{0, 1, 2});
  CHECK(m[1].src_type == "A");
  CHECK(m[1].dst_type == "C");
  CHECK(m[1].weight == 1);
  CHECK(m[2].src_type == "B");
  CHECK(m[2].dst_type == "A");
  CHECK(m[2].weight == 1);
}

TEST_CASE("density") {
  CHECK(graph_density(4, 12) == doctest::Approx(1.0));
  CHECK(graph_density(10, 45) == doctest::Approx(0.5));
  CHECK_THROWS_AS(graph_density(1, 0), Error);
}

TEST_CASE("diamond yields two instances of one path") {
  GlobalGraph g = staged({{"A"}, {"B"}, {"C"}});
  std::vector<PopulationNode> nodes(g.nodes().begin(), g.nodes().end());
  nodes.push_back(node("u1", 1, "B"));
  g = build_global_graph(std::move(nodes));
  g.set_instance_edges({
      {id("s0", "A"), id("s1", "B")},
      {id("s0", "A"), id("u1", "B")},
      {id("s1", "B"), id("s2", "C")},
      {id("u1", "B"), id("s2", "C")},
  });
  const auto abc = enumerate_instances(g, seq({"A", "B", "C"}));
  REQUIRE(abc.size() == 2);
  CHECK(abc[0].steps == std::vector<std::string>{id("s0", "A"), id("s1", "B"), id("s2", "C")});
  CHECK(abc[1].steps == std::vector<std::string>{id("s0", "A"), id("u1", "B"), id("s2", "C")});

  const auto paths = group_paths(g, 3);
  REQUIRE(paths.size() == 3);
  // A->B and B->C have two instances each; A->B->C two; ties by sequence.
  CHECK(paths[0].type_sequence == seq({"A", "B"}));
  CHECK(paths[1].type_sequence == seq({"A", "B", "C"}));
  CHECK(paths[2].type_sequence == seq({"B", "C"}));
  for (const auto& p : paths) CHECK(p.frequency == 2);

  CHECK_THROWS_AS(enumerate_instances(g, seq({"A"})), Error);
  CHECK_THROWS_AS(enumerate_instances(g, seq({"A", "Z"})), Error);
}

TEST_CASE("repeated types along a chain are allowed") {
  GlobalGraph g = staged({{"A"}, {"B"}, {"A"}});
  g.set_instance_edges({{id("s0", "A"), id("s1", "B")}, {id("s1", "B"), id("s2", "A")}});
  CHECK(enumerate_instances(g, seq({"A", "B", "A"})).size() == 1);
}

TEST_CASE("top frequency cut") {
  std::vector<DevPath> paths;
  for (std::size_t i = 0; i < 20; ++i) {
    DevPath p;
    p.type_sequence = {"T" + std::to_string(100 + i), "X"};
    p.frequency = 100 - i;
    paths.push_back(p);
  }
  const auto top = top_frequency_paths(paths);
  REQUIRE(top.size() == 3);
  CHECK(top[0].frequency == 100);
  CHECK(top[2].frequency == 98);

  for (auto& p : paths) p.frequency = 7;
  CHECK(top_frequency_paths(paths).size() == 20);

  paths.resize(3);
  paths[0].frequency = 9;
  CHECK(top_frequency_paths(paths).size() == 1);
  CHECK(top_frequency_paths(paths, 1.0).size() == 3);
  CHECK_THROWS_AS(top_frequency_paths(paths, 0.0), Error);
  CHECK_THROWS_AS(top_frequency_paths(paths, 1.5), Error);
}

TEST_CASE("hierarchy around a core type") {
  const std::vector<MergedEdge> m = {merged("A", "B", 3), merged("B", "C", 2), merged("D", "B", 1)};
  const auto tree = bfs_hierarchy(m, "B");
  REQUIRE(tree.nodes.size() == 4);
  CHECK(tree.nodes[0].cell_type == "B");
  CHECK(tree.nodes[0].relation == Relation::Root);
  CHECK(tree.nodes[0].connected_paths == 6);
  REQUIRE(tree.find("A", Relation::Ancestor));
  CHECK(tree.find("A", Relation::Ancestor)->distance == 1);
  CHECK(tree.find("C", Relation::Descendant)->distance == 1);
  CHECK(tree.find("D", Relation::Ancestor));
  CHECK_FALSE(tree.find("C", Relation::Ancestor));

  const auto from_a = bfs_hierarchy(m, "A");
  CHECK(from_a.find("B", Relation::Descendant)->distance == 1);
  CHECK(from_a.find("C", Relation::Descendant)->distance == 2);
  CHECK(from_a.links.size() == 2);

  const auto strict = bfs_hierarchy(m, "B", 2);
  CHECK_FALSE(strict.contains("D"));
  CHECK(strict.contains("A"));

  CHECK_THROWS_AS(bfs_hierarchy(m, "Q"), Error);
  const std::vector<std::string> known = {"Q"};
  const auto lonely = bfs_hierarchy(m, "Q", 0, known);
  CHECK(lonely.nodes.size() == 1);
}

TEST_CASE("type-level cycle places a type on both sides") {
  const std::vector<MergedEdge> m = {merged("A", "B", 2), merged("B", "A", 1)};
  const auto tree = bfs_hierarchy(m, "A");
  CHECK(tree.find("B", Relation::Descendant));
  CHECK(tree.find("B", Relation::Ancestor));
  CHECK(tree.nodes.size() == 3);
}

TEST_CASE("path selection validation") {
  const std::vector<MergedEdge> m = {merged("A", "B", 3), merged("B", "C", 1), merged("C", "D", 4)};
  const auto tree = bfs_hierarchy(m, "B");
  CHECK(validate_path_selection(tree, m, seq({"A", "B", "C", "D"})).valid);
  const auto rev = validate_path_selection(tree, m, seq({"B", "A"}));
  CHECK_FALSE(rev.valid);
  REQUIRE(rev.broken);
  CHECK(rev.broken->first == "B");
  CHECK(rev.broken->second == "A");

  const auto strict_tree = bfs_hierarchy(m, "B", 2);
  const auto s = validate_path_selection(strict_tree, m, seq({"A", "B", "C"}));
  CHECK_FALSE(s.valid);
  CHECK(s.broken->first == "B");
  CHECK(s.broken->second == "C");
}

TEST_CASE("selection agrees with pairwise lookup on random graphs") {
  Rng rng(41);
  const std::vector<std::string> types = {"A", "B", "C", "D", "E"};
  for (int it = 0; it < 100; ++it) {
    auto rg = oracle::random_graph(rng);
    const auto kept = filter_edges(rg.graph, rg.raw).kept;
    const auto m = merge_edges(rg.graph, kept);
    if (m.empty()) continue;
    const std::size_t min_freq = rng.index(3);
    const auto tree = bfs_hierarchy(m, m[0].src_type, min_freq);
    std::map<std::pair<std::string, std::string>, std::size_t> w;
    for (const auto& e : m) w[{e.src_type, e.dst_type}] = e.weight;
    for (int k = 0; k < 10; ++k) {
      std::vector<std::string> pick(2 + rng.index(3));
      for (auto& t : pick) t = types[rng.index(types.size())];
      bool want = true;
      for (const auto& t : pick) want = want && tree.contains(t);
      for (std::size_t i = 0; want && i + 1 < pick.size(); ++i) {
        auto f = w.find({pick[i], pick[i + 1]});
        want = f != w.end() && f->second >= min_freq;
      }
      CHECK(validate_path_selection(tree, m, pick).valid == want);
    }
  }
}

TEST_CASE("combinatorics match brute force on 100 random graphs") {
  const auto rep = oracle::check_combinatorics(2024, 100);
  CHECK(rep.graphs == 100);
  CHECK(rep.filter_mismatch == 0);
  CHECK(rep.merge_mismatch == 0);
  CHECK(rep.path_mismatch == 0);
  CHECK(rep.bfs_mismatch == 0);
  CHECK(rep.top_mismatch == 0);
}

TEST_CASE("cell counts average over samples of a stage") {
  ingest::Dataset d;
  auto sample = [](const std::string& sid, int stage, std::vector<std::string> types) {
    ingest::Sample s;
    s.sample_id = sid;
    s.stage = stage;
    for (std::size_t i = 0; i < types.size(); ++i) {
      ingest::Cell c;
      c.cell_id = sid + "_" + std::to_string(i);
      c.sample_id = sid;
      c.cell_type = types[i];
      s.cells.push_back(c);
    }
    return s;
  };
  d.samples.push_back(sample("a", 0, {"X"}));
  d.samples.push_back(sample("b", 1, {"X", "X", "X"}));
  d.samples.push_back(sample("c", 1, {"X", "X", "X", "X", "X", "Y"}));
  const auto counts = cell_counts_by_stage(d);
  CHECK(counts.stages == std::vector<int>{0, 1});
  CHECK(counts.series.at("X") == std::vector<double>{1.0, 4.0});
  CHECK(counts.series.at("Y") == std::vector<double>{0.0, 0.5});
}

TEST_CASE("graph construction rejects duplicates and same-stage edges") {
  std::vector<PopulationNode> nodes = {node("s0", 0, "A"), node("s0", 0, "A")};
  CHECK_THROWS_AS(build_global_graph(nodes), Error);
  GlobalGraph g = staged({{"A", "B"}});
  CHECK_THROWS_AS(g.set_instance_edges({{id("s0", "A"), id("s0", "B")}}), Error);
  CHECK_THROWS_AS(g.set_instance_edges({{id("s0", "A"), "missing"}}), Error);
}

TEST_CASE("graph json round trip") {
  std::vector<PopulationNode> nodes = {node("s0", 0, "A"), node("s1", 1, "B"), node("s1", 1, "C")};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].features.assign(ingest::kFeatureDim, 0.0);
    nodes[i].features[i] = 1.5;
    nodes[i].centroid = {1.0 + i, 2.0};
  }
  GlobalGraph g = build_global_graph(nodes);
  g.set_instance_edges({{id("s0", "A"), id("s1", "B"), 0.8}, {id("s0", "A"), id("s1", "C"), 0.6}});
  const auto m = merge_edges(g, g.instance_edges());
  const auto doc = to_json(g, m);
  const auto back = graph_from_json(doc);
  CHECK(back.size() == g.size());
  CHECK(back.instance_edges() == g.instance_edges());
  CHECK(back.node(1).features == g.node(1).features);
  const auto mb = merged_from_json(doc);
  REQUIRE(mb.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(mb[i].src_type == m[i].src_type);
    CHECK(mb[i].weight == m[i].weight);
    CHECK(mb[i].instances == m[i].instances);
  }
  CHECK(to_json(back, mb).dump() == doc.dump());

  const auto paths = group_paths(g, 2);
  const auto p = path_from_json(to_json(paths[0]));
  CHECK(p.type_sequence == paths[0].type_sequence);
  CHECK(p.trajectories == paths[0].trajectories);
}

TEST_CASE("edge list file round trip") {
  testutil::TempDir dir("edges");
  const std::vector<std::pair<std::string, std::string>> edges = {{"a", "b"}, {"c", "d"}};
  write_edge_list(dir / "e.tsv", edges);
  CHECK(read_edge_list(dir / "e.tsv") == edges);
  CHECK_THROWS_AS(read_edge_list(dir / "missing.tsv"), Error);
}
