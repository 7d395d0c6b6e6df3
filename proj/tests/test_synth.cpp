#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crosstraj/error.hpp"
#include "crosstraj/graph.hpp"
#include "crosstraj/ingest.hpp"
#include "crosstraj/synth.hpp"
#include "test_util.hpp"

using namespace crosstraj;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

synth::SynthManifest small(std::uint64_t seed) {
  synth::SynthManifest m;
  m.cells_per_population = 12;
  m.genes = 60;
  m.signature_size = 6;
  m.seed = seed;
  return m;
}

}  // namespace

TEST_CASE("default plan") {
  const synth::SynthManifest m;
  const auto r = synth::plan(m);
  CHECK(r.populations.size() == 3 * 2 * 6);
  for (const auto& p : r.populations) CHECK(p.cells == 200);
  // 5 lineage edges over stage pairs (0,1), (0,2), (1,2), 2x2 sample pairs each.
  CHECK(r.truth_edges.size() == 5 * 3 * 4);
  CHECK(std::is_sorted(r.truth_edges.begin(), r.truth_edges.end()));
  CHECK(r.signatures.size() == 6);
  for (const auto& [type, genes] : r.signatures) CHECK(genes.size() == m.signature_size);
}

TEST_CASE("planted edges survive the edge filter") {
  synth::SynthManifest m;
  m.emerges_at = {{"Brain", 1}, {"ChoroidPlexus", 2}, {"DRG", 2}, {"Notochord", 1}};
  const auto r = synth::plan(m);
  std::vector<ingest::PopulationNode> nodes;
  for (const auto& p : r.populations) nodes.push_back(testutil::node(p.sample_id, static_cast<int>(p.stage), p.cell_type));
  CHECK(nodes.size() == 2 * (2 + 4 + 6));
  const auto g = graph::build_global_graph(nodes);
  std::vector<graph::InstanceEdge> raw;
  for (const auto& [a, b] : r.truth_edges) raw.push_back({a, b, 1.0});
  CHECK(graph::filter_edges(g, raw).kept.size() == raw.size());
}

TEST_CASE("manifest validation and json") {
  synth::SynthManifest m;
  m.lineage.push_back({"Brain", "Mesenchyme"});
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.lineage.push_back({"Brain", "Brain"});
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.stages = 0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.emerges_at = {{"Cartilage", 0}, {"Mesenchyme", 1}};
  CHECK_THROWS_AS(m.validate(), Error);

  const auto back = synth::manifest_from_json(synth::to_json(small(9)));
  CHECK(synth::to_json(back) == synth::to_json(small(9)));
  CHECK_THROWS_AS(synth::manifest_from_json(nlohmann::json{{"bogus", 1}}), Error);
  CHECK(synth::manifest_from_json(nlohmann::json{{"stages", 4}}).stages == 4);
}

TEST_CASE("written dataset is byte-stable per seed and loads") {
  testutil::TempDir a("synth-a"), b("synth-b"), c("synth-c");
  synth::write_dataset(small(3), a.path());
  synth::write_dataset(small(3), b.path());
  synth::write_dataset(small(4), c.path());
  const auto sa = snapshot(a.path());
  CHECK(sa == snapshot(b.path()));
  CHECK(sa != snapshot(c.path()));
  CHECK(sa.count("manifest.json"));
  CHECK(sa.count("truth_edges.tsv"));
  CHECK(sa.count("go/go.obo"));
  CHECK(sa.count("go/annotations.gaf"));

  const auto ds = ingest::load_dataset(a.path());
  CHECK(ds.samples.size() == 6);
  std::map<std::string, std::size_t> per_type;
  for (const auto& s : ds.samples)
    for (const auto& cell : s.cells) ++per_type[s.sample_id + "/" + cell.cell_type];
  CHECK(per_type.size() == 36);
  for (const auto& [k, n] : per_type) CHECK(n == 12);
  CHECK(graph::read_edge_list(a / "truth_edges.tsv").size() == 60);
}
