#include "crosstraj/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "crosstraj/error.hpp"
#include "crosstraj/ingest.hpp"
#include "crosstraj/rng.hpp"

namespace crosstraj::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t emerges(const SynthManifest& m, const std::string& type) {
  const auto it = m.emerges_at.find(type);
  return it == m.emerges_at.end() ? 0 : it->second;
}

std::size_t type_index(const SynthManifest& m, const std::string& type) {
  const auto it = std::find(m.cell_types.begin(), m.cell_types.end(), type);
  if (it == m.cell_types.end()) fail(ErrorKind::Validation, "lineage references unknown type '" + type + "'");
  return static_cast<std::size_t>(it - m.cell_types.begin());
}

// Types in an order where every parent precedes its children.
std::vector<std::size_t> topological_order(const SynthManifest& m) {
  const std::size_t n = m.cell_types.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& e : m.lineage) {
    const auto p = type_index(m, e.parent), c = type_index(m, e.child);
    children[p].push_back(c);
    ++indegree[c];
  }
  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    bool progressed = false;
    for (std::size_t t = 0; t < n; ++t) {
      if (done[t] || indegree[t] != 0) continue;
      done[t] = true;
      order.push_back(t);
      for (auto c : children[t]) --indegree[c];
      progressed = true;
      break;
    }
    if (!progressed) fail(ErrorKind::Validation, "synth manifest: lineage contains a cycle, no stage order exists");
  }
  return order;
}

std::string gene_name(std::size_t g) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "G%04zu", g + 1);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct TypeModel {
  std::vector<std::size_t> signature;  // gene indices, sorted
  Point center;
  double angle = 0.0;
};

std::vector<TypeModel> type_models(const SynthManifest& m, Rng& rng) {
  const std::size_t n = m.cell_types.size();
  std::vector<TypeModel> models(n);
  std::size_t roots = 0;
  std::map<std::size_t, std::size_t> sibling_count;
  for (const std::size_t t : topological_order(m)) {
    auto& tm = models[t];
    tm.angle = std::numbers::pi * static_cast<double>(t) / static_cast<double>(n);
    const LineageEdge* first_parent = nullptr;
    for (const auto& e : m.lineage)
      if (type_index(m, e.child) == t) {
        first_parent = &e;
        break;
      }
    std::set<std::size_t> sig;
    if (first_parent) {
      const std::size_t p = type_index(m, first_parent->parent);
      const std::size_t k = sibling_count[p]++;
      const double theta = std::numbers::pi / 3.0 * static_cast<double>(k + 1);
      tm.center = models[p].center + Point{m.lineage_step * std::cos(theta), m.lineage_step * std::sin(theta)};
      std::vector<std::size_t> parent_sig = models[p].signature;
      rng.shuffle(std::span<std::size_t>(parent_sig));
      const auto keep = static_cast<std::size_t>(std::llround(m.inherit_fraction * static_cast<double>(m.signature_size)));
      for (std::size_t i = 0; i < keep && i < parent_sig.size(); ++i) sig.insert(parent_sig[i]);
    } else {
      tm.center = {3.0 * m.lineage_step * static_cast<double>(roots++), 0.0};
    }
    while (sig.size() < m.signature_size) sig.insert(static_cast<std::size_t>(rng.index(m.genes)));
    tm.signature.assign(sig.begin(), sig.end());
  }
  return models;
}

}  // namespace

void SynthManifest::validate() const {
  if (stages == 0) fail(ErrorKind::Validation, "synth manifest: stages must be positive");
  if (samples_per_stage == 0) fail(ErrorKind::Validation, "synth manifest: samples_per_stage must be positive");
  if (cell_types.empty()) fail(ErrorKind::Validation, "synth manifest: no cell types");
  if (cells_per_population == 0) fail(ErrorKind::Validation, "synth manifest: cells_per_population must be positive");
  if (genes == 0 || signature_size == 0 || signature_size > genes)
    fail(ErrorKind::Validation, "synth manifest: need 0 < signature_size <= genes");
  if (!(inherit_fraction >= 0.0 && inherit_fraction <= 1.0))
    fail(ErrorKind::Validation, "synth manifest: inherit_fraction must be in [0,1]");
  if (!(base_rate >= 0.0) || !(signature_rate >= 0.0) || !(blob_sd > 0.0) || !(blob_aspect > 0.0))
    fail(ErrorKind::Validation, "synth manifest: rates must be >= 0 and spreads > 0");
  std::set<std::string> seen;
  for (const auto& t : cell_types) {
    if (t.empty() || t.find("::") != std::string::npos || t.find_first_of(",\t\n\"") != std::string::npos)
      fail(ErrorKind::Validation, "synth manifest: invalid cell type name '" + t + "'");
    if (!seen.insert(t).second) fail(ErrorKind::Validation, "synth manifest: duplicate cell type '" + t + "'");
  }
  for (const auto& [t, s] : emerges_at) {
    if (!seen.contains(t)) fail(ErrorKind::Validation, "synth manifest: emerges_at names unknown type '" + t + "'");
    if (s >= stages)
      fail(ErrorKind::Validation, "synth manifest: type '" + t + "' emerges at stage " + std::to_string(s) +
                                      " but there are only " + std::to_string(stages) + " stages");
  }
  for (const auto& e : lineage) {
    type_index(*this, e.parent);
    type_index(*this, e.child);
    if (e.parent == e.child)
      fail(ErrorKind::Validation, "synth manifest: lineage edge " + e.parent + " -> " + e.child + " joins a type to itself");
    if (emerges(*this, e.child) < emerges(*this, e.parent))
      fail(ErrorKind::Validation, "synth manifest: child '" + e.child + "' emerges before its parent '" + e.parent +
                                      "', violating stage order");
  }
  topological_order(*this);
}

json to_json(const SynthManifest& m) {
  json lineage = json::array();
  for (const auto& e : m.lineage) lineage.push_back({e.parent, e.child});
  json emerges_at = json::object();
  for (const auto& [t, s] : m.emerges_at) emerges_at[t] = s;
  return {{"stages", m.stages},
          {"samples_per_stage", m.samples_per_stage},
          {"cell_types", m.cell_types},
          {"lineage", lineage},
          {"emerges_at", emerges_at},
          {"cells_per_population", m.cells_per_population},
          {"genes", m.genes},
          {"signature_size", m.signature_size},
          {"inherit_fraction", m.inherit_fraction},
          {"base_rate", m.base_rate},
          {"signature_rate", m.signature_rate},
          {"blob_sd", m.blob_sd},
          {"blob_aspect", m.blob_aspect},
          {"lineage_step", m.lineage_step},
          {"stage_drift", {m.stage_drift.x, m.stage_drift.y}},
          {"seed", m.seed}};
}

SynthManifest manifest_from_json(const json& doc, SynthManifest m) {
  if (!doc.is_object()) fail(ErrorKind::Format, "synth manifest must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "stages") m.stages = v.get<std::size_t>();
      else if (key == "samples_per_stage") m.samples_per_stage = v.get<std::size_t>();
      else if (key == "cell_types") m.cell_types = v.get<std::vector<std::string>>();
      else if (key == "lineage") {
        m.lineage.clear();
        for (const auto& e : v) m.lineage.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
      } else if (key == "emerges_at") {
        m.emerges_at.clear();
        for (const auto& [t, s] : v.items()) m.emerges_at[t] = s.get<std::size_t>();
      } else if (key == "cells_per_population") m.cells_per_population = v.get<std::size_t>();
      else if (key == "genes") m.genes = v.get<std::size_t>();
      else if (key == "signature_size") m.signature_size = v.get<std::size_t>();
      else if (key == "inherit_fraction") m.inherit_fraction = v.get<double>();
      else if (key == "base_rate") m.base_rate = v.get<double>();
      else if (key == "signature_rate") m.signature_rate = v.get<double>();
      else if (key == "blob_sd") m.blob_sd = v.get<double>();
      else if (key == "blob_aspect") m.blob_aspect = v.get<double>();
      else if (key == "lineage_step") m.lineage_step = v.get<double>();
      else if (key == "stage_drift") m.stage_drift = {v.at(0).get<double>(), v.at(1).get<double>()};
      else if (key == "seed") m.seed = v.get<std::uint64_t>();
      else fail(ErrorKind::Validation, "unknown synth manifest key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("synth manifest: ") + e.what());
  }
  m.validate();
  return m;
}

std::string sample_name(std::size_t stage, std::size_t replicate) {
  return "st" + std::to_string(stage) + "_r" + std::to_string(replicate);
}

SynthResult plan(const SynthManifest& m) {
  m.validate();
  Rng rng(m.seed);
  const auto models = type_models(m, rng);
  SynthResult r;
  for (std::size_t t = 0; t < m.cell_types.size(); ++t) {
    auto& sig = r.signatures[m.cell_types[t]];
    for (auto g : models[t].signature) sig.push_back(gene_name(g));
  }
  for (std::size_t s = 0; s < m.stages; ++s)
    for (std::size_t k = 0; k < m.samples_per_stage; ++k)
      for (const auto& type : m.cell_types)
        if (emerges(m, type) <= s) r.populations.push_back({sample_name(s, k), s, type, m.cells_per_population});
  for (const auto& e : m.lineage)
    for (std::size_t s = 0; s < m.stages; ++s)
      for (std::size_t t = s + 1; t < m.stages; ++t) {
        if (emerges(m, e.parent) > s || emerges(m, e.child) > t) continue;
        for (std::size_t i = 0; i < m.samples_per_stage; ++i)
          for (std::size_t j = 0; j < m.samples_per_stage; ++j)
            r.truth_edges.emplace_back(ingest::make_node_id(sample_name(s, i), e.parent),
                                       ingest::make_node_id(sample_name(t, j), e.child));
      }
  std::sort(r.truth_edges.begin(), r.truth_edges.end());
  return r;
}

namespace {

void write_go_fixture(const SynthManifest& m, const SynthResult& r, const fs::path& dir, Rng& rng) {
  fs::create_directories(dir);
  std::ofstream obo(dir / "go.obo", std::ios::binary);
  if (!obo) fail(ErrorKind::Io, "cannot write " + (dir / "go.obo").string());
  obo << "format-version: 1.2\nontology: go\n";
  auto term = [&](const std::string& id, const std::string& name, const std::vector<std::string>& parents,
                  bool obsolete = false) {
    obo << "\n[Term]\nid: " << id << "\nname: " << name << "\nnamespace: biological_process\n";
    for (const auto& p : parents) obo << "is_a: " << p << '\n';
    if (obsolete) obo << "is_obsolete: true\n";
  };
  term("GO:0008150", "biological_process", {});
  term("GO:0032502", "developmental process", {"GO:0008150"});
  term("GO:0009987", "cellular process", {"GO:0008150"});
  char id[16];
  std::vector<std::string> type_terms;
  for (std::size_t t = 0; t < m.cell_types.size(); ++t) {
    std::snprintf(id, sizeof id, "GO:%07zu", 1000000 + t);
    type_terms.emplace_back(id);
    term(id, m.cell_types[t] + " development", {"GO:0032502"});
  }
  std::vector<std::string> house;
  for (std::size_t k = 0; k < 5; ++k) {
    std::snprintf(id, sizeof id, "GO:%07zu", 2000000 + k);
    house.emplace_back(id);
    term(id, "housekeeping process " + std::to_string(k + 1), {"GO:0009987"});
  }
  term("GO:0000001", "obsolete example process", {}, true);
  obo << "\n[Typedef]\nid: part_of\nname: part of\n";

  std::ofstream gaf(dir / "annotations.gaf", std::ios::binary);
  if (!gaf) fail(ErrorKind::Io, "cannot write " + (dir / "annotations.gaf").string());
  gaf << "!gaf-version: 2.2\n";
  auto annotate = [&](const std::string& gene, const std::string& go) {
    gaf << "SYN\t" << gene << '\t' << gene << "\t\t" << go << "\tREF:0\tIEA\t\tP\t\t\tgene\ttaxon:10090\t20240101\tSYN\n";
  };
  for (std::size_t g = 0; g < m.genes; ++g) annotate(gene_name(g), house[rng.index(house.size())]);
  for (std::size_t t = 0; t < m.cell_types.size(); ++t)
    for (const auto& gene : r.signatures.at(m.cell_types[t])) annotate(gene, type_terms[t]);
}

}  // namespace

SynthResult write_dataset(const SynthManifest& m, const fs::path& out) {
  SynthResult r = plan(m);
  Rng rng(m.seed);
  const auto models = type_models(m, rng);  // same draws as plan()
  fs::create_directories(out);

  std::vector<std::string> gene_names;
  for (std::size_t g = 0; g < m.genes; ++g) gene_names.push_back(gene_name(g));
  std::string header = "cell_id";
  for (const auto& g : gene_names) header += "," + g;

  json manifest = json::object();
  std::vector<double> rates(m.genes);
  std::string row;
  for (std::size_t s = 0; s < m.stages; ++s)
    for (std::size_t k = 0; k < m.samples_per_stage; ++k) {
      const std::string sample = sample_name(s, k);
      manifest[sample] = s;
      const fs::path dir = out / sample;
      fs::create_directories(dir);
      std::ofstream meta(dir / "meta.csv", std::ios::binary);
      std::ofstream matrix(dir / "matrix.csv", std::ios::binary);
      if (!meta || !matrix) fail(ErrorKind::Io, "cannot write into " + dir.string());
      meta << "cell_id,x,y,cell_type\n";
      matrix << header << '\n';
      std::size_t cell_no = 0;
      for (std::size_t t = 0; t < m.cell_types.size(); ++t) {
        if (emerges(m, m.cell_types[t]) > s) continue;
        const auto& tm = models[t];
        std::fill(rates.begin(), rates.end(), m.base_rate);
        for (auto g : tm.signature) rates[g] += m.signature_rate;
        const Point center = tm.center + static_cast<double>(s) * m.stage_drift;
        const double ca = std::cos(tm.angle), sa = std::sin(tm.angle);
        for (std::size_t c = 0; c < m.cells_per_population; ++c) {
          char id[48];
          std::snprintf(id, sizeof id, "%s_c%05zu", sample.c_str(), ++cell_no);
          const double u = rng.normal() * m.blob_sd;
          const double v = rng.normal() * m.blob_sd * m.blob_aspect;
          meta << id << ',' << fmt(center.x + ca * u - sa * v) << ',' << fmt(center.y + sa * u + ca * v) << ','
               << m.cell_types[t] << '\n';
          row = id;
          for (std::size_t g = 0; g < m.genes; ++g) {
            row += ',';
            row += std::to_string(rng.poisson(rates[g]));
          }
          matrix << row << '\n';
        }
      }
    }
  {
    std::ofstream f(out / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << '\n';
  }
  {
    std::ofstream f(out / "synth.json", std::ios::binary);
    f << to_json(m).dump(2) << '\n';
  }
  {
    std::ofstream f(out / "truth_edges.tsv", std::ios::binary);
    for (const auto& [a, b] : r.truth_edges) f << a << '\t' << b << '\n';
  }
  write_go_fixture(m, r, out / "go", rng);
  return r;
}

}  // namespace crosstraj::synth
