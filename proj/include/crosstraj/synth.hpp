#pragma once

// Synthetic datasets with planted lineages, written in the ingest layout.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosstraj/geometry.hpp"

namespace crosstraj::synth {

struct LineageEdge {
  std::string parent;
  std::string child;
};

struct SynthManifest {
  std::size_t stages = 3;
  std::size_t samples_per_stage = 2;
  std::vector<std::string> cell_types = {"Brain", "Notochord", "Cartilage",
                                         "ChoroidPlexus", "DRG", "Mesenchyme"};
  std::vector<LineageEdge> lineage = {{"Mesenchyme", "Cartilage"},
                                      {"Mesenchyme", "Notochord"},
                                      {"Notochord", "Brain"},
                                      {"Brain", "ChoroidPlexus"},
                                      {"Brain", "DRG"}};
  // First stage at which a type has cells; absent types start at stage 0.
  std::map<std::string, std::size_t> emerges_at;
  std::size_t cells_per_population = 200;
  std::size_t genes = 300;
  std::size_t signature_size = 20;
  double inherit_fraction = 0.7;  // share of a child's signature taken from its parent
  double base_rate = 0.4;         // Poisson mean of background genes
  double signature_rate = 5.0;    // extra mean on signature genes
  double blob_sd = 1.0;           // spatial spread along the major axis
  double blob_aspect = 0.5;       // minor / major spread
  double lineage_step = 6.0;      // parent-to-child centroid offset
  Point stage_drift = {1.5, 0.75};
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthManifest& m);
SynthManifest manifest_from_json(const nlohmann::json& doc, SynthManifest base = {});

struct Population {
  std::string sample_id;
  std::size_t stage = 0;
  std::string cell_type;
  std::size_t cells = 0;
};

struct SynthResult {
  std::vector<Population> populations;
  // Node-id pairs (src, dst) of the planted instance edges, sorted.
  std::vector<std::pair<std::string, std::string>> truth_edges;
  std::map<std::string, std::vector<std::string>> signatures;  // type -> signature genes
};

std::string sample_name(std::size_t stage, std::size_t replicate);

// Generates without touching the filesystem.
SynthResult plan(const SynthManifest& manifest);

// Writes <out>/manifest.json, <out>/<sample>/{meta,matrix}.csv,
// <out>/truth_edges.tsv, <out>/synth.json and a GO fixture in <out>/go/.
SynthResult write_dataset(const SynthManifest& manifest, const std::filesystem::path& out);

}  // namespace crosstraj::synth
