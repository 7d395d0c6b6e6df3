#pragma once

// Pipeline stages over a project directory, shared by the CLI and the
// service. Each stage reads the artifacts of earlier stages and writes its
// own; artifacts are byte-stable for a fixed seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosstraj/gnn.hpp"
#include "crosstraj/graph.hpp"

namespace crosstraj::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace files {
inline constexpr const char* kIngest = "ingest.json";
inline constexpr const char* kGraph = "graph.json";
inline constexpr const char* kCells = "cells.json";
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kModel = "model.ckpt";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kPredict = "predict.json";
inline constexpr const char* kPredicted = "predicted.json";
inline constexpr const char* kPaths = "paths.json";
inline constexpr const char* kSummary = "summary.json";
inline constexpr const char* kSelections = "selections.json";
inline constexpr const char* kEnrichDir = "enrich";
}  // namespace files

// Pretty-printed with a trailing newline; written to a temporary file and
// renamed into place.
void write_json(const fs::path& path, const json& doc);
json read_json(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

// ---- ingest ----------------------------------------------------------------

struct IngestOptions {
  fs::path dataset;
  std::optional<fs::path> embeddings;  // fallback embedder when absent
  std::size_t min_cells = ingest::kDefaultMinCells;
  std::size_t deg_count = ingest::kDefaultDegCount;
  std::uint64_t embedding_seed = 0;
};

struct IngestResult {
  graph::GlobalGraph graph;
  graph::CellCounts cells;
  json report;
};

IngestResult build_graph(const IngestOptions& options);

// Writes ingest.json, graph.json and cells.json. Returns the report.
json run_ingest(const IngestOptions& options, const fs::path& project);

// ---- train / predict ---------------------------------------------------------

struct TrainOptions {
  std::optional<fs::path> labels;  // default: <dataset>/truth_edges.tsv
  gnn::ModelConfig config;
};

fs::path default_labels(const fs::path& project);

// Writes split.json, model.ckpt and train_report.json.
gnn::TrainReport run_train(const fs::path& project, const TrainOptions& options,
                           const gnn::ProgressFn& progress = {});

struct PredictOptions {
  std::optional<double> threshold;  // default: the threshold chosen in training
};

// Scores every candidate pair, filters and merges; writes predicted.json and
// predict.json. Message passing uses the training split's positives.
json run_predict(const fs::path& project, const PredictOptions& options = {});

struct PathsOptions {
  std::optional<std::size_t> max_len;  // default: number of distinct stages
  double fraction = graph::kTopPathFraction;
};

// Writes paths.json: every realized path with its frequency and a flag for
// the top-frequency cut.
json run_paths(const fs::path& project, const PathsOptions& options = {});

// Writes summary.json: per-node contours and direction summaries, per-edge
// similarity and per-sample alpha-shape boundaries.
json run_summarize(const fs::path& project);

struct EnrichOptions {
  std::string trajectory_id;
  std::optional<fs::path> obo;  // default: <dataset>/go/go.obo
  std::optional<fs::path> gaf;  // default: <dataset>/go/annotations.gaf
};

// Writes enrich/<hash>.json and returns the payload.
json run_enrich(const fs::path& project, const EnrichOptions& options);

// ---- evaluation harness ------------------------------------------------------

struct EvalOptions {
  IngestOptions ingest;
  std::optional<fs::path> labels;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  gnn::ModelConfig config;
};

struct EvalResult {
  std::vector<gnn::TrainReport> runs;
  double mean_acc = 0.0;
  double min_acc = 0.0;
};

EvalResult evaluate(const EvalOptions& options,
                    const std::function<void(std::uint64_t seed, const gnn::TrainReport&)>& on_run = {});
json to_json(const EvalResult& result);

// ---- ids and lookups -----------------------------------------------------------

std::string path_id(std::span<const std::string> type_sequence);  // "A>B>C"
std::string trajectory_id(const std::string& path, std::size_t index);  // "A>B>C#2"

// Searches paths.json, then selections.json. Throws NotFound.
graph::DevPath find_path(const fs::path& project, const std::string& id);

// ---- view payloads (pure functions of the artifacts) ---------------------------

json cells_view(const fs::path& project);
json path_tree_view(const fs::path& project, const std::string& core, std::size_t min_freq);
json select_paths(const fs::path& project, const std::vector<std::vector<std::string>>& sequences,
                  const std::optional<std::string>& core, std::size_t min_freq);
json path_summary_view(const fs::path& project, const std::vector<std::string>& ids,
                       const std::optional<std::string>& core);
json trajectories_view(const fs::path& project, const std::string& path,
                       const std::optional<std::string>& core);

}  // namespace crosstraj::pipeline
