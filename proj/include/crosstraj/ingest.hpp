#pragma once

// Dataset loading, expression normalization, differential expression and
// node feature assembly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crosstraj/geometry.hpp"

namespace crosstraj::ingest {

inline constexpr std::size_t kEmbeddingDim = 1024;
inline constexpr std::size_t kSpatialDim = 1024;
inline constexpr std::size_t kFeatureDim = kEmbeddingDim + kSpatialDim;
inline constexpr std::size_t kDefaultDegCount = 20;
inline constexpr std::size_t kDefaultMinCells = 3;
inline constexpr double kLibrarySize = 10000.0;
inline constexpr std::size_t kOccupancyBins = 31;

struct Cell {
  std::string cell_id;
  std::string sample_id;
  std::string cell_type;
  double x = 0.0;
  double y = 0.0;
  // (gene index, value) with zeros omitted, sorted by gene index.
  std::vector<std::pair<std::uint32_t, double>> expression;
};

struct Sample {
  std::string sample_id;
  int stage = 0;
  std::vector<Cell> cells;
};

struct Dataset {
  std::vector<std::string> genes;  // gene index -> gene id
  std::vector<Sample> samples;     // sorted by sample_id
  bool normalized = false;
};

// Reads <root>/manifest.json plus <root>/<sample>/{matrix,meta}.csv.
Dataset load_dataset(const std::filesystem::path& root);

struct NormalizeReport {
  std::size_t dropped_cells = 0;
  std::vector<std::string> warnings;
};

// Counts-per-10k then log1p, in place. Zero-count cells are dropped.
NormalizeReport normalize_expression(Dataset& dataset);

struct RankSum {
  double score = 0.0;    // tie-corrected z statistic, positive when target is higher
  double p_value = 1.0;  // one-sided, target > background
  bool informative = false;
};

// Mann-Whitney/Wilcoxon rank-sum test. Exact null distribution (over
// midranks, so ties are handled) for small groups, normal approximation
// otherwise.
RankSum rank_sum_test(std::span<const double> target, std::span<const double> background);

inline constexpr std::size_t kExactRankSumLimit = 50;  // max n1 + n2 for the exact path

struct Deg {
  std::string gene;
  double score = 0.0;
  double p_value = 1.0;
};

// Genes ranked by descending rank-sum score; constant genes are excluded.
std::vector<Deg> rank_degs(const std::vector<std::string>& genes,
                           std::span<const Cell* const> target,
                           std::span<const Cell* const> background,
                           std::size_t k = kDefaultDegCount);

class GeneEmbeddingTable {
 public:
  enum class Provenance { File, Fallback };

  // One record per line: gene id followed by 1024 whitespace-separated reals.
  static GeneEmbeddingTable load(const std::filesystem::path& path);
  // Seeded hash of the gene id mapped to a unit vector.
  static GeneEmbeddingTable fallback(std::uint64_t seed = 0);

  Provenance provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  std::optional<std::vector<double>> find(const std::string& gene) const;
  // Throws NotFound for unknown genes unless this is a fallback table.
  std::vector<double> at(const std::string& gene) const;

 private:
  Provenance provenance_ = Provenance::File;
  std::uint64_t seed_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

std::vector<double> fallback_embedding(const std::string& gene, std::uint64_t seed);

// Mean of the DEG embeddings; DEGs missing from the table are skipped.
std::vector<double> population_gene_feature(std::span<const Deg> degs,
                                            const GeneEmbeddingTable& table);

// Fixed-layout spatial descriptor:
//   [0,2)     centroid x, y
//   [2,4)     covariance eigenvalues lambda1 >= lambda2
//   [4]       principal axis angle in [0, pi)
//   [5,966)   31x31 occupancy histogram over the population's bounding box, sums to 1
//   [966,1024) zero
std::vector<double> spatial_feature(const std::vector<Point>& coords);

inline constexpr std::size_t kSpatialCentroidSlot = 0;
inline constexpr std::size_t kSpatialLambdaSlot = 2;
inline constexpr std::size_t kSpatialAngleSlot = 4;
inline constexpr std::size_t kSpatialHistogramSlot = 5;

struct PopulationNode {
  std::string node_id;  // "<sample_id>::<cell_type>"
  std::string sample_id;
  int stage = 0;
  std::string cell_type;
  std::vector<std::size_t> cell_indices;  // into Sample::cells
  std::vector<Deg> degs;
  std::vector<double> features;           // kFeatureDim
  Point centroid;
  std::size_t count = 0;
  std::vector<Point> coords;              // member cell coordinates
};

std::string make_node_id(const std::string& sample_id, const std::string& cell_type);

struct NodeBuildResult {
  std::vector<PopulationNode> nodes;  // sorted by node_id
  std::vector<std::string> warnings;
};

NodeBuildResult build_population_nodes(const Dataset& dataset, const GeneEmbeddingTable& table,
                                       std::size_t min_cells = kDefaultMinCells,
                                       std::size_t deg_count = kDefaultDegCount);

}  // namespace crosstraj::ingest
