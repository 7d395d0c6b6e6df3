#pragma once

// GAT + GCN fusion link predictor with hand-written backpropagation.
//
// Both branches read the same (standardized) node features. The GAT branch
// is two multi-head attention layers with concatenated heads (ELU between
// them); the GCN branch is two symmetric-normalized graph convolutions (ReLU
// between them). The branch outputs are fused by elementwise sum (or by a
// softmax-weighted sum in the ablation) and an MLP over concat(h_src, h_dst)
// scores directed pairs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosstraj/graph.hpp"
#include "crosstraj/matrix.hpp"
#include "crosstraj/rng.hpp"

namespace crosstraj::gnn {

enum class Fusion { Residual, WeightedSum };
enum class Attention { Enabled, GcnSubstitute };

inline constexpr double kDefaultThreshold = 0.75;

std::vector<double> default_threshold_grid();  // 0.50, 0.55, ..., 0.90

struct ModelConfig {
  std::size_t in_dim = 2048;
  std::size_t gat_heads = 4;
  std::size_t gat_hidden = 64;  // per head, first layer
  std::size_t gcn_hidden = 256;
  std::size_t out_dim = 128;    // both branches; the second GAT layer uses out_dim / heads per head
  Fusion fusion = Fusion::Residual;
  Attention attention = Attention::Enabled;
  std::size_t scorer_hidden = 128;
  std::uint64_t seed = 0;
  double lr = 1e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;  // mini-batches per epoch
  double neg_ratio = 1.0;
  double leaky_slope = 0.2;
  std::vector<double> thresholds = default_threshold_grid();

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& doc, ModelConfig base = {});

enum class Ablation { NoGat, NoFusion };
Ablation parse_ablation(const std::string& name);  // "no_gat" | "no_fusion"
ModelConfig make_ablation(ModelConfig config, Ablation variant);

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

// Per-dimension standardization fitted on node features, scaled so each
// input has variance 6: with U(+-1/sqrt(fan_in)) weights the first layer's
// pre-activations then have variance 2, as under He initialization.
// Zero-variance dimensions are centered only.
inline const double kInputGain = std::sqrt(6.0);

struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureScaler fit(const Matrix& features);
  bool empty() const { return mean.empty(); }
  Matrix apply(const Matrix& features) const;
};

struct Model {
  ModelConfig config;
  std::vector<ParamGroup> groups;
  std::vector<double> params;
  FeatureScaler scaler;  // not trained; empty means identity

  const ParamGroup& group(const std::string& name) const;
  bool has_group(const std::string& name) const;
  ConstMatrixView view(const std::string& name) const;
  MutMatrixView view(const std::string& name);
  std::size_t parameter_count() const { return params.size(); }
};

std::vector<ParamGroup> parameter_layout(const ModelConfig& config);

// Deterministic init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)) per group from
// config.seed; fusion logits start at zero (equal weights).
Model init_model(const ModelConfig& config);

// Message-passing structure: in-neighborhoods with self-loops over the
// undirected version of the given edges, plus symmetric GCN weights.
struct Adjacency {
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> neighbors;  // sorted, includes self
  std::vector<std::vector<double>> gcn_weight;      // aligned with neighbors

  static Adjacency self_loops(std::size_t n);
  static Adjacency from_edges(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges);
};

struct ForwardResult {
  Matrix embeddings;  // N x out_dim
  bool used_attention = false;
  // [layer][node][head][k]: attention of node over neighbors[node][k].
  std::vector<std::vector<std::vector<std::vector<double>>>> attention;
};

// Features are raw (unstandardized) N x in_dim; the model's scaler is applied.
ForwardResult forward(const Model& model, const Matrix& features, const Adjacency& adjacency);

using NodePair = std::pair<std::size_t, std::size_t>;

std::vector<double> score_edges(const Model& model, const Matrix& embeddings,
                                std::span<const NodePair> pairs);

struct LabeledPair {
  NodePair pair;
  double label = 0.0;  // 1 positive, 0 negative
};

// Mean binary cross-entropy over `batch`; when `grad` is non-empty it
// receives d(loss)/d(params) (overwritten, same layout as params).
double loss_and_gradient(const Model& model, const Matrix& features, const Adjacency& adjacency,
                         std::span<const LabeledPair> batch, std::span<double> grad);

// Directed pairs that may carry an edge: stage(src) < stage(dst) and
// different cell types. Sorted by (src, dst).
std::vector<NodePair> candidate_pairs(const graph::GlobalGraph& graph);

// Uniform sample without replacement of `count` candidates not in `exclude`.
std::vector<NodePair> sample_negative_edges(const graph::GlobalGraph& graph,
                                            std::span<const NodePair> exclude, std::size_t count,
                                            Rng& rng);

struct ThresholdRow {
  double threshold = 0.0;
  double precision = 0.0;
  bool defined = false;  // false when nothing scored above the threshold
  std::size_t predicted_positive = 0;
};

struct ThresholdSweep {
  double chosen = kDefaultThreshold;
  bool precision_undefined = false;  // no threshold produced a positive prediction
  std::vector<ThresholdRow> table;
};

// Precision of "score > t" at each grid threshold; argmax, ties to the larger t.
ThresholdSweep sweep_threshold(std::span<const double> positive_scores,
                               std::span<const double> negative_scores,
                               std::span<const double> grid);
ThresholdSweep sweep_threshold(const Model& model, const Matrix& features, const Adjacency& adjacency,
                               std::span<const NodePair> val_pos, std::span<const NodePair> val_neg);

double accuracy(std::span<const double> positive_scores, std::span<const double> negative_scores,
                double threshold);
double evaluate_acc(const Model& model, const Matrix& features, const Adjacency& adjacency,
                    std::span<const NodePair> test_pos, std::span<const NodePair> test_neg,
                    double threshold);

// Every candidate pair of `graph` with probability > threshold. Message
// passing uses `context` edges; the graph's own edges are used when absent.
std::vector<graph::InstanceEdge> predict_edges(
    const Model& model, const graph::GlobalGraph& graph, double threshold,
    std::optional<std::span<const NodePair>> context = std::nullopt);

Matrix feature_matrix(const graph::GlobalGraph& graph);

struct EdgeSplit {
  std::vector<NodePair> train_pos, val_pos, test_pos;
  std::vector<NodePair> val_neg, test_neg;
};

// 80/10/10 split of the positives plus balanced held-out negatives.
EdgeSplit split_edges(const graph::GlobalGraph& graph, std::span<const NodePair> positives,
                      std::uint64_t seed);

struct TrainReport {
  std::uint64_t seed = 0;
  std::size_t parameter_count = 0;
  std::vector<double> epoch_loss;
  ThresholdSweep sweep;
  double initial_loss = 0.0;  // before the first update, on the first epoch's batches
  double test_acc = 0.0;
  double wall_seconds = 0.0;
  std::size_t train_positive = 0, val_positive = 0, test_positive = 0;
};

// AdamW on mean BCE; fresh negatives every epoch; batches reshuffled every
// epoch. The model is updated in place. The scaler is fitted here.
using ProgressFn = std::function<void(std::size_t epoch, std::size_t epochs, double loss)>;
TrainReport train(Model& model, const graph::GlobalGraph& graph, const EdgeSplit& split,
                  const ProgressFn& progress = {});

nlohmann::json to_json(const TrainReport& report);  // wall time left out
nlohmann::json to_json(const EdgeSplit& split, const graph::GlobalGraph& graph);
EdgeSplit split_from_json(const nlohmann::json& doc, const graph::GlobalGraph& graph);

// Resolves node-id pairs against the graph.
std::vector<NodePair> resolve_pairs(const graph::GlobalGraph& graph,
                                    std::span<const std::pair<std::string, std::string>> ids);

// ---- checkpoints ---------------------------------------------------------

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);  // verifies count and content hash

}  // namespace crosstraj::gnn
