#pragma once

// Layer-level pieces of the gnn module, exposed for the trainer and tests.

#include <span>
#include <vector>

#include "crosstraj/gnn.hpp"

namespace crosstraj::gnn::detail {

struct GatCache {
  Matrix z;                               // N x heads*F
  std::vector<double> s_src, s_dst;       // N x heads
  std::vector<std::vector<double>> alpha; // per node: [head][neighbor]
  std::vector<std::vector<double>> e;     // raw logits before LeakyReLU
  Matrix out;                             // before activation
};

struct GcnCache {
  Matrix y;    // input * W
  Matrix out;  // before activation
};

struct ForwardCache {
  bool attention = false;
  GatCache gat1, gat2;
  GcnCache sub1, sub2;
  GcnCache gcn1, gcn2;
  Matrix branch1_act;  // ELU of the first attention-branch layer
  Matrix gcn1_act;     // ReLU of the first GCN layer
  Matrix att_out;      // attention-branch output
  double omega0 = 1.0, omega1 = 1.0;
  Matrix embeddings;
};

void check_inputs(const Model& model, const Matrix& features, const Adjacency& adj);
void forward_standardized(const Model& model, const Matrix& x, const Adjacency& adj, ForwardCache& cache);

struct ScorerTables {
  Matrix src;  // embeddings * W_src
  Matrix dst;  // embeddings * W_dst
};
ScorerTables scorer_tables(const Model& model, const Matrix& embeddings);
double pair_logit(const Model& model, const ScorerTables& tables, std::size_t s, std::size_t d,
                  std::vector<double>* hidden_pre);
double sigmoid(double z);

// Same as gnn::loss_and_gradient but on already standardized features.
double batch_loss_and_gradient(const Model& model, const Matrix& x, const Adjacency& adj,
                               std::span<const LabeledPair> batch, std::span<double> grad);

}  // namespace crosstraj::gnn::detail
