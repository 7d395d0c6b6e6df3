#pragma once

// Straight-line dense reimplementation of the model equations, and a
// central-difference gradient check. Shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crosstraj/gnn.hpp"
#include "crosstraj/rng.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;
using crosstraj::gnn::Model;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense param(const Model& m, const std::string& name) {
  const auto v = m.view(name);
  Dense out = zeros(v.rows, v.cols);
  for (std::size_t i = 0; i < v.rows; ++i)
    for (std::size_t j = 0; j < v.cols; ++j) out[i][j] = v(i, j);
  return out;
}

inline Dense matmul(const Dense& a, const Dense& b) {
  Dense out = zeros(a.size(), b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

// Undirected 0/1 adjacency with self-loops.
inline Dense adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Dense a = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  for (auto [u, v] : edges) a[u][v] = a[v][u] = 1.0;
  return a;
}

// D^-1/2 A D^-1/2 X W + b
inline Dense gcn(const Dense& x, const Dense& w, const Dense& b, const Dense& a) {
  const std::size_t n = a.size();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i][j];
  const Dense y = matmul(x, w);
  Dense out = zeros(n, w[0].size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a[i][j] != 0.0)
        for (std::size_t q = 0; q < y[0].size(); ++q) out[i][q] += y[j][q] / std::sqrt(deg[i] * deg[j]);
  for (auto& row : out)
    for (std::size_t q = 0; q < row.size(); ++q) row[q] += b[0][q];
  return out;
}

// Multi-head attention with concatenated heads; alpha_ij = softmax_j
// LeakyReLU(a_dst . z_i + a_src . z_j) over the closed neighborhood of i.
inline Dense gat(const Dense& x, const Dense& w, const Dense& a_src, const Dense& a_dst, const Dense& b,
                 const Dense& a, double slope, std::vector<std::vector<std::vector<double>>>* alpha_out = nullptr) {
  const std::size_t n = a.size(), heads = a_src.size(), f = a_src[0].size();
  const Dense z = matmul(x, w);
  Dense out = zeros(n, heads * f);
  if (alpha_out) alpha_out->assign(n, std::vector<std::vector<double>>(heads));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> logits;
      std::vector<std::size_t> js;
      for (std::size_t j = 0; j < n; ++j) {
        if (a[i][j] == 0.0) continue;
        double e = 0.0;
        for (std::size_t k = 0; k < f; ++k) e += a_dst[h][k] * z[i][h * f + k] + a_src[h][k] * z[j][h * f + k];
        logits.push_back(e > 0 ? e : slope * e);
        js.push_back(j);
      }
      double total = 0.0;
      for (double l : logits) total += std::exp(l);
      for (std::size_t t = 0; t < js.size(); ++t) {
        const double al = std::exp(logits[t]) / total;
        if (alpha_out) (*alpha_out)[i][h].push_back(al);
        for (std::size_t k = 0; k < f; ++k) out[i][h * f + k] += al * z[js[t]][h * f + k];
      }
    }
  for (auto& row : out)
    for (std::size_t q = 0; q < row.size(); ++q) row[q] += b[0][q];
  return out;
}

inline Dense map(Dense m, double (*fn)(double)) {
  for (auto& row : m)
    for (auto& v : row) v = fn(v);
  return m;
}
inline double elu(double v) { return v > 0 ? v : std::exp(v) - 1.0; }
inline double relu(double v) { return v > 0 ? v : 0.0; }

struct Branches {
  Dense attention, gcn;
};

inline Branches branches(const Model& m, const Dense& x, const Dense& a) {
  const double slope = m.config.leaky_slope;
  Branches br;
  if (m.config.attention == crosstraj::gnn::Attention::Enabled) {
    const Dense h1 = gat(x, param(m, "gat1.W"), param(m, "gat1.a_src"), param(m, "gat1.a_dst"),
                         param(m, "gat1.b"), a, slope);
    br.attention = gat(map(h1, elu), param(m, "gat2.W"), param(m, "gat2.a_src"), param(m, "gat2.a_dst"),
                       param(m, "gat2.b"), a, slope);
  } else {
    const Dense h1 = gcn(x, param(m, "sub1.W"), param(m, "sub1.b"), a);
    br.attention = gcn(map(h1, elu), param(m, "sub2.W"), param(m, "sub2.b"), a);
  }
  const Dense g1 = gcn(x, param(m, "gcn1.W"), param(m, "gcn1.b"), a);
  br.gcn = gcn(map(g1, relu), param(m, "gcn2.W"), param(m, "gcn2.b"), a);
  return br;
}

inline Dense embeddings(const Model& m, const Dense& x, const Dense& a) {
  const Branches br = branches(m, x, a);
  double w0 = 1.0, w1 = 1.0;
  if (m.config.fusion == crosstraj::gnn::Fusion::WeightedSum) {
    const Dense fw = param(m, "fusion.w");
    w0 = std::exp(fw[0][0]) / (std::exp(fw[0][0]) + std::exp(fw[0][1]));
    w1 = 1.0 - w0;
  }
  Dense out = br.attention;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t q = 0; q < out[i].size(); ++q) out[i][q] = w0 * br.attention[i][q] + w1 * br.gcn[i][q];
  return out;
}

inline double score(const Model& m, const Dense& emb, std::size_t s, std::size_t d) {
  const Dense w1 = param(m, "scorer1.W"), b1 = param(m, "scorer1.b"), w2 = param(m, "scorer2.W"),
              b2 = param(m, "scorer2.b");
  const std::size_t dim = emb[0].size();
  double logit = b2[0][0];
  for (std::size_t q = 0; q < b1[0].size(); ++q) {
    double z = b1[0][q];
    for (std::size_t k = 0; k < dim; ++k) z += emb[s][k] * w1[k][q] + emb[d][k] * w1[dim + k][q];
    logit += relu(z) * w2[q][0];
  }
  return 1.0 / (1.0 + std::exp(-logit));
}

inline crosstraj::gnn::ModelConfig small_config(std::uint64_t seed = 3) {
  crosstraj::gnn::ModelConfig c;
  c.in_dim = 6;
  c.gat_heads = 2;
  c.gat_hidden = 3;
  c.gcn_hidden = 4;
  c.out_dim = 4;
  c.scorer_hidden = 5;
  c.seed = seed;
  return c;
}

inline crosstraj::Matrix random_features(std::size_t n, std::size_t d, crosstraj::Rng& rng) {
  crosstraj::Matrix x(n, d);
  for (auto& v : x.flat()) v = rng.normal(0.0, 1.0);
  return x;
}

inline Dense dense(const crosstraj::Matrix& x) {
  Dense out = zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[i][j] = x(i, j);
  return out;
}

// Relative error ||g - g_fd|| / max(||g||, ||g_fd||) per parameter group,
// with g_fd from central differences of the batch loss.
inline std::map<std::string, double> gradient_errors(Model model, const crosstraj::Matrix& x,
                                                     const crosstraj::gnn::Adjacency& adj,
                                                     const std::vector<crosstraj::gnn::LabeledPair>& batch,
                                                     double h = 1e-6) {
  std::vector<double> grad(model.params.size());
  crosstraj::gnn::loss_and_gradient(model, x, adj, batch, grad);
  std::map<std::string, double> out;
  for (const auto& g : model.groups) {
    double diff = 0.0, na = 0.0, nf = 0.0;
    for (std::size_t i = g.offset; i < g.offset + g.size(); ++i) {
      const double keep = model.params[i];
      model.params[i] = keep + h;
      const double up = crosstraj::gnn::loss_and_gradient(model, x, adj, batch, {});
      model.params[i] = keep - h;
      const double down = crosstraj::gnn::loss_and_gradient(model, x, adj, batch, {});
      model.params[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      diff += (fd - grad[i]) * (fd - grad[i]);
      na += grad[i] * grad[i];
      nf += fd * fd;
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nf));
    out[g.name] = scale > 0.0 ? std::sqrt(diff) / scale : 0.0;
  }
  return out;
}

}  // namespace oracle
