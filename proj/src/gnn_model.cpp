#include <algorithm>
#include <cmath>
#include <limits>

#include "crosstraj/error.hpp"
#include "crosstraj/gnn.hpp"
#include "crosstraj/gnn_internal.hpp"
#include "crosstraj/kernels.hpp"

namespace crosstraj::gnn {

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 8; ++i) grid.push_back((50 + 5 * i) / 100.0);
  return grid;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail(ErrorKind::Validation, std::string("model config: ") + name + " must be positive");
  };
  positive(in_dim, "in_dim");
  positive(gat_heads, "gat_heads");
  positive(gat_hidden, "gat_hidden");
  positive(gcn_hidden, "gcn_hidden");
  positive(out_dim, "out_dim");
  positive(scorer_hidden, "scorer_hidden");
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  if (out_dim % gat_heads != 0)
    fail(ErrorKind::Validation, "model config: out_dim " + std::to_string(out_dim) +
                                    " is not divisible by gat_heads " + std::to_string(gat_heads));
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::Validation, "model config: lr must be positive");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::Validation, "model config: weight_decay must be >= 0");
  if (!(neg_ratio > 0.0)) fail(ErrorKind::Validation, "model config: neg_ratio must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    fail(ErrorKind::Validation, "model config: leaky_slope must be in [0,1)");
  if (thresholds.empty()) fail(ErrorKind::Validation, "model config: empty threshold grid");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
      fail(ErrorKind::Validation, "model config: threshold " + std::to_string(thresholds[i]) +
                                      " outside (0,1)");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
      fail(ErrorKind::Validation, "model config: threshold grid must be strictly increasing");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"in_dim", c.in_dim},
          {"gat_heads", c.gat_heads},
          {"gat_hidden", c.gat_hidden},
          {"gcn_hidden", c.gcn_hidden},
          {"out_dim", c.out_dim},
          {"fusion", c.fusion == Fusion::Residual ? "residual" : "weighted_sum"},
          {"attention", c.attention == Attention::Enabled ? "enabled" : "gcn_substitute"},
          {"scorer_hidden", c.scorer_hidden},
          {"seed", c.seed},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"neg_ratio", c.neg_ratio},
          {"leaky_slope", c.leaky_slope},
          {"thresholds", c.thresholds}};
}

ModelConfig config_from_json(const nlohmann::json& doc, ModelConfig c) {
  if (!doc.is_object()) fail(ErrorKind::Format, "model config must be a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "in_dim") c.in_dim = v.get<std::size_t>();
      else if (key == "gat_heads") c.gat_heads = v.get<std::size_t>();
      else if (key == "gat_hidden") c.gat_hidden = v.get<std::size_t>();
      else if (key == "gcn_hidden") c.gcn_hidden = v.get<std::size_t>();
      else if (key == "out_dim") c.out_dim = v.get<std::size_t>();
      else if (key == "scorer_hidden") c.scorer_hidden = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "neg_ratio") c.neg_ratio = v.get<double>();
      else if (key == "leaky_slope") c.leaky_slope = v.get<double>();
      else if (key == "thresholds") c.thresholds = v.get<std::vector<double>>();
      else if (key == "fusion") {
        const auto s = v.get<std::string>();
        if (s == "residual") c.fusion = Fusion::Residual;
        else if (s == "weighted_sum") c.fusion = Fusion::WeightedSum;
        else fail(ErrorKind::Validation, "unknown fusion '" + s + "'");
      } else if (key == "attention") {
        const auto s = v.get<std::string>();
        if (s == "enabled") c.attention = Attention::Enabled;
        else if (s == "gcn_substitute") c.attention = Attention::GcnSubstitute;
        else fail(ErrorKind::Validation, "unknown attention '" + s + "'");
      } else {
        fail(ErrorKind::Validation, "unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Ablation parse_ablation(const std::string& name) {
  if (name == "no_gat") return Ablation::NoGat;
  if (name == "no_fusion") return Ablation::NoFusion;
  fail(ErrorKind::Validation, "unknown ablation variant '" + name + "' (expected no_gat or no_fusion)");
}

ModelConfig make_ablation(ModelConfig config, Ablation variant) {
  switch (variant) {
    case Ablation::NoGat: config.attention = Attention::GcnSubstitute; break;
    case Ablation::NoFusion: config.fusion = Fusion::WeightedSum; break;
  }
  return config;
}

// ---- parameters -----------------------------------------------------------

std::vector<ParamGroup> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<ParamGroup> g;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    g.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  const std::size_t h = c.gat_heads;
  const std::size_t wide = h * c.gat_hidden;
  if (c.attention == Attention::Enabled) {
    add("gat1.W", c.in_dim, wide);
    add("gat1.a_src", h, c.gat_hidden);
    add("gat1.a_dst", h, c.gat_hidden);
    add("gat1.b", 1, wide);
    add("gat2.W", wide, c.out_dim);
    add("gat2.a_src", h, c.out_dim / h);
    add("gat2.a_dst", h, c.out_dim / h);
    add("gat2.b", 1, c.out_dim);
  } else {
    add("sub1.W", c.in_dim, wide);
    add("sub1.b", 1, wide);
    add("sub2.W", wide, c.out_dim);
    add("sub2.b", 1, c.out_dim);
  }
  add("gcn1.W", c.in_dim, c.gcn_hidden);
  add("gcn1.b", 1, c.gcn_hidden);
  add("gcn2.W", c.gcn_hidden, c.out_dim);
  add("gcn2.b", 1, c.out_dim);
  if (c.fusion == Fusion::WeightedSum) add("fusion.w", 1, 2);
  add("scorer1.W", 2 * c.out_dim, c.scorer_hidden);
  add("scorer1.b", 1, c.scorer_hidden);
  add("scorer2.W", c.scorer_hidden, 1);
  add("scorer2.b", 1, 1);
  return g;
}

const ParamGroup& Model::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return g;
  fail(ErrorKind::NotFound, "model has no parameter group '" + name + "'");
}

bool Model::has_group(const std::string& name) const {
  return std::any_of(groups.begin(), groups.end(), [&](const ParamGroup& g) { return g.name == name; });
}

ConstMatrixView Model::view(const std::string& name) const {
  const auto& g = group(name);
  return {params.data() + g.offset, g.rows, g.cols};
}

MutMatrixView Model::view(const std::string& name) {
  const auto& g = group(name);
  return {params.data() + g.offset, g.rows, g.cols};
}

Model init_model(const ModelConfig& config) {
  Model m;
  m.config = config;
  m.groups = parameter_layout(config);
  m.params.assign(m.groups.back().offset + m.groups.back().size(), 0.0);
  Rng rng(config.seed);
  // Biases share the fan-in of their weight matrix; attention vectors use
  // the per-head width.
  std::size_t last_fan_in = 1;
  for (const auto& g : m.groups) {
    std::size_t fan_in = g.rows;
    const bool is_bias = g.name.ends_with(".b");
    if (is_bias) fan_in = last_fan_in;
    else if (g.name.ends_with(".a_src") || g.name.ends_with(".a_dst")) fan_in = g.cols;
    else if (g.name.ends_with(".W")) last_fan_in = g.rows;
    if (g.name == "fusion.w") continue;  // equal weights at start
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < g.size(); ++i) m.params[g.offset + i] = rng.uniform(-bound, bound);
  }
  return m;
}

// ---- features --------------------------------------------------------------

FeatureScaler FeatureScaler::fit(const Matrix& x) {
  FeatureScaler s;
  const std::size_t n = x.rows(), d = x.cols();
  s.mean.assign(d, 0.0);
  s.inv_std.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
  for (auto& v : s.mean) v /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x(i, j) - s.mean[j]) * (x(i, j) - s.mean[j]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.inv_std[j] = sd > 1e-12 ? kInputGain / sd : 1.0;
  }
  return s;
}

Matrix FeatureScaler::apply(const Matrix& x) const {
  if (empty()) return x;
  if (x.cols() != mean.size())
    fail(ErrorKind::Precondition, "feature width " + std::to_string(x.cols()) +
                                      " does not match scaler width " + std::to_string(mean.size()));
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) * inv_std[j];
  return out;
}

// ---- adjacency ---------------------------------------------------------------

Adjacency Adjacency::self_loops(std::size_t n) { return from_edges(n, {}); }

Adjacency Adjacency::from_edges(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  Adjacency a;
  a.n = n;
  a.neighbors.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) a.neighbors[i].push_back(i);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n)
      fail(ErrorKind::Precondition, "adjacency edge (" + std::to_string(u) + "," + std::to_string(v) +
                                        ") out of range for " + std::to_string(n) + " nodes");
    a.neighbors[u].push_back(v);
    a.neighbors[v].push_back(u);
  }
  for (auto& nb : a.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  a.gcn_weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.gcn_weight[i].resize(a.neighbors[i].size());
    const double di = static_cast<double>(a.neighbors[i].size());
    for (std::size_t k = 0; k < a.neighbors[i].size(); ++k) {
      const double dj = static_cast<double>(a.neighbors[a.neighbors[i][k]].size());
      a.gcn_weight[i][k] = 1.0 / std::sqrt(di * dj);
    }
  }
  return a;
}

// ---- layers ------------------------------------------------------------------

namespace detail {

namespace {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

void add_bias_rows(Matrix& out, ConstMatrixView b) {
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += b.data[c];
}

void accumulate_bias_grad(const Matrix& d_out, MutMatrixView db) {
  for (std::size_t i = 0; i < d_out.rows(); ++i)
    for (std::size_t c = 0; c < d_out.cols(); ++c) db.data[c] += d_out(i, c);
}

}  // namespace

void gat_forward(const Matrix& in, ConstMatrixView w, ConstMatrixView a_src, ConstMatrixView a_dst,
                 ConstMatrixView b, const Adjacency& adj, double slope, GatCache& c) {
  const std::size_t n = in.rows(), heads = a_src.rows, f = a_src.cols, width = heads * f;
  c.z = Matrix(n, width);
  kernels::gemm(view(in), w, view(c.z));
  c.s_src.assign(n * heads, 0.0);
  c.s_dst.assign(n * heads, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      double ss = 0.0, sd = 0.0;
      for (std::size_t k = 0; k < f; ++k) {
        ss += a_src(h, k) * c.z(i, h * f + k);
        sd += a_dst(h, k) * c.z(i, h * f + k);
      }
      c.s_src[i * heads + h] = ss;
      c.s_dst[i * heads + h] = sd;
    }

  c.alpha.assign(n, {});
  c.e.assign(n, {});
  c.out = Matrix(n, width);
  const auto n_i = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n_i; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& nb = adj.neighbors[i];
    const std::size_t deg = nb.size();
    auto& alpha = c.alpha[i];
    auto& e = c.e[i];
    alpha.assign(heads * deg, 0.0);
    e.assign(heads * deg, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < deg; ++k) {
        const double raw = c.s_dst[i * heads + h] + c.s_src[nb[k] * heads + h];
        e[h * deg + k] = raw;
        const double l = raw > 0.0 ? raw : slope * raw;
        alpha[h * deg + k] = l;
        mx = std::max(mx, l);
      }
      double total = 0.0;
      for (std::size_t k = 0; k < deg; ++k) {
        alpha[h * deg + k] = std::exp(alpha[h * deg + k] - mx);
        total += alpha[h * deg + k];
      }
      for (std::size_t k = 0; k < deg; ++k) alpha[h * deg + k] /= total;
      for (std::size_t k = 0; k < deg; ++k) {
        const double a = alpha[h * deg + k];
        const std::size_t j = nb[k];
        for (std::size_t q = 0; q < f; ++q) c.out(i, h * f + q) += a * c.z(j, h * f + q);
      }
    }
  }
  add_bias_rows(c.out, b);
}

void gat_backward(const Matrix& in, ConstMatrixView w, ConstMatrixView a_src, ConstMatrixView a_dst,
                  const Adjacency& adj, double slope, const GatCache& c, const Matrix& d_out,
                  MutMatrixView dw, MutMatrixView da_src, MutMatrixView da_dst, MutMatrixView db,
                  Matrix* d_in) {
  const std::size_t n = in.rows(), heads = a_src.rows, f = a_src.cols, width = heads * f;
  accumulate_bias_grad(d_out, db);
  Matrix dz(n, width);
  std::vector<double> ds_src(n * heads, 0.0), ds_dst(n * heads, 0.0);
  std::vector<double> d_alpha;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = adj.neighbors[i];
    const std::size_t deg = nb.size();
    d_alpha.assign(deg, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      double dot = 0.0;
      for (std::size_t k = 0; k < deg; ++k) {
        const std::size_t j = nb[k];
        const double a = c.alpha[i][h * deg + k];
        double da = 0.0;
        for (std::size_t q = 0; q < f; ++q) {
          const double g = d_out(i, h * f + q);
          da += g * c.z(j, h * f + q);
          dz(j, h * f + q) += a * g;
        }
        d_alpha[k] = da;
        dot += a * da;
      }
      for (std::size_t k = 0; k < deg; ++k) {
        const double a = c.alpha[i][h * deg + k];
        const double dl = a * (d_alpha[k] - dot);
        const double de = dl * (c.e[i][h * deg + k] > 0.0 ? 1.0 : slope);
        ds_dst[i * heads + h] += de;
        ds_src[nb[k] * heads + h] += de;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      const double gs = ds_src[i * heads + h], gd = ds_dst[i * heads + h];
      for (std::size_t q = 0; q < f; ++q) {
        const double zv = c.z(i, h * f + q);
        da_src(h, q) += gs * zv;
        da_dst(h, q) += gd * zv;
        dz(i, h * f + q) += gs * a_src(h, q) + gd * a_dst(h, q);
      }
    }
  kernels::gemm_tn_acc(view(in), view(dz), dw);
  if (d_in) {
    *d_in = Matrix(n, in.cols());
    kernels::gemm_nt(view(dz), w, view(*d_in));
  }
}

void gcn_forward(const Matrix& in, ConstMatrixView w, ConstMatrixView b, const Adjacency& adj,
                 GcnCache& c) {
  const std::size_t n = in.rows(), width = w.cols;
  c.y = Matrix(n, width);
  kernels::gemm(view(in), w, view(c.y));
  c.out = Matrix(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = adj.neighbors[i];
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double wk = adj.gcn_weight[i][k];
      for (std::size_t q = 0; q < width; ++q) c.out(i, q) += wk * c.y(nb[k], q);
    }
  }
  add_bias_rows(c.out, b);
}

void gcn_backward(const Matrix& in, ConstMatrixView w, const Adjacency& adj, const Matrix& d_out,
                  MutMatrixView dw, MutMatrixView db, Matrix* d_in) {
  const std::size_t n = in.rows(), width = w.cols;
  accumulate_bias_grad(d_out, db);
  Matrix dy(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = adj.neighbors[i];
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double wk = adj.gcn_weight[i][k];
      for (std::size_t q = 0; q < width; ++q) dy(nb[k], q) += wk * d_out(i, q);
    }
  }
  kernels::gemm_tn_acc(view(in), view(dy), dw);
  if (d_in) {
    *d_in = Matrix(n, in.cols());
    kernels::gemm_nt(view(dy), w, view(*d_in));
  }
}

void check_inputs(const Model& model, const Matrix& features, const Adjacency& adj) {
  if (features.cols() != model.config.in_dim)
    fail(ErrorKind::Precondition, "features have " + std::to_string(features.cols()) +
                                      " columns, model expects " + std::to_string(model.config.in_dim));
  if (adj.n != features.rows())
    fail(ErrorKind::Precondition, "adjacency covers " + std::to_string(adj.n) + " nodes, features have " +
                                      std::to_string(features.rows()));
  for (std::size_t i = 0; i < features.rows(); ++i)
    for (std::size_t j = 0; j < features.cols(); ++j)
      if (!std::isfinite(features(i, j)))
        fail(ErrorKind::Numeric, "non-finite feature at node " + std::to_string(i) + ", dimension " +
                                     std::to_string(j));
}

void forward_standardized(const Model& m, const Matrix& x, const Adjacency& adj, ForwardCache& c) {
  const double slope = m.config.leaky_slope;
  c.attention = m.config.attention == Attention::Enabled;
  if (c.attention) {
    gat_forward(x, m.view("gat1.W"), m.view("gat1.a_src"), m.view("gat1.a_dst"), m.view("gat1.b"), adj,
                slope, c.gat1);
    c.branch1_act = c.gat1.out;
    for (auto& v : c.branch1_act.flat()) v = elu(v);
    gat_forward(c.branch1_act, m.view("gat2.W"), m.view("gat2.a_src"), m.view("gat2.a_dst"),
                m.view("gat2.b"), adj, slope, c.gat2);
    c.att_out = c.gat2.out;
  } else {
    gcn_forward(x, m.view("sub1.W"), m.view("sub1.b"), adj, c.sub1);
    c.branch1_act = c.sub1.out;
    for (auto& v : c.branch1_act.flat()) v = elu(v);
    gcn_forward(c.branch1_act, m.view("sub2.W"), m.view("sub2.b"), adj, c.sub2);
    c.att_out = c.sub2.out;
  }
  gcn_forward(x, m.view("gcn1.W"), m.view("gcn1.b"), adj, c.gcn1);
  c.gcn1_act = c.gcn1.out;
  for (auto& v : c.gcn1_act.flat()) v = std::max(v, 0.0);
  gcn_forward(c.gcn1_act, m.view("gcn2.W"), m.view("gcn2.b"), adj, c.gcn2);

  if (m.config.fusion == Fusion::WeightedSum) {
    const auto fw = m.view("fusion.w");
    const double mx = std::max(fw.data[0], fw.data[1]);
    const double e0 = std::exp(fw.data[0] - mx), e1 = std::exp(fw.data[1] - mx);
    c.omega0 = e0 / (e0 + e1);
    c.omega1 = e1 / (e0 + e1);
  } else {
    c.omega0 = c.omega1 = 1.0;
  }
  c.embeddings = Matrix(x.rows(), m.config.out_dim);
  auto dst = c.embeddings.flat();
  const auto a = c.att_out.flat(), g = c.gcn2.out.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = c.omega0 * a[i] + c.omega1 * g[i];
}

void backward(const Model& m, const Matrix& x, const Adjacency& adj, const ForwardCache& c,
              const Matrix& d_emb, std::span<double> grad) {
  auto gv = [&](const std::string& name) -> MutMatrixView {
    const auto& g = m.group(name);
    return {grad.data() + g.offset, g.rows, g.cols};
  };
  const double slope = m.config.leaky_slope;

  Matrix d_att(d_emb.rows(), d_emb.cols()), d_gcn(d_emb.rows(), d_emb.cols());
  {
    const auto de = d_emb.flat();
    auto da = d_att.flat();
    auto dg = d_gcn.flat();
    for (std::size_t i = 0; i < de.size(); ++i) {
      da[i] = c.omega0 * de[i];
      dg[i] = c.omega1 * de[i];
    }
  }
  if (m.config.fusion == Fusion::WeightedSum) {
    double d0 = 0.0, d1 = 0.0;
    const auto de = d_emb.flat(), a = c.att_out.flat(), g = c.gcn2.out.flat();
    for (std::size_t i = 0; i < de.size(); ++i) {
      d0 += de[i] * a[i];
      d1 += de[i] * g[i];
    }
    const double mean = c.omega0 * d0 + c.omega1 * d1;
    auto fw = gv("fusion.w");
    fw.data[0] += c.omega0 * (d0 - mean);
    fw.data[1] += c.omega1 * (d1 - mean);
  }

  Matrix d_hidden;
  if (c.attention) {
    gat_backward(c.branch1_act, m.view("gat2.W"), m.view("gat2.a_src"), m.view("gat2.a_dst"), adj, slope,
                 c.gat2, d_att, gv("gat2.W"), gv("gat2.a_src"), gv("gat2.a_dst"), gv("gat2.b"), &d_hidden);
    const auto pre = c.gat1.out.flat();
    auto dh = d_hidden.flat();
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= elu_grad(pre[i]);
    gat_backward(x, m.view("gat1.W"), m.view("gat1.a_src"), m.view("gat1.a_dst"), adj, slope, c.gat1,
                 d_hidden, gv("gat1.W"), gv("gat1.a_src"), gv("gat1.a_dst"), gv("gat1.b"), nullptr);
  } else {
    gcn_backward(c.branch1_act, m.view("sub2.W"), adj, d_att, gv("sub2.W"), gv("sub2.b"), &d_hidden);
    const auto pre = c.sub1.out.flat();
    auto dh = d_hidden.flat();
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= elu_grad(pre[i]);
    gcn_backward(x, m.view("sub1.W"), adj, d_hidden, gv("sub1.W"), gv("sub1.b"), nullptr);
  }

  gcn_backward(c.gcn1_act, m.view("gcn2.W"), adj, d_gcn, gv("gcn2.W"), gv("gcn2.b"), &d_hidden);
  {
    const auto pre = c.gcn1.out.flat();
    auto dh = d_hidden.flat();
    for (std::size_t i = 0; i < dh.size(); ++i)
      if (pre[i] <= 0.0) dh[i] = 0.0;
  }
  gcn_backward(x, m.view("gcn1.W"), adj, d_hidden, gv("gcn1.W"), gv("gcn1.b"), nullptr);
}

ScorerTables scorer_tables(const Model& m, const Matrix& emb) {
  const std::size_t n = emb.rows(), d = m.config.out_dim, hidden = m.config.scorer_hidden;
  const auto w1 = m.view("scorer1.W");
  ScorerTables t;
  t.src = Matrix(n, hidden);
  t.dst = Matrix(n, hidden);
  kernels::gemm(view(emb), {w1.data, d, hidden}, view(t.src));
  kernels::gemm(view(emb), {w1.data + d * hidden, d, hidden}, view(t.dst));
  return t;
}

double pair_logit(const Model& m, const ScorerTables& t, std::size_t s, std::size_t d,
                  std::vector<double>* hidden_out) {
  const std::size_t hidden = m.config.scorer_hidden;
  const auto b1 = m.view("scorer1.b");
  const auto w2 = m.view("scorer2.W");
  double logit = m.view("scorer2.b").data[0];
  if (hidden_out) hidden_out->resize(hidden);
  for (std::size_t q = 0; q < hidden; ++q) {
    const double z = t.src(s, q) + t.dst(d, q) + b1.data[q];
    const double h = z > 0.0 ? z : 0.0;
    if (hidden_out) (*hidden_out)[q] = z;
    logit += h * w2.data[q];
  }
  return logit;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

double batch_loss_and_gradient(const Model& m, const Matrix& x, const Adjacency& adj,
                               std::span<const LabeledPair> batch, std::span<double> grad) {
  if (batch.empty()) fail(ErrorKind::Precondition, "empty training batch");
  const std::size_t n = x.rows();
  for (const auto& lp : batch)
    if (lp.pair.first >= n || lp.pair.second >= n)
      fail(ErrorKind::Precondition, "training pair references a node outside the graph");

  ForwardCache cache;
  forward_standardized(m, x, adj, cache);
  const ScorerTables tables = scorer_tables(m, cache.embeddings);

  const bool want_grad = !grad.empty();
  const std::size_t d = m.config.out_dim, hidden = m.config.scorer_hidden;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Matrix d_src, d_dst;
  if (want_grad) {
    if (grad.size() != m.params.size())
      fail(ErrorKind::Precondition, "gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
    d_src = Matrix(n, hidden);
    d_dst = Matrix(n, hidden);
  }
  double loss = 0.0;
  std::vector<double> pre;
  const auto w2 = m.view("scorer2.W");
  for (const auto& lp : batch) {
    const auto [s, t] = lp.pair;
    const double z = pair_logit(m, tables, s, t, want_grad ? &pre : nullptr);
    loss += bce_with_logit(z, lp.label);
    if (!want_grad) continue;
    const double dz = (sigmoid(z) - lp.label) * inv_b;
    const auto& g2 = m.group("scorer2.W");
    grad[m.group("scorer2.b").offset] += dz;
    const auto& g1b = m.group("scorer1.b");
    for (std::size_t q = 0; q < hidden; ++q) {
      if (pre[q] <= 0.0) continue;
      grad[g2.offset + q] += dz * pre[q];
      const double dh = dz * w2.data[q];
      grad[g1b.offset + q] += dh;
      d_src(s, q) += dh;
      d_dst(t, q) += dh;
    }
  }
  loss *= inv_b;
  if (!want_grad) return loss;

  // scorer1.W = [W_src; W_dst] stacked by rows.
  const auto& g1 = m.group("scorer1.W");
  MutMatrixView dw_src{grad.data() + g1.offset, d, hidden};
  MutMatrixView dw_dst{grad.data() + g1.offset + d * hidden, d, hidden};
  kernels::gemm_tn_acc(view(cache.embeddings), view(d_src), dw_src);
  kernels::gemm_tn_acc(view(cache.embeddings), view(d_dst), dw_dst);

  const auto w1 = m.view("scorer1.W");
  Matrix d_emb(n, d), tmp(n, d);
  kernels::gemm_nt(view(d_src), {w1.data, d, hidden}, view(d_emb));
  kernels::gemm_nt(view(d_dst), {w1.data + d * hidden, d, hidden}, view(tmp));
  for (std::size_t i = 0; i < d_emb.size(); ++i) d_emb.flat()[i] += tmp.flat()[i];

  backward(m, x, adj, cache, d_emb, grad);
  return loss;
}

}  // namespace detail

ForwardResult forward(const Model& model, const Matrix& features, const Adjacency& adjacency) {
  detail::check_inputs(model, features, adjacency);
  const Matrix x = model.scaler.apply(features);
  detail::ForwardCache cache;
  detail::forward_standardized(model, x, adjacency, cache);
  ForwardResult r;
  r.embeddings = std::move(cache.embeddings);
  r.used_attention = cache.attention;
  if (cache.attention) {
    const std::size_t heads = model.config.gat_heads;
    for (const auto* layer : {&cache.gat1, &cache.gat2}) {
      auto& out = r.attention.emplace_back(adjacency.n);
      for (std::size_t i = 0; i < adjacency.n; ++i) {
        const std::size_t deg = adjacency.neighbors[i].size();
        out[i].resize(heads);
        for (std::size_t h = 0; h < heads; ++h)
          out[i][h].assign(layer->alpha[i].begin() + static_cast<std::ptrdiff_t>(h * deg),
                           layer->alpha[i].begin() + static_cast<std::ptrdiff_t>((h + 1) * deg));
      }
    }
  }
  for (double v : r.embeddings.flat())
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, "non-finite embedding");
  return r;
}

std::vector<double> score_edges(const Model& model, const Matrix& embeddings,
                                std::span<const NodePair> pairs) {
  if (embeddings.cols() != model.config.out_dim)
    fail(ErrorKind::Precondition, "embedding width does not match the model");
  const auto tables = detail::scorer_tables(model, embeddings);
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [s, d] : pairs) {
    if (s >= embeddings.rows() || d >= embeddings.rows())
      fail(ErrorKind::Precondition, "pair references a node outside the graph");
    out.push_back(detail::sigmoid(detail::pair_logit(model, tables, s, d, nullptr)));
  }
  return out;
}

double loss_and_gradient(const Model& model, const Matrix& features, const Adjacency& adjacency,
                         std::span<const LabeledPair> batch, std::span<double> grad) {
  detail::check_inputs(model, features, adjacency);
  return detail::batch_loss_and_gradient(model, model.scaler.apply(features), adjacency, batch, grad);
}

}  // namespace crosstraj::gnn
