#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "crosstraj/error.hpp"
#include "crosstraj/gnn.hpp"
#include "crosstraj/gnn_internal.hpp"

namespace crosstraj::gnn {

Matrix feature_matrix(const graph::GlobalGraph& graph) {
  const std::size_t n = graph.size();
  const std::size_t d = n ? graph.node(0).features.size() : ingest::kFeatureDim;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = graph.node(i).features;
    if (f.size() != d)
      fail(ErrorKind::Precondition, "node '" + graph.node(i).node_id + "' has " + std::to_string(f.size()) +
                                        " features, expected " + std::to_string(d));
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  return x;
}

std::vector<NodePair> candidate_pairs(const graph::GlobalGraph& graph) {
  std::vector<NodePair> out;
  const std::size_t n = graph.size();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t d = 0; d < n; ++d) {
      const auto& a = graph.node(s);
      const auto& b = graph.node(d);
      if (a.stage < b.stage && a.cell_type != b.cell_type) out.emplace_back(s, d);
    }
  return out;
}

std::vector<NodePair> sample_negative_edges(const graph::GlobalGraph& graph,
                                            std::span<const NodePair> exclude, std::size_t count,
                                            Rng& rng) {
  if (graph.stages().size() < 2) fail(ErrorKind::Precondition, "negative sampling needs at least two stages");
  const std::set<NodePair> excluded(exclude.begin(), exclude.end());
  std::vector<NodePair> pool;
  for (const auto& p : candidate_pairs(graph))
    if (!excluded.contains(p)) pool.push_back(p);
  if (count > pool.size())
    fail(ErrorKind::Precondition, "requested " + std::to_string(count) + " negative edges but only " +
                                      std::to_string(pool.size()) + " candidate pairs are available");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

// ---- thresholds and metrics ------------------------------------------------

ThresholdSweep sweep_threshold(std::span<const double> pos, std::span<const double> neg,
                               std::span<const double> grid) {
  if (grid.empty()) fail(ErrorKind::Precondition, "empty threshold grid");
  if (pos.empty()) fail(ErrorKind::Precondition, "threshold sweep needs validation positives");
  ThresholdSweep sweep;
  double best = -1.0;
  for (double t : grid) {
    ThresholdRow row;
    row.threshold = t;
    std::size_t tp = 0, fp = 0;
    for (double s : pos) tp += s > t;
    for (double s : neg) fp += s > t;
    row.predicted_positive = tp + fp;
    row.defined = row.predicted_positive > 0;
    row.precision = row.defined ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    if (row.defined && row.precision >= best) {
      best = row.precision;
      sweep.chosen = t;
    }
    sweep.table.push_back(row);
  }
  if (best < 0.0) {
    sweep.precision_undefined = true;
    sweep.chosen = grid.back();
  }
  return sweep;
}

ThresholdSweep sweep_threshold(const Model& model, const Matrix& features, const Adjacency& adjacency,
                               std::span<const NodePair> val_pos, std::span<const NodePair> val_neg) {
  const auto emb = forward(model, features, adjacency).embeddings;
  const auto ps = score_edges(model, emb, val_pos);
  const auto ns = score_edges(model, emb, val_neg);
  return sweep_threshold(ps, ns, model.config.thresholds);
}

double accuracy(std::span<const double> pos, std::span<const double> neg, double threshold) {
  if (pos.empty() && neg.empty()) fail(ErrorKind::Precondition, "empty test set");
  std::size_t correct = 0;
  for (double s : pos) correct += s > threshold;
  for (double s : neg) correct += !(s > threshold);
  return static_cast<double>(correct) / static_cast<double>(pos.size() + neg.size());
}

double evaluate_acc(const Model& model, const Matrix& features, const Adjacency& adjacency,
                    std::span<const NodePair> test_pos, std::span<const NodePair> test_neg,
                    double threshold) {
  if (test_pos.empty() && test_neg.empty()) fail(ErrorKind::Precondition, "empty test set");
  if (test_pos.size() != test_neg.size())
    fail(ErrorKind::Precondition, "unbalanced test set: " + std::to_string(test_pos.size()) +
                                      " positives vs " + std::to_string(test_neg.size()) + " negatives");
  const auto emb = forward(model, features, adjacency).embeddings;
  return accuracy(score_edges(model, emb, test_pos), score_edges(model, emb, test_neg), threshold);
}

std::vector<NodePair> resolve_pairs(const graph::GlobalGraph& graph,
                                    std::span<const std::pair<std::string, std::string>> ids) {
  std::vector<NodePair> out;
  out.reserve(ids.size());
  for (const auto& [a, b] : ids) {
    const auto ia = graph.index_of(a);
    const auto ib = graph.index_of(b);
    if (!ia) fail(ErrorKind::NotFound, "unknown node id '" + a + "'");
    if (!ib) fail(ErrorKind::NotFound, "unknown node id '" + b + "'");
    out.emplace_back(*ia, *ib);
  }
  return out;
}

std::vector<graph::InstanceEdge> predict_edges(const Model& model, const graph::GlobalGraph& graph,
                                               double threshold,
                                               std::optional<std::span<const NodePair>> context) {
  const std::size_t n = graph.size();
  std::vector<NodePair> edges;
  if (context) {
    edges.assign(context->begin(), context->end());
  } else {
    std::vector<std::pair<std::string, std::string>> ids;
    for (const auto& e : graph.instance_edges()) ids.emplace_back(e.src, e.dst);
    edges = resolve_pairs(graph, ids);
  }
  const auto adj = Adjacency::from_edges(n, edges);
  const auto emb = forward(model, feature_matrix(graph), adj).embeddings;
  const auto candidates = candidate_pairs(graph);
  const auto probs = score_edges(model, emb, candidates);
  std::vector<graph::InstanceEdge> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (probs[i] > threshold)
      out.push_back({graph.node(candidates[i].first).node_id, graph.node(candidates[i].second).node_id,
                     probs[i]});
  return out;
}

// ---- split and training ------------------------------------------------------

EdgeSplit split_edges(const graph::GlobalGraph& graph, std::span<const NodePair> positives,
                      std::uint64_t seed) {
  std::vector<NodePair> pos(positives.begin(), positives.end());
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  for (const auto& [s, d] : pos) {
    if (s >= graph.size() || d >= graph.size()) fail(ErrorKind::Precondition, "positive edge out of range");
    const auto& a = graph.node(s);
    const auto& b = graph.node(d);
    if (!(a.stage < b.stage) || a.cell_type == b.cell_type)
      fail(ErrorKind::Validation, "positive edge " + a.node_id + " -> " + b.node_id +
                                      " violates the cross-stage, cross-type constraint");
  }
  if (pos.size() < 3)
    fail(ErrorKind::Precondition, "need at least 3 positive edges to split, got " + std::to_string(pos.size()));
  Rng rng(seed ^ 0x5eedf00dULL);
  rng.shuffle(std::span<NodePair>(pos));
  const std::size_t n = pos.size();
  const std::size_t n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * n)));
  EdgeSplit split;
  split.test_pos.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_hold));
  split.val_pos.assign(pos.begin() + static_cast<std::ptrdiff_t>(n_hold),
                       pos.begin() + static_cast<std::ptrdiff_t>(2 * n_hold));
  split.train_pos.assign(pos.begin() + static_cast<std::ptrdiff_t>(2 * n_hold), pos.end());
  auto negs = sample_negative_edges(graph, pos, 2 * n_hold, rng);
  split.test_neg.assign(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(n_hold));
  split.val_neg.assign(negs.begin() + static_cast<std::ptrdiff_t>(n_hold), negs.end());
  for (auto* v : {&split.train_pos, &split.val_pos, &split.test_pos, &split.val_neg, &split.test_neg})
    std::sort(v->begin(), v->end());
  return split;
}

namespace {

struct AdamW {
  double lr, wd, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  AdamW(std::size_t n, double lr_, double wd_) : lr(lr_), wd(wd_), m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mh = m[i] / c1, vh = v[i] / c2;
      params[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * params[i]);
    }
  }
};

}  // namespace

TrainReport train(Model& model, const graph::GlobalGraph& graph, const EdgeSplit& split,
                  const ProgressFn& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = model.config;
  cfg.validate();
  if (split.train_pos.empty()) fail(ErrorKind::Precondition, "no training positives");

  const Matrix raw = feature_matrix(graph);
  const Adjacency adj = Adjacency::from_edges(graph.size(), split.train_pos);
  detail::check_inputs(model, raw, adj);
  model.scaler = FeatureScaler::fit(raw);
  const Matrix x = model.scaler.apply(raw);

  std::vector<NodePair> exclude;
  for (const auto* v : {&split.train_pos, &split.val_pos, &split.test_pos, &split.val_neg, &split.test_neg})
    exclude.insert(exclude.end(), v->begin(), v->end());
  const auto neg_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(split.train_pos.size()) * cfg.neg_ratio));

  TrainReport report;
  report.seed = cfg.seed;
  report.parameter_count = model.parameter_count();
  report.train_positive = split.train_pos.size();
  report.val_positive = split.val_pos.size();
  report.test_positive = split.test_pos.size();

  Rng rng(cfg.seed ^ 0x7a11eddULL);
  AdamW opt(model.params.size(), cfg.lr, cfg.weight_decay);
  std::vector<double> grad(model.params.size());
  std::vector<LabeledPair> items;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    items.clear();
    for (const auto& p : split.train_pos) items.push_back({p, 1.0});
    for (const auto& p : sample_negative_edges(graph, exclude, neg_count, rng)) items.push_back({p, 0.0});
    rng.shuffle(std::span<LabeledPair>(items));
    if (epoch == 0)
      report.initial_loss = detail::batch_loss_and_gradient(model, x, adj, items, {});

    const std::size_t batches = std::min(cfg.batch_size, items.size());
    double total = 0.0;
    std::size_t begin = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t size = items.size() / batches + (b < items.size() % batches ? 1 : 0);
      std::span<const LabeledPair> batch(items.data() + begin, size);
      begin += size;
      // Supervised positives are hidden from message passing so training
      // pairs look like held-out pairs (no direct link between endpoints).
      std::set<NodePair> hidden;
      for (const auto& lp : batch)
        if (lp.label > 0.5) hidden.insert(lp.pair);
      std::vector<NodePair> visible;
      for (const auto& e : split.train_pos)
        if (!hidden.contains(e)) visible.push_back(e);
      const Adjacency batch_adj = Adjacency::from_edges(graph.size(), visible);
      const double loss = detail::batch_loss_and_gradient(model, x, batch_adj, batch, grad);
      if (!std::isfinite(loss))
        fail(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch + 1));
      total += loss * static_cast<double>(size);
      opt.step(model.params, grad);
    }
    const double epoch_loss = total / static_cast<double>(items.size());
    report.epoch_loss.push_back(epoch_loss);
    if (progress) progress(epoch + 1, cfg.epochs, epoch_loss);
  }
  for (double p : model.params)
    if (!std::isfinite(p)) fail(ErrorKind::Numeric, "training produced non-finite parameters");

  if (!split.val_pos.empty())
    report.sweep = sweep_threshold(model, raw, adj, split.val_pos, split.val_neg);
  if (!split.test_pos.empty())
    report.test_acc = evaluate_acc(model, raw, adj, split.test_pos, split.test_neg, report.sweep.chosen);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& row : r.sweep.table)
    table.push_back({{"threshold", row.threshold},
                     {"precision", row.defined ? nlohmann::json(row.precision) : nlohmann::json(nullptr)},
                     {"predicted_positive", row.predicted_positive}});
  return {{"seed", r.seed},
          {"parameter_count", r.parameter_count},
          {"initial_loss", r.initial_loss},
          {"epoch_loss", r.epoch_loss},
          {"chosen_threshold", r.sweep.chosen},
          {"precision_undefined", r.sweep.precision_undefined},
          {"validation_precision", table},
          {"test_acc", r.test_acc},
          {"train_positive", r.train_positive},
          {"val_positive", r.val_positive},
          {"test_positive", r.test_positive}};
}

namespace {

nlohmann::json pairs_json(std::span<const NodePair> pairs, const graph::GlobalGraph& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [a, b] : pairs) out.push_back({g.node(a).node_id, g.node(b).node_id});
  return out;
}

std::vector<NodePair> pairs_from_json(const nlohmann::json& j, const graph::GlobalGraph& g) {
  std::vector<std::pair<std::string, std::string>> ids;
  for (const auto& p : j) ids.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  return resolve_pairs(g, ids);
}

}  // namespace

nlohmann::json to_json(const EdgeSplit& s, const graph::GlobalGraph& g) {
  return {{"train_pos", pairs_json(s.train_pos, g)}, {"val_pos", pairs_json(s.val_pos, g)},
          {"test_pos", pairs_json(s.test_pos, g)},   {"val_neg", pairs_json(s.val_neg, g)},
          {"test_neg", pairs_json(s.test_neg, g)}};
}

EdgeSplit split_from_json(const nlohmann::json& doc, const graph::GlobalGraph& g) {
  try {
    EdgeSplit s;
    s.train_pos = pairs_from_json(doc.at("train_pos"), g);
    s.val_pos = pairs_from_json(doc.at("val_pos"), g);
    s.test_pos = pairs_from_json(doc.at("test_pos"), g);
    s.val_neg = pairs_from_json(doc.at("val_neg"), g);
    s.test_neg = pairs_from_json(doc.at("test_neg"), g);
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("edge split: ") + e.what());
  }
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

constexpr const char* kMagic = "CROSSTRAJ-MODEL 1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string to_bytes(std::span<const double> values) {
  std::string out(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  std::string payload = to_bytes(model.params);
  payload += to_bytes(model.scaler.mean);
  payload += to_bytes(model.scaler.inv_std);
  const nlohmann::json header = {{"config", to_json(model.config)},
                                 {"param_count", model.params.size()},
                                 {"scaler_dim", model.scaler.mean.size()},
                                 {"payload_bytes", payload.size()},
                                 {"hash", hex64(fnv1a(payload))}};
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << kMagic << '\n' << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) fail(ErrorKind::Format, path.string() + " is not a model checkpoint");
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "checkpoint header: " + std::string(e.what()));
  }
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    if (payload.size() != header.at("payload_bytes").get<std::size_t>())
      fail(ErrorKind::Format, "checkpoint truncated: payload is " + std::to_string(payload.size()) + " bytes");
    if (hex64(fnv1a(payload)) != header.at("hash").get<std::string>())
      fail(ErrorKind::Format, "checkpoint content hash mismatch");
    Model m = init_model(config_from_json(header.at("config")));
    const auto count = header.at("param_count").get<std::size_t>();
    const auto dim = header.at("scaler_dim").get<std::size_t>();
    if (count != m.params.size())
      fail(ErrorKind::Format, "checkpoint has " + std::to_string(count) + " parameters, config implies " +
                                  std::to_string(m.params.size()));
    if (payload.size() != (count + 2 * dim) * sizeof(double))
      fail(ErrorKind::Format, "checkpoint payload size does not match its header");
    std::memcpy(m.params.data(), payload.data(), count * sizeof(double));
    m.scaler.mean.resize(dim);
    m.scaler.inv_std.resize(dim);
    if (dim) {
      std::memcpy(m.scaler.mean.data(), payload.data() + count * sizeof(double), dim * sizeof(double));
      std::memcpy(m.scaler.inv_std.data(), payload.data() + (count + dim) * sizeof(double),
                  dim * sizeof(double));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "checkpoint header: " + std::string(e.what()));
  }
}

}  // namespace crosstraj::gnn
