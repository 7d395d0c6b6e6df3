#include "crosstraj/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crosstraj/csv.hpp"
#include "crosstraj/error.hpp"
#include "crosstraj/rng.hpp"

namespace crosstraj::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::ifstream open_or_fail(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

struct MetaRow {
  double x = 0.0;
  double y = 0.0;
  std::string cell_type;
};

std::map<std::string, MetaRow> read_meta(const fs::path& path) {
  auto in = open_or_fail(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, path.string() + ": empty file");
  const auto header = csv::split(csv::chomp(line));
  auto column = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      fail(ErrorKind::Format, path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("cell_id"), c_x = column("x"), c_y = column("y"),
                    c_type = column("cell_type");

  std::map<std::string, MetaRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto sv = csv::chomp(line);
    if (sv.empty()) continue;
    const auto f = csv::split(sv);
    const auto where = path.string() + " row " + std::to_string(row);
    if (f.size() != header.size())
      fail(ErrorKind::Format, where + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(f.size()));
    MetaRow m;
    if (!parse_double(f[c_x], m.x)) fail(ErrorKind::Format, where + ": cannot parse x");
    if (!parse_double(f[c_y], m.y)) fail(ErrorKind::Format, where + ": cannot parse y");
    m.cell_type = f[c_type];
    if (m.cell_type.empty()) fail(ErrorKind::Format, where + ": empty cell_type");
    if (!rows.emplace(f[c_id], std::move(m)).second)
      fail(ErrorKind::Format, where + ": duplicate cell_id '" + f[c_id] + "'");
  }
  return rows;
}

Sample read_sample(const fs::path& dir, const std::string& sample_id, int stage,
                   std::vector<std::string>& genes,
                   std::unordered_map<std::string, std::uint32_t>& gene_index) {
  auto meta = read_meta(dir / "meta.csv");
  const fs::path matrix_path = dir / "matrix.csv";
  auto in = open_or_fail(matrix_path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, matrix_path.string() + ": empty file");
  const auto header = csv::split(csv::chomp(line));
  if (header.empty() || header[0] != "cell_id")
    fail(ErrorKind::Format, matrix_path.string() + ": missing column 'cell_id'");
  std::vector<std::uint32_t> col_gene;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto [it, inserted] =
        gene_index.emplace(header[c], static_cast<std::uint32_t>(genes.size()));
    if (inserted) genes.push_back(header[c]);
    col_gene.push_back(it->second);
  }

  Sample sample;
  sample.sample_id = sample_id;
  sample.stage = stage;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto sv = csv::chomp(line);
    if (sv.empty()) continue;
    const auto f = csv::split(sv);
    const auto where = matrix_path.string() + " row " + std::to_string(row);
    if (f.size() != header.size())
      fail(ErrorKind::Format, where + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(f.size()));
    const auto m = meta.find(f[0]);
    if (m == meta.end())
      fail(ErrorKind::Format, where + ": cell '" + f[0] + "' has no metadata row");
    Cell cell;
    cell.cell_id = f[0];
    cell.sample_id = sample_id;
    cell.cell_type = m->second.cell_type;
    cell.x = m->second.x;
    cell.y = m->second.y;
    for (std::size_t c = 1; c < f.size(); ++c) {
      double v = 0.0;
      if (!parse_double(f[c], v) || v < 0.0)
        fail(ErrorKind::Format, where + ": invalid count in column '" + header[c] + "'");
      if (v != 0.0) cell.expression.emplace_back(col_gene[c - 1], v);
    }
    std::sort(cell.expression.begin(), cell.expression.end());
    sample.cells.push_back(std::move(cell));
    meta.erase(m);
  }
  if (!meta.empty())
    fail(ErrorKind::Format, (dir / "meta.csv").string() + ": cell '" + meta.begin()->first +
                                "' has no expression row");
  return sample;
}

// Number of ways to choose `take` of the doubled ranks with sum >= threshold,
// and the total number of ways.
std::pair<double, double> exact_upper_tail(const std::vector<int>& doubled_ranks,
                                           std::size_t take, int threshold) {
  const int max_sum = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
  std::vector<std::vector<double>> ways(take + 1, std::vector<double>(max_sum + 1, 0.0));
  ways[0][0] = 1.0;
  std::size_t seen = 0;
  for (int r : doubled_ranks) {
    ++seen;
    for (std::size_t j = std::min(seen, take); j >= 1; --j) {
      auto& dst = ways[j];
      const auto& src = ways[j - 1];
      for (int s = max_sum; s >= r; --s) dst[s] += src[s - r];
    }
  }
  double tail = 0.0, total = 0.0;
  for (int s = 0; s <= max_sum; ++s) {
    total += ways[take][s];
    if (s >= threshold) tail += ways[take][s];
  }
  return {tail, total};
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    fail(ErrorKind::Validation, "dataset " + root.string() + " has no manifest.json");
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.empty())
    fail(ErrorKind::Format, manifest_path.string() + ": expected a non-empty object");

  std::map<std::string, int> stages;
  for (const auto& [sample_id, stage] : manifest.items()) {
    if (!stage.is_number_integer() || stage.get<int>() < 0)
      fail(ErrorKind::Format,
           manifest_path.string() + ": stage of '" + sample_id + "' must be a non-negative integer");
    stages[sample_id] = stage.get<int>();
  }

  Dataset ds;
  std::unordered_map<std::string, std::uint32_t> gene_index;
  for (const auto& [sample_id, stage] : stages) {
    const fs::path dir = root / sample_id;
    if (!fs::is_directory(dir))
      fail(ErrorKind::Validation, "sample directory missing: " + dir.string());
    ds.samples.push_back(read_sample(dir, sample_id, stage, ds.genes, gene_index));
  }
  return ds;
}

NormalizeReport normalize_expression(Dataset& dataset) {
  if (dataset.normalized)
    fail(ErrorKind::Precondition, "dataset is already normalized");
  NormalizeReport report;
  for (Sample& sample : dataset.samples) {
    std::vector<Cell> kept;
    kept.reserve(sample.cells.size());
    for (Cell& cell : sample.cells) {
      double total = 0.0;
      for (const auto& [g, v] : cell.expression) total += v;
      if (total <= 0.0) {
        ++report.dropped_cells;
        report.warnings.push_back("dropped cell '" + cell.cell_id + "' in sample '" +
                                  sample.sample_id + "': zero total count");
        continue;
      }
      const double scale = kLibrarySize / total;
      for (auto& entry : cell.expression) entry.second = std::log1p(entry.second * scale);
      kept.push_back(std::move(cell));
    }
    sample.cells = std::move(kept);
  }
  dataset.normalized = true;
  return report;
}

RankSum rank_sum_test(std::span<const double> target, std::span<const double> background) {
  const std::size_t n1 = target.size(), n2 = background.size(), n = n1 + n2;
  if (n1 == 0 || n2 == 0)
    fail(ErrorKind::Precondition, "rank-sum test needs two non-empty groups");

  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double v : target) all.emplace_back(v, true);
  for (double v : background) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Doubled midranks keep tied ranks integral.
  std::vector<int> doubled(n);
  double tie_term = 0.0;
  long long r1_doubled = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const int mid2 = static_cast<int>(i + 1 + j);  // (i+1) + j is twice the midrank
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t q = i; q < j; ++q) {
      doubled[q] = mid2;
      if (all[q].second) r1_doubled += mid2;
    }
    i = j;
  }

  const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2),
               dn = static_cast<double>(n);
  const double variance =
      dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  RankSum out;
  if (!(variance > 1e-12)) return out;  // constant across both groups

  out.informative = true;
  const double r1 = 0.5 * static_cast<double>(r1_doubled);
  out.score = (r1 - dn1 * (dn + 1.0) / 2.0) / std::sqrt(variance);
  if (n <= kExactRankSumLimit) {
    const auto [tail, total] = exact_upper_tail(doubled, n1, static_cast<int>(r1_doubled));
    out.p_value = tail / total;
  } else {
    out.p_value = 0.5 * std::erfc(out.score / std::sqrt(2.0));
  }
  return out;
}

std::vector<Deg> rank_degs(const std::vector<std::string>& genes,
                           std::span<const Cell* const> target,
                           std::span<const Cell* const> background, std::size_t k) {
  if (target.empty() || background.empty())
    fail(ErrorKind::Precondition, "rank_degs needs non-empty target and background");
  for (const Cell* t : target)
    for (const Cell* b : background)
      if (t == b) fail(ErrorKind::Precondition, "target and background cells overlap");

  const std::size_t g_count = genes.size();
  // Transpose the sparse rows into per-gene non-zero lists.
  std::vector<std::vector<double>> t_cols(g_count), b_cols(g_count);
  for (const Cell* c : target)
    for (const auto& [g, v] : c->expression) t_cols[g].push_back(v);
  for (const Cell* c : background)
    for (const auto& [g, v] : c->expression) b_cols[g].push_back(v);

  std::vector<RankSum> results(g_count);
  const auto g_i = static_cast<std::ptrdiff_t>(g_count);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t gg = 0; gg < g_i; ++gg) {
    const auto g = static_cast<std::size_t>(gg);
    std::vector<double> t_vals = t_cols[g], b_vals = b_cols[g];
    t_vals.resize(target.size(), 0.0);
    b_vals.resize(background.size(), 0.0);
    results[g] = rank_sum_test(t_vals, b_vals);
  }

  std::vector<Deg> degs;
  for (std::size_t g = 0; g < g_count; ++g)
    if (results[g].informative) degs.push_back({genes[g], results[g].score, results[g].p_value});
  std::sort(degs.begin(), degs.end(), [](const Deg& a, const Deg& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.gene < b.gene;
  });
  if (degs.size() > k) degs.resize(k);
  return degs;
}

std::vector<double> fallback_embedding(const std::string& gene, std::uint64_t seed) {
  Rng rng(fnv1a(gene) ^ (seed * 0x9e3779b97f4a7c15ULL));
  std::vector<double> v(kEmbeddingDim);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

GeneEmbeddingTable GeneEmbeddingTable::load(const fs::path& path) {
  auto in = open_or_fail(path);
  GeneEmbeddingTable table;
  table.provenance_ = Provenance::File;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string gene;
    if (!(ss >> gene)) continue;
    std::vector<double> v;
    v.reserve(kEmbeddingDim);
    std::string tok;
    while (ss >> tok) {
      double x = 0.0;
      if (!parse_double(tok, x))
        fail(ErrorKind::Format, path.string() + " line " + std::to_string(line_no) +
                                    ": invalid value '" + tok + "'");
      v.push_back(x);
    }
    if (v.size() != kEmbeddingDim)
      fail(ErrorKind::Format, path.string() + " line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(kEmbeddingDim) + " values, found " +
                                  std::to_string(v.size()));
    table.vectors_[gene] = std::move(v);
  }
  return table;
}

GeneEmbeddingTable GeneEmbeddingTable::fallback(std::uint64_t seed) {
  GeneEmbeddingTable table;
  table.provenance_ = Provenance::Fallback;
  table.seed_ = seed;
  return table;
}

std::optional<std::vector<double>> GeneEmbeddingTable::find(const std::string& gene) const {
  if (provenance_ == Provenance::Fallback) return fallback_embedding(gene, seed_);
  const auto it = vectors_.find(gene);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> GeneEmbeddingTable::at(const std::string& gene) const {
  auto v = find(gene);
  if (!v) fail(ErrorKind::NotFound, "no embedding for gene '" + gene + "'");
  return std::move(*v);
}

std::vector<double> population_gene_feature(std::span<const Deg> degs,
                                            const GeneEmbeddingTable& table) {
  std::vector<double> sum(kEmbeddingDim, 0.0);
  std::size_t resolved = 0;
  std::string missing;
  for (const Deg& d : degs) {
    const auto v = table.find(d.gene);
    if (!v) {
      missing += (missing.empty() ? "" : ", ") + d.gene;
      continue;
    }
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) sum[i] += (*v)[i];
    ++resolved;
  }
  if (resolved == 0)
    fail(ErrorKind::NotFound, "no DEG has an embedding; unresolved: [" + missing + "]");
  for (double& x : sum) x /= static_cast<double>(resolved);
  return sum;
}

std::vector<double> spatial_feature(const std::vector<Point>& coords) {
  if (coords.size() < 3)
    fail(ErrorKind::Precondition, "spatial feature needs at least 3 cells, got " +
                                      std::to_string(coords.size()));
  std::vector<double> f(kSpatialDim, 0.0);
  const PrincipalAxes pa = principal_axes(coords);
  f[kSpatialCentroidSlot] = pa.centroid.x;
  f[kSpatialCentroidSlot + 1] = pa.centroid.y;
  f[kSpatialLambdaSlot] = pa.lambda1;
  f[kSpatialLambdaSlot + 1] = pa.lambda2;
  f[kSpatialAngleSlot] = pa.angle;

  const Bounds box = bounding_box(coords);
  auto bin = [](double v, double lo, double span) -> std::size_t {
    if (span <= 0.0) return kOccupancyBins / 2;
    const auto b = static_cast<std::size_t>((v - lo) / span * kOccupancyBins);
    return std::min(b, kOccupancyBins - 1);
  };
  const double w = 1.0 / static_cast<double>(coords.size());
  for (const Point& p : coords) {
    const std::size_t bx = bin(p.x, box.xmin, box.width());
    const std::size_t by = bin(p.y, box.ymin, box.height());
    f[kSpatialHistogramSlot + by * kOccupancyBins + bx] += w;
  }
  return f;
}

std::string make_node_id(const std::string& sample_id, const std::string& cell_type) {
  return sample_id + "::" + cell_type;
}

NodeBuildResult build_population_nodes(const Dataset& dataset, const GeneEmbeddingTable& table,
                                       std::size_t min_cells, std::size_t deg_count) {
  if (!dataset.normalized)
    fail(ErrorKind::Precondition, "build_population_nodes expects normalized expression");
  if (min_cells < 3)
    fail(ErrorKind::Precondition, "min_cells must be at least 3, got " + std::to_string(min_cells));
  NodeBuildResult out;
  for (const Sample& sample : dataset.samples) {
    std::map<std::string, std::vector<std::size_t>> by_type;
    for (std::size_t i = 0; i < sample.cells.size(); ++i)
      by_type[sample.cells[i].cell_type].push_back(i);

    for (const auto& [type, members] : by_type) {
      if (members.size() < min_cells) {
        out.warnings.push_back("skipped population '" + type + "' in sample '" +
                               sample.sample_id + "': " + std::to_string(members.size()) +
                               " cells < min_cells " + std::to_string(min_cells));
        continue;
      }
      std::vector<const Cell*> target, background;
      for (std::size_t i = 0; i < sample.cells.size(); ++i)
        (sample.cells[i].cell_type == type ? target : background).push_back(&sample.cells[i]);
      if (background.empty()) {
        out.warnings.push_back("skipped population '" + type + "' in sample '" +
                               sample.sample_id + "': no background cells for DEG ranking");
        continue;
      }

      PopulationNode node;
      node.node_id = make_node_id(sample.sample_id, type);
      node.sample_id = sample.sample_id;
      node.stage = sample.stage;
      node.cell_type = type;
      node.cell_indices = members;
      node.count = members.size();
      for (std::size_t i : members) node.coords.push_back({sample.cells[i].x, sample.cells[i].y});
      node.centroid = principal_axes(node.coords).centroid;
      node.degs = rank_degs(dataset.genes, target, background, deg_count);
      if (node.degs.empty()) {
        out.warnings.push_back("skipped population '" + type + "' in sample '" +
                               sample.sample_id + "': no informative genes");
        continue;
      }
      node.features = population_gene_feature(node.degs, table);
      const auto spatial = spatial_feature(node.coords);
      node.features.insert(node.features.end(), spatial.begin(), spatial.end());
      out.nodes.push_back(std::move(node));
    }
  }
  std::sort(out.nodes.begin(), out.nodes.end(),
            [](const PopulationNode& a, const PopulationNode& b) { return a.node_id < b.node_id; });
  return out;
}

}  // namespace crosstraj::ingest
