#include "crosstraj/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>

#include "crosstraj/error.hpp"
#include "crosstraj/kernels.hpp"

namespace crosstraj::spatial {

Point DensityGrid::cell_center(std::size_t ix, std::size_t iy) const {
  return {bounds.xmin + (static_cast<double>(ix) + 0.5) * cell_width(),
          bounds.ymin + (static_cast<double>(iy) + 0.5) * cell_height()};
}

double DensityGrid::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell_area();
}

double DensityGrid::max_value() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

Bounds padded_bounds(std::span<const Point> points, double padding) {
  if (points.empty()) fail(ErrorKind::Precondition, "padded_bounds: no points");
  Bounds b = bounding_box(std::vector<Point>(points.begin(), points.end()));
  auto grow = [padding](double& lo, double& hi) {
    const double range = hi - lo;
    if (range <= 0.0) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      lo -= padding * range;
      hi += padding * range;
    }
  };
  grow(b.xmin, b.xmax);
  grow(b.ymin, b.ymax);
  return b;
}

double scott_bandwidth(std::span<const Point> points, bool x_axis) {
  const double n = static_cast<double>(points.size());
  double mean = 0.0;
  for (const Point& p : points) mean += x_axis ? p.x : p.y;
  mean /= n;
  double ss = 0.0;
  for (const Point& p : points) {
    const double d = (x_axis ? p.x : p.y) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  return sd * std::pow(n, -1.0 / 6.0);
}

DensityGrid density_grid(std::span<const Point> points, const Bounds& bounds, std::size_t nx,
                         std::size_t ny) {
  if (points.size() < 3) fail(ErrorKind::Precondition, "density_grid: need at least 3 points");
  if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
    fail(ErrorKind::Precondition, "density_grid: empty bounds");
  for (const Point& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      fail(ErrorKind::Numeric, "density_grid: non-finite coordinate");
    if (!bounds.contains(p)) fail(ErrorKind::Precondition, "density_grid: point outside bounds");
  }
  DensityGrid g;
  g.bounds = bounds;
  g.nx = nx;
  g.ny = ny;
  g.bandwidth_x = std::max(scott_bandwidth(points, true), kBandwidthFloor * bounds.width());
  g.bandwidth_y = std::max(scott_bandwidth(points, false), kBandwidthFloor * bounds.height());
  g.values.assign(nx * ny, 0.0);
  kernels::kde_grid(points, bounds, g.bandwidth_x, g.bandwidth_y, nx, ny, g.values);
  return g;
}

double coverage_level(const DensityGrid& grid, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    fail(ErrorKind::Precondition, "coverage_level: fraction must be in (0, 1)");
  std::vector<double> sorted = grid.values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorKind::Numeric, "coverage_level: grid has no mass");
  const double target = fraction * total * (1.0 - 1e-12);
  double cum = 0.0;
  double level = sorted.front();
  for (double v : sorted) {
    if (v <= 0.0) break;
    cum += v;
    level = v;
    if (cum >= target) break;
  }
  return level;
}

namespace {

struct Lattice {
  const DensityGrid& grid;
  std::size_t w, h;  // padded node counts

  double value(std::size_t i, std::size_t j) const {
    if (i == 0 || j == 0 || i > grid.nx || j > grid.ny) return 0.0;
    return grid.at(i - 1, j - 1);
  }
  Point position(double i, double j) const {
    return {grid.bounds.xmin + (i - 0.5) * grid.cell_width(),
            grid.bounds.ymin + (j - 0.5) * grid.cell_height()};
  }
  std::size_t node(std::size_t i, std::size_t j) const { return j * w + i; }

  // Crossing on the edge leaving node (i, j) to the right (vertical = false)
  // or upward (vertical = true).
  Point crossing(std::size_t key, double level) const {
    const std::size_t n = key / 2;
    const std::size_t i = n % w, j = n / w;
    const bool vertical = key % 2 == 1;
    const double va = value(i, j);
    const double vb = vertical ? value(i, j + 1) : value(i + 1, j);
    const double t = (level - va) / (vb - va);
    const double fi = static_cast<double>(i), fj = static_cast<double>(j);
    return vertical ? position(fi, fj + t) : position(fi + t, fj);
  }
};

}  // namespace

std::vector<Polygon> extract_contours(const DensityGrid& grid, double level) {
  if (!(level > 0.0)) fail(ErrorKind::Precondition, "extract_contours: level must be positive");
  if (level > grid.max_value()) return {};
  const Lattice lat{grid, grid.nx + 2, grid.ny + 2};
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> next(2 * lat.w * lat.h, kNone);

  for (std::size_t j = 0; j + 1 < lat.h; ++j) {
    for (std::size_t i = 0; i + 1 < lat.w; ++i) {
      const double v[4] = {lat.value(i, j), lat.value(i + 1, j), lat.value(i + 1, j + 1),
                           lat.value(i, j + 1)};
      const bool high[4] = {v[0] >= level, v[1] >= level, v[2] >= level, v[3] >= level};
      const int mask = high[0] | high[1] << 1 | high[2] << 2 | high[3] << 3;
      if (mask == 0 || mask == 15) continue;
      // Counter-clockwise edges: bottom, right, top, left.
      const std::size_t keys[4] = {2 * lat.node(i, j), 2 * lat.node(i + 1, j) + 1,
                                   2 * lat.node(i, j + 1), 2 * lat.node(i, j) + 1};
      std::size_t pos[4] = {};
      bool falling[4] = {};
      int count = 0;
      for (int k = 0; k < 4; ++k) {
        if (high[k] != high[(k + 1) % 4]) {
          pos[count] = keys[k];
          falling[count] = high[k];
          ++count;
        }
      }
      if (count == 2) {
        const int f = falling[0] ? 0 : 1;
        next[pos[f]] = pos[1 - f];
      } else {
        const bool joined = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= level;
        for (int c = 0; c < 4; ++c) {
          if (!falling[c]) continue;
          next[pos[c]] = pos[joined ? (c + 1) % 4 : (c + 3) % 4];
        }
      }
    }
  }

  std::vector<Polygon> rings;
  std::vector<char> seen(next.size(), 0);
  for (std::size_t start = 0; start < next.size(); ++start) {
    if (next[start] == kNone || seen[start]) continue;
    Polygon ring;
    std::size_t key = start;
    while (!seen[key]) {
      seen[key] = 1;
      const Point p = lat.crossing(key, level);
      if (ring.empty() || !(ring.back() == p)) ring.push_back(p);
      key = next[key];
      if (key == kNone) fail(ErrorKind::Numeric, "extract_contours: open contour");
    }
    while (ring.size() > 1 && ring.back() == ring.front()) ring.pop_back();
    if (ring.size() < 3) continue;
    ring.push_back(ring.front());
    rings.push_back(std::move(ring));
  }
  return rings;
}

Polygon simplify_contour(const Polygon& ring, double epsilon) {
  if (epsilon < 0.0) fail(ErrorKind::Precondition, "simplify_contour: negative epsilon");
  if (ring.size() < 4 || epsilon == 0.0) return ring;
  const std::size_t n = ring.size() - 1;
  std::size_t far = 1;
  for (std::size_t i = 2; i < n; ++i)
    if (distance(ring[0], ring[i]) > distance(ring[0], ring[far])) far = i;

  std::vector<char> keep(ring.size(), 0);
  keep[0] = keep[far] = keep[n] = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack = {{far, n}, {0, far}};
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    if (b <= a + 1) continue;
    std::size_t best = a + 1;
    double dmax = -1.0;
    for (std::size_t k = a + 1; k < b; ++k) {
      const double d = point_segment_distance(ring[k], ring[a], ring[b]);
      if (d > dmax) {
        dmax = d;
        best = k;
      }
    }
    if (dmax >= epsilon) {
      keep[best] = 1;
      stack.push_back({best, b});
      stack.push_back({a, best});
    }
  }
  Polygon out;
  for (std::size_t i = 0; i < ring.size(); ++i)
    if (keep[i]) out.push_back(ring[i]);
  if (out.size() < 4) return ring;
  return out;
}

AxisProjection axis_projection(std::span<const Point> points, const Bounds& bounds,
                               std::span<const double> weights, std::size_t bins) {
  if (points.empty()) fail(ErrorKind::Precondition, "axis_projection: no points");
  if (!weights.empty() && weights.size() != points.size())
    fail(ErrorKind::Precondition, "axis_projection: weight count mismatch");
  AxisProjection out{std::vector<double>(bins, 0.0), std::vector<double>(bins, 0.0)};
  auto bin = [bins](double v, double lo, double hi) {
    if (!(hi > lo)) return std::size_t{0};
    const double f = std::floor((v - lo) / (hi - lo) * static_cast<double>(bins));
    return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(bins - 1)));
  };
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w < 0.0) fail(ErrorKind::Precondition, "axis_projection: negative weight");
    out.x[bin(points[i].x, bounds.xmin, bounds.xmax)] += w;
    out.y[bin(points[i].y, bounds.ymin, bounds.ymax)] += w;
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorKind::Precondition, "axis_projection: zero total weight");
  for (double& v : out.x) v /= total;
  for (double& v : out.y) v /= total;
  return out;
}

// ---- Delaunay / alpha shape ------------------------------------------------

namespace {

// > 0 when d lies strictly inside the circumcircle of counter-clockwise abc.
double incircle(Point a, Point b, Point c, Point d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

double circumradius(Point a, Point b, Point c) {
  const double area2 = std::abs(cross(b - a, c - a));
  if (area2 == 0.0) return std::numeric_limits<double>::infinity();
  return distance(a, b) * distance(b, c) * distance(c, a) / (2.0 * area2);
}

bool all_collinear(std::span<const Point> pts) {
  const Bounds b = bounding_box(std::vector<Point>(pts.begin(), pts.end()));
  const double scale = std::max(b.width(), b.height());
  if (scale == 0.0) return true;
  std::size_t far = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (distance(pts[0], pts[i]) > distance(pts[0], pts[far])) far = i;
  const Point dir = pts[far] - pts[0];
  const double len = std::hypot(dir.x, dir.y);
  for (const Point& p : pts)
    if (std::abs(cross(dir, p - pts[0])) / len > 1e-12 * scale) return false;
  return true;
}

}  // namespace

std::vector<Triangle> delaunay(std::span<const Point> points) {
  // Distinct points in sorted order; duplicates map to their first index.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(points[a].x, points[a].y) < std::pair(points[b].x, points[b].y);
  });
  std::vector<std::size_t> ids;
  std::vector<Point> pts;
  for (std::size_t i : order) {
    if (!pts.empty() && pts.back() == points[i]) continue;
    ids.push_back(i);
    pts.push_back(points[i]);
  }
  const std::size_t n = pts.size();
  if (n < 3 || all_collinear(pts)) return {};

  const Bounds b = bounding_box(pts);
  const double span = std::max(b.width(), b.height());
  const Point mid{0.5 * (b.xmin + b.xmax), 0.5 * (b.ymin + b.ymax)};
  const double big = 100.0 * span;
  pts.push_back({mid.x - 2.0 * big, mid.y - big});
  pts.push_back({mid.x + 2.0 * big, mid.y - big});
  pts.push_back({mid.x, mid.y + 2.0 * big});

  std::vector<Triangle> tris = {{n, n + 1, n + 2}};
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<Triangle> kept;
  for (std::size_t p = 0; p < n; ++p) {
    edges.clear();
    kept.clear();
    for (const Triangle& t : tris) {
      if (incircle(pts[t.a], pts[t.b], pts[t.c], pts[p]) > 0.0) {
        edges.push_back({t.a, t.b});
        edges.push_back({t.b, t.c});
        edges.push_back({t.c, t.a});
      } else {
        kept.push_back(t);
      }
    }
    // The cavity boundary is made of edges that appear once.
    std::map<std::pair<std::size_t, std::size_t>, int> seen;
    for (auto [u, v] : edges) ++seen[{std::min(u, v), std::max(u, v)}];
    for (auto [u, v] : edges)
      if (seen[{std::min(u, v), std::max(u, v)}] == 1) kept.push_back({u, v, p});
    tris.swap(kept);
  }

  std::vector<Triangle> out;
  for (const Triangle& t : tris)
    if (t.a < n && t.b < n && t.c < n) out.push_back({ids[t.a], ids[t.b], ids[t.c]});
  return out;
}

double default_alpha(std::span<const Point> points) {
  const Bounds b = bounding_box(std::vector<Point>(points.begin(), points.end()));
  const double diag = std::hypot(b.width(), b.height());
  if (!(diag > 0.0)) fail(ErrorKind::Numeric, "default_alpha: degenerate point set");
  return 2.0 / (0.1 * diag);
}

std::vector<Polygon> alpha_shape(std::span<const Point> points, std::optional<double> alpha) {
  if (points.size() < 4) fail(ErrorKind::Precondition, "alpha_shape: need at least 4 points");
  if (all_collinear(points)) fail(ErrorKind::Numeric, "alpha_shape: points are collinear");
  const double a = alpha ? *alpha : default_alpha(points);
  if (!(a > 0.0)) fail(ErrorKind::Precondition, "alpha_shape: alpha must be positive");
  const double max_radius = 1.0 / a;

  std::vector<Triangle> tris;
  for (const Triangle& t : delaunay(points))
    if (circumradius(points[t.a], points[t.b], points[t.c]) < max_radius) tris.push_back(t);

  std::map<std::pair<std::size_t, std::size_t>, int> uses;
  for (const Triangle& t : tris) {
    for (auto [u, v] : {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.c, t.a}})
      ++uses[{std::min(u, v), std::max(u, v)}];
  }
  std::multimap<std::size_t, std::size_t> out_edges;
  for (const Triangle& t : tris) {
    for (auto [u, v] : {std::pair{t.a, t.b}, std::pair{t.b, t.c}, std::pair{t.c, t.a}})
      if (uses[{std::min(u, v), std::max(u, v)}] == 1) out_edges.insert({u, v});
  }

  std::vector<Polygon> rings;
  while (!out_edges.empty()) {
    auto it = out_edges.begin();
    const std::size_t start = it->first;
    std::size_t cur = it->second;
    out_edges.erase(it);
    Polygon ring = {points[start]};
    while (cur != start) {
      ring.push_back(points[cur]);
      auto nx = out_edges.find(cur);
      if (nx == out_edges.end()) fail(ErrorKind::Numeric, "alpha_shape: open boundary");
      cur = nx->second;
      out_edges.erase(nx);
    }
    ring.push_back(points[start]);
    rings.push_back(std::move(ring));
  }
  return rings;
}

// ---- similarity and direction ------------------------------------------------

SimilarityScore contour_similarity(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::Precondition, "contour_similarity: empty contour");
  SimilarityScore s;
  s.d_ab = kernels::mean_min_distance(a, b);
  s.d_ba = kernels::mean_min_distance(b, a);
  // Same grouping either way round, so the score is exactly symmetric.
  const double lo = std::min(s.d_ab, s.d_ba), hi = std::max(s.d_ab, s.d_ba);
  s.d_sym = 2.0 / (lo + hi + kSimilarityEpsilon);
  return s;
}

std::vector<Point> ring_vertices(std::span<const Polygon> rings) {
  std::vector<Point> out;
  for (const Polygon& r : rings) {
    const std::size_t n = r.size() > 1 && r.front() == r.back() ? r.size() - 1 : r.size();
    out.insert(out.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

std::vector<SimilarityScore> column_similarity(std::span<const Point> selected,
                                               std::span<const std::vector<Point>> column) {
  std::vector<SimilarityScore> out;
  out.reserve(column.size());
  for (const auto& other : column) out.push_back(contour_similarity(selected, other));
  return out;
}

DirectionSummary direction_summary(std::span<const Point> points,
                                   std::span<const double> counts_per_sample) {
  if (points.size() < 3) fail(ErrorKind::Precondition, "direction_summary: need at least 3 points");
  const PrincipalAxes axes = principal_axes(std::vector<Point>(points.begin(), points.end()));
  if (!(axes.lambda1 > 0.0)) fail(ErrorKind::Numeric, "direction_summary: zero covariance");

  DirectionSummary d;
  d.lambda1 = axes.lambda1;
  d.lambda2 = axes.lambda2;
  d.centroid = axes.centroid;
  d.r_std = std::sqrt(d.lambda2 / (d.lambda1 + d.lambda2));

  const Point u{std::cos(axes.angle), std::sin(axes.angle)};
  double m3 = 0.0;
  for (const Point& p : points) {
    const double t = dot(p - axes.centroid, u);
    m3 += t * t * t;
  }
  m3 /= static_cast<double>(points.size());
  const double tie = 1e-10 * std::pow(axes.lambda1, 1.5);
  d.theta = axes.angle;
  if (m3 < -tie) d.theta += std::numbers::pi;

  if (counts_per_sample.empty()) {
    d.mean_count = static_cast<double>(points.size());
  } else {
    d.mean_count = std::accumulate(counts_per_sample.begin(), counts_per_sample.end(), 0.0) /
                   static_cast<double>(counts_per_sample.size());
  }
  return d;
}

ContourSet build_contours(std::span<const Point> points) {
  ContourSet set;
  set.bounds = padded_bounds(points);
  const DensityGrid grid = density_grid(points, set.bounds);
  set.outer_level = coverage_level(grid, kOuterCoverage);
  set.inner_level = coverage_level(grid, kInnerCoverage);
  const double eps = kSimplifyCells * std::min(grid.cell_width(), grid.cell_height());
  for (const Polygon& r : extract_contours(grid, set.outer_level))
    set.outer.push_back(simplify_contour(r, eps));
  for (const Polygon& r : extract_contours(grid, set.inner_level))
    set.inner.push_back(simplify_contour(r, eps));
  set.projection = axis_projection(points, set.bounds);
  return set;
}

std::vector<Point> similarity_vertices(const ContourSet& set) { return ring_vertices(set.outer); }

nlohmann::json polygon_json(const Polygon& ring, Point origin) {
  nlohmann::json out = nlohmann::json::array();
  for (const Point& p : ring) out.push_back({p.x - origin.x, p.y - origin.y});
  return out;
}

nlohmann::json to_json(const ContourSet& set, Point origin) {
  nlohmann::json outer = nlohmann::json::array(), inner = nlohmann::json::array();
  for (const Polygon& r : set.outer) outer.push_back(polygon_json(r, origin));
  for (const Polygon& r : set.inner) inner.push_back(polygon_json(r, origin));
  return {
      {"bounds",
       {{"xmin", set.bounds.xmin - origin.x},
        {"xmax", set.bounds.xmax - origin.x},
        {"ymin", set.bounds.ymin - origin.y},
        {"ymax", set.bounds.ymax - origin.y}}},
      {"coverage", {{"outer", kOuterCoverage}, {"inner", kInnerCoverage}}},
      {"levels", {{"outer", set.outer_level}, {"inner", set.inner_level}}},
      {"outer", std::move(outer)},
      {"inner", std::move(inner)},
      {"projection", {{"x", set.projection.x}, {"y", set.projection.y}}},
  };
}

nlohmann::json to_json(const DirectionSummary& d, Point origin) {
  return {{"theta", d.theta},
          {"r_std", d.r_std},
          {"lambda1", d.lambda1},
          {"lambda2", d.lambda2},
          {"centroid", {d.centroid.x - origin.x, d.centroid.y - origin.y}},
          {"mean_count", d.mean_count}};
}

nlohmann::json to_json(const SimilarityScore& s) {
  return {{"d_ab", s.d_ab}, {"d_ba", s.d_ba}, {"d_sym", s.d_sym}};
}

}  // namespace crosstraj::spatial
