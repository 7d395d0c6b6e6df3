#pragma once

// Density grids, coverage contours, sample boundaries, contour similarity
// and direction summaries for population nodes.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosstraj/geometry.hpp"

namespace crosstraj::spatial {

inline constexpr std::size_t kGridSize = 100;
inline constexpr std::size_t kProjectionBins = 100;
inline constexpr double kOuterCoverage = 0.98;
inline constexpr double kInnerCoverage = 0.94;
inline constexpr double kBandwidthFloor = 0.01;  // fraction of the axis range
inline constexpr double kBoundsPadding = 0.05;   // fraction of the data range, each side
inline constexpr double kSimplifyCells = 0.5;    // Douglas-Peucker epsilon in cell widths
inline constexpr double kSimilarityEpsilon = 1e-6;

struct DensityGrid {
  Bounds bounds;
  std::size_t nx = kGridSize;
  std::size_t ny = kGridSize;
  std::vector<double> values;  // row-major [iy * nx + ix]
  double bandwidth_x = 0.0;
  double bandwidth_y = 0.0;

  double cell_width() const { return bounds.width() / static_cast<double>(nx); }
  double cell_height() const { return bounds.height() / static_cast<double>(ny); }
  double cell_area() const { return cell_width() * cell_height(); }
  double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
  Point cell_center(std::size_t ix, std::size_t iy) const;
  double mass() const;  // sum of values * cell_area
  double max_value() const;
};

// Bounding box of the points grown by `padding` of its extent on each side.
// A degenerate axis is widened to one unit.
Bounds padded_bounds(std::span<const Point> points, double padding = kBoundsPadding);

// Gaussian KDE at cell centers with Scott's-rule bandwidth per axis, floored
// at kBandwidthFloor of the bounds' extent.
DensityGrid density_grid(std::span<const Point> points, const Bounds& bounds,
                         std::size_t nx = kGridSize, std::size_t ny = kGridSize);
double scott_bandwidth(std::span<const Point> points, bool x_axis);

// Largest level L whose superlevel set {value >= L} holds at least `fraction`
// of the grid's mass.
double coverage_level(const DensityGrid& grid, double fraction);

// Marching squares over cell centers with a zero border, so every ring is
// closed. Saddles are split by the average of the four corners. Rings run
// counter-clockwise around superlevel regions, in data coordinates.
std::vector<Polygon> extract_contours(const DensityGrid& grid, double level);

// Douglas-Peucker on a closed ring; a vertex survives when it deviates by at
// least epsilon from the chord that would replace it.
Polygon simplify_contour(const Polygon& ring, double epsilon);

struct AxisProjection {
  std::vector<double> x;  // kProjectionBins, sums to 1
  std::vector<double> y;
};

AxisProjection axis_projection(std::span<const Point> points, const Bounds& bounds,
                               std::span<const double> weights = {},
                               std::size_t bins = kProjectionBins);

double default_alpha(std::span<const Point> points);

// Delaunay triangles with circumradius < 1/alpha; boundary rings of the kept
// triangles. Requires at least 4 points, not all collinear.
std::vector<Polygon> alpha_shape(std::span<const Point> points,
                                 std::optional<double> alpha = std::nullopt);

struct Triangle {
  std::size_t a, b, c;  // counter-clockwise indices into the input
};
std::vector<Triangle> delaunay(std::span<const Point> points);

struct SimilarityScore {
  double d_ab = 0.0;
  double d_ba = 0.0;
  double d_sym = 0.0;
};

SimilarityScore contour_similarity(std::span<const Point> a, std::span<const Point> b);

// Vertices of all rings, without the repeated closing vertex.
std::vector<Point> ring_vertices(std::span<const Polygon> rings);

std::vector<SimilarityScore> column_similarity(std::span<const Point> selected,
                                               std::span<const std::vector<Point>> column);

struct DirectionSummary {
  double theta = 0.0;  // [0, 2pi)
  double r_std = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Point centroid;
  double mean_count = 0.0;
};

// Principal axis of the covariance, oriented so that the projections onto it
// have non-negative third central moment.
DirectionSummary direction_summary(std::span<const Point> points,
                                   std::span<const double> counts_per_sample = {});

struct ContourSet {
  Bounds bounds;
  double outer_level = 0.0;
  double inner_level = 0.0;
  std::vector<Polygon> outer;  // simplified, kOuterCoverage
  std::vector<Polygon> inner;  // simplified, kInnerCoverage
  AxisProjection projection;
};

ContourSet build_contours(std::span<const Point> points);

// Vertices used for similarity: those of the outer rings.
std::vector<Point> similarity_vertices(const ContourSet& set);

// Payload geometry is shifted by -origin.
nlohmann::json to_json(const ContourSet& set, Point origin = {});
nlohmann::json to_json(const DirectionSummary& d, Point origin = {});
nlohmann::json to_json(const SimilarityScore& s);
nlohmann::json polygon_json(const Polygon& ring, Point origin = {});

}  // namespace crosstraj::spatial
