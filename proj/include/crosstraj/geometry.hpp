#pragma once

#include <cmath>
#include <vector>

namespace crosstraj {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Bounds {
  double xmin = 0.0;
  double xmax = 1.0;
  double ymin = 0.0;
  double ymax = 1.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(Point p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

// Closed ring: first vertex repeated at the end.
using Polygon = std::vector<Point>;

Bounds bounding_box(const std::vector<Point>& points);
// Shoelace area; positive for counter-clockwise rings.
double signed_area(const Polygon& ring);
bool point_in_polygon(Point p, const Polygon& ring);
double point_segment_distance(Point p, Point a, Point b);
bool segments_intersect(Point a, Point b, Point c, Point d);

}  // namespace crosstraj

namespace crosstraj {

// Covariance eigen-structure of a 2-D point cloud.
struct PrincipalAxes {
  Point centroid;
  double lambda1 = 0.0;  // >= lambda2
  double lambda2 = 0.0;
  double angle = 0.0;    // direction of the lambda1 axis, in [0, pi)
};

// Sample covariance (n - 1 denominator). Requires at least 2 points.
PrincipalAxes principal_axes(const std::vector<Point>& points);

}  // namespace crosstraj
