#include "crosstraj/geometry.hpp"

#include <algorithm>
#include <limits>

namespace crosstraj {

Bounds bounding_box(const std::vector<Point>& points) {
  Bounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Point& p : points) {
    b.xmin = std::min(b.xmin, p.x);
    b.xmax = std::max(b.xmax, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

double signed_area(const Polygon& ring) {
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) a += cross(ring[i], ring[i + 1]);
  return 0.5 * a;
}

bool point_in_polygon(Point p, const Polygon& ring) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

double point_segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

namespace {
int orientation(Point a, Point b, Point c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}
bool on_segment(Point a, Point b, Point p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}
}  // namespace

bool segments_intersect(Point a, Point b, Point c, Point d) {
  const int o1 = orientation(a, b, c), o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a), o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace crosstraj

#include <numbers>

namespace crosstraj {

PrincipalAxes principal_axes(const std::vector<Point>& points) {
  const double n = static_cast<double>(points.size());
  Point c{};
  for (const Point& p : points) c = c + p;
  c = (1.0 / n) * c;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const Point& p : points) {
    const double dx = p.x - c.x, dy = p.y - c.y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  sxx /= n - 1.0;
  sxy /= n - 1.0;
  syy /= n - 1.0;

  const double mid = 0.5 * (sxx + syy);
  const double half = std::hypot(0.5 * (sxx - syy), sxy);
  PrincipalAxes out;
  out.centroid = c;
  out.lambda1 = mid + half;
  out.lambda2 = std::max(0.0, mid - half);
  // Below this the second eigenvalue is rounding noise of the first.
  if (out.lambda2 <= 1e-13 * out.lambda1) out.lambda2 = 0.0;
  double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  if (angle < 0.0) angle += std::numbers::pi;
  if (angle >= std::numbers::pi) angle -= std::numbers::pi;
  out.angle = angle;
  return out;
}

}  // namespace crosstraj
