#include <cmath>
#include <limits>
#include <numbers>

#include "crosstraj/kernels.hpp"

namespace crosstraj::kernels::reference {

void gemm(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
}

void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows; ++p) s += a(p, i) * b(p, j);
      c(i, j) += s;
    }
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
}

void kde_grid(std::span<const Point> points, const Bounds& bounds, double hx,
              double hy, std::size_t nx, std::size_t ny, std::span<double> out) {
  const double dx = bounds.width() / static_cast<double>(nx);
  const double dy = bounds.height() / static_cast<double>(ny);
  const double norm = 1.0 / (2.0 * std::numbers::pi * hx * hy);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    const double cy = bounds.ymin + (static_cast<double>(iy) + 0.5) * dy;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double cx = bounds.xmin + (static_cast<double>(ix) + 0.5) * dx;
      double s = 0.0;
      for (const Point& p : points) {
        const double u = (p.x - cx) / hx, v = (p.y - cy) / hy;
        s += norm * std::exp(-0.5 * (u * u + v * v));
      }
      out[iy * nx + ix] = s / static_cast<double>(points.size());
    }
  }
}

double mean_min_distance(std::span<const Point> from, std::span<const Point> to) {
  double sum = 0.0;
  for (const Point& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point& q : to) best = std::min(best, distance(p, q));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace crosstraj::kernels::reference
