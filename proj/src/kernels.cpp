#include "crosstraj/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

// Wider vectors only; no FMA contraction, so every clone computes the same
// bits.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define CROSSTRAJ_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define CROSSTRAJ_CLONES
#endif

namespace crosstraj::kernels {

namespace {

// Gaussian weights of every point against every grid center along one axis.
// Row-major [center][point].
std::vector<double> axis_weights(std::span<const Point> points, bool use_x,
                                 double lo, double hi, std::size_t bins, double h) {
  const std::size_t n = points.size();
  const double step = (hi - lo) / static_cast<double>(bins);
  const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> w(bins * n);
  const auto bins_i = static_cast<std::ptrdiff_t>(bins);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < bins_i; ++b) {
    const double center = lo + (static_cast<double>(b) + 0.5) * step;
    double* dst = w.data() + static_cast<std::size_t>(b) * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = ((use_x ? points[i].x : points[i].y) - center) / h;
      dst[i] = norm * std::exp(-0.5 * u * u);
    }
  }
  return w;
}

}  // namespace

namespace {

// Four rows of B per pass keep the running sums in registers; the additions
// still happen one p at a time, in ascending order.
CROSSTRAJ_CLONES void gemm_block(ConstMatrixView a, ConstMatrixView b, MutMatrixView c,
                                 std::size_t j0, std::size_t j1) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) std::fill(c.data + i * n + j0, c.data + i * n + j1, 0.0);
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double* b0 = b.data + p * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a.data + i * k + p;
      const double a0 = arow[0], a1 = arow[1], a2 = arow[2], a3 = arow[3];
      double* crow = c.data + i * n;
      for (std::size_t j = j0; j < j1; ++j) {
        double t = crow[j];
        t += a0 * b0[j];
        t += a1 * b1[j];
        t += a2 * b2[j];
        t += a3 * b3[j];
        crow[j] = t;
      }
    }
  }
  for (; p < k; ++p) {
    const double* brow = b.data + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a.data[i * k + p];
      double* crow = c.data + i * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
    }
  }
}

CROSSTRAJ_CLONES void gemm_tn_row(ConstMatrixView a, ConstMatrixView b, MutMatrixView c,
                                  std::size_t i) {
  const std::size_t k = a.rows, m = a.cols, n = b.cols;
  double* crow = c.data + i * n;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const double a0 = a.data[p * m + i], a1 = a.data[(p + 1) * m + i];
    const double a2 = a.data[(p + 2) * m + i], a3 = a.data[(p + 3) * m + i];
    const double* b0 = b.data + p * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j) {
      double t = crow[j];
      t += a0 * b0[j];
      t += a1 * b1[j];
      t += a2 * b2[j];
      t += a3 * b3[j];
      crow[j] = t;
    }
  }
  for (; p < k; ++p) {
    const double av = a.data[p * m + i];
    const double* brow = b.data + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

void gemm(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  // Column blocks of C are independent, so threads never share an element.
  constexpr std::size_t kBlock = 64;
  const std::size_t n = b.cols;
  const auto blocks = static_cast<std::ptrdiff_t>((n + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bb = 0; bb < blocks; ++bb) {
    const std::size_t j0 = static_cast<std::size_t>(bb) * kBlock;
    gemm_block(a, b, c, j0, std::min(n, j0 + kBlock));
  }
}

void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  const auto m_i = static_cast<std::ptrdiff_t>(a.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < m_i; ++ii) gemm_tn_row(a, b, c, static_cast<std::size_t>(ii));
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MutMatrixView c) {
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  const auto m_i = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < m_i; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c.data[i * n + j] = s;
    }
  }
}

void kde_grid(std::span<const Point> points, const Bounds& bounds, double hx,
              double hy, std::size_t nx, std::size_t ny, std::span<double> out) {
  const std::size_t n = points.size();
  // The product kernel separates: density(ix, iy) = sum_i wx[ix][i] * wy[iy][i] / n.
  const auto wx = axis_weights(points, true, bounds.xmin, bounds.xmax, nx, hx);
  const auto wy = axis_weights(points, false, bounds.ymin, bounds.ymax, ny, hy);
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto ny_i = static_cast<std::ptrdiff_t>(ny);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yy = 0; yy < ny_i; ++yy) {
    const auto iy = static_cast<std::size_t>(yy);
    const double* wyr = wy.data() + iy * n;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double* wxr = wx.data() + ix * n;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += wxr[i] * wyr[i];
      out[iy * nx + ix] = s * inv_n;
    }
  }
}

double mean_min_distance(std::span<const Point> from, std::span<const Point> to) {
  std::vector<double> minima(from.size());
  const auto n_i = static_cast<std::ptrdiff_t>(from.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n_i; ++ii) {
    const Point p = from[static_cast<std::size_t>(ii)];
    double best = std::numeric_limits<double>::infinity();
    for (const Point& q : to) {
      const double dx = p.x - q.x, dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
    }
    minima[static_cast<std::size_t>(ii)] = std::sqrt(best);
  }
  double sum = 0.0;
  for (double d : minima) sum += d;
  return sum / static_cast<double>(from.size());
}

}  // namespace crosstraj::kernels
