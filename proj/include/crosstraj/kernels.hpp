#pragma once

// Data-parallel numeric kernels. Every kernel in `kernels` parallelizes over
// independent output elements and accumulates each element in a fixed order,
// so results do not depend on the OpenMP thread count. The `reference`
// namespace holds straightforward serial versions used by tests and benches.

#include <cstddef>
#include <span>

#include "crosstraj/geometry.hpp"
#include "crosstraj/matrix.hpp"

namespace crosstraj::kernels {

// C = A * B. A is m x k, B is k x n, C is m x n (overwritten).
void gemm(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);
// C += A^T * B. A is k x m, B is k x n, C is m x n.
void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);
// C = A * B^T. A is m x k, B is n x k, C is m x n (overwritten).
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);

// Gaussian product-kernel density at the centers of an nx x ny grid laid
// over `bounds`; bandwidths are per axis. Output is row-major [iy][ix].
void kde_grid(std::span<const Point> points, const Bounds& bounds, double hx,
              double hy, std::size_t nx, std::size_t ny, std::span<double> out);

// Mean over p in `from` of min over q in `to` of |p - q|.
double mean_min_distance(std::span<const Point> from, std::span<const Point> to);

}  // namespace crosstraj::kernels

namespace crosstraj::kernels::reference {

void gemm(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);
void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MutMatrixView c);
void kde_grid(std::span<const Point> points, const Bounds& bounds, double hx,
              double hy, std::size_t nx, std::size_t ny, std::span<double> out);
double mean_min_distance(std::span<const Point> from, std::span<const Point> to);

}  // namespace crosstraj::kernels::reference
