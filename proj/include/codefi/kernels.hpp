#pragma once

// Data-parallel inner loops of the pipeline. Every routine exists twice: a
// plain serial reference and an OpenMP version. The parallel versions split
// work by output row and keep the per-row summation order of the reference,
// so both produce bitwise-identical results for any thread count.

#include "codefi/matrix.hpp"

#include <span>

namespace codefi::kernels {

namespace serial {

// Sum over all ordered pairs (n, m) of prod_d (1 - max(y_nd, y_md)).
double warnock_pair_sum(const Matrix& points);

// out(n, m) = exp(-|rows_n - cols_m|^2 / (2 h2)), with weights below e^-230
// stored as exact zeros (keeps later products out of the subnormal range).
void gaussian_kernel(const Matrix& rows, const Matrix& cols, double h2, Matrix& out);

// y = A x
void matvec(const Matrix& a, std::span<const double> x, std::span<double> y);

// y = A^T x
void matvec_transposed(const Matrix& a, std::span<const double> x, std::span<double> y);

// out = A B, accumulated over the inner index in increasing order.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace serial

namespace parallel {

double warnock_pair_sum(const Matrix& points);
void gaussian_kernel(const Matrix& rows, const Matrix& cols, double h2, Matrix& out);
void matvec(const Matrix& a, std::span<const double> x, std::span<double> y);
void matvec_transposed(const Matrix& a, std::span<const double> x, std::span<double> y);
void matmul(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace parallel

// Thread count used by the parallel kernels (0 keeps the OpenMP default).
void set_num_threads(int threads);
int num_threads();

}  // namespace codefi::kernels
