#include "codefi/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace codefi::kernels {
namespace {

constexpr double kUnderflowExponent = -230.0;

double warnock_row(const Matrix& points, Eigen::Index n) {
  const Eigen::Index count = points.rows();
  const Eigen::Index dim = points.cols();
  const double* yn = points.data() + n * dim;
  double acc = 0.0;
  for (Eigen::Index m = 0; m < count; ++m) {
    const double* ym = points.data() + m * dim;
    double prod = 1.0;
    for (Eigen::Index d = 0; d < dim; ++d) prod *= 1.0 - std::max(yn[d], ym[d]);
    acc += prod;
  }
  return acc;
}

void kernel_row(const Matrix& rows, const Matrix& cols, double h2, Matrix& out, Eigen::Index n) {
  const Eigen::Index dim = rows.cols();
  const double* a = rows.data() + n * dim;
  const double scale = -0.5 / h2;
  double* o = out.data() + n * out.cols();
  for (Eigen::Index m = 0; m < cols.rows(); ++m) {
    const double* b = cols.data() + m * dim;
    double d2 = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      d2 += diff * diff;
    }
    const double arg = scale * d2;
    o[m] = arg < kUnderflowExponent ? 0.0 : std::exp(arg);
  }
}

double dot_row(const Matrix& a, Eigen::Index n, std::span<const double> x) {
  return a.row(n).dot(Eigen::Map<const Eigen::RowVectorXd>(x.data(), a.cols()));
}

double dot_col(const Matrix& a, Eigen::Index m, std::span<const double> x) {
  double acc = 0.0;
  for (Eigen::Index n = 0; n < a.rows(); ++n) acc += a(n, m) * x[static_cast<std::size_t>(n)];
  return acc;
}

void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, Eigen::Index n) {
  const Eigen::Index inner = a.cols();
  const Eigen::Index width = b.cols();
  double* o = out.data() + n * width;
  std::fill(o, o + width, 0.0);
  const double* ar = a.data() + n * inner;
  for (Eigen::Index m = 0; m < inner; ++m) {
    const double w = ar[m];
    if (w == 0.0) continue;
    const double* br = b.data() + m * width;
    for (Eigen::Index j = 0; j < width; ++j) o[j] += w * br[j];
  }
}

}  // namespace

namespace serial {

double warnock_pair_sum(const Matrix& points) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < points.rows(); ++n) total += warnock_row(points, n);
  return total;
}

void gaussian_kernel(const Matrix& rows, const Matrix& cols, double h2, Matrix& out) {
  out.resize(rows.rows(), cols.rows());
  for (Eigen::Index n = 0; n < rows.rows(); ++n) kernel_row(rows, cols, h2, out, n);
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
  for (Eigen::Index n = 0; n < a.rows(); ++n) y[static_cast<std::size_t>(n)] = dot_row(a, n, x);
}

void matvec_transposed(const Matrix& a, std::span<const double> x, std::span<double> y) {
  for (Eigen::Index m = 0; m < a.cols(); ++m) y[static_cast<std::size_t>(m)] = dot_col(a, m, x);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  out.resize(a.rows(), b.cols());
  for (Eigen::Index n = 0; n < a.rows(); ++n) matmul_row(a, b, out, n);
}

}  // namespace serial

namespace parallel {

double warnock_pair_sum(const Matrix& points) {
  const Eigen::Index count = points.rows();
  std::vector<double> partial(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < count; ++n) partial[static_cast<std::size_t>(n)] = warnock_row(points, n);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void gaussian_kernel(const Matrix& rows, const Matrix& cols, double h2, Matrix& out) {
  out.resize(rows.rows(), cols.rows());
  const Eigen::Index count = rows.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < count; ++n) kernel_row(rows, cols, h2, out, n);
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> y) {
  const Eigen::Index count = a.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < count; ++n) y[static_cast<std::size_t>(n)] = dot_row(a, n, x);
}

void matvec_transposed(const Matrix& a, std::span<const double> x, std::span<double> y) {
  const Eigen::Index count = a.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index m = 0; m < count; ++m) y[static_cast<std::size_t>(m)] = dot_col(a, m, x);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  out.resize(a.rows(), b.cols());
  const Eigen::Index count = a.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < count; ++n) matmul_row(a, b, out, n);
}

}  // namespace parallel

void set_num_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace codefi::kernels
