#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace codefi {

// Dense row-major storage: one sample point (or one transition row) per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row_span(const Matrix& m, std::size_t r) {
  return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(Matrix& m, std::size_t r) {
  return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

}  // namespace codefi
