#pragma once

#include "codefi/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace codefi::seq {

/// N points of the unit cube used as the unstructured mesh. Entries lie in
/// [0, 1) and rows are pairwise distinct; both are checked on construction.
class GridMatrix {
 public:
  explicit GridMatrix(Matrix points);

  std::size_t n_points() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  const Matrix& points() const noexcept { return points_; }
  std::span<const double> row(std::size_t n) const { return row_span(points_, n); }
  double operator()(std::size_t n, std::size_t d) const {
    return points_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  }

 private:
  Matrix points_;
};

enum class GeneratorTag { pseudo_random, sobol, optimal_discrepancy };

struct GeneratorKind {
  GeneratorTag tag = GeneratorTag::sobol;
  std::uint32_t seed = 5489;      // pseudo_random, optimal_discrepancy (sweep order)
  std::size_t iterations = 8;     // optimal_discrepancy sweeps
};

GeneratorTag parse_generator_tag(std::string_view name);
std::string_view to_string(GeneratorTag tag);

/// MT19937 uniforms k / 2^32, filled point by point.
GridMatrix gen_pseudo(std::size_t n, std::size_t d, std::uint32_t seed);

/// Points 1..n of the Sobol sequence (Gray-code order, origin skipped).
/// Throws UnsupportedDimension beyond the shipped direction-number table.
GridMatrix gen_sobol(std::size_t n, std::size_t d);

/// Largest dimension covered by the embedded direction numbers.
std::size_t sobol_max_dim();

struct OptimalTrace {
  std::vector<double> objective;  // squared L2 star discrepancy: start, then after each sweep
};

/// Coordinate-descent minimisation of the Warnock objective starting from a
/// Sobol set clamped to [1/(4n), 1 - 1/(4n)].
GridMatrix gen_optimal(std::size_t n, std::size_t d, std::size_t iters, std::uint32_t seed,
                       OptimalTrace* trace = nullptr);

GridMatrix generate(std::size_t n, std::size_t d, const GeneratorKind& kind);

/// Exact L2 star discrepancy (Warnock), O(N^2 D).
double l2_star_discrepancy(const GridMatrix& grid);
double l2_star_discrepancy_squared(const Matrix& points);

/// CSV with one point per row, 17 significant digits.
void write_csv(std::ostream& out, const Matrix& points, bool header, std::string_view prefix = "y");

}  // namespace codefi::seq
