#include "codefi/error.hpp"
#include "codefi/kernels.hpp"
#include "codefi/seq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace codefi::seq {

GridMatrix::GridMatrix(Matrix points) : points_(std::move(points)) {
  if (points_.rows() == 0 || points_.cols() == 0) throw SpecificationError("grid must have at least one point and one dimension");
  for (Eigen::Index i = 0; i < points_.size(); ++i) {
    const double v = points_.data()[i];
    if (!(v >= 0.0 && v < 1.0)) throw DomainError("grid entry outside [0,1)");
  }
  std::vector<std::size_t> order(n_points());
  std::iota(order.begin(), order.end(), 0);
  auto less = [this](std::size_t a, std::size_t b) {
    auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    auto ra = row(order[i - 1]), rb = row(order[i]);
    if (std::equal(ra.begin(), ra.end(), rb.begin())) throw SpecificationError("grid contains duplicate points");
  }
}

GeneratorTag parse_generator_tag(std::string_view name) {
  if (name == "pseudo" || name == "pseudo-random" || name == "pseudo_random" || name == "mt19937") return GeneratorTag::pseudo_random;
  if (name == "sobol") return GeneratorTag::sobol;
  if (name == "optimal" || name == "optimal-discrepancy") return GeneratorTag::optimal_discrepancy;
  throw SpecificationError("unknown generator kind '" + std::string(name) + "'");
}

std::string_view to_string(GeneratorTag tag) {
  switch (tag) {
    case GeneratorTag::pseudo_random: return "pseudo";
    case GeneratorTag::sobol: return "sobol";
    case GeneratorTag::optimal_discrepancy: return "optimal";
  }
  return "?";
}

GridMatrix gen_pseudo(std::size_t n, std::size_t d, std::uint32_t seed) {
  if (n < 1 || d < 1) throw SpecificationError("gen_pseudo requires n >= 1 and d >= 1");
  std::mt19937 engine(seed);
  Matrix points(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  constexpr double scale = 1.0 / 4294967296.0;
  for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = static_cast<double>(engine()) * scale;
  return GridMatrix(std::move(points));
}

GridMatrix generate(std::size_t n, std::size_t d, const GeneratorKind& kind) {
  switch (kind.tag) {
    case GeneratorTag::pseudo_random: return gen_pseudo(n, d, kind.seed);
    case GeneratorTag::sobol: return gen_sobol(n, d);
    case GeneratorTag::optimal_discrepancy: return gen_optimal(n, d, kind.iterations, kind.seed);
  }
  throw SpecificationError("unknown generator");
}

double l2_star_discrepancy_squared(const Matrix& points) {
  const auto count = static_cast<double>(points.rows());
  const auto dim = static_cast<int>(points.cols());
  double single = 0.0;
  for (Eigen::Index n = 0; n < points.rows(); ++n) {
    double prod = 1.0;
    for (Eigen::Index d = 0; d < points.cols(); ++d) prod *= 1.0 - points(n, d) * points(n, d);
    single += prod;
  }
  const double pairs = kernels::parallel::warnock_pair_sum(points);
  const double value = std::pow(3.0, -dim) - std::pow(2.0, 1 - dim) / count * single + pairs / (count * count);
  return std::max(value, 0.0);
}

double l2_star_discrepancy(const GridMatrix& grid) { return std::sqrt(l2_star_discrepancy_squared(grid.points())); }

void write_csv(std::ostream& out, const Matrix& points, bool header, std::string_view prefix) {
  if (header) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) out << (d ? "," : "") << prefix << (d + 1);
    out << '\n';
  }
  const auto old_precision = out.precision(17);
  for (Eigen::Index n = 0; n < points.rows(); ++n) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) out << (d ? "," : "") << points(n, d);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace codefi::seq
