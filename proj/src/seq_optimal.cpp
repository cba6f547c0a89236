#include "codefi/error.hpp"
#include "codefi/seq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace codefi::seq {
namespace {

// Q(n, m) = prod_d (1 - max(y_nd, y_md)), the Warnock pair terms.
Matrix pair_products(const Matrix& y) {
  const Eigen::Index count = y.rows();
  Matrix q(count, count);
#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < count; ++n) {
    for (Eigen::Index m = 0; m < count; ++m) {
      double prod = 1.0;
      for (Eigen::Index d = 0; d < y.cols(); ++d) prod *= 1.0 - std::max(y(n, d), y(m, d));
      q(n, m) = prod;
    }
  }
  return q;
}

struct Neighbour {
  double coord;
  double weight;
};

// Exact minimiser over [lo_bound, hi_bound] of the part of the Warnock
// objective that depends on one coordinate of one point:
//   f(y) = a y^2 - a + c (1 - y) + (2/N^2) sum_m B_m (1 - max(y, y_m)).
// f is a convex quadratic between consecutive y_m, so each segment is
// minimised in closed form.
struct CoordinateProblem {
  double a;
  double c;
  double pair_scale;  // 2 / N^2
  std::vector<Neighbour> others;  // sorted by coord

  double value(double y) const {
    double acc = a * y * y - a + c * (1.0 - y);
    for (const auto& o : others) acc += pair_scale * o.weight * (1.0 - std::max(y, o.coord));
    return acc;
  }

  std::pair<double, double> minimise(double lo_bound, double hi_bound) const {
    double below = 0.0;  // sum of B_m with y_m <= y
    double above = 0.0;  // sum of B_m (1 - y_m) with y_m > y
    for (const auto& o : others) above += o.weight * (1.0 - o.coord);

    double best_y = lo_bound;
    double best_f = value(lo_bound);
    std::size_t k = 0;
    double lo = lo_bound;
    while (true) {
      while (k < others.size() && others[k].coord <= lo) {
        below += others[k].weight;
        above -= others[k].weight * (1.0 - others[k].coord);
        ++k;
      }
      const double hi = k < others.size() ? std::min(others[k].coord, hi_bound) : hi_bound;
      const double y = std::clamp((c + pair_scale * below) / (2.0 * a), lo, hi);
      const double f = a * y * y - a + c * (1.0 - y) + pair_scale * ((1.0 - y) * below + above);
      if (f < best_f) {
        best_f = f;
        best_y = y;
      }
      if (hi >= hi_bound) break;
      lo = hi;
    }
    return {best_y, best_f};
  }
};

}  // namespace

GridMatrix gen_optimal(std::size_t n, std::size_t d, std::size_t iters, std::uint32_t seed, OptimalTrace* trace) {
  if (n < 2 || d < 1 || iters < 1) throw SpecificationError("gen_optimal requires n >= 2, d >= 1, iters >= 1");
  const double delta = 1.0 / (4.0 * static_cast<double>(n));
  Matrix y = gen_sobol(n, d).points();
  y = y.cwiseMax(delta).cwiseMin(1.0 - delta);

  const auto count = static_cast<Eigen::Index>(n);
  const auto dim = static_cast<Eigen::Index>(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double single_scale = std::pow(2.0, 1.0 - static_cast<double>(d)) * inv_n;

  if (trace) trace->objective.assign(1, l2_star_discrepancy_squared(y));

  std::mt19937 engine(seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  CoordinateProblem problem;
  problem.pair_scale = 2.0 * inv_n * inv_n;
  problem.others.resize(n - 1);

  for (std::size_t sweep = 0; sweep < iters; ++sweep) {
    Matrix q = pair_products(y);
    std::shuffle(order.begin(), order.end(), engine);
    for (Eigen::Index p : order) {
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double old = y(p, k);
        double rest_sq = 1.0, rest = 1.0;
        for (Eigen::Index j = 0; j < dim; ++j) {
          if (j == k) continue;
          rest_sq *= 1.0 - y(p, j) * y(p, j);
          rest *= 1.0 - y(p, j);
        }
        problem.a = single_scale * rest_sq;
        problem.c = rest * inv_n * inv_n;
        std::size_t i = 0;
        for (Eigen::Index m = 0; m < count; ++m) {
          if (m == p) continue;
          const double ym = y(m, k);
          problem.others[i++] = {ym, q(p, m) / (1.0 - std::max(old, ym))};
        }
        std::sort(problem.others.begin(), problem.others.end(),
                  [](const Neighbour& l, const Neighbour& r) { return l.coord < r.coord; });
        const double current = problem.value(old);
        const auto [best_y, best_f] = problem.minimise(delta, 1.0 - delta);
        if (!(best_f < current) || best_y == old) continue;

        for (Eigen::Index m = 0; m < count; ++m) {
          if (m == p) continue;
          const double ym = y(m, k);
          const double factor = (1.0 - std::max(best_y, ym)) / (1.0 - std::max(old, ym));
          q(p, m) *= factor;
          q(m, p) = q(p, m);
        }
        q(p, p) *= (1.0 - best_y) / (1.0 - old);
        y(p, k) = best_y;
      }
    }
    if (trace) trace->objective.push_back(l2_star_discrepancy_squared(y));
  }
  return GridMatrix(std::move(y));
}

}  // namespace codefi::seq
