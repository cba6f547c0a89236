#include "codefi/calib.hpp"
#include "codefi/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace codefi::calib {
namespace {

struct Entry {
  std::uint32_t constraint;
  std::uint32_t coord;
  double value;
};

// Residuals and sparse Jacobian of g_i(S) = (1/N) sum_n P^i(S^n) - C_i.
class ConstraintSystem {
 public:
  ConstraintSystem(std::span<const Constraint> constraints, std::size_t n, std::size_t d)
      : constraints_(constraints), n_(n), d_(d), rows_(n), buckets_(d) {}

  std::size_t size() const { return constraints_.size(); }

  Vector residuals(const Matrix& x, double smoothing) const {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t n = 0; n < n_; ++n) {
      const auto row = row_span(x, n);
      for (std::size_t i = 0; i < size(); ++i) g[static_cast<Eigen::Index>(i)] += constraints_[i].payoff.smoothed(row, smoothing);
    }
    g /= static_cast<double>(n_);
    for (std::size_t i = 0; i < size(); ++i) {
      g[static_cast<Eigen::Index>(i)] -= constraints_[i].target;
      if (std::isnan(g[static_cast<Eigen::Index>(i)])) {
        throw EvaluationError("NaN while evaluating constraint " + std::to_string(i) + " (" +
                              constraints_[i].payoff.describe() + ")");
      }
    }
    return g;
  }

  void linearise(const Matrix& x, double smoothing) {
    std::vector<GradientEntry> grad;
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t n = 0; n < n_; ++n) {
      auto& entries = rows_[n];
      entries.clear();
      const auto row = row_span(x, n);
      for (std::size_t i = 0; i < size(); ++i) {
        grad.clear();
        constraints_[i].payoff.gradient(row, smoothing, grad);
        for (const auto& e : grad) {
          if (e.coord >= d_) throw SpecificationError("constraint reads coordinate beyond cloud dimension");
          entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(e.coord), e.value * inv_n});
        }
      }
    }
  }

  // y = J v, v flattened N x D.
  Vector apply(const Matrix& v) const {
    Vector y = Vector::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t n = 0; n < n_; ++n) {
      for (const auto& e : rows_[n]) y[e.constraint] += e.value * v(static_cast<Eigen::Index>(n), e.coord);
    }
    return y;
  }

  // out += J^T z
  void apply_transposed(const Vector& z, Matrix& out) const {
    for (std::size_t n = 0; n < n_; ++n) {
      for (const auto& e : rows_[n]) out(static_cast<Eigen::Index>(n), e.coord) += e.value * z[e.constraint];
    }
  }

  // sum_i mu_i d2 g_i / dS^2, diagonal part from the smoothed kinks; negative totals are dropped.
  Matrix curvature(const Matrix& x, double smoothing, const Vector& mu) const {
    Matrix h = Matrix::Zero(x.rows(), x.cols());
    if (smoothing <= 0.0) return h;
    std::vector<GradientEntry> entries;
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t n = 0; n < n_; ++n) {
      const auto row = row_span(x, n);
      for (std::size_t i = 0; i < size(); ++i) {
        entries.clear();
        constraints_[i].payoff.kink_curvature(row, smoothing, entries);
        for (const auto& e : entries) h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e.coord)) += mu[static_cast<Eigen::Index>(i)] * e.value * inv_n;
      }
    }
    return h.cwiseMax(0.0);
  }

  // J W J^T with W = diag(weights); only constraints sharing a coordinate interact.
  Matrix gram(const Matrix& weights) {
    const auto m = static_cast<Eigen::Index>(size());
    Matrix jj = Matrix::Zero(m, m);
    for (std::size_t n = 0; n < n_; ++n) {
      for (auto& b : buckets_) b.clear();
      for (const auto& e : rows_[n]) buckets_[e.coord].push_back({e.constraint, e.value});
      for (std::size_t c = 0; c < d_; ++c) {
        const auto& b = buckets_[c];
        const double w = weights(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
        for (std::size_t p = 0; p < b.size(); ++p) {
          for (std::size_t q = 0; q < b.size(); ++q) jj(b[p].first, b[q].first) += w * b[p].second * b[q].second;
        }
      }
    }
    return jj;
  }

 private:
  std::span<const Constraint> constraints_;
  std::size_t n_;
  std::size_t d_;
  std::vector<std::vector<Entry>> rows_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> buckets_;
};

double scaled_max(const Vector& g, std::span<const Constraint> constraints) {
  double worst = 0.0;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    worst = std::max(worst, std::abs(g[static_cast<Eigen::Index>(i)]) / std::max(1.0, std::abs(constraints[i].target)));
  }
  return worst;
}

}  // namespace

std::vector<double> constraint_residuals(const Matrix& cloud, std::span<const Constraint> constraints) {
  std::vector<double> out(constraints.size(), 0.0);
  const auto n = static_cast<std::size_t>(cloud.rows());
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) acc += constraints[i].payoff(row_span(cloud, r));
    out[i] = acc / static_cast<double>(n) - constraints[i].target;
  }
  return out;
}

CalibrationResult calibrate_time_slice(const prior::SampleCloud& prior_cloud, std::span<const Constraint> constraints,
                                       const SolverOptions& options) {
  CalibrationResult result;
  result.prior = prior_cloud;
  result.cloud = prior_cloud;
  result.constraints.assign(constraints.begin(), constraints.end());
  const std::size_t n = prior_cloud.n_points();
  const std::size_t d = prior_cloud.dim();
  if (constraints.empty()) return result;
  if (n * d < constraints.size()) {
    throw OverdeterminedError("calibration with " + std::to_string(constraints.size()) +
                              " constraints needs at least as many unknowns, got " + std::to_string(n) + " x " +
                              std::to_string(d));
  }

  const Matrix& x0 = prior_cloud.points;
  Matrix x = x0;
  ConstraintSystem system(constraints, n, d);
  const auto m = static_cast<Eigen::Index>(constraints.size());
  Vector lambda = Vector::Zero(m);
  double rho = options.penalty_start;
  double smoothing = options.smoothing;
  const double step_tol = options.step_tolerance * std::max(1.0, x0.norm());

  auto merit = [&](const Matrix& s, const Vector& g) {
    return 0.5 * (s - x0).squaredNorm() + lambda.dot(g) + 0.5 * rho * g.squaredNorm();
  };

  double best_residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  double previous = std::numeric_limits<double>::infinity();
  double last_step = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < options.max_outer; ++outer) {
    result.outer_iterations = outer + 1;
    for (int inner = 0; inner < options.max_inner; ++inner) {
      Vector g = system.residuals(x, smoothing);
      system.linearise(x, smoothing);
      const Vector mu = lambda + rho * g;
      Matrix grad = x - x0;
      system.apply_transposed(mu, grad);

      // Newton step on the augmented Lagrangian, (A + rho J^T J)^{-1} by Woodbury with A diagonal.
      const Matrix inv_a = (1.0 + system.curvature(x, smoothing, mu).array()).inverse().matrix();
      Matrix gram = system.gram(inv_a);
      gram.diagonal().array() += 1.0 / rho;
      Eigen::LDLT<Matrix> ldlt(gram);
      const Matrix scaled_grad = grad.cwiseProduct(inv_a);
      const Vector z = ldlt.solve(system.apply(scaled_grad));
      Matrix correction = Matrix::Zero(x.rows(), x.cols());
      system.apply_transposed(z, correction);
      const Matrix step = -scaled_grad + correction.cwiseProduct(inv_a);

      // Backtracking on the augmented Lagrangian.
      const double phi = merit(x, g);
      const double slope = (grad.array() * step.array()).sum();
      double alpha = 1.0;
      Matrix trial = x + step;
      while (alpha > 1e-8) {
        trial = x + alpha * step;
        const double phi_trial = merit(trial, system.residuals(trial, smoothing));
        if (phi_trial <= phi + 1e-4 * alpha * std::min(slope, 0.0) || slope >= 0.0) break;
        alpha *= 0.5;
      }
      x = trial;
      last_step = alpha * step.norm();
      if (last_step <= step_tol) break;
    }

    const Vector g_smooth = system.residuals(x, smoothing);
    const Vector g_exact = system.residuals(x, 0.0);
    const double exact_err = scaled_max(g_exact, constraints);
    const double smooth_err = scaled_max(g_smooth, constraints);
    if (exact_err <= options.tolerance && last_step <= step_tol) {
      result.converged = true;
      break;
    }
    result.converged = false;
    // Smoothed system solved but the kink bias remains: sharpen the payoffs.
    if (smooth_err <= options.tolerance && smoothing > options.min_smoothing) {
      smoothing = std::max(smoothing * 1e-2, options.min_smoothing);
      continue;
    }

    lambda += rho * g_smooth;
    const double norm = g_smooth.norm();
    if (norm > 0.25 * previous) rho = std::min(rho * 10.0, options.penalty_max);
    previous = norm;

    if (norm < best_residual * 0.99) {
      best_residual = norm;
      stalled = 0;
    } else if (rho >= options.penalty_max && ++stalled >= options.plateau_window) {
      break;
    }
  }

  result.cloud.points = x;
  result.residuals = constraint_residuals(x, constraints);
  result.multipliers.assign(lambda.data(), lambda.data() + lambda.size());
  result.objective = (x - x0).norm();
  if (result.converged) {
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      if (std::abs(result.residuals[i]) > options.tolerance * std::max(1.0, std::abs(constraints[i].target))) {
        result.converged = false;
      }
    }
  }
  return result;
}

std::vector<std::vector<Constraint>> group_by_maturity(std::span<const Constraint> constraints) {
  std::vector<Constraint> sorted(constraints.begin(), constraints.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Constraint& a, const Constraint& b) { return a.maturity < b.maturity; });
  std::vector<std::vector<Constraint>> groups;
  for (const auto& c : sorted) {
    if (c.maturity < 0.0) throw SpecificationError("constraint maturity must be nonnegative");
    if (groups.empty() || std::abs(groups.back().front().maturity - c.maturity) > 1e-12) groups.emplace_back();
    groups.back().push_back(c);
  }
  return groups;
}

}  // namespace codefi::calib
