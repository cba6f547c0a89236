#include "codefi/calib.hpp"
#include "codefi/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace codefi::calib {

std::vector<Constraint> moment_constraints(const prior::PriorModel& prior, double maturity,
                                           const std::optional<std::vector<double>>& means,
                                           const std::optional<std::vector<double>>& variances,
                                           const std::optional<Matrix>& correlations) {
  const std::size_t dim = prior.dim();
  auto check = [dim](std::size_t size, const char* what) {
    if (size != dim) throw SpecificationError(std::string(what) + " targets must have dimension " + std::to_string(dim));
  };
  if (correlations && !variances) throw SpecificationError("correlation targets require variance targets");

  std::vector<double> centre(dim);
  for (std::size_t d = 0; d < dim; ++d) centre[d] = prior.mean(d, maturity);
  if (means) {
    check(means->size(), "mean");
    centre = *means;
  }

  std::vector<Constraint> out;
  if (means) {
    for (std::size_t d = 0; d < dim; ++d) {
      std::vector<double> w(d + 1, 0.0);
      w[d] = 1.0;
      out.push_back({Payoff::linear(std::move(w)), maturity, centre[d]});
    }
  }
  if (variances) {
    check(variances->size(), "variance");
    for (std::size_t d = 0; d < dim; ++d) {
      if (!((*variances)[d] > 0.0)) throw SpecificationError("variance targets must be positive");
      out.push_back({payoffs::Variance{d, centre[d]}, maturity, (*variances)[d]});
    }
  }
  if (correlations) {
    if (static_cast<std::size_t>(correlations->rows()) != dim || static_cast<std::size_t>(correlations->cols()) != dim) {
      throw SpecificationError("correlation targets must be " + std::to_string(dim) + "x" + std::to_string(dim));
    }
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = a + 1; b < dim; ++b) {
        const double scale = std::sqrt((*variances)[a] * (*variances)[b]);
        out.push_back({payoffs::Correlation{a, b, centre[a], centre[b], scale}, maturity,
                       (*correlations)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))});
      }
    }
  }
  return out;
}

CalibrationResult rearrange_monotone(const CalibrationResult& result, const seq::GridMatrix& grid) {
  if (result.cloud.dim() != 1 || grid.dim() != 1) {
    throw UnsupportedDimension("monotone rearrangement is only defined for D = 1");
  }
  const std::size_t n = grid.n_points();
  if (result.cloud.n_points() != n) throw SpecificationError("grid and cloud sizes differ");
  std::vector<std::size_t> by_grid(n);
  std::iota(by_grid.begin(), by_grid.end(), 0);
  std::stable_sort(by_grid.begin(), by_grid.end(), [&](std::size_t a, std::size_t b) { return grid(a, 0) < grid(b, 0); });
  std::vector<double> values(result.cloud.points.data(), result.cloud.points.data() + n);
  std::sort(values.begin(), values.end());

  CalibrationResult out = result;
  for (std::size_t k = 0; k < n; ++k) out.cloud.points(static_cast<Eigen::Index>(by_grid[k]), 0) = values[k];
  out.residuals = constraint_residuals(out.cloud.points, out.constraints);
  out.objective = (out.cloud.points - out.prior.points).norm();
  return out;
}

std::vector<ArbitrageEntry> detect_arbitrage(const CalibrationResult& result, double tol) {
  std::vector<ArbitrageEntry> report;
  if (result.converged) return report;
  for (std::size_t i = 0; i < result.constraints.size(); ++i) {
    const auto& c = result.constraints[i];
    const double r = result.residuals[i];
    if (std::abs(r) > tol * std::max(1.0, std::abs(c.target))) {
      report.push_back({i, c.payoff.describe(), c.target, r, std::abs(r)});
    }
  }
  std::stable_sort(report.begin(), report.end(),
                   [](const ArbitrageEntry& a, const ArbitrageEntry& b) { return a.weight > b.weight; });
  return report;
}

std::size_t CalibratedSurface::index_of(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return i;
  }
  throw SpecificationError("time " + std::to_string(t) + " is not on the calibrated surface");
}

CalibratedSurface bootstrap_surface(const prior::PriorModel& prior, const seq::GridMatrix& grid,
                                    std::span<const CalibrationResult> slices, std::span<const double> time_grid) {
  const std::size_t n = grid.n_points();
  const std::size_t dim = prior.dim();
  if (grid.dim() != dim) throw SpecificationError("grid dimension does not match prior");

  std::vector<const CalibrationResult*> ordered;
  for (const auto& s : slices) {
    if (s.cloud.n_points() != n || s.cloud.dim() != dim) throw SpecificationError("slice shape does not match grid");
    if (!(s.cloud.time > 0.0)) throw SpecificationError("calibrated maturities must be positive");
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const CalibrationResult* a, const CalibrationResult* b) { return a->cloud.time < b->cloud.time; });
  for (std::size_t k = 1; k < ordered.size(); ++k) {
    if (std::abs(ordered[k]->cloud.time - ordered[k - 1]->cloud.time) <= 1e-12) {
      throw SpecificationError("calibrated maturities must be distinct");
    }
  }

  // Normalised whitened scores: the prior shape z = Phi^{-1}(Y) and u(T)/sqrt(T) per slice.
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(dim);
  Matrix shape(rows, cols);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < dim; ++d) {
      shape(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = prior::inverse_normal_cdf(grid(r, d));
    }
  }
  std::vector<Matrix> anchors;
  for (const auto* s : ordered) anchors.push_back(prior::cloud_scores(prior, s->cloud) / std::sqrt(s->cloud.time));

  for (std::size_t i = 1; i < time_grid.size(); ++i) {
    if (!(time_grid[i] > time_grid[i - 1])) throw SpecificationError("time grid must be increasing");
  }

  CalibratedSurface surface;
  std::vector<double> u(dim);
  for (double t : time_grid) {
    if (t < 0.0) throw SpecificationError("negative time in time grid");
    prior::SampleCloud cloud{t, Matrix(rows, cols)};
    surface.times.push_back(t);

    auto exact = std::find_if(ordered.begin(), ordered.end(),
                              [t](const CalibrationResult* s) { return std::abs(s->cloud.time - t) <= 1e-14; });
    if (exact != ordered.end()) {
      cloud.points = (*exact)->cloud.points;
      surface.clouds.push_back(std::move(cloud));
      continue;
    }
    if (t == 0.0) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < dim; ++d) cloud.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = prior.initial()[d];
      }
      surface.clouds.push_back(std::move(cloud));
      continue;
    }

    Matrix g;
    if (ordered.empty()) {
      g = shape;
    } else if (t <= ordered.front()->cloud.time) {
      const double w = t / ordered.front()->cloud.time;
      g = (1.0 - w) * shape + w * anchors.front();
    } else if (t >= ordered.back()->cloud.time) {
      g = anchors.back();
    } else {
      std::size_t k = 0;
      while (ordered[k + 1]->cloud.time < t) ++k;
      const double t0 = ordered[k]->cloud.time;
      const double t1 = ordered[k + 1]->cloud.time;
      const double w = (t - t0) / (t1 - t0);
      g = (1.0 - w) * anchors[k] + w * anchors[k + 1];
    }
    const double st = std::sqrt(t);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t d = 0; d < dim; ++d) u[d] = st * g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d));
      prior.from_score(t, u, row_span(cloud.points, r));
    }
    surface.clouds.push_back(std::move(cloud));
  }
  return surface;
}

}  // namespace codefi::calib
