#pragma once

#include "codefi/matrix.hpp"
#include "codefi/payoff.hpp"
#include "codefi/prior.hpp"
#include "codefi/seq.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace codefi::calib {

/// (1/N) sum_n payoff(S^n(maturity)) = target
struct Constraint {
  Payoff payoff;
  double maturity = 0.0;
  double target = 0.0;
};

struct SolverOptions {
  double tolerance = 1e-8;        // max |residual_i| / max(1, |C_i|)
  double step_tolerance = 1e-10;  // inner step, relative to max(1, |S0|_F)
  double smoothing = 1e-4;        // softplus width relative to the strike
  double min_smoothing = 1e-12;
  double penalty_start = 1e4;
  double penalty_max = 1e6;
  int max_outer = 80;
  int max_inner = 40;
  int plateau_window = 5;
};

struct CalibrationResult {
  prior::SampleCloud prior;
  prior::SampleCloud cloud;
  std::vector<Constraint> constraints;
  std::vector<double> residuals;  // (1/N) sum P^i(S^n) - C_i with the exact payoffs
  std::vector<double> multipliers;
  bool converged = true;
  double objective = 0.0;  // |S - S0|_F
  int outer_iterations = 0;
};

/// Least-Frobenius-change projection of the prior cloud onto the constraints
/// (augmented Lagrangian; Newton inner steps that include the curvature of the
/// smoothed kinks). Infeasible sets return
/// converged = false with the least-squares compromise.
CalibrationResult calibrate_time_slice(const prior::SampleCloud& prior_cloud, std::span<const Constraint> constraints,
                                       const SolverOptions& options = {});

/// (1/N) sum_n P^i(S^n) - C_i, evaluated directly.
std::vector<double> constraint_residuals(const Matrix& cloud, std::span<const Constraint> constraints);

/// Expectation, variance and correlation constraints at maturity T. Centering
/// means and scales are the targets themselves (prior moments for missing means).
std::vector<Constraint> moment_constraints(const prior::PriorModel& prior, double maturity,
                                           const std::optional<std::vector<double>>& means,
                                           const std::optional<std::vector<double>>& variances,
                                           const std::optional<Matrix>& correlations);

/// D = 1 only: sort calibrated values along the grid order.
CalibrationResult rearrange_monotone(const CalibrationResult& result, const seq::GridMatrix& grid);

struct ArbitrageEntry {
  std::size_t index;
  std::string description;
  double target;
  double residual;
  double weight;  // |residual|
};

/// Constraints left unmatched by a non-converged calibration, largest first.
std::vector<ArbitrageEntry> detect_arbitrage(const CalibrationResult& result, double tol);

struct CalibratedSurface {
  std::vector<double> times;  // increasing
  std::vector<prior::SampleCloud> clouds;

  std::size_t index_of(double t) const;  // throws SpecificationError if absent
  const prior::SampleCloud& at(double t) const { return clouds[index_of(t)]; }
};

/// Row-wise interpolation of calibrated clouds in normalised score space,
/// linear in time, anchored at the prior shape as t -> 0.
CalibratedSurface bootstrap_surface(const prior::PriorModel& prior, const seq::GridMatrix& grid,
                                    std::span<const CalibrationResult> slices, std::span<const double> time_grid);

/// Splits constraints by maturity (ascending).
std::vector<std::vector<Constraint>> group_by_maturity(std::span<const Constraint> constraints);

}  // namespace codefi::calib
