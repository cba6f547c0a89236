#pragma once

#include "codefi/calib.hpp"
#include "codefi/matrix.hpp"
#include "codefi/prior.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

namespace codefi::markov {

/// Doubly-stochastic one-step transition. Row n is a node of the earlier
/// cloud (to_time), column m a node of the later cloud (from_time), so a
/// backward step reads P(to) = matrix * P(from).
struct TransitionMatrix {
  Matrix matrix;
  double from_time = 0.0;
  double to_time = 0.0;
  double row_tol = 0.0;  // max |row sum - 1|
  double col_tol = 0.0;  // max |column sum - 1|
  int iterations = 0;    // Sinkhorn sweeps
  int newton_steps = 0;
};

/// Row-normalised Gaussian kernel between score rows:
/// K(n, m) = exp(-|to_n - from_m|^2 / (2 h2)) / row sum.
/// Throws BandwidthError when every weight of a row underflows.
Matrix gaussian_kernel(const Matrix& to_scores, const Matrix& from_scores, double h2);

/// Kernel between two clouds in the prior's whitened score space, with
/// h2 = |from.time - to.time| unless overridden.
Matrix build_kernel(const prior::SampleCloud& from, const prior::SampleCloud& to, const prior::PriorModel& prior,
                    std::optional<double> bandwidth2 = std::nullopt);

/// Alternating row/column normalisation. `history`, when given, receives the
/// max row violation after each sweep (columns are exact after a sweep).
/// Throws ConvergenceError if max_iter is reached above 1e-6.
TransitionMatrix sinkhorn_project(const Matrix& kernel, double tol = 1e-10, int max_iter = 10000,
                                  std::vector<double>* history = nullptr);

struct BalanceOptions {
  double tol = 1e-10;
  int warmup_sweeps = 200;  // per hand-over attempt
  int max_sweeps = 10000;
  double warmup_tol = 1e-3;  // hand over to Newton below this row violation
  int max_newton = 100;     // Jacobian factorisations
  double newton_damping = 1e-11;
};

/// Sinkhorn warm-up followed by Newton steps on the row-scaling equations.
/// Reaches tight tolerances on nearly decomposable kernels where plain
/// Sinkhorn stalls. Throws ConvergenceError above 1e-8.
TransitionMatrix balance(const Matrix& kernel, const BalanceOptions& options = {});

TransitionMatrix build_transition(const prior::SampleCloud& from, const prior::SampleCloud& to,
                                  const prior::PriorModel& prior, const BalanceOptions& options = {});

/// Transition from surface time i to time i - 1.
TransitionMatrix build_transition(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                                  std::size_t i, const BalanceOptions& options = {});

/// Debug dump: "CDFM", u32 N, two u32 reserved, then N*N little-endian doubles.
void write_binary(std::ostream& out, const TransitionMatrix& transition);
Matrix read_binary(std::istream& in);

}  // namespace codefi::markov
