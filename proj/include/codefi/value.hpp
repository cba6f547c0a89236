#pragma once

#include "codefi/calib.hpp"
#include "codefi/markov.hpp"
#include "codefi/matrix.hpp"
#include "codefi/payoff.hpp"
#include "codefi/prior.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace codefi::value {

/// Exercise rule: P(s) <- max(P(s), exercise(S(s))) at the listed times.
struct Strategy {
  std::vector<Payoff> exercise;  // one per value column, or one shared by all
  std::vector<double> times;

  static Strategy at_times(Payoff exercise, std::vector<double> times);
  bool exercises_at(double t) const;
  const Payoff& payoff_for(std::size_t column) const;
};

struct ValueSurface {
  std::vector<double> times;  // decreasing, times[0] = maturity
  std::vector<prior::SampleCloud> clouds;
  std::vector<Matrix> values;  // N x M per time
  double max_row_tol = 0.0;
  double max_col_tol = 0.0;

  std::size_t n_points() const { return values.empty() ? 0 : static_cast<std::size_t>(values.front().rows()); }
  std::size_t n_columns() const { return values.empty() ? 0 : static_cast<std::size_t>(values.front().cols()); }
};

/// Descending schedule from maturity to t_min with uniform steps between
/// consecutive anchors (anchors inside (t_min, maturity) plus both ends).
std::vector<double> make_schedule(double maturity, std::span<const double> anchors, double steps_per_year = 12.0,
                                  double t_min = 6.0 / 365.0);

/// transitions[k] maps values at times[k] to times[k + 1].
std::vector<markov::TransitionMatrix> build_transitions(const calib::CalibratedSurface& surface,
                                                        const prior::PriorModel& prior, std::span<const double> times,
                                                        const markov::BalanceOptions& options = {});

ValueSurface backward_linear(const calib::CalibratedSurface& surface, std::span<const Payoff> terminal,
                             std::span<const double> times, std::span<const markov::TransitionMatrix> transitions);
ValueSurface backward_linear(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                             std::span<const Payoff> terminal, std::span<const double> times);

ValueSurface backward_optimal_stopping(const calib::CalibratedSurface& surface, std::span<const Payoff> terminal,
                                       const Strategy& strategy, std::span<const double> times,
                                       std::span<const markov::TransitionMatrix> transitions);
ValueSurface backward_optimal_stopping(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                                       std::span<const Payoff> terminal, const Strategy& strategy,
                                       std::span<const double> times);

/// Mean of the earliest slice.
double fair_value(const ValueSurface& vs, std::size_t column = 0);

/// Average gradient of P(t, .) over the cloud from k-NN weighted local
/// linear fits, k = min(2D + 4, N).
std::vector<double> hedge(const ValueSurface& vs, std::size_t time_index, std::size_t column = 0);

/// (1/N) sum of P(t, S^n) over nodes with P < alpha * mean(P).
double var_quantile(const ValueSurface& vs, std::size_t time_index, double alpha, std::size_t column = 0);

/// (t, mean of P^+) for every stored slice.
std::vector<std::pair<double, double>> cva_profile(const ValueSurface& vs, std::size_t column = 0);

struct ConservationRow {
  std::size_t constraint;
  double time;
  double value;
  double target;
  double deviation;
};

/// Column i of vs carries constraint i's payoff propagated backward; reports
/// its mean against the target at every stored time up to the maturity.
std::vector<ConservationRow> check_conservation(const ValueSurface& vs, std::span<const calib::Constraint> constraints);

}  // namespace codefi::value
