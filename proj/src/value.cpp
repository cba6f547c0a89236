#include "codefi/value.hpp"

#include "codefi/error.hpp"
#include "codefi/kernels.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace codefi::value {
namespace {

constexpr double kTimeTol = 1e-9;

bool same_time(double a, double b) { return std::abs(a - b) <= kTimeTol * std::max(1.0, std::abs(b)); }

void check_schedule(std::span<const double> times) {
  if (times.empty()) throw SpecificationError("empty valuation schedule");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] < times[k - 1])) throw SpecificationError("valuation schedule must be strictly decreasing");
  }
  if (!(times.back() > 0.0)) throw SpecificationError("valuation schedule must stay at positive times");
}

Matrix evaluate(std::span<const Payoff> payoffs, const Matrix& cloud) {
  Matrix out(cloud.rows(), static_cast<Eigen::Index>(payoffs.size()));
  for (Eigen::Index n = 0; n < cloud.rows(); ++n) {
    const auto x = row_span(cloud, n);
    for (std::size_t j = 0; j < payoffs.size(); ++j) out(n, static_cast<Eigen::Index>(j)) = payoffs[j](x);
  }
  return out;
}

ValueSurface run_backward(const calib::CalibratedSurface& surface, std::span<const Payoff> terminal,
                          const Strategy* strategy, std::span<const double> times,
                          std::span<const markov::TransitionMatrix> transitions) {
  check_schedule(times);
  if (terminal.empty()) throw SpecificationError("no terminal payoff");
  if (transitions.size() + 1 != times.size()) throw SpecificationError("need one transition per schedule step");
  if (strategy) {
    if (strategy->exercise.size() != 1 && strategy->exercise.size() != terminal.size()) {
      throw SpecificationError("strategy needs one exercise payoff or one per column");
    }
    for (double t : strategy->times) {
      if (std::none_of(times.begin(), times.end(), [&](double s) { return same_time(s, t); })) {
        throw SpecificationError("exercise time " + std::to_string(t) + " is not on the valuation schedule");
      }
    }
  }

  ValueSurface vs;
  vs.times.assign(times.begin(), times.end());
  vs.clouds.reserve(times.size());
  vs.values.reserve(times.size());
  for (double t : times) vs.clouds.push_back(surface.at(t));

  vs.values.push_back(evaluate(terminal, vs.clouds.front().points));
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const auto& pi = transitions[k];
    if (!same_time(pi.from_time, times[k]) || !same_time(pi.to_time, times[k + 1])) {
      throw SpecificationError("transition times do not match the schedule");
    }
    vs.max_row_tol = std::max(vs.max_row_tol, pi.row_tol);
    vs.max_col_tol = std::max(vs.max_col_tol, pi.col_tol);
    Matrix next;
    kernels::parallel::matmul(pi.matrix, vs.values.back(), next);
    if (strategy && strategy->exercises_at(times[k + 1])) {
      const Matrix& cloud = vs.clouds[k + 1].points;
      for (Eigen::Index n = 0; n < next.rows(); ++n) {
        const auto x = row_span(cloud, n);
        for (Eigen::Index j = 0; j < next.cols(); ++j) {
          next(n, j) = std::max(next(n, j), strategy->payoff_for(static_cast<std::size_t>(j))(x));
        }
      }
    }
    vs.values.push_back(std::move(next));
  }
  return vs;
}

void check_slice(const ValueSurface& vs, std::size_t time_index, std::size_t column) {
  if (time_index >= vs.values.size()) throw SpecificationError("time index out of range");
  if (column >= vs.n_columns()) throw SpecificationError("value column out of range");
}

}  // namespace

Strategy Strategy::at_times(Payoff exercise, std::vector<double> times) {
  return Strategy{{std::move(exercise)}, std::move(times)};
}

bool Strategy::exercises_at(double t) const {
  return std::any_of(times.begin(), times.end(), [&](double s) { return same_time(s, t); });
}

const Payoff& Strategy::payoff_for(std::size_t column) const {
  return exercise.size() == 1 ? exercise.front() : exercise.at(column);
}

std::vector<double> make_schedule(double maturity, std::span<const double> anchors, double steps_per_year,
                                  double t_min) {
  if (!(t_min > 0.0) || !(maturity > t_min)) throw SpecificationError("schedule needs 0 < t_min < maturity");
  if (!(steps_per_year > 0.0)) throw SpecificationError("steps per year must be positive");
  std::vector<double> knots{t_min, maturity};
  for (double a : anchors) {
    if (a > t_min && a < maturity) knots.push_back(a);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end(), [](double a, double b) { return same_time(a, b); }),
              knots.end());

  std::vector<double> out{maturity};
  for (std::size_t k = knots.size() - 1; k > 0; --k) {
    const double hi = knots[k];
    const double lo = knots[k - 1];
    const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) * steps_per_year - 1e-9)));
    for (int s = 1; s <= steps; ++s) out.push_back(s == steps ? lo : hi - (hi - lo) * s / steps);
  }
  return out;
}

std::vector<markov::TransitionMatrix> build_transitions(const calib::CalibratedSurface& surface,
                                                        const prior::PriorModel& prior, std::span<const double> times,
                                                        const markov::BalanceOptions& options) {
  check_schedule(times);
  std::vector<markov::TransitionMatrix> out;
  out.reserve(times.size() - 1);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    out.push_back(markov::build_transition(surface.at(times[k]), surface.at(times[k + 1]), prior, options));
  }
  return out;
}

ValueSurface backward_linear(const calib::CalibratedSurface& surface, std::span<const Payoff> terminal,
                             std::span<const double> times, std::span<const markov::TransitionMatrix> transitions) {
  return run_backward(surface, terminal, nullptr, times, transitions);
}

ValueSurface backward_linear(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                             std::span<const Payoff> terminal, std::span<const double> times) {
  const auto transitions = build_transitions(surface, prior, times);
  return run_backward(surface, terminal, nullptr, times, transitions);
}

ValueSurface backward_optimal_stopping(const calib::CalibratedSurface& surface, std::span<const Payoff> terminal,
                                       const Strategy& strategy, std::span<const double> times,
                                       std::span<const markov::TransitionMatrix> transitions) {
  return run_backward(surface, terminal, &strategy, times, transitions);
}

ValueSurface backward_optimal_stopping(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                                       std::span<const Payoff> terminal, const Strategy& strategy,
                                       std::span<const double> times) {
  const auto transitions = build_transitions(surface, prior, times);
  return run_backward(surface, terminal, &strategy, times, transitions);
}

double fair_value(const ValueSurface& vs, std::size_t column) {
  if (vs.values.empty()) throw SpecificationError("empty value surface");
  check_slice(vs, vs.values.size() - 1, column);
  return vs.values.back().col(static_cast<Eigen::Index>(column)).mean();
}

std::vector<double> hedge(const ValueSurface& vs, std::size_t time_index, std::size_t column) {
  check_slice(vs, time_index, column);
  const Matrix& x = vs.clouds[time_index].points;
  const auto p = vs.values[time_index].col(static_cast<Eigen::Index>(column));
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n <= d + 1) throw SpecificationError("hedge needs more than D + 1 points");
  const Eigen::Index k = std::min<Eigen::Index>(2 * d + 4, n);

  Vector total = Vector::Zero(d);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  Vector dist2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist2 = (x.rowwise() - x.row(i)).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return dist2[a] < dist2[b] || (dist2[a] == dist2[b] && a < b);
    });
    const double radius = std::sqrt(dist2[order[static_cast<std::size_t>(k - 1)]]);
    if (!(radius > 0.0)) throw StencilError("degenerate stencil at node " + std::to_string(i), static_cast<std::size_t>(i));
    const double reach = radius * 1.01;

    Matrix a(k, d + 1);
    Vector b(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      const Eigen::Index m = order[static_cast<std::size_t>(r)];
      const double q = std::sqrt(dist2[m]) / reach;
      const double w = std::sqrt(std::pow(1.0 - q * q * q, 3));
      a(r, 0) = w;
      a.row(r).tail(d) = w * (x.row(m) - x.row(i)) / radius;
      b[r] = w * p[m];
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < d + 1) {
      throw StencilError("rank-deficient regression stencil at node " + std::to_string(i), static_cast<std::size_t>(i));
    }
    const Vector beta = qr.solve(b);
    total += beta.tail(d) / radius;
  }
  total /= static_cast<double>(n);
  return {total.data(), total.data() + total.size()};
}

double var_quantile(const ValueSurface& vs, std::size_t time_index, double alpha, std::size_t column) {
  check_slice(vs, time_index, column);
  const auto p = vs.values[time_index].col(static_cast<Eigen::Index>(column));
  const double level = alpha * p.mean();
  double sum = 0.0;
  for (Eigen::Index n = 0; n < p.size(); ++n) {
    if (p[n] < level) sum += p[n];
  }
  return sum / static_cast<double>(p.size());
}

std::vector<std::pair<double, double>> cva_profile(const ValueSurface& vs, std::size_t column) {
  std::vector<std::pair<double, double>> out;
  out.reserve(vs.values.size());
  for (std::size_t k = 0; k < vs.values.size(); ++k) {
    check_slice(vs, k, column);
    out.emplace_back(vs.times[k], vs.values[k].col(static_cast<Eigen::Index>(column)).cwiseMax(0.0).mean());
  }
  return out;
}

std::vector<ConservationRow> check_conservation(const ValueSurface& vs, std::span<const calib::Constraint> constraints) {
  std::vector<ConservationRow> out;
  if (constraints.empty()) return out;
  if (vs.n_columns() != constraints.size()) throw SpecificationError("need one value column per constraint");
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const auto& c = constraints[i];
    for (std::size_t k = 0; k < vs.times.size(); ++k) {
      if (vs.times[k] > c.maturity + kTimeTol * std::max(1.0, c.maturity)) continue;
      const double v = vs.values[k].col(static_cast<Eigen::Index>(i)).mean();
      out.push_back({i, vs.times[k], v, c.target, v - c.target});
    }
  }
  return out;
}

}  // namespace codefi::value
