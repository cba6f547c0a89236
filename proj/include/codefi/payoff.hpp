#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace codefi {

namespace payoffs {

struct Call {
  std::size_t coord = 0;
  double strike = 0.0;
};
struct Put {
  std::size_t coord = 0;
  double strike = 0.0;
};
// weights . x + offset
struct Linear {
  std::vector<double> weights;
  double offset = 0.0;
};
// (max_d |x_d| - strike)^+
struct BestOf {
  double strike = 0.0;
};
// (x_coord - mean)^2
struct Variance {
  std::size_t coord = 0;
  double mean = 0.0;
};
// (x_first - mean_first)(x_second - mean_second) / scale
struct Correlation {
  std::size_t first = 0;
  std::size_t second = 1;
  double mean_first = 0.0;
  double mean_second = 0.0;
  double scale = 1.0;
};
// Piecewise-linear function of one coordinate, flat outside the knots.
struct Table {
  std::size_t coord = 0;
  std::vector<double> knots;
  std::vector<double> values;
};
struct Constant {
  double value = 0.0;
};

}  // namespace payoffs

struct GradientEntry {
  std::size_t coord;
  double value;
};

class Payoff {
 public:
  using Variant = std::variant<payoffs::Call, payoffs::Put, payoffs::Linear, payoffs::BestOf, payoffs::Variance,
                               payoffs::Correlation, payoffs::Table, payoffs::Constant>;

  Payoff() : impl_(payoffs::Constant{}) {}
  Payoff(Variant impl);  // NOLINT(google-explicit-constructor)
  template <class T>
    requires(!std::is_same_v<std::decay_t<T>, Variant> && !std::is_same_v<std::decay_t<T>, Payoff> &&
             std::is_constructible_v<Variant, T>)
  Payoff(T&& alternative)  // NOLINT(google-explicit-constructor)
      : Payoff(Variant(std::forward<T>(alternative))) {}

  static Payoff call(double strike, std::size_t coord = 0) { return payoffs::Call{coord, strike}; }
  static Payoff put(double strike, std::size_t coord = 0) { return payoffs::Put{coord, strike}; }
  static Payoff linear(std::vector<double> weights, double offset = 0.0) {
    return payoffs::Linear{std::move(weights), offset};
  }
  static Payoff best_of(double strike) { return payoffs::BestOf{strike}; }
  static Payoff constant(double value) { return payoffs::Constant{value}; }

  /// Exact payoff.
  double operator()(std::span<const double> x) const;

  /// Kinks of call, put and best-of replaced by eps * softplus(z / eps) with
  /// eps = smoothing * max(|strike|, 1e-12). Other payoffs are unchanged.
  double smoothed(std::span<const double> x, double smoothing) const;

  /// Gradient of smoothed(); appends the nonzero entries to out.
  void gradient(std::span<const double> x, double smoothing, std::vector<GradientEntry>& out) const;

  /// Diagonal second derivative of smoothed() at the kink of call, put and
  /// best-of; appends nothing for the other payoffs.
  void kink_curvature(std::span<const double> x, double smoothing, std::vector<GradientEntry>& out) const;

  /// True when the payoff is affine in x (smoothing is irrelevant).
  bool is_affine() const;
  /// True when smoothing changes the payoff.
  bool has_kink() const;

  /// Largest coordinate index read, or -1 for payoffs reading every coordinate.
  long max_coord() const;

  std::string describe() const;
  const Variant& variant() const noexcept { return impl_; }

 private:
  Variant impl_;
};

}  // namespace codefi
