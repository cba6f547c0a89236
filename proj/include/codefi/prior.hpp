#pragma once

#include "codefi/matrix.hpp"
#include "codefi/seq.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace codefi::prior {

double normal_cdf(double x);
double normal_pdf(double x);

/// Phi^{-1}(p): Wichura AS241 followed by one Newton step on erfc.
/// Throws DomainError unless 0 < p < 1.
double inverse_normal_cdf(double p);

enum class PriorKind { normal, lognormal };

/// Explicit prior measure: per-coordinate normal or log-normal marginals
/// driven by a correlated Brownian motion W with corr(W) = correlation.
class PriorModel {
 public:
  PriorModel(PriorKind kind, std::vector<double> vol, Matrix correlation, bool martingale,
             std::vector<double> initial);

  static PriorModel independent(PriorKind kind, std::size_t dim, double vol, bool martingale = true,
                                double initial = 1.0);

  PriorKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return vol_.size(); }
  const std::vector<double>& vol() const noexcept { return vol_; }
  const std::vector<double>& initial() const noexcept { return initial_; }
  const Matrix& correlation() const noexcept { return correlation_; }
  const Matrix& cholesky() const noexcept { return chol_; }
  bool martingale() const noexcept { return martingale_; }
  bool identity_correlation() const noexcept { return identity_; }

  /// Exact mean and variance of coordinate d at time t.
  double mean(std::size_t d, double t) const;
  double variance(std::size_t d, double t) const;

  /// y in (0,1)^D -> state space at time t.
  void quantile_map(double t, std::span<const double> y, std::span<double> x) const;
  std::vector<double> quantile_map(double t, std::span<const double> y) const;

  /// State x at time t -> whitened Brownian coordinate u = L^{-1} W_t.
  /// For the prior cloud u = sqrt(t) Phi^{-1}(y).
  void to_score(double t, std::span<const double> x, std::span<double> u) const;
  void from_score(double t, std::span<const double> u, std::span<double> x) const;

 private:
  PriorKind kind_;
  std::vector<double> vol_;
  Matrix correlation_;
  Matrix chol_;
  bool martingale_;
  std::vector<double> initial_;
  bool identity_ = true;
};

struct SampleCloud {
  double time = 0.0;
  Matrix points;  // row n is the image of grid row n

  std::size_t n_points() const noexcept { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }
};

SampleCloud sample_cloud(const PriorModel& prior, double t, const seq::GridMatrix& grid);

/// Whitened scores of every row of a cloud (N x D).
Matrix cloud_scores(const PriorModel& prior, const SampleCloud& cloud);

}  // namespace codefi::prior
