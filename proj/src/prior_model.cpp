#include "codefi/error.hpp"
#include "codefi/prior.hpp"

#include <cmath>
#include <string>

namespace codefi::prior {

PriorModel::PriorModel(PriorKind kind, std::vector<double> vol, Matrix correlation, bool martingale,
                       std::vector<double> initial)
    : kind_(kind), vol_(std::move(vol)), correlation_(std::move(correlation)), martingale_(martingale),
      initial_(std::move(initial)) {
  const auto dim = static_cast<Eigen::Index>(vol_.size());
  if (dim == 0) throw SpecificationError("prior dimension must be at least 1");
  if (initial_.empty()) initial_.assign(vol_.size(), 1.0);
  if (initial_.size() != vol_.size()) throw SpecificationError("prior initial has wrong length");
  if (correlation_.size() == 0) correlation_ = Matrix::Identity(dim, dim);
  if (correlation_.rows() != dim || correlation_.cols() != dim) throw SpecificationError("correlation has wrong shape");
  for (double v : vol_) {
    if (!(v > 0.0)) throw SpecificationError("prior vol entries must be strictly positive");
  }
  if (kind_ == PriorKind::lognormal) {
    for (double x0 : initial_) {
      if (!(x0 > 0.0)) throw SpecificationError("lognormal prior needs positive initial values");
    }
  }
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (std::abs(correlation_(i, i) - 1.0) > 1e-12) throw SpecificationError("correlation diagonal must be 1");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(correlation_(i, j) - correlation_(j, i)) > 1e-12) {
        throw SpecificationError("correlation must be symmetric");
      }
      if (correlation_(i, j) != 0.0) identity_ = false;
    }
  }
  Eigen::LLT<Matrix> llt(correlation_);
  if (llt.info() != Eigen::Success) throw SpecificationError("correlation is not positive definite");
  chol_ = llt.matrixL();
}

PriorModel PriorModel::independent(PriorKind kind, std::size_t dim, double vol, bool martingale, double initial) {
  return PriorModel(kind, std::vector<double>(dim, vol), Matrix(), martingale, std::vector<double>(dim, initial));
}

double PriorModel::mean(std::size_t d, double t) const {
  if (kind_ == PriorKind::normal || martingale_) return initial_[d];
  return initial_[d] * std::exp(0.5 * vol_[d] * vol_[d] * t);
}

double PriorModel::variance(std::size_t d, double t) const {
  const double s2 = vol_[d] * vol_[d] * t;
  if (kind_ == PriorKind::normal) return s2;
  const double m = mean(d, t);
  return m * m * std::expm1(s2);
}

void PriorModel::quantile_map(double t, std::span<const double> y, std::span<double> x) const {
  if (y.size() != dim() || x.size() != dim()) throw SpecificationError("quantile_map: dimension mismatch");
  if (t < 0.0) throw DomainError("quantile_map: negative time");
  std::vector<double> z(dim());
  for (std::size_t d = 0; d < dim(); ++d) z[d] = inverse_normal_cdf(y[d]);
  const double st = std::sqrt(t);
  for (std::size_t d = 0; d < dim(); ++d) z[d] *= st;
  // u = sqrt(t) z is the whitened score; map back through the correlation.
  from_score(t, z, x);
}

std::vector<double> PriorModel::quantile_map(double t, std::span<const double> y) const {
  std::vector<double> x(dim());
  quantile_map(t, y, x);
  return x;
}

void PriorModel::to_score(double t, std::span<const double> x, std::span<double> u) const {
  const std::size_t n = dim();
  Vector w(static_cast<Eigen::Index>(n));
  for (std::size_t d = 0; d < n; ++d) {
    if (kind_ == PriorKind::normal) {
      w[static_cast<Eigen::Index>(d)] = (x[d] - initial_[d]) / vol_[d];
    } else {
      if (!(x[d] > 0.0)) throw DomainError("lognormal score of a non-positive state");
      const double drift = martingale_ ? 0.5 * vol_[d] * vol_[d] * t : 0.0;
      w[static_cast<Eigen::Index>(d)] = (std::log(x[d] / initial_[d]) + drift) / vol_[d];
    }
  }
  if (!identity_) w = chol_.triangularView<Eigen::Lower>().solve(w);
  for (std::size_t d = 0; d < n; ++d) u[d] = w[static_cast<Eigen::Index>(d)];
}

void PriorModel::from_score(double t, std::span<const double> u, std::span<double> x) const {
  const std::size_t n = dim();
  Vector w = Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(n));
  if (!identity_) w = chol_.triangularView<Eigen::Lower>() * w;
  for (std::size_t d = 0; d < n; ++d) {
    const double wd = w[static_cast<Eigen::Index>(d)];
    if (kind_ == PriorKind::normal) {
      x[d] = initial_[d] + vol_[d] * wd;
    } else {
      const double drift = martingale_ ? 0.5 * vol_[d] * vol_[d] * t : 0.0;
      x[d] = initial_[d] * std::exp(vol_[d] * wd - drift);
    }
  }
}

SampleCloud sample_cloud(const PriorModel& prior, double t, const seq::GridMatrix& grid) {
  if (grid.dim() != prior.dim()) throw SpecificationError("grid dimension does not match prior dimension");
  SampleCloud cloud{t, Matrix(static_cast<Eigen::Index>(grid.n_points()), static_cast<Eigen::Index>(grid.dim()))};
  for (std::size_t n = 0; n < grid.n_points(); ++n) prior.quantile_map(t, grid.row(n), row_span(cloud.points, n));
  return cloud;
}

Matrix cloud_scores(const PriorModel& prior, const SampleCloud& cloud) {
  Matrix scores(cloud.points.rows(), cloud.points.cols());
  for (std::size_t n = 0; n < cloud.n_points(); ++n) {
    prior.to_score(cloud.time, row_span(cloud.points, n), row_span(scores, n));
  }
  return scores;
}

}  // namespace codefi::prior
