#include "codefi/error.hpp"
#include "codefi/kernels.hpp"
#include "codefi/markov.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <istream>
#include <ostream>

namespace codefi::markov {
namespace {

std::pair<double, double> stochasticity(const Matrix& p) {
  const Vector rows = p.rowwise().sum();
  const Vector cols = p.colwise().sum().transpose();
  return {(rows.array() - 1.0).abs().maxCoeff(), (cols.array() - 1.0).abs().maxCoeff()};
}

Matrix scaled(const Matrix& kernel, const Vector& u, const Vector& v) {
  return u.asDiagonal() * kernel * v.asDiagonal();
}

std::string format_error(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", e);
  return buf;
}

std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void check_support(const Matrix& kernel) {
  if (kernel.rows() != kernel.cols() || kernel.rows() == 0) throw SpecificationError("kernel must be square and nonempty");
  if ((kernel.array() < 0.0).any()) throw SpecificationError("kernel has negative entries");
  const Vector rows = kernel.rowwise().sum();
  const Vector cols = kernel.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < rows.size(); ++i) {
    if (!(rows[i] > 0.0)) throw SpecificationError("kernel row " + std::to_string(i) + " is all zero");
    if (!(cols[i] > 0.0)) throw SpecificationError("kernel column " + std::to_string(i) + " is all zero");
  }
}

struct Scaling {
  Vector u;
  Vector v;
  int sweeps = 0;
  double row_error = 0.0;
};

Scaling initial_scaling(const Matrix& kernel, const Matrix& kernel_t) {
  const Eigen::Index n = kernel.rows();
  Scaling s{Vector::Ones(n), Vector::Ones(n), 0, 0.0};
  Vector kv(n), ktu(n);
  kernels::parallel::matvec(kernel, view(s.v), view(kv));
  kernels::parallel::matvec(kernel_t, view(s.u), view(ktu));
  s.row_error = std::max((kv.array() - 1.0).abs().maxCoeff(), (ktu.array() - 1.0).abs().maxCoeff());
  return s;
}

// Sinkhorn sweeps continuing from s; stops at tol or after max_iter more sweeps.
void sinkhorn_sweeps(const Matrix& kernel, const Matrix& kernel_t, double tol, int max_iter, Scaling& s,
                     std::vector<double>* history) {
  if (s.row_error <= tol) return;
  const Eigen::Index n = kernel.rows();
  Vector kv(n), ktu(n);
  kernels::parallel::matvec(kernel, view(s.v), view(kv));
  for (int it = 1; it <= max_iter; ++it) {
    s.u = kv.cwiseInverse();
    kernels::parallel::matvec(kernel_t, view(s.u), view(ktu));
    s.v = ktu.cwiseInverse();
    kernels::parallel::matvec(kernel, view(s.v), view(kv));
    s.row_error = (s.u.array() * kv.array() - 1.0).abs().maxCoeff();
    ++s.sweeps;
    if (history) history->push_back(s.row_error);
    if (s.row_error <= tol) break;
  }
}

// Newton on a = log u for F(a) = rows(P) - 1, with v = 1 / (K^T u) eliminated
// so columns stay exact. dF/da = diag(r) - P P^T; the factorisation is reused
// while steps keep contracting fast (chord iteration). Returns the number of
// factorisations.
int newton_polish(const Matrix& kernel, const Matrix& kernel_t, const BalanceOptions& options, int max_factors,
                  Scaling& s) {
  const Eigen::Index n = kernel.rows();
  Vector ktu(n), kv(n);
  auto residual = [&](const Vector& uu, Vector& vv, Vector& r) {
    kernels::parallel::matvec(kernel_t, view(uu), view(ktu));
    vv = ktu.cwiseInverse();
    kernels::parallel::matvec(kernel, view(vv), view(kv));
    r = uu.cwiseProduct(kv);
    return (r.array() - 1.0).abs().maxCoeff();
  };
  Vector u = s.u;
  Vector v, r;
  double err = residual(u, v, r);

  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  bool have_factor = false;
  bool use_llt = true;
  bool fresh = false;
  int factors = 0;
  for (int step = 0; step < 4 * max_factors && err > options.tol; ++step) {
    if (!have_factor) {
      if (factors == max_factors) break;
      // Columns of P sum to one, so diag(r) - P P^T is positive semidefinite.
      const Matrix p = scaled(kernel, u, v);
      Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
      jac.selfadjointView<Eigen::Lower>().rankUpdate(p, -1.0);
      jac.diagonal() += r;
      jac.diagonal().array() += options.newton_damping;
      llt.compute(jac);
      use_llt = llt.info() == Eigen::Success;
      if (!use_llt) ldlt.compute(Eigen::MatrixXd(jac.selfadjointView<Eigen::Lower>()));
      have_factor = true;
      fresh = true;
      ++factors;
    }
    const Vector rhs = Vector::Ones(n) - r;
    const Vector delta = use_llt ? Vector(llt.solve(rhs)) : Vector(ldlt.solve(rhs));
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-6) {
      Vector trial_u = u.array() * (alpha * delta.array()).exp();
      Vector trial_v, trial_r;
      const double trial_err = residual(trial_u, trial_v, trial_r);
      if (std::isfinite(trial_err) && trial_err < (1.0 - 1e-4 * alpha) * err) {
        if (alpha < 1.0 || trial_err > 0.25 * err) have_factor = false;
        u = std::move(trial_u);
        v = std::move(trial_v);
        r = std::move(trial_r);
        err = trial_err;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (fresh) break;
      have_factor = false;
    }
    fresh = false;
  }
  if (err < s.row_error) {
    s.u = std::move(u);
    s.v = std::move(v);
    s.row_error = err;
  }
  return factors;
}

}  // namespace

Matrix gaussian_kernel(const Matrix& to_scores, const Matrix& from_scores, double h2) {
  if (!(h2 > 0.0)) throw SpecificationError("kernel bandwidth must be positive");
  if (to_scores.cols() != from_scores.cols()) throw SpecificationError("score dimension mismatch");
  Matrix k;
  kernels::parallel::gaussian_kernel(to_scores, from_scores, h2, k);
  for (Eigen::Index n = 0; n < k.rows(); ++n) {
    const double sum = k.row(n).sum();
    if (!(sum > 0.0)) {
      throw BandwidthError("kernel row " + std::to_string(n) + " underflows: bandwidth too small", static_cast<std::size_t>(n));
    }
    k.row(n) /= sum;
  }
  return k;
}

Matrix build_kernel(const prior::SampleCloud& from, const prior::SampleCloud& to, const prior::PriorModel& prior,
                    std::optional<double> bandwidth2) {
  if (from.n_points() != to.n_points() || from.dim() != to.dim()) throw SpecificationError("clouds differ in shape");
  double h2 = 0.0;
  if (bandwidth2) {
    h2 = *bandwidth2;
  } else {
    const double dt = std::abs(from.time - to.time);
    if (!(to.time < from.time)) throw SpecificationError("transition requires to_time < from_time");
    h2 = std::max(dt, 1e-3 * dt);
  }
  return gaussian_kernel(prior::cloud_scores(prior, to), prior::cloud_scores(prior, from), h2);
}

TransitionMatrix sinkhorn_project(const Matrix& kernel, double tol, int max_iter, std::vector<double>* history) {
  check_support(kernel);
  const Matrix kernel_t = kernel.transpose();
  Scaling s = initial_scaling(kernel, kernel_t);
  sinkhorn_sweeps(kernel, kernel_t, tol, max_iter, s, history);
  TransitionMatrix out;
  out.matrix = scaled(kernel, s.u, s.v);
  out.iterations = s.sweeps;
  std::tie(out.row_tol, out.col_tol) = stochasticity(out.matrix);
  if (std::max(out.row_tol, out.col_tol) > 1e-6 && s.sweeps >= max_iter) {
    throw ConvergenceError("Sinkhorn did not converge in " + std::to_string(max_iter) + " sweeps (violation " +
                           format_error(std::max(out.row_tol, out.col_tol)) + "); kernel support may be disconnected");
  }
  return out;
}

TransitionMatrix balance(const Matrix& kernel, const BalanceOptions& options) {
  check_support(kernel);
  const Matrix kernel_t = kernel.transpose();
  Scaling s = initial_scaling(kernel, kernel_t);
  TransitionMatrix out;
  double handover = std::max(options.tol, options.warmup_tol);
  int factors_left = options.max_newton;
  while (s.row_error > options.tol) {
    const int before = s.sweeps;
    sinkhorn_sweeps(kernel, kernel_t, handover, options.warmup_sweeps, s, nullptr);
    if (s.row_error <= options.tol) break;
    const int used = newton_polish(kernel, kernel_t, options, factors_left, s);
    out.newton_steps += used;
    factors_left -= used;
    if (s.row_error <= options.tol || factors_left <= 0 || s.sweeps >= options.max_sweeps) break;
    // Newton stalled: hand over later, after more sweeps.
    if (s.sweeps == before && handover <= options.tol) break;
    handover = std::max(options.tol, handover * 1e-2);
  }
  out.iterations = s.sweeps;
  out.matrix = scaled(kernel, s.u, s.v);
  std::tie(out.row_tol, out.col_tol) = stochasticity(out.matrix);
  if (std::max(out.row_tol, out.col_tol) > 1e-8) {
    throw ConvergenceError("transition balancing stalled at violation " +
                           format_error(std::max(out.row_tol, out.col_tol)));
  }
  return out;
}

TransitionMatrix build_transition(const prior::SampleCloud& from, const prior::SampleCloud& to,
                                  const prior::PriorModel& prior, const BalanceOptions& options) {
  TransitionMatrix out = balance(build_kernel(from, to, prior), options);
  out.from_time = from.time;
  out.to_time = to.time;
  return out;
}

TransitionMatrix build_transition(const calib::CalibratedSurface& surface, const prior::PriorModel& prior,
                                  std::size_t i, const BalanceOptions& options) {
  if (i == 0 || i >= surface.times.size()) throw SpecificationError("transition index out of range");
  return build_transition(surface.clouds[i], surface.clouds[i - 1], prior, options);
}

namespace {

void put_u32(std::ostream& out, std::uint32_t value) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4] = {};
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_binary(std::ostream& out, const TransitionMatrix& transition) {
  const auto n = static_cast<std::uint32_t>(transition.matrix.rows());
  out.write("CDFM", 4);
  put_u32(out, n);
  put_u32(out, 0);
  put_u32(out, 0);
  for (Eigen::Index i = 0; i < transition.matrix.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(transition.matrix.data()[i]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

Matrix read_binary(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CDFM", 4) != 0) throw SpecificationError("not a CDFM transition dump");
  const std::uint32_t n = get_u32(in);
  get_u32(in);
  get_u32(in);
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    unsigned char bytes[8] = {};
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  if (!in) throw SpecificationError("truncated CDFM transition dump");
  return m;
}

}  // namespace codefi::markov
