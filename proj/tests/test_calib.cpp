#include "codefi/calib.hpp"
#include "codefi/error.hpp"
#include "codefi/prior.hpp"
#include "codefi/seq.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

using namespace codefi;

namespace {

constexpr double kSpot = 3064.03;
const std::vector<double> kStrikes{0.8, 0.9, 0.95, 0.975, 1.0, 1.025, 1.05, 1.1, 1.2};
const std::vector<double> kQuotes{559.2, 292.6, 180.7, 133.6, 93.76, 61.59, 37.99, 11.34, 0.31};

std::vector<calib::Constraint> index_calls(const std::vector<double>& quotes) {
  std::vector<calib::Constraint> out;
  for (std::size_t i = 0; i < kStrikes.size(); ++i) out.push_back({Payoff::call(kStrikes[i] * kSpot), 0.25, quotes[i]});
  return out;
}

prior::SampleCloud cloud_1d(std::vector<double> values, double t = 1.0) {
  prior::SampleCloud c;
  c.time = t;
  c.points = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(values.size()), 1);
  return c;
}

// Static no-arbitrage test for call quotes on a nonnegative underlying with
// known forward: the piecewise-linear interpolant through (0, F) and the
// quotes must be convex with slopes in [-1, 0]. A measure exists iff it holds.
// Static no-arbitrage among the quotes themselves: slopes in [-1, 0] and increasing.
bool call_quotes_admissible(const std::vector<double>& strikes, const std::vector<double>& quotes) {
  double previous = -1.0;
  for (std::size_t i = 1; i < strikes.size(); ++i) {
    const double slope = (quotes[i] - quotes[i - 1]) / (strikes[i] - strikes[i - 1]);
    if (slope < previous - 1e-12 || slope > 1e-12) return false;
    previous = slope;
  }
  return quotes.back() >= 0.0;
}

}  // namespace

TEST_CASE("single linear constraint is a uniform shift") {
  const auto prior_cloud = cloud_1d({0.5, 1.0, 1.5});
  const std::vector<calib::Constraint> cs{{Payoff::linear({1.0}), 1.0, 1.2}};
  const auto r = calib::calibrate_time_slice(prior_cloud, cs);
  CHECK(r.converged);
  CHECK(r.cloud.points(0, 0) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(r.cloud.points(1, 0) == doctest::Approx(1.2).epsilon(1e-10));
  CHECK(r.cloud.points(2, 0) == doctest::Approx(1.7).epsilon(1e-10));
  CHECK(r.objective == doctest::Approx(std::sqrt(3 * 0.04)).epsilon(1e-10));
  REQUIRE(r.residuals.size() == 1);
  CHECK(std::abs(r.residuals[0]) <= 1e-10);
}

TEST_CASE("no constraints leaves the cloud unchanged") {
  const auto prior_cloud = cloud_1d({0.5, 1.0, 1.5});
  const auto r = calib::calibrate_time_slice(prior_cloud, {});
  CHECK(r.converged);
  CHECK(r.cloud.points == prior_cloud.points);
  CHECK(r.residuals.empty());
  CHECK(r.objective == 0.0);
}

TEST_CASE("linear constraints match the KKT projection") {
  const std::size_t n = 12, d = 3;
  std::mt19937 rng(7);
  std::normal_distribution<double> z;
  prior::SampleCloud c;
  c.time = 1.0;
  c.points = Matrix(n, d);
  for (Eigen::Index i = 0; i < c.points.size(); ++i) c.points.data()[i] = 1.0 + 0.3 * z(rng);
  const std::vector<calib::Constraint> cs{{Payoff::linear({1.0, 0.0, 0.0}), 1.0, 1.1},
                                          {Payoff::linear({0.5, 2.0, -1.0}, 0.2), 1.0, 1.7},
                                          {Payoff::linear({0.0, 0.0, 1.0}), 1.0, 0.8}};
  const auto r = calib::calibrate_time_slice(c, cs);
  CHECK(r.converged);

  // vec(S) = vec(S0) + A^T (A A^T)^{-1} (b - A vec(S0)), row-major vec.
  Matrix a = Matrix::Zero(3, n * d);
  Vector b(3);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& lin = std::get<payoffs::Linear>(cs[i].payoff.variant());
    for (std::size_t row = 0; row < n; ++row) {
      for (std::size_t k = 0; k < lin.weights.size(); ++k) a(i, row * d + k) = lin.weights[k] / n;
    }
    b[i] = cs[i].target - lin.offset;
  }
  const Vector s0 = Eigen::Map<const Vector>(c.points.data(), n * d);
  const Vector s = s0 + a.transpose() * (a * a.transpose()).ldlt().solve(b - a * s0);
  const Vector got = Eigen::Map<const Vector>(r.cloud.points.data(), n * d);
  CHECK((got - s).norm() <= 1e-8);
}

TEST_CASE("reported residuals are exact and permutation invariant") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.15, true, kSpot);
  const auto cloud = prior::sample_cloud(model, 0.25, seq::gen_sobol(64, 1));
  const auto cs = index_calls(kQuotes);
  const auto res = calib::constraint_residuals(cloud.points, cs);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < cloud.points.rows(); ++k) acc += std::max(cloud.points(k, 0) - kStrikes[i] * kSpot, 0.0);
    CHECK(std::abs(res[i] - (acc / 64.0 - kQuotes[i])) <= 1e-12 * std::max(1.0, kQuotes[i]));
  }
  Matrix reversed = cloud.points.colwise().reverse();
  const auto res2 = calib::constraint_residuals(reversed, cs);
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(std::abs(res2[i] - res[i]) <= 1e-12 * std::max(1.0, kQuotes[i]));
}

TEST_CASE("projection beats a brute-force search over the feasible set") {
  // N = 3, mean m and variance v: the feasible set is a circle around (m, m, m).
  const auto c = cloud_1d({0.9, 1.05, 1.4});
  const double m = 1.1, v = 0.05;
  const std::vector<calib::Constraint> cs{{Payoff::linear({1.0}), 1.0, m}, {payoffs::Variance{0, m}, 1.0, v}};
  const auto r = calib::calibrate_time_slice(c, cs);
  REQUIRE(r.converged);

  const Eigen::Vector3d e1 = Eigen::Vector3d(1, -1, 0).normalized();
  const Eigen::Vector3d e2 = Eigen::Vector3d(1, 1, -2).normalized();
  const double radius = std::sqrt(3.0 * v);
  const Eigen::Vector3d s0(0.9, 1.05, 1.4);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 200000; ++k) {
    const double th = 2.0 * std::numbers::pi * k / 200000.0;
    const Eigen::Vector3d s = Eigen::Vector3d::Constant(m) + radius * (std::cos(th) * e1 + std::sin(th) * e2);
    best = std::min(best, (s - s0).norm());
  }
  CHECK(r.objective <= best + 1e-4);
  CHECK(r.objective >= best - 1e-4);
}

TEST_CASE("nine index call quotes calibrate on 256 points") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.15, true, kSpot);
  const auto grid = seq::gen_sobol(256, 1);
  const auto cloud = prior::sample_cloud(model, 0.25, grid);
  const auto cs = index_calls(kQuotes);
  const auto r = calib::calibrate_time_slice(cloud, cs);
  CHECK(r.converged);
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(std::abs(r.residuals[i]) <= 1e-6 * kQuotes[i]);

  const auto sorted = calib::rearrange_monotone(r, grid);
  CHECK(sorted.objective <= r.objective + 1e-9);
  for (std::size_t i = 0; i < cs.size(); ++i) CHECK(std::abs(sorted.residuals[i]) <= 1e-6 * kQuotes[i]);
  std::vector<std::size_t> order(256);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return grid(a, 0) < grid(b, 0); });
  for (std::size_t k = 1; k < order.size(); ++k) {
    CHECK(sorted.cloud.points(static_cast<Eigen::Index>(order[k - 1]), 0) <=
          sorted.cloud.points(static_cast<Eigen::Index>(order[k]), 0));
  }
}

TEST_CASE("moment constraints are counted and validated") {
  const auto p64 = prior::PriorModel::independent(prior::PriorKind::lognormal, 64, 0.1);
  const auto all = calib::moment_constraints(p64, 10.0, std::vector<double>(64, 1.0),
                                             std::vector<double>(64, std::exp(0.1) - 1.0), Matrix::Identity(64, 64));
  CHECK(all.size() == 2144);
  const auto p1 = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.1);
  CHECK(calib::moment_constraints(p1, 10.0, std::vector<double>{1.0}, std::nullopt, std::nullopt).size() == 1);
  CHECK_THROWS_AS(calib::moment_constraints(p64, 10.0, std::nullopt, std::nullopt, Matrix::Identity(64, 64)),
                  SpecificationError);
  CHECK_THROWS_AS(calib::moment_constraints(p1, 10.0, std::vector<double>{1.0, 1.0}, std::nullopt, std::nullopt),
                  SpecificationError);
}

TEST_CASE("moment calibration reprices the four-asset best-of") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 4, 0.1);
  const auto cloud = prior::sample_cloud(model, 10.0, seq::gen_sobol(512, 4));
  const auto cs = calib::moment_constraints(model, 10.0, std::vector<double>(4, 1.0),
                                            std::vector<double>(4, std::exp(0.1) - 1.0), Matrix::Identity(4, 4));
  const auto r = calib::calibrate_time_slice(cloud, cs);
  CHECK(r.converged);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < r.cloud.points.rows(); ++k) acc += Payoff::best_of(1.0)(row_span(r.cloud.points, k));
  CHECK(std::abs(acc / 512.0 - 0.35941) <= 0.01 * 0.35941);
}

TEST_CASE("monotone rearrangement") {
  Matrix g(3, 1);
  g << 0.25, 0.5, 0.75;
  const seq::GridMatrix grid(g);
  calib::CalibrationResult r;
  r.prior = cloud_1d({1.0, 2.0, 3.0});
  r.cloud = cloud_1d({3.0, 1.0, 2.0});
  r.objective = (r.cloud.points - r.prior.points).norm();
  const auto out = calib::rearrange_monotone(r, grid);
  CHECK(out.cloud.points(0, 0) == 1.0);
  CHECK(out.cloud.points(1, 0) == 2.0);
  CHECK(out.cloud.points(2, 0) == 3.0);
  CHECK(calib::rearrange_monotone(out, grid).cloud.points == out.cloud.points);

  calib::CalibrationResult two;
  two.prior.points = Matrix::Zero(3, 2);
  two.cloud.points = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(calib::rearrange_monotone(two, grid), UnsupportedDimension);
}

TEST_CASE("rearrangement attains the best permutation") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 2; n <= 6; ++n) {
    Matrix g(n, 1);
    std::vector<double> y(n), s0(n), s(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = (k + 0.5) / n;
    std::shuffle(y.begin(), y.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      g(k, 0) = y[k];
      s0[k] = std::exp(y[k]);  // prior increasing in the grid coordinate
      s[k] = 3.0 * u(rng);
    }
    calib::CalibrationResult r;
    r.prior = cloud_1d(s0);
    r.cloud = cloud_1d(s);
    r.objective = (r.cloud.points - r.prior.points).norm();
    const auto out = calib::rearrange_monotone(r, seq::GridMatrix(g));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += (s[perm[k]] - s0[k]) * (s[perm[k]] - s0[k]);
      best = std::min(best, std::sqrt(acc));
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(out.objective <= r.objective + 1e-14);
    CHECK(out.objective == doctest::Approx(best).epsilon(1e-12));

    // sqrt(N) times the sorted-pairing 2-Wasserstein distance.
    std::vector<double> a = s, b = s0;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double w2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) w2 += (a[k] - b[k]) * (a[k] - b[k]) / n;
    CHECK(std::abs(out.objective - std::sqrt(double(n)) * std::sqrt(w2)) <= 1e-10);
  }
}

TEST_CASE("arbitrage detection") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.2);
  const auto cloud = prior::sample_cloud(model, 1.0, seq::gen_sobol(32, 1));

  const std::vector<calib::Constraint> ok{{Payoff::linear({1.0}), 1.0, 1.0}};
  const auto fine = calib::calibrate_time_slice(cloud, ok);
  CHECK(fine.converged);
  CHECK(calib::detect_arbitrage(fine, 1e-6).empty());

  // A mean of 2 with no mass above 1 contradicts Jensen.
  const std::vector<calib::Constraint> bad{{Payoff::call(1.0), 1.0, 0.0}, {Payoff::linear({1.0}), 1.0, 2.0}};
  const auto r = calib::calibrate_time_slice(cloud, bad);
  CHECK_FALSE(r.converged);
  CHECK_FALSE(calib::detect_arbitrage(r, 1e-6).empty());
}

TEST_CASE("call quotes violating monotonicity in strike are flagged") {
  auto quotes = kQuotes;
  quotes[6] = 62.0;  // strike 1.05 above strike 1.025
  std::vector<double> strikes;
  for (double s : kStrikes) strikes.push_back(s * kSpot);
  CHECK(call_quotes_admissible(strikes, kQuotes));
  REQUIRE_FALSE(call_quotes_admissible(strikes, quotes));

  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.15, true, kSpot);
  const auto cloud = prior::sample_cloud(model, 0.25, seq::gen_sobol(256, 1));
  const auto r = calib::calibrate_time_slice(cloud, index_calls(quotes));
  CHECK_FALSE(r.converged);
  const auto report = calib::detect_arbitrage(r, 1e-6);
  CHECK_FALSE(report.empty());
  for (std::size_t k = 1; k < report.size(); ++k) CHECK(report[k - 1].weight >= report[k].weight);
}

TEST_CASE("solver errors") {
  const auto c = cloud_1d({0.5, 1.0});
  const std::vector<calib::Constraint> three{{Payoff::linear({1.0}), 1.0, 1.0},
                                             {payoffs::Variance{0, 1.0}, 1.0, 0.1},
                                             {Payoff::call(1.0), 1.0, 0.1}};
  CHECK_THROWS_AS(calib::calibrate_time_slice(c, three), OverdeterminedError);
  const std::vector<calib::Constraint> nan{{Payoff::linear({std::nan("")}), 1.0, 1.0}};
  CHECK_THROWS_AS(calib::calibrate_time_slice(c, nan), EvaluationError);
}

TEST_CASE("bootstrap surface") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 2, 0.2, true, 1.5);
  const auto grid = seq::gen_sobol(32, 2);
  const std::vector<double> times{0.0, 0.1, 0.5, 1.0, 2.0};
  const auto passthrough = calib::bootstrap_surface(model, grid, {}, times);
  REQUIRE(passthrough.clouds.size() == times.size());
  CHECK(passthrough.clouds[0].points == Matrix::Constant(32, 2, 1.5));
  for (std::size_t k = 1; k < times.size(); ++k) {
    const auto expected = prior::sample_cloud(model, times[k], grid);
    CHECK((passthrough.clouds[k].points - expected.points).cwiseAbs().maxCoeff() <= 1e-12);
  }

  const auto cs = calib::moment_constraints(model, 1.0, std::vector<double>{1.5, 1.5}, std::vector<double>{0.1, 0.12},
                                            std::nullopt);
  const auto slice = calib::calibrate_time_slice(prior::sample_cloud(model, 1.0, grid), cs);
  const std::vector<calib::CalibrationResult> slices{slice};
  const std::vector<double> at{1.0};
  const auto single = calib::bootstrap_surface(model, grid, slices, at);
  CHECK(single.clouds.at(0).points == slice.cloud.points);

  const std::vector<double> near{1e-10, 0.5, 1.0};
  const auto s = calib::bootstrap_surface(model, grid, slices, near);
  CHECK((s.clouds[0].points.array() - 1.5).abs().maxCoeff() <= 1e-4);
  CHECK(s.at(1.0).points == slice.cloud.points);
  CHECK_THROWS_AS(s.index_of(0.7), SpecificationError);

  const std::vector<calib::CalibrationResult> dup{slice, slice};
  CHECK_THROWS_AS(calib::bootstrap_surface(model, grid, dup, at), SpecificationError);
}

TEST_CASE("constraints group by maturity") {
  const std::vector<calib::Constraint> cs{{Payoff::linear({1.0}), 2.0, 1.0},
                                          {Payoff::call(1.0), 1.0, 0.1},
                                          {Payoff::call(1.1), 2.0, 0.05}};
  const auto groups = calib::group_by_maturity(cs);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].size() == 1);
  CHECK(groups[1].size() == 2);
  CHECK(groups[0][0].maturity == 1.0);
}
