#include "codefi/calib.hpp"
#include "codefi/error.hpp"
#include "codefi/markov.hpp"
#include "codefi/oracle.hpp"
#include "codefi/prior.hpp"
#include "codefi/seq.hpp"
#include "codefi/value.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace codefi;

namespace {

struct Setup {
  prior::PriorModel model;
  seq::GridMatrix grid;
  std::vector<double> times;  // decreasing
  calib::CalibratedSurface surface;
  std::vector<markov::TransitionMatrix> transitions;
};

Setup prior_setup(std::size_t n, std::size_t d, double maturity, double vol, std::vector<double> anchors = {},
                  double steps_per_year = 12.0, std::vector<calib::CalibrationResult> slices = {}) {
  auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, d, vol);
  auto grid = seq::gen_sobol(n, d);
  auto times = value::make_schedule(maturity, anchors, steps_per_year);
  std::vector<double> ascending(times.rbegin(), times.rend());
  auto surface = calib::bootstrap_surface(model, grid, slices, ascending);
  auto transitions = value::build_transitions(surface, model, times);
  return {std::move(model), std::move(grid), std::move(times), std::move(surface), std::move(transitions)};
}

value::ValueSurface toy_surface(const Matrix& cloud, const Matrix& values, double t = 1.0) {
  value::ValueSurface vs;
  vs.times = {t};
  vs.clouds = {prior::SampleCloud{t, cloud}};
  vs.values = {values};
  return vs;
}

}  // namespace

TEST_CASE("schedule construction") {
  std::vector<double> anchors;
  for (int y = 1; y < 10; ++y) anchors.push_back(y);
  const auto t = value::make_schedule(10.0, anchors, 12.0, 6.0 / 365.0);
  CHECK(t.size() == 121);
  CHECK(t.front() == 10.0);
  CHECK(t.back() == doctest::Approx(6.0 / 365.0));
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] < t[k - 1]);
  for (double a : anchors) CHECK(std::any_of(t.begin(), t.end(), [a](double x) { return x == a; }));

  const auto q = value::make_schedule(0.25, {}, 120.0, 6.0 / 365.0);
  CHECK(q.size() == 30);
  CHECK_THROWS_AS(value::make_schedule(0.01, {}, 12.0, 6.0 / 365.0), SpecificationError);
}

TEST_CASE("zero payoff stays zero") {
  auto s = prior_setup(32, 1, 1.0, 0.2);
  const std::vector<Payoff> zero{Payoff::constant(0.0)};
  const auto vs = value::backward_linear(s.surface, zero, s.times, s.transitions);
  for (const auto& v : vs.values) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
  CHECK(value::fair_value(vs) == 0.0);
}

TEST_CASE("linear steps conserve means and obey the maximum principle") {
  auto s = prior_setup(64, 2, 2.0, 0.25);
  const std::vector<Payoff> payoffs{Payoff::linear({1.0, 0.5}), Payoff::best_of(1.0), Payoff::call(1.1, 1)};
  const auto vs = value::backward_linear(s.surface, payoffs, s.times, s.transitions);
  REQUIRE(vs.values.size() == s.times.size());
  CHECK(vs.times == s.times);
  for (std::size_t c = 0; c < payoffs.size(); ++c) {
    for (Eigen::Index n = 0; n < 64; ++n) CHECK(vs.values[0](n, c) == payoffs[c](row_span(vs.clouds[0].points, n)));
  }
  for (std::size_t k = 1; k < vs.values.size(); ++k) {
    const Matrix& prev = vs.values[k - 1];
    const Matrix& cur = vs.values[k];
    for (Eigen::Index c = 0; c < cur.cols(); ++c) {
      const double scale = std::max(1.0, std::abs(prev.col(c).mean()));
      CHECK(std::abs(cur.col(c).mean() - prev.col(c).mean()) <= 1e-10 * scale);
      CHECK(cur.col(c).minCoeff() >= prev.col(c).minCoeff() - 1e-12);
      CHECK(cur.col(c).maxCoeff() <= prev.col(c).maxCoeff() + 1e-12);
    }
  }
  CHECK(vs.max_row_tol <= 1e-8);
  CHECK(vs.max_col_tol <= 1e-8);
}

TEST_CASE("columns valued together equal separate runs bitwise") {
  auto s = prior_setup(48, 2, 1.0, 0.3);
  const std::vector<Payoff> both{Payoff::best_of(1.0), Payoff::put(0.9, 0)};
  const auto joint = value::backward_linear(s.surface, both, s.times, s.transitions);
  for (std::size_t c = 0; c < both.size(); ++c) {
    const std::vector<Payoff> one{both[c]};
    const auto alone = value::backward_linear(s.surface, one, s.times, s.transitions);
    for (std::size_t k = 0; k < joint.values.size(); ++k) CHECK(joint.values[k].col(c) == alone.values[k].col(0));
  }
}

TEST_CASE("a linear payoff on a mean-calibrated surface prices at the initial value") {
  const auto model = prior::PriorModel::independent(prior::PriorKind::lognormal, 1, 0.2);
  const auto grid = seq::gen_sobol(64, 1);
  const std::vector<calib::Constraint> cs{{Payoff::linear({1.0}), 1.0, 1.0}};
  const auto slice = calib::calibrate_time_slice(prior::sample_cloud(model, 1.0, grid), cs);
  auto s = prior_setup(64, 1, 1.0, 0.2, {}, 12.0, {slice});
  const std::vector<Payoff> lin{Payoff::linear({2.5})};
  const auto vs = value::backward_linear(s.surface, lin, s.times, s.transitions);
  CHECK(std::abs(value::fair_value(vs) - 2.5) <= 1e-8);

  const std::vector<calib::Constraint> scaled{{Payoff::linear({2.5}), 1.0, 2.5}};
  const auto table = value::check_conservation(vs, scaled);
  CHECK(table.size() == vs.times.size());
  for (const auto& r : table) CHECK(std::abs(r.deviation) <= 1e-8);
}

TEST_CASE("conservation table is empty without constraints") {
  value::ValueSurface vs = toy_surface(Matrix::Ones(3, 1), Matrix(3, 0));
  CHECK(value::check_conservation(vs, {}).empty());
}

TEST_CASE("optimal stopping") {
  auto s = prior_setup(48, 1, 1.0, 0.25, {0.5});
  const std::vector<Payoff> call{Payoff::call(1.0)};
  const auto european = value::backward_linear(s.surface, call, s.times, s.transitions);

  SUBCASE("a non-binding exercise reproduces the linear values") {
    std::vector<double> all(s.times.begin() + 1, s.times.end());
    const auto never = value::Strategy::at_times(Payoff::constant(-1e300), all);
    const auto vs = value::backward_optimal_stopping(s.surface, call, never, s.times, s.transitions);
    for (std::size_t k = 0; k < vs.values.size(); ++k) CHECK(vs.values[k] == european.values[k]);
  }

  SUBCASE("dominance and intrinsic floor") {
    const std::vector<Payoff> put{Payoff::put(1.05)};
    const auto eu_put = value::backward_linear(s.surface, put, s.times, s.transitions);
    std::vector<double> all(s.times.begin() + 1, s.times.end());
    const auto american = value::Strategy::at_times(put[0], all);
    const auto vs = value::backward_optimal_stopping(s.surface, put, american, s.times, s.transitions);
    for (std::size_t k = 0; k < vs.values.size(); ++k) {
      CHECK((vs.values[k] - eu_put.values[k]).minCoeff() >= -1e-12);
      if (k > 0) {
        for (Eigen::Index n = 0; n < 48; ++n) CHECK(vs.values[k](n, 0) >= put[0](row_span(vs.clouds[k].points, n)));
      }
    }
    CHECK(value::fair_value(vs) >= value::fair_value(eu_put));
  }

  SUBCASE("exercise times must be on the schedule") {
    const auto off = value::Strategy::at_times(call[0], {0.37});
    CHECK_THROWS_AS(value::backward_optimal_stopping(s.surface, call, off, s.times, s.transitions), SpecificationError);
  }
}

TEST_CASE("single node exercise") {
  const double t0 = 0.5, t1 = 1.0;
  calib::CalibratedSurface surface;
  surface.times = {t0, t1};
  Matrix x(1, 1);
  x << 1.3;
  surface.clouds = {prior::SampleCloud{t0, x}, prior::SampleCloud{t1, x}};
  const std::vector<double> times{t1, t0};
  markov::TransitionMatrix one;
  one.matrix = Matrix::Ones(1, 1);
  one.from_time = t1;
  one.to_time = t0;
  const std::vector<markov::TransitionMatrix> transitions{one};
  const std::vector<Payoff> zero{Payoff::constant(0.0)};
  const auto strat = value::Strategy::at_times(Payoff::call(1.0), {t0});
  const auto vs = value::backward_optimal_stopping(surface, zero, strat, times, transitions);
  CHECK(value::fair_value(vs) == doctest::Approx(0.3));
}

TEST_CASE("hedge") {
  std::mt19937 rng(4);
  std::normal_distribution<double> z;
  Matrix cloud(60, 3);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) cloud.data()[i] = 1.0 + 0.2 * z(rng);
  const Eigen::Vector3d a(0.7, -1.2, 2.0);
  const Matrix values = cloud * a;
  const auto g = value::hedge(toy_surface(cloud, values), 0, 0);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(g[static_cast<std::size_t>(k)] - a[k]) <= 1e-8);

  const auto flat = value::hedge(toy_surface(cloud, Matrix::Constant(60, 1, 4.0)), 0, 0);
  for (double v : flat) CHECK(std::abs(v) <= 1e-10);

  Matrix line(10, 2);
  for (int i = 0; i < 10; ++i) line.row(i) << i, 2.0 * i;
  CHECK_THROWS_AS(value::hedge(toy_surface(line, line.col(0)), 0, 0), StencilError);
  CHECK_THROWS_AS(value::hedge(toy_surface(cloud.topRows(4), values.topRows(4)), 0, 0), SpecificationError);
}

TEST_CASE("hedge of a European call converges to the closed-form delta") {
  const double vol = 0.2, maturity = 1.0;
  const std::vector<Payoff> call{Payoff::call(1.0)};
  std::vector<double> errors;
  for (std::size_t n : {256, 1024}) {
    auto s = prior_setup(n, 1, maturity, vol);
    const auto vs = value::backward_linear(s.surface, call, s.times, s.transitions);
    const std::size_t last = vs.times.size() - 1;
    const double remaining = maturity - vs.times[last];
    const double delta = value::hedge(vs, last, 0)[0];
    double expected = 0.0;
    for (Eigen::Index k = 0; k < vs.clouds[last].points.rows(); ++k) {
      expected += oracle::bs_call_delta(vs.clouds[last].points(k, 0), 1.0, vol, remaining);
    }
    expected /= static_cast<double>(n);
    CAPTURE(n);
    CHECK(delta > 0.0);
    CHECK(delta < 1.0);
    errors.push_back(std::abs(delta - expected) / expected);

    std::vector<std::pair<double, double>> pts;
    for (Eigen::Index k = 0; k < vs.clouds[last].points.rows(); ++k) pts.emplace_back(vs.clouds[last].points(k, 0), vs.values[last](k, 0));
    std::sort(pts.begin(), pts.end());
    std::size_t increasing = 0;
    for (std::size_t k = 1; k < pts.size(); ++k) increasing += pts[k].second >= pts[k - 1].second;
    CHECK(increasing == pts.size() - 1);
  }
  CHECK(errors[1] < errors[0]);
  CHECK(errors[1] <= 0.05);
}

TEST_CASE("value at risk region") {
  const Matrix cloud = Matrix::Ones(5, 1);
  Matrix v(5, 1);
  v << 1, 1, 1, 1, 10;
  const auto vs = toy_surface(cloud, v);
  CHECK(value::var_quantile(vs, 0, 0.5, 0) == doctest::Approx(0.8));
  CHECK(value::var_quantile(toy_surface(cloud, Matrix::Constant(5, 1, 3.0)), 0, 0.9, 0) == 0.0);
  double previous = -1.0;
  for (double alpha = 0.05; alpha < 1.0; alpha += 0.05) {
    const double q = value::var_quantile(vs, 0, alpha, 0);
    CHECK(q >= previous);
    previous = q;
  }
}

TEST_CASE("credit exposure profile") {
  value::ValueSurface vs;
  vs.times = {2.0, 1.0};
  vs.clouds = {prior::SampleCloud{2.0, Matrix::Ones(3, 1)}, prior::SampleCloud{1.0, Matrix::Ones(3, 1)}};
  Matrix a(3, 1), b(3, 1);
  a << 1, 2, 3;
  b << -1, -2, -3;
  vs.values = {a, b};
  const auto p = value::cva_profile(vs, 0);
  REQUIRE(p.size() == 2);
  CHECK(p[0].first == 2.0);
  CHECK(p[0].second == doctest::Approx(2.0));
  CHECK(p[1].second == 0.0);

  auto s = prior_setup(64, 1, 1.0, 0.2);
  const std::vector<Payoff> call{Payoff::call(1.0)};
  const auto eu = value::backward_linear(s.surface, call, s.times, s.transitions);
  const auto profile = value::cva_profile(eu, 0);
  for (const auto& [t, v] : profile) CHECK(std::abs(v - profile.front().second) <= 1e-9);
}

TEST_CASE("prior overloads build their own transitions") {
  auto s = prior_setup(24, 1, 1.0, 0.2);
  const std::vector<Payoff> call{Payoff::call(1.0)};
  const auto a = value::backward_linear(s.surface, call, s.times, s.transitions);
  const auto b = value::backward_linear(s.surface, s.model, call, s.times);
  CHECK(value::fair_value(a) == value::fair_value(b));
}
