#include "pipeline.hpp"

#include "codefi/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

namespace codefi::cli {
namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<double> expand(const io::Json& j, std::size_t dim, const char* what) {
  if (j.is_number()) return std::vector<double>(dim, j.get<double>());
  auto v = j.get<std::vector<double>>();
  if (v.size() != dim) throw SpecificationError(std::string(what) + " must have " + std::to_string(dim) + " entries");
  return v;
}

std::vector<calib::Constraint> expand_moments(const io::Json& m, const prior::PriorModel& prior) {
  const std::size_t d = prior.dim();
  const double maturity = m.at("maturity").get<double>();
  std::optional<std::vector<double>> means, variances;
  std::optional<Matrix> corr;
  if (m.contains("means")) means = expand(m.at("means"), d, "means");
  if (m.contains("variances")) variances = expand(m.at("variances"), d, "variances");
  if (m.contains("correlation")) {
    const auto& c = m.at("correlation");
    if (c.is_string()) {
      if (c.get<std::string>() != "identity") throw SpecificationError("unknown correlation keyword");
      corr = Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    } else {
      const auto rows = c.get<std::vector<std::vector<double>>>();
      Matrix cm(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      if (rows.size() != d) throw SpecificationError("correlation targets must be D x D");
      for (std::size_t r = 0; r < d; ++r) {
        if (rows[r].size() != d) throw SpecificationError("correlation targets must be D x D");
        for (std::size_t k = 0; k < d; ++k) cm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
      }
      corr = cm;
    }
  }
  return calib::moment_constraints(prior, maturity, means, variances, corr);
}

}  // namespace

std::vector<std::vector<std::size_t>> maturity_groups(std::span<const calib::Constraint> constraints) {
  std::vector<std::size_t> order(constraints.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return constraints[a].maturity < constraints[b].maturity; });
  std::vector<std::vector<std::size_t>> out;
  for (auto i : order) {
    if (out.empty() || constraints[out.back().front()].maturity != constraints[i].maturity) out.emplace_back();
    out.back().push_back(i);
  }
  return out;
}

RunConfig parse_config(const io::Json& j, const std::string& base_dir) {
  try {
    io::Json grid = j.value("grid", io::Json::object());
    if (j.contains("seed") && !grid.contains("seed")) grid["seed"] = j.at("seed");
    io::Json prior_json = j.value("prior", io::Json{{"kind", "lognormal"}, {"vol", 0.2}});
    if (!prior_json.contains("dim") && grid.contains("d")) prior_json["dim"] = grid.at("d");
    if (!grid.contains("d") && prior_json.contains("dim")) grid["d"] = prior_json.at("dim");

    RunConfig c{.grid = io::parse_grid(grid), .prior = io::parse_prior(prior_json)};
    if (c.prior.dim() != c.grid.d) throw SpecificationError("prior dimension differs from grid dimension");

    if (j.contains("constraints")) {
      auto parsed = io::parse_constraints(j.at("constraints"));
      c.constraints.insert(c.constraints.end(), parsed.begin(), parsed.end());
    }
    if (j.contains("constraints_file")) {
      std::filesystem::path p = j.at("constraints_file").get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      auto parsed = io::parse_constraints(io::read_json(p));
      c.constraints.insert(c.constraints.end(), parsed.begin(), parsed.end());
    }
    if (j.contains("moments")) {
      auto parsed = expand_moments(j.at("moments"), c.prior);
      c.constraints.insert(c.constraints.end(), parsed.begin(), parsed.end());
    }
    for (const auto& con : c.constraints) {
      if (con.payoff.max_coord() >= static_cast<long>(c.grid.d)) {
        throw SpecificationError("constraint " + con.payoff.describe() + " reads beyond dimension " + std::to_string(c.grid.d));
      }
    }

    if (j.contains("payoffs")) {
      for (const auto& p : j.at("payoffs")) c.payoffs.push_back(io::parse_payoff(p));
    } else if (j.contains("payoff")) {
      c.payoffs.push_back(io::parse_payoff(j.at("payoff")));
    }

    if (j.contains("strategy")) {
      const auto& s = j.at("strategy");
      const std::string type = s.value("type", std::string("none"));
      if (type == "none" || type == "european") {
        c.strategy = StrategyKind::none;
      } else if (type == "american") {
        c.strategy = StrategyKind::american;
      } else if (type == "bermudan") {
        c.strategy = StrategyKind::bermudan;
        c.exercise_times = s.at("times").get<std::vector<double>>();
        if (c.exercise_times.empty()) throw SpecificationError("bermudan strategy needs exercise times");
      } else {
        throw SpecificationError("unknown strategy type '" + type + "'");
      }
      if (s.contains("payoffs")) {
        for (const auto& p : s.at("payoffs")) c.exercise_payoffs.push_back(io::parse_payoff(p));
      }
    }

    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      if (s.contains("maturity")) c.schedule.maturity = s.at("maturity").get<double>();
      c.schedule.steps_per_year = s.value("steps_per_year", c.schedule.steps_per_year);
      c.schedule.t_min = s.value("t_min", c.schedule.t_min);
    }

    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      c.solver.tolerance = t.value("calibration", c.solver.tolerance);
      c.solver.step_tolerance = t.value("step", c.solver.step_tolerance);
      c.balance.tol = t.value("transition", c.balance.tol);
      c.arbitrage_tol = t.value("arbitrage", c.arbitrage_tol);
    }
    c.rearrange = j.value("rearrange", true);
    return c;
  } catch (const io::Json::exception& e) {
    throw SpecificationError(std::string("config: ") + e.what());
  }
}

io::Json Timings::to_json() const {
  io::Json j = io::Json::object();
  for (const auto& [k, v] : seconds) j[k] = v;
  return j;
}

CalibrationRun run_calibration(const RunConfig& config) {
  CalibrationRun run;
  Stopwatch watch;
  run.grid.emplace(seq::generate(config.grid.n, config.grid.d, config.grid.kind));
  run.timings.seconds["grid"] = watch.lap();

  run.groups = maturity_groups(config.constraints);
  for (const auto& indices : run.groups) {
    std::vector<calib::Constraint> group;
    for (auto i : indices) group.push_back(config.constraints[i]);
    const double t = group.front().maturity;
    if (!(t > 0.0)) throw SpecificationError("calibration maturities must be positive");
    auto result = calib::calibrate_time_slice(prior::sample_cloud(config.prior, t, *run.grid), group, config.solver);
    if (config.rearrange && config.grid.d == 1) result = calib::rearrange_monotone(result, *run.grid);
    for (auto entry : calib::detect_arbitrage(result, config.arbitrage_tol)) {
      entry.index = indices[entry.index];
      run.arbitrage.push_back(entry);
    }
    run.converged = run.converged && result.converged;
    run.maturities.push_back(t);
    run.slices.push_back(std::move(result));
  }
  run.timings.seconds["calibrate"] = watch.lap();
  return run;
}

PriceRun run_price(const RunConfig& config) {
  if (config.payoffs.empty()) throw SpecificationError("price needs at least one payoff");
  for (const auto& p : config.payoffs) {
    if (p.max_coord() >= static_cast<long>(config.grid.d)) throw SpecificationError("payoff reads beyond the grid dimension");
  }
  double maturity = 0.0;
  if (config.schedule.maturity) {
    maturity = *config.schedule.maturity;
  } else if (!config.constraints.empty()) {
    for (const auto& c : config.constraints) maturity = std::max(maturity, c.maturity);
  } else {
    throw SpecificationError("schedule maturity missing");
  }
  for (const auto& c : config.constraints) {
    if (c.maturity > maturity + 1e-12) throw SpecificationError("constraint maturity beyond the valuation maturity");
  }
  if (config.strategy != StrategyKind::none && !config.exercise_payoffs.empty() &&
      config.exercise_payoffs.size() != 1 && config.exercise_payoffs.size() != config.payoffs.size()) {
    throw SpecificationError("strategy needs one exercise payoff or one per payoff");
  }
  for (double t : config.exercise_times) {
    if (!(t >= config.schedule.t_min && t <= maturity)) throw SpecificationError("exercise time outside the schedule");
  }

  PriceRun run;
  run.calibration = run_calibration(config);
  Stopwatch watch;

  std::vector<double> anchors = config.exercise_times;
  anchors.insert(anchors.end(), run.calibration.maturities.begin(), run.calibration.maturities.end());
  run.times = value::make_schedule(maturity, anchors, config.schedule.steps_per_year, config.schedule.t_min);
  std::vector<double> ascending(run.times.rbegin(), run.times.rend());
  if (run.calibration.slices.empty()) {
    run.surface.times = ascending;
    for (double t : ascending) run.surface.clouds.push_back(prior::sample_cloud(config.prior, t, *run.calibration.grid));
  } else {
    run.surface = calib::bootstrap_surface(config.prior, *run.calibration.grid, run.calibration.slices, ascending);
  }
  run.timings.seconds["surface"] = watch.lap();

  const auto transitions = value::build_transitions(run.surface, config.prior, run.times, config.balance);
  run.timings.seconds["transitions"] = watch.lap();

  run.european = value::backward_linear(run.surface, config.payoffs, run.times, transitions);
  if (config.strategy != StrategyKind::none) {
    value::Strategy strategy;
    strategy.exercise = config.exercise_payoffs.empty() ? config.payoffs : config.exercise_payoffs;
    if (config.strategy == StrategyKind::american) {
      strategy.times.assign(run.times.begin() + 1, run.times.end());
    } else {
      for (double t : config.exercise_times) {
        const auto it = std::min_element(run.times.begin(), run.times.end(),
                                         [&](double a, double b) { return std::abs(a - t) < std::abs(b - t); });
        strategy.times.push_back(*it);
      }
    }
    run.exercised = value::backward_optimal_stopping(run.surface, config.payoffs, strategy, run.times, transitions);
  }
  run.timings.seconds["backward"] = watch.lap();

  // Each calibrated constraint propagated from its own maturity.
  for (std::size_t g = 0; g < run.calibration.groups.size(); ++g) {
    const double t = run.calibration.maturities[g];
    const auto it = std::find_if(run.times.begin(), run.times.end(),
                                 [&](double s) { return std::abs(s - t) <= 1e-9 * std::max(1.0, t); });
    if (it == run.times.end()) continue;
    const auto k = static_cast<std::size_t>(it - run.times.begin());
    const auto& indices = run.calibration.groups[g];
    std::vector<Payoff> payoffs;
    for (auto i : indices) payoffs.push_back(config.constraints[i].payoff);
    const auto vs = value::backward_linear(run.surface, payoffs, std::span(run.times).subspan(k),
                                           std::span(transitions).subspan(k));
    for (auto row : value::check_conservation(vs, run.calibration.slices[g].constraints)) {
      row.constraint = indices[row.constraint];
      run.conservation.push_back(row);
    }
  }
  run.timings.seconds["conservation"] = watch.lap();
  for (const auto& [k, v] : run.calibration.timings.seconds) run.timings.seconds[k] = v;
  return run;
}

io::Json calibration_manifest(const RunConfig& config, const CalibrationRun& run) {
  io::Json slices = io::Json::array();
  for (std::size_t s = 0; s < run.slices.size(); ++s) {
    const auto& r = run.slices[s];
    io::Json constraints = io::Json::array();
    for (std::size_t i = 0; i < r.constraints.size(); ++i) {
      auto c = io::to_json(r.constraints[i]);
      c["residual"] = r.residuals[i];
      constraints.push_back(c);
    }
    slices.push_back({{"maturity", run.maturities[s]},
                      {"converged", r.converged},
                      {"objective", r.objective},
                      {"outer_iterations", r.outer_iterations},
                      {"max_abs_residual", r.residuals.empty() ? 0.0
                                                              : std::abs(*std::max_element(
                                                                    r.residuals.begin(), r.residuals.end(),
                                                                    [](double a, double b) { return std::abs(a) < std::abs(b); }))},
                      {"constraints", constraints}});
  }
  io::Json arbitrage = io::Json::array();
  for (const auto& a : run.arbitrage) {
    arbitrage.push_back({{"index", a.index},
                         {"description", a.description},
                         {"target", a.target},
                         {"residual", a.residual},
                         {"weight", a.weight}});
  }
  return {{"grid",
           {{"n", config.grid.n}, {"d", config.grid.d}, {"kind", seq::to_string(config.grid.kind.tag)}, {"seed", config.grid.kind.seed}}},
          {"prior", io::to_json(config.prior)},
          {"converged", run.converged},
          {"slices", slices},
          {"arbitrage", arbitrage},
          {"seconds", run.timings.to_json()}};
}

}  // namespace codefi::cli
