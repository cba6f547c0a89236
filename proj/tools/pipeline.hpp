#pragma once

#include "codefi/calib.hpp"
#include "codefi/io.hpp"
#include "codefi/prior.hpp"
#include "codefi/seq.hpp"
#include "codefi/value.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace codefi::cli {

enum class StrategyKind { none, american, bermudan };

struct ScheduleSpec {
  std::optional<double> maturity;  // defaults to the latest constraint maturity
  double steps_per_year = 12.0;
  double t_min = 6.0 / 365.0;
};

/// Parsed, self-consistent run description.
struct RunConfig {
  io::GridSpec grid;
  prior::PriorModel prior;
  std::vector<calib::Constraint> constraints{};
  std::vector<Payoff> payoffs{};
  StrategyKind strategy = StrategyKind::none;
  std::vector<double> exercise_times{};
  std::vector<Payoff> exercise_payoffs{};  // empty: exercise the terminal payoffs
  ScheduleSpec schedule{};
  calib::SolverOptions solver{};
  markov::BalanceOptions balance{};
  bool rearrange = true;  // D = 1 only
  double arbitrage_tol = 1e-6;
};

/// Builds a RunConfig from a JSON config. The prior dimension defaults to the
/// grid dimension; a "moments" block expands into moment constraints and a
/// "constraints_file" entry is resolved relative to base_dir.
RunConfig parse_config(const io::Json& j, const std::string& base_dir = ".");

struct Timings {
  std::map<std::string, double> seconds;
  io::Json to_json() const;
};

struct CalibrationRun {
  std::optional<seq::GridMatrix> grid;
  std::vector<calib::CalibrationResult> slices;
  std::vector<double> maturities;
  std::vector<std::vector<std::size_t>> groups;  // constraint indices per slice
  std::vector<calib::ArbitrageEntry> arbitrage;  // indices refer to config.constraints
  bool converged = true;
  Timings timings;
};

/// Constraint indices grouped by maturity, ascending.
std::vector<std::vector<std::size_t>> maturity_groups(std::span<const calib::Constraint> constraints);

CalibrationRun run_calibration(const RunConfig& config);

struct PriceRun {
  CalibrationRun calibration;
  std::vector<double> times;
  calib::CalibratedSurface surface;
  value::ValueSurface european;
  std::optional<value::ValueSurface> exercised;
  std::vector<value::ConservationRow> conservation;
  Timings timings;

  const value::ValueSurface& primary() const { return exercised ? *exercised : european; }
};

PriceRun run_price(const RunConfig& config);

io::Json calibration_manifest(const RunConfig& config, const CalibrationRun& run);

}  // namespace codefi::cli
