#include "cli.hpp"

#include "bench.hpp"
#include "pipeline.hpp"

#include "codefi/error.hpp"
#include "codefi/kernels.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>

namespace codefi::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string out = "codefi-out";
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;

  std::size_t n = 0;
  std::size_t d = 0;
  std::string kind;
  std::size_t iterations = 0;
  bool header = false;
  std::string constraints;
  std::vector<std::string> measures;
  double alpha = 0.5;
  std::optional<double> steps_per_year;
  std::optional<double> t_min;

  int table = 0;
  std::vector<std::size_t> bench_n;
  std::vector<std::size_t> bench_d;
  std::size_t mc_paths = 0;
};

io::Json load_config(const Options& o) {
  io::Json j = o.config.empty() ? io::Json::object() : io::read_json(o.config);
  if (!j.is_object()) throw SpecificationError("config must be a JSON object");
  if (o.n) j["grid"]["n"] = o.n;
  if (o.d) {
    j["grid"]["d"] = o.d;
    if (j.contains("prior")) j["prior"]["dim"] = o.d;
  }
  if (!o.kind.empty()) j["grid"]["kind"] = o.kind;
  if (o.iterations) j["grid"]["iterations"] = o.iterations;
  if (o.seed_given) {
    j["seed"] = o.seed;
    if (j.contains("grid")) j["grid"]["seed"] = o.seed;
  }
  if (!o.constraints.empty()) j["constraints_file"] = fs::absolute(o.constraints).string();
  if (o.steps_per_year) j["schedule"]["steps_per_year"] = *o.steps_per_year;
  if (o.t_min) j["schedule"]["t_min"] = *o.t_min;
  return j;
}

std::string base_dir(const Options& o) {
  return o.config.empty() ? std::string(".") : fs::absolute(o.config).parent_path().string();
}

std::vector<std::string> coord_header(const char* prefix, std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t k = 1; k <= d; ++k) h.push_back(prefix + std::to_string(k));
  return h;
}

int cmd_grid(const Options& o, std::ostream& out) {
  const io::Json j = load_config(o);
  if (!j.contains("grid") || !j["grid"].contains("n") || !j["grid"].contains("d")) {
    throw SpecificationError("grid needs --n and --d (or a config with grid.n and grid.d)");
  }
  io::Json g = j.at("grid");
  if (j.contains("seed") && !g.contains("seed")) g["seed"] = j.at("seed");
  const auto spec = io::parse_grid(g);
  const auto start = std::chrono::steady_clock::now();
  const auto grid = seq::generate(spec.n, spec.d, spec.kind);
  const double gen_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double disc = seq::l2_star_discrepancy(grid);

  const fs::path dir = o.out;
  io::write_atomic(dir / "grid.csv", io::format_csv(grid.points(), o.header ? coord_header("y", spec.d) : std::vector<std::string>{}));
  io::write_json(dir / "grid.json", {{"generator", seq::to_string(spec.kind.tag)},
                                     {"n", spec.n},
                                     {"d", spec.d},
                                     {"seed", spec.kind.seed},
                                     {"iterations", spec.kind.iterations},
                                     {"l2_star_discrepancy", disc},
                                     {"seconds", gen_seconds}});
  char line[160];
  std::snprintf(line, sizeof line, "grid %s n=%zu d=%zu L2* discrepancy %.6e (%.3f s)\n",
                std::string(seq::to_string(spec.kind.tag)).c_str(), spec.n, spec.d, disc, gen_seconds);
  out << line;
  return kExitOk;
}

int calibration_exit(const CalibrationRun& run) {
  if (!run.arbitrage.empty()) return kExitArbitrage;
  if (!run.converged) return kExitNonConvergence;
  return kExitOk;
}

void write_arbitrage(const fs::path& dir, const io::Json& manifest) {
  io::write_json(dir / "arbitrage.json", manifest.at("arbitrage"));
}

int cmd_calibrate(const Options& o, std::ostream& out) {
  const auto config = parse_config(load_config(o), base_dir(o));
  const auto run = run_calibration(config);
  const fs::path dir = o.out;

  auto header = coord_header("y", config.grid.d);
  for (auto& h : coord_header("s", config.grid.d)) header.push_back(h);
  io::Json files = io::Json::array();
  for (std::size_t s = 0; s < run.slices.size(); ++s) {
    Matrix table(static_cast<Eigen::Index>(config.grid.n), static_cast<Eigen::Index>(2 * config.grid.d));
    table << run.grid->points(), run.slices[s].cloud.points;
    char name[64];
    std::snprintf(name, sizeof name, "calibrated_%02zu.csv", s);
    io::write_atomic(dir / name, io::format_csv(table, header));
    files.push_back(name);
  }
  auto manifest = calibration_manifest(config, run);
  manifest["files"] = files;
  io::write_json(dir / "calibration.json", manifest);
  write_arbitrage(dir, manifest);

  for (std::size_t s = 0; s < run.slices.size(); ++s) {
    char line[160];
    std::snprintf(line, sizeof line, "T=%g: %zu constraints, converged=%s, objective %.6g, max residual %.3e\n",
                  run.maturities[s], run.slices[s].constraints.size(), run.slices[s].converged ? "yes" : "no",
                  run.slices[s].objective, manifest["slices"][s]["max_abs_residual"].get<double>());
    out << line;
  }
  if (run.slices.empty()) out << "no constraints: prior passthrough\n";
  for (const auto& a : run.arbitrage) {
    out << "arbitrage: constraint " << a.index << " (" << a.description << ") residual " << a.residual << "\n";
  }
  return calibration_exit(run);
}

int cmd_price(const Options& o, std::ostream& out) {
  const auto config = parse_config(load_config(o), base_dir(o));
  for (const auto& m : o.measures) {
    if (m != "hedge" && m != "var" && m != "cva") throw SpecificationError("unknown measure '" + m + "'");
  }
  const auto run = run_price(config);
  const auto& vs = run.primary();
  const fs::path dir = o.out;

  std::vector<std::string> header{"t"};
  for (auto& h : coord_header("s", config.grid.d)) header.push_back(h);
  for (auto& h : coord_header("p", vs.n_columns())) header.push_back(h);
  io::Json files = io::Json::array();
  for (std::size_t k = 0; k < vs.times.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(vs.n_points());
    Matrix table(n, static_cast<Eigen::Index>(1 + config.grid.d + vs.n_columns()));
    table.col(0).setConstant(vs.times[k]);
    table.middleCols(1, static_cast<Eigen::Index>(config.grid.d)) = vs.clouds[k].points;
    table.rightCols(static_cast<Eigen::Index>(vs.n_columns())) = vs.values[k];
    char name[64];
    std::snprintf(name, sizeof name, "surface/slice_%03zu.csv", k);
    io::write_atomic(dir / name, io::format_csv(table, header));
    files.push_back(name);
  }

  io::Json fair = io::Json::array(), european = io::Json::array();
  for (std::size_t c = 0; c < vs.n_columns(); ++c) {
    fair.push_back(value::fair_value(vs, c));
    european.push_back(value::fair_value(run.european, c));
  }
  io::Json conservation = io::Json::array();
  double worst = 0.0;
  for (const auto& r : run.conservation) {
    conservation.push_back({{"constraint", r.constraint}, {"time", r.time}, {"value", r.value}, {"target", r.target}, {"deviation", r.deviation}});
    worst = std::max(worst, std::abs(r.deviation));
  }
  io::Json measures = io::Json::object();
  const std::size_t last = vs.times.size() - 1;
  for (const auto& m : o.measures) {
    io::Json per = io::Json::array();
    for (std::size_t c = 0; c < vs.n_columns(); ++c) {
      if (m == "hedge") {
        per.push_back(value::hedge(vs, last, c));
      } else if (m == "var") {
        per.push_back(value::var_quantile(vs, last, o.alpha, c));
      } else {
        io::Json profile = io::Json::array();
        for (const auto& [t, v] : value::cva_profile(vs, c)) profile.push_back({t, v});
        per.push_back(profile);
      }
    }
    measures[m] = per;
  }
  if (std::find(o.measures.begin(), o.measures.end(), "var") != o.measures.end()) measures["var_alpha"] = o.alpha;

  const char* strategy = config.strategy == StrategyKind::none       ? "european"
                         : config.strategy == StrategyKind::american ? "american"
                                                                     : "bermudan";
  io::Json payoffs = io::Json::array();
  for (const auto& p : config.payoffs) payoffs.push_back(io::to_json(p));
  io::Json manifest{{"strategy", strategy},
                    {"exercise_times", config.exercise_times},
                    {"payoffs", payoffs},
                    {"schedule", vs.times},
                    {"evaluation_time", vs.times.back()},
                    {"fair_values", fair},
                    {"european_fair_values", european},
                    {"transition_row_tol", run.european.max_row_tol},
                    {"transition_col_tol", run.european.max_col_tol},
                    {"conservation", conservation},
                    {"max_conservation_deviation", worst},
                    {"measures", measures},
                    {"files", files},
                    {"calibration", calibration_manifest(config, run.calibration)},
                    {"seconds", run.timings.to_json()}};
  io::write_json(dir / "price.json", manifest);
  write_arbitrage(dir, manifest["calibration"]);

  for (std::size_t c = 0; c < vs.n_columns(); ++c) {
    char line[200];
    std::snprintf(line, sizeof line, "%s: fair value %.10g at t=%.6g (european %.10g)\n",
                  config.payoffs[c].describe().c_str(), fair[c].get<double>(), vs.times.back(), european[c].get<double>());
    out << line;
  }
  return calibration_exit(run.calibration);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sample-cloud pricing: grids, calibration, backward induction and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--threads", o.threads, "worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);
  auto* seed = app.add_option("--seed", o.seed, "seed for grids and Monte Carlo");

  auto add_grid_flags = [&](CLI::App* sub) {
    sub->add_option("--n", o.n, "number of points")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
    sub->add_option("--d", o.d, "dimension")->check(CLI::Range(std::size_t{1}, std::size_t{4096}));
    sub->add_option("--kind", o.kind, "generator: pseudo_random | sobol | optimal");
    sub->add_option("--iterations", o.iterations, "sweeps of the optimal generator");
  };

  auto* grid = app.add_subcommand("grid", "generate a grid on the unit cube");
  add_grid_flags(grid);
  grid->add_flag("--header", o.header, "write a y1..yD header row");

  auto* calibrate = app.add_subcommand("calibrate", "calibrate sample clouds to constraints");
  add_grid_flags(calibrate);
  calibrate->add_option("--constraints", o.constraints, "constraint file (JSON array)")->check(CLI::ExistingFile);

  auto* price = app.add_subcommand("price", "backward induction on the calibrated surface");
  add_grid_flags(price);
  price->add_option("--constraints", o.constraints, "constraint file (JSON array)")->check(CLI::ExistingFile);
  price->add_option("--measure", o.measures, "risk measures: hedge, var, cva")->delimiter(',');
  price->add_option("--alpha", o.alpha, "VaR threshold fraction")->check(CLI::Range(0.0, 1.0));
  price->add_option("--steps-per-year", [&](const CLI::results_t& r) { o.steps_per_year = std::stod(r[0]); return true; },
                    "schedule density");
  price->add_option("--t-min", [&](const CLI::results_t& r) { o.t_min = std::stod(r[0]); return true; },
                    "earliest valuation time (years)");

  auto* bench = app.add_subcommand("bench", "reproduce a reference table");
  bench->add_option("--table", o.table, "table id (1-4)")->required();
  bench->add_option("--n", o.bench_n, "point counts")->delimiter(',');
  bench->add_option("--d", o.bench_d, "dimensions")->delimiter(',');
  bench->add_option("--mc-paths", o.mc_paths, "Monte Carlo paths for the best-of benchmark");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  o.seed_given = seed->count() > 0;
  if (o.threads > 0) kernels::set_num_threads(o.threads);

  try {
    if (grid->parsed()) return cmd_grid(o, out);
    if (calibrate->parsed()) return cmd_calibrate(o, out);
    if (price->parsed()) return cmd_price(o, out);
    BenchRequest request{o.table, o.bench_n, o.bench_d, o.mc_paths, o.seed_given ? std::optional(o.seed) : std::nullopt,
                         o.config, o.out};
    return run_bench(request, out);
  } catch (const SpecificationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const OverdeterminedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedDimension& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace codefi::cli
