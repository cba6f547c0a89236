#include "bench.hpp"

#include "cli.hpp"
#include "pipeline.hpp"

#include "codefi/error.hpp"
#include "codefi/oracle.hpp"
#include "embedded/presets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>

namespace codefi::cli {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double rel(double computed, double reference) { return std::abs(computed - reference) / std::abs(reference); }

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

io::Json sized(io::Json j, std::size_t n, std::optional<std::size_t> d, const BenchRequest& request) {
  j["grid"]["n"] = n;
  if (d) {
    j["grid"]["d"] = *d;
    j["prior"]["dim"] = *d;
  }
  if (request.seed) j["grid"]["seed"] = *request.seed;
  return j;
}

template <class T>
std::vector<T> list_or(const std::vector<T>& given, const io::Json& fallback) {
  return given.empty() ? fallback.get<std::vector<T>>() : given;
}

void table1(const io::Json& cfg, const BenchRequest& request, BenchReport& report) {
  const auto& ref = oracle::bench_reference(1);
  const auto& b = cfg.at("bench");
  const double tol = b.value("tolerance", 1e-6);
  const double budget = b.value("seconds_budget", 10.0);
  for (auto n : list_or(request.n, b.at("n"))) {
    const auto config = parse_config(sized(cfg, n, std::nullopt, request));
    const auto start = std::chrono::steady_clock::now();
    const auto run = run_calibration(config);
    const double secs = seconds_since(start);
    const auto& slice = run.slices.at(0);
    for (std::size_t i = 0; i < slice.constraints.size(); ++i) {
      const auto& row = ref.rows.at(i);
      const double computed = slice.constraints[i].target + slice.residuals[i];
      const double r = std::abs(slice.residuals[i]) / std::abs(slice.constraints[i].target);
      report.rows.push_back({"N=" + std::to_string(n) + " strike " + fmt("%g", row.params.at("strike")), row.value,
                             computed, secs, r <= tol, "rel. residual " + fmt("%.2e", r)});
    }
    const Matrix& s = slice.cloud.points;
    bool monotone = true;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(s.rows()));
    for (Eigen::Index k = 0; k < s.rows(); ++k) order[static_cast<std::size_t>(k)] = k;
    std::sort(order.begin(), order.end(), [&](auto a, auto c) { return (*run.grid)(a, 0) < (*run.grid)(c, 0); });
    for (std::size_t k = 1; k < order.size(); ++k) monotone = monotone && s(order[k - 1], 0) <= s(order[k], 0);
    report.rows.push_back({"N=" + std::to_string(n) + " monotone quantile", std::nullopt, s.col(0).maxCoeff() - s.col(0).minCoeff(),
                           secs, monotone, "range " + fmt("%.1f", s.col(0).minCoeff()) + " .. " + fmt("%.1f", s.col(0).maxCoeff())});
    report.rows.push_back({"N=" + std::to_string(n) + " runtime [s]", budget, secs, secs, secs <= budget, "budget"});
  }
}

void table2(const io::Json& cfg, const BenchRequest& request, BenchReport& report) {
  const auto& ref = oracle::bench_reference(2);
  const auto& b = cfg.at("bench");
  const auto& tol = b.at("tolerance");
  const std::size_t paths = request.mc_paths ? request.mc_paths : b.at("mc_paths").get<std::size_t>();
  const auto grid_n = tol.at("grid_n").get<std::size_t>();
  const auto grid_d = tol.at("grid_d").get<std::vector<std::size_t>>();
  const Payoff best_of = Payoff::best_of(1.0);
  const double maturity = cfg.at("moments").at("maturity").get<double>();

  for (auto d : list_or(request.d, b.at("d"))) {
    const std::string tag = "D=" + std::to_string(d);
    std::optional<double> mc_ref;
    try {
      mc_ref = oracle::find_reference(ref, "mc", {{"d", static_cast<double>(d)}}).value;
    } catch (const SpecificationError&) {
    }
    if (paths >= 2) {
      const auto base = parse_config(sized(cfg, 2, d, request));
      const auto start = std::chrono::steady_clock::now();
      const auto mc = oracle::mc_price_european(base.prior, best_of, maturity, paths, request.seed.value_or(5489));
      const double secs = seconds_since(start);
      std::optional<bool> pass;
      if (mc_ref) pass = std::abs(mc.value - *mc_ref) <= tol.at("mc_standard_errors").get<double>() * mc.std_error;
      report.rows.push_back({tag + " MC " + std::to_string(paths), mc_ref, mc.value, secs, pass,
                             "std. error " + fmt("%.2e", mc.std_error)});
      if (d == 1) {
        const double exact = oracle::bs_call(1.0, 1.0, base.prior.vol()[0], maturity);
        const double r = rel(mc.value, exact);
        report.rows.push_back({tag + " MC vs closed form", exact, mc.value, 0.0,
                               r <= tol.at("closed_form_relative").get<double>(), "rel. " + fmt("%.2e", r)});
      }
    }
    for (auto n : list_or(request.n, b.at("n"))) {
      const auto config = parse_config(sized(cfg, n, d, request));
      const auto start = std::chrono::steady_clock::now();
      const auto run = run_calibration(config);
      const Matrix& cloud = run.slices.at(0).cloud.points;
      double sum = 0.0;
      for (Eigen::Index k = 0; k < cloud.rows(); ++k) sum += best_of(row_span(cloud, k));
      const double value = sum / static_cast<double>(cloud.rows());
      const double secs = seconds_since(start);
      std::optional<bool> pass;
      const bool checked = n == grid_n && std::find(grid_d.begin(), grid_d.end(), d) != grid_d.end();
      if (checked && mc_ref) pass = rel(value, *mc_ref) <= tol.at("grid_relative").get<double>();
      std::string note = run.converged ? "" : "not converged; ";
      try {
        note += "published " + fmt("%g", oracle::find_reference(ref, "grid", {{"n", static_cast<double>(n)}, {"d", static_cast<double>(d)}}).value);
      } catch (const SpecificationError&) {
      }
      report.rows.push_back({tag + " N=" + std::to_string(n), mc_ref, value, secs, pass, note});
    }
  }
}

void table3(const io::Json& cfg, const BenchRequest& request, BenchReport& report) {
  const auto& ref = oracle::bench_reference(3);
  const auto& b = cfg.at("bench");
  std::map<std::size_t, std::vector<double>> american;
  for (auto n : list_or(request.n, b.at("n"))) {
    const auto config = parse_config(sized(cfg, n, std::nullopt, request));
    const auto start = std::chrono::steady_clock::now();
    const auto run = run_price(config);
    const double secs = seconds_since(start);
    const auto& am = run.primary();
    const auto last = am.times.size() - 1;
    for (std::size_t c = 0; c < config.payoffs.size(); ++c) {
      const double strike_pct = std::get<payoffs::Call>(config.payoffs[c].variant()).strike / config.prior.initial()[0];
      const double a = value::fair_value(am, c);
      const double e = value::fair_value(run.european, c);
      double intrinsic = 0.0;
      const Matrix& cloud = am.clouds[last].points;
      for (Eigen::Index k = 0; k < cloud.rows(); ++k) intrinsic += config.payoffs[c](row_span(cloud, k));
      intrinsic /= static_cast<double>(cloud.rows());
      american[n].push_back(a);
      const double slack = 1e-9 * std::max(1.0, std::abs(e));
      std::optional<double> published;
      for (const auto& r : ref.rows) {
        if (r.key == "american" && std::abs(r.params.at("strike") - strike_pct) < 1e-6 &&
            r.params.at("n") == static_cast<double>(n)) {
          published = r.value;
        }
      }
      const std::string label = "N=" + std::to_string(n) + " strike " + fmt("%g", std::round(strike_pct * 1000) / 1000);
      report.rows.push_back({label, published, a, secs, a >= e - slack && a >= intrinsic - slack,
                             "european " + fmt("%.4f", e) + ", intrinsic " + fmt("%.4f", intrinsic)});
    }
  }
  const auto pair = b.at("convergence").get<std::vector<std::size_t>>();
  const double tol = b.at("convergence_tolerance").get<double>();
  if (american.count(pair[0]) && american.count(pair[1])) {
    for (std::size_t c = 0; c < american[pair[0]].size(); ++c) {
      const double coarse = american[pair[0]][c];
      const double fine = american[pair[1]][c];
      const double r = rel(coarse, fine);
      report.rows.push_back({"N=" + std::to_string(pair[0]) + " vs " + std::to_string(pair[1]) + " column " + std::to_string(c),
                             fine, coarse, 0.0, r <= tol, "rel. " + fmt("%.2e", r)});
    }
  }
}

void table4(const io::Json& cfg, const BenchRequest& request, BenchReport& report) {
  const auto& ref = oracle::bench_reference(4);
  const auto& b = cfg.at("bench");
  for (auto d : list_or(request.d, b.at("d"))) {
    for (auto n : list_or(request.n, b.at("n"))) {
      const auto config = parse_config(sized(cfg, n, d, request));
      const auto start = std::chrono::steady_clock::now();
      const auto run = run_price(config);
      const double secs = seconds_since(start);
      const double eu = value::fair_value(run.european, 0);
      const double be = value::fair_value(run.primary(), 0);
      const double gap = (be - eu) / eu;
      bool pass = be >= eu - 1e-12;
      std::string note = "european " + fmt("%.6f", eu) + ", gap " + fmt("%.2f%%", 100.0 * gap);
      for (const auto& bound : b.at("gap_bounds")) {
        if (bound.at("n").get<std::size_t>() == n && bound.at("d").get<std::size_t>() == d) {
          const double max_gap = bound.at("max_gap").get<double>();
          pass = pass && gap <= max_gap;
          note += " (bound " + fmt("%.0f%%", 100.0 * max_gap) + ")";
        }
      }
      std::optional<double> published;
      try {
        const auto& r = oracle::find_reference(ref, "bermudan", {{"n", static_cast<double>(n)}, {"d", static_cast<double>(d)}});
        published = r.value;
        note += ", published gap " + r.error;
      } catch (const SpecificationError&) {
      }
      report.rows.push_back({"D=" + std::to_string(d) + " N=" + std::to_string(n), published, be, secs, pass, note});
    }
  }
}

}  // namespace

io::Json preset(int table) {
  switch (table) {
    case 1: return io::Json::parse(embedded::preset_table1);
    case 2: return io::Json::parse(embedded::preset_table2);
    case 3: return io::Json::parse(embedded::preset_table3);
    case 4: return io::Json::parse(embedded::preset_table4);
    default: throw SpecificationError("unknown table id " + std::to_string(table) + " (expected 1-4)");
  }
}

bool BenchReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.pass.value_or(true); });
}

io::Json BenchReport::to_json() const {
  io::Json out = io::Json::array();
  for (const auto& r : rows) {
    io::Json j{{"label", r.label}, {"computed", r.computed}, {"seconds", r.seconds}, {"note", r.note}};
    j["reference"] = r.reference ? io::Json(*r.reference) : io::Json(nullptr);
    j["relative_error"] = r.reference && *r.reference != 0.0 ? io::Json(rel(r.computed, *r.reference)) : io::Json(nullptr);
    j["pass"] = r.pass ? io::Json(*r.pass) : io::Json(nullptr);
    out.push_back(j);
  }
  return {{"table", table}, {"all_pass", all_pass()}, {"rows", out}};
}

BenchReport bench_table(const BenchRequest& request) {
  const io::Json cfg = request.config.empty() ? preset(request.table) : io::read_json(request.config);
  BenchReport report;
  report.table = request.table;
  switch (request.table) {
    case 1: table1(cfg, request, report); break;
    case 2: table2(cfg, request, report); break;
    case 3: table3(cfg, request, report); break;
    case 4: table4(cfg, request, report); break;
    default: throw SpecificationError("unknown table id " + std::to_string(request.table) + " (expected 1-4)");
  }
  return report;
}

int run_bench(const BenchRequest& request, std::ostream& out) {
  const auto report = bench_table(request);
  char line[256];
  std::snprintf(line, sizeof line, "%-30s %14s %14s %10s %9s  %-6s %s\n", "row", "reference", "computed", "rel.err",
                "seconds", "status", "note");
  out << line;
  for (const auto& r : report.rows) {
    const std::string reference = r.reference ? fmt("%.6g", *r.reference) : "-";
    const std::string err = r.reference && *r.reference != 0.0 ? fmt("%.3e", rel(r.computed, *r.reference)) : "-";
    const char* status = r.pass ? (*r.pass ? "PASS" : "FAIL") : "info";
    std::snprintf(line, sizeof line, "%-30s %14s %14.8g %10s %9.3f  %-6s %s\n", r.label.c_str(), reference.c_str(),
                  r.computed, err.c_str(), r.seconds, status, r.note.c_str());
    out << line;
  }
  io::write_json(std::filesystem::path(request.out) / ("bench_table" + std::to_string(request.table) + ".json"),
                 report.to_json());
  return report.all_pass() ? kExitOk : kExitFailure;
}

}  // namespace codefi::cli
