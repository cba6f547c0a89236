#include "codefi/oracle.hpp"

#include "codefi/error.hpp"
#include "embedded/reference_tables.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

namespace codefi::oracle {
namespace {

struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    count += 1.0;
    const double delta = x - mean;
    mean += delta / count;
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    const double delta = o.mean - mean;
    mean += delta * o.count / total;
    m2 += o.m2 + delta * delta * count * o.count / total;
    count = total;
  }
};

std::vector<ReferenceTable> load_tables() {
  const auto doc = nlohmann::json::parse(embedded::reference_tables);
  std::vector<ReferenceTable> out;
  for (const auto& [name, t] : doc.at("tables").items()) {
    ReferenceTable table;
    table.id = std::stoi(name);
    table.title = t.at("title").get<std::string>();
    for (const char* key : {"spot", "maturity"}) {
      if (t.contains(key)) table.params[key] = t.at(key).get<double>();
    }
    for (const auto& r : t.at("rows")) {
      const std::string provenance = r.at("provenance").get<std::string>();
      if (table.id == 3) {
        const double strike = r.at("strike").get<double>();
        table.rows.push_back({"european", {{"strike", strike}}, r.at("european").get<double>(), "", provenance});
        for (const auto& [n, v] : r.at("n").items()) {
          const double nn = std::stod(n);
          double seconds = t.at("seconds").at(n).get<double>();
          table.rows.push_back({"american", {{"strike", strike}, {"n", nn}, {"seconds", seconds}}, v.get<double>(), "",
                                provenance});
        }
        continue;
      }
      ReferenceRow row;
      row.key = r.value("method", table.id == 4 ? std::string("bermudan") : std::string("value"));
      row.value = r.at("value").get<double>();
      row.provenance = provenance;
      row.error = r.value("error", std::string());
      for (const char* key : {"strike", "n", "d", "seconds"}) {
        if (r.contains(key)) row.params[key] = r.at(key).get<double>();
      }
      table.rows.push_back(std::move(row));
    }
    out.push_back(std::move(table));
  }
  return out;
}

}  // namespace

McEstimate mc_price_european(const prior::PriorModel& prior, const Payoff& payoff, double maturity,
                             std::size_t n_paths, std::uint64_t seed) {
  if (n_paths < 2) throw SpecificationError("Monte Carlo needs at least two paths");
  const std::size_t dim = prior.dim();
  const std::size_t batches = (n_paths + kMcBatch - 1) / kMcBatch;
  std::vector<Moments> partial(batches);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < batches; ++b) {
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed + b));
    std::vector<double> y(dim), x(dim);
    const std::size_t count = std::min(kMcBatch, n_paths - b * kMcBatch);
    Moments m;
    for (std::size_t p = 0; p < count; ++p) {
      for (auto& v : y) v = (static_cast<double>(rng()) + 0.5) * 0x1p-32;
      prior.quantile_map(maturity, y, x);
      m.add(payoff(x));
    }
    partial[b] = m;
  }

  Moments total;
  for (const auto& m : partial) total.merge(m);
  const double variance = total.m2 / (total.count - 1.0);
  return {total.mean, std::sqrt(std::max(variance, 0.0) / total.count), n_paths};
}

double bs_call(double spot, double strike, double vol, double maturity) {
  if (!(spot > 0.0) || !(strike > 0.0)) throw DomainError("Black-Scholes needs positive spot and strike");
  const double s = vol * std::sqrt(maturity);
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("Black-Scholes needs vol * sqrt(T) > 0");
  const double d1 = (std::log(spot / strike) + 0.5 * s * s) / s;
  return spot * prior::normal_cdf(d1) - strike * prior::normal_cdf(d1 - s);
}

double bs_call_delta(double spot, double strike, double vol, double maturity) {
  if (!(spot > 0.0) || !(strike > 0.0)) throw DomainError("Black-Scholes needs positive spot and strike");
  const double s = vol * std::sqrt(maturity);
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("Black-Scholes needs vol * sqrt(T) > 0");
  return prior::normal_cdf((std::log(spot / strike) + 0.5 * s * s) / s);
}

const ReferenceTable& bench_reference(int table) {
  static const std::vector<ReferenceTable> tables = load_tables();
  for (const auto& t : tables) {
    if (t.id == table) return t;
  }
  throw SpecificationError("unknown reference table " + std::to_string(table));
}

const ReferenceRow& find_reference(const ReferenceTable& table, const std::string& key,
                                   std::initializer_list<std::pair<const char*, double>> params) {
  for (const auto& row : table.rows) {
    if (row.key != key) continue;
    bool match = true;
    for (const auto& [name, v] : params) {
      const auto it = row.params.find(name);
      if (it == row.params.end() || std::abs(it->second - v) > 1e-12) {
        match = false;
        break;
      }
    }
    if (match) return row;
  }
  throw SpecificationError("no reference row '" + key + "' in table " + std::to_string(table.id));
}

}  // namespace codefi::oracle
