#include "codefi/io.hpp"

#include "codefi/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace codefi::io {
namespace {

std::vector<double> scalar_or_array(const Json& j, std::size_t dim, const char* what) {
  if (j.is_number()) return std::vector<double>(dim, j.get<double>());
  if (!j.is_array()) throw SpecificationError(std::string(what) + " must be a number or an array");
  auto v = j.get<std::vector<double>>();
  if (v.size() != dim) throw SpecificationError(std::string(what) + " has the wrong length");
  return v;
}

Matrix parse_matrix(const Json& j, std::size_t dim, const char* what) {
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw SpecificationError(std::string(what) + ": unknown matrix keyword");
    return Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  }
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.size() != dim) throw SpecificationError(std::string(what) + " must be " + std::to_string(dim) + " x " + std::to_string(dim));
  Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < dim; ++r) {
    if (rows[r].size() != dim) throw SpecificationError(std::string(what) + " must be square");
    for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Payoff parse_payoff(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "call") return payoffs::Call{j.value("coord", std::size_t{0}), j.at("strike").get<double>()};
  if (type == "put") return payoffs::Put{j.value("coord", std::size_t{0}), j.at("strike").get<double>()};
  if (type == "linear") return payoffs::Linear{j.at("weights").get<std::vector<double>>(), j.value("offset", 0.0)};
  if (type == "best_of") return payoffs::BestOf{j.at("strike").get<double>()};
  if (type == "variance") return payoffs::Variance{j.value("coord", std::size_t{0}), j.at("mean").get<double>()};
  if (type == "correlation") {
    return payoffs::Correlation{j.at("first").get<std::size_t>(), j.at("second").get<std::size_t>(),
                                j.at("mean_first").get<double>(), j.at("mean_second").get<double>(),
                                j.value("scale", 1.0)};
  }
  if (type == "table") {
    return payoffs::Table{j.value("coord", std::size_t{0}), j.at("knots").get<std::vector<double>>(),
                          j.at("values").get<std::vector<double>>()};
  }
  if (type == "constant") return payoffs::Constant{j.at("value").get<double>()};
  throw SpecificationError("unknown payoff type '" + type + "'");
}

Json to_json(const Payoff& payoff) {
  return std::visit(
      overloaded{
          [](const payoffs::Call& p) { return Json{{"type", "call"}, {"coord", p.coord}, {"strike", p.strike}}; },
          [](const payoffs::Put& p) { return Json{{"type", "put"}, {"coord", p.coord}, {"strike", p.strike}}; },
          [](const payoffs::Linear& p) { return Json{{"type", "linear"}, {"weights", p.weights}, {"offset", p.offset}}; },
          [](const payoffs::BestOf& p) { return Json{{"type", "best_of"}, {"strike", p.strike}}; },
          [](const payoffs::Variance& p) { return Json{{"type", "variance"}, {"coord", p.coord}, {"mean", p.mean}}; },
          [](const payoffs::Correlation& p) {
            return Json{{"type", "correlation"}, {"first", p.first},         {"second", p.second},
                        {"mean_first", p.mean_first}, {"mean_second", p.mean_second}, {"scale", p.scale}};
          },
          [](const payoffs::Table& p) {
            return Json{{"type", "table"}, {"coord", p.coord}, {"knots", p.knots}, {"values", p.values}};
          },
          [](const payoffs::Constant& p) { return Json{{"type", "constant"}, {"value", p.value}}; },
      },
      payoff.variant());
}

prior::PriorModel parse_prior(const Json& j) {
  const std::string kind = j.value("kind", std::string("lognormal"));
  prior::PriorKind k;
  if (kind == "lognormal") {
    k = prior::PriorKind::lognormal;
  } else if (kind == "normal") {
    k = prior::PriorKind::normal;
  } else {
    throw SpecificationError("unknown prior kind '" + kind + "'");
  }
  const auto dim = j.at("dim").get<std::size_t>();
  if (dim == 0) throw SpecificationError("prior dimension must be positive");
  auto vol = scalar_or_array(j.at("vol"), dim, "vol");
  Matrix corr = parse_matrix(j.value("correlation", Json("identity")), dim, "correlation");
  auto initial = scalar_or_array(j.value("initial", Json(k == prior::PriorKind::lognormal ? 1.0 : 0.0)), dim, "initial");
  return prior::PriorModel(k, std::move(vol), std::move(corr), j.value("martingale", true), std::move(initial));
}

Json to_json(const prior::PriorModel& prior) {
  Json corr;
  if (prior.identity_correlation()) {
    corr = "identity";
  } else {
    corr = Json::array();
    for (Eigen::Index r = 0; r < prior.correlation().rows(); ++r) {
      const auto row = prior.correlation().row(r);
      corr.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
  }
  return Json{{"kind", prior.kind() == prior::PriorKind::lognormal ? "lognormal" : "normal"},
              {"dim", prior.dim()},
              {"vol", prior.vol()},
              {"correlation", corr},
              {"martingale", prior.martingale()},
              {"initial", prior.initial()}};
}

std::vector<calib::Constraint> parse_constraints(const Json& j) {
  if (!j.is_array()) throw SpecificationError("constraints must be a JSON array");
  std::vector<calib::Constraint> out;
  for (const auto& c : j) {
    const double maturity = c.at("maturity").get<double>();
    if (!(maturity >= 0.0)) throw SpecificationError("constraint maturity must be nonnegative");
    out.push_back({parse_payoff(c.at("payoff")), maturity, c.at("target").get<double>()});
  }
  return out;
}

Json to_json(const calib::Constraint& constraint) {
  return Json{{"payoff", to_json(constraint.payoff)}, {"maturity", constraint.maturity}, {"target", constraint.target}};
}

GridSpec parse_grid(const Json& j) {
  GridSpec g;
  g.n = j.at("n").get<std::size_t>();
  g.d = j.at("d").get<std::size_t>();
  if (g.n < 2 || g.d < 1) throw SpecificationError("grid needs n >= 2 and d >= 1");
  g.kind.tag = seq::parse_generator_tag(j.value("kind", std::string("sobol")));
  g.kind.seed = j.value("seed", g.kind.seed);
  g.kind.iterations = j.value("iterations", g.kind.iterations);
  return g;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecificationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw SpecificationError(path.string() + ": " + e.what());
  }
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const Json& j) { write_atomic(path, j.dump(2) + "\n"); }

std::string format_csv(const Matrix& values, const std::vector<std::string>& header) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  if (!header.empty()) out += '\n';
  char buf[40];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", values(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

CsvTable read_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw SpecificationError("cannot open " + path.string());
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (first && has_header) {
      while (std::getline(ss, cell, ',')) table.header.push_back(cell);
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const char* begin = cell.data();
      const char* stop = cell.data() + cell.size();
      while (begin != stop && *begin == ' ') ++begin;
      while (stop != begin && (stop[-1] == ' ' || stop[-1] == '\r')) --stop;
      const auto [end, ec] = std::from_chars(begin, stop, v);
      if (ec != std::errc{} || end != stop) {
        throw SpecificationError(path.string() + ": not a number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw SpecificationError(path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  table.values.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) table.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return table;
}

}  // namespace codefi::io
