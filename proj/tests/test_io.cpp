#include "codefi/error.hpp"
#include "codefi/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

using namespace codefi;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / ("codefi_io_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("payoff JSON round trip") {
  const std::vector<Payoff> all{Payoff::call(1.1, 2),
                                Payoff::put(0.9),
                                Payoff::linear({1.0, -2.0}, 0.5),
                                Payoff::best_of(1.0),
                                Payoff(payoffs::Variance{1, 0.3}),
                                Payoff(payoffs::Correlation{0, 2, 1.0, 1.1, 0.2}),
                                Payoff(payoffs::Table{0, {0.0, 1.0}, {1.0, 3.0}}),
                                Payoff::constant(7.0)};
  const std::vector<double> x{1.3, 0.4, -0.8};
  for (const auto& p : all) {
    const auto back = io::parse_payoff(io::to_json(p));
    CHECK(back.describe() == p.describe());
    CHECK(back(x) == p(x));
  }
  CHECK_THROWS_AS(io::parse_payoff(io::Json{{"type", "digital"}}), SpecificationError);
}

TEST_CASE("prior JSON") {
  const auto p = io::parse_prior(io::Json::parse(R"({"kind": "lognormal", "dim": 2, "vol": 0.1,
      "correlation": [[1, 0.3], [0.3, 1]], "initial": [1, 2]})"));
  CHECK(p.dim() == 2);
  CHECK(p.vol()[1] == 0.1);
  CHECK(p.initial()[1] == 2.0);
  CHECK(p.correlation()(0, 1) == 0.3);
  CHECK(p.martingale());
  const auto back = io::parse_prior(io::to_json(p));
  CHECK(back.correlation() == p.correlation());
  CHECK(back.initial() == p.initial());

  CHECK(io::to_json(io::parse_prior(io::Json::parse(R"({"dim": 3, "vol": [0.1, 0.2, 0.3]})")))["correlation"] == "identity");
  CHECK_THROWS_AS(io::parse_prior(io::Json::parse(R"({"dim": 2, "vol": [0.1]})")), SpecificationError);
  CHECK_THROWS_AS(io::parse_prior(io::Json::parse(R"({"kind": "heston", "dim": 1, "vol": 0.1})")), SpecificationError);
  CHECK_THROWS_AS(io::parse_prior(io::Json::parse(R"({"dim": 2, "vol": 0.1, "correlation": "ones"})")), SpecificationError);
}

TEST_CASE("constraint and grid specs") {
  const auto cs = io::parse_constraints(io::Json::parse(
      R"([{"payoff": {"type": "call", "strike": 2451.224}, "maturity": 0.25, "target": 559.2},
          {"payoff": {"type": "linear", "weights": [1]}, "maturity": 1, "target": 1}])"));
  REQUIRE(cs.size() == 2);
  CHECK(cs[0].target == 559.2);
  CHECK(cs[1].maturity == 1.0);
  CHECK(io::to_json(cs[0])["payoff"]["strike"] == 2451.224);
  CHECK_THROWS_AS(io::parse_constraints(io::Json::object()), SpecificationError);
  CHECK_THROWS_AS(io::parse_constraints(io::Json::parse(
                      R"([{"payoff": {"type": "call", "strike": 1}, "maturity": -1, "target": 0}])")),
                  SpecificationError);

  const auto g = io::parse_grid(io::Json::parse(R"({"n": 64, "d": 3, "kind": "optimal", "iterations": 2})"));
  CHECK(g.n == 64);
  CHECK(g.kind.tag == seq::GeneratorTag::optimal_discrepancy);
  CHECK(g.kind.iterations == 2);
  CHECK_THROWS_AS(io::parse_grid(io::Json::parse(R"({"n": 1, "d": 3})")), SpecificationError);
}

TEST_CASE("CSV output round trips every double") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  Matrix m(20, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng) * std::pow(10.0, static_cast<double>(i % 9) - 4);
  m(0, 0) = 1.0 / 3.0;
  m(1, 1) = 5e-324;
  const auto dir = scratch_dir("csv");
  io::write_atomic(dir / "m.csv", io::format_csv(m, {"a", "b", "c", "d"}));
  const auto t = io::read_csv(dir / "m.csv", true);
  CHECK(t.header == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(t.values == m);
  fs::remove_all(dir.parent_path());
}

TEST_CASE("atomic writes leave no temporary behind") {
  const auto dir = scratch_dir("atomic");
  io::write_json(dir / "sub" / "x.json", io::Json{{"k", 1}});
  CHECK(io::read_json(dir / "sub" / "x.json")["k"] == 1);
  io::write_json(dir / "sub" / "x.json", io::Json{{"k", 2}});
  CHECK(io::read_json(dir / "sub" / "x.json")["k"] == 2);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "sub")) files += e.is_regular_file();
  CHECK(files == 1);

  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(io::read_json(dir / "bad.json"), SpecificationError);
  CHECK_THROWS_AS(io::read_json(dir / "missing.json"), SpecificationError);
  fs::remove_all(dir.parent_path());
}
