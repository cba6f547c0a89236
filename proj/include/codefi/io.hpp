#pragma once

#include "codefi/calib.hpp"
#include "codefi/matrix.hpp"
#include "codefi/payoff.hpp"
#include "codefi/prior.hpp"
#include "codefi/seq.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace codefi::io {

using Json = nlohmann::json;

/// {"type": "call" | "put" | "linear" | "best_of" | "variance" | "correlation" | "table" | "constant", ...}
Payoff parse_payoff(const Json& j);
Json to_json(const Payoff& payoff);

/// {kind, dim, vol (scalar or array), correlation ("identity" or matrix), martingale, initial (scalar or array)}
prior::PriorModel parse_prior(const Json& j);
Json to_json(const prior::PriorModel& prior);

/// [{payoff, maturity, target}, ...]
std::vector<calib::Constraint> parse_constraints(const Json& j);
Json to_json(const calib::Constraint& constraint);

/// {"n", "d", "kind", "seed", "iterations"}
struct GridSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  seq::GeneratorKind kind{};
};
GridSpec parse_grid(const Json& j);

Json read_json(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, std::string_view content);
void write_json(const std::filesystem::path& path, const Json& j);

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Comma-separated numbers printed with 17 significant digits.
std::string format_csv(const Matrix& values, const std::vector<std::string>& header);
CsvTable read_csv(const std::filesystem::path& path, bool has_header);

}  // namespace codefi::io
