#pragma once

#include "codefi/payoff.hpp"
#include "codefi/prior.hpp"

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace codefi::oracle {

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
};

inline constexpr std::size_t kMcBatch = 4096;

/// Plain Monte Carlo of E[payoff(X_T)] under the prior. Paths come in
/// batches of kMcBatch; batch b draws from MT19937 seeded with seed + b, so
/// the estimate does not depend on the thread count.
McEstimate mc_price_european(const prior::PriorModel& prior, const Payoff& payoff, double maturity,
                             std::size_t n_paths, std::uint64_t seed = 5489);

/// Undiscounted Black-Scholes call.
double bs_call(double spot, double strike, double vol, double maturity);
double bs_call_delta(double spot, double strike, double vol, double maturity);

struct ReferenceRow {
  std::string key;                       // "value", "mc", "grid", "european", "american", ...
  std::map<std::string, double> params;  // strike, n, d, seconds, ...
  double value = 0.0;
  std::string error;  // relative error label when published with one
  std::string provenance;
};

struct ReferenceTable {
  int id = 0;
  std::string title;
  std::map<std::string, double> params;  // spot, maturity when present
  std::vector<ReferenceRow> rows;
};

/// Published benchmark numbers for tables 1 to 4. Throws SpecificationError
/// for any other id.
const ReferenceTable& bench_reference(int table);

/// First row with the given key whose params contain all the given pairs.
const ReferenceRow& find_reference(const ReferenceTable& table, const std::string& key,
                                   std::initializer_list<std::pair<const char*, double>> params);

}  // namespace codefi::oracle
