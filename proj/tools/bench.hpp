#pragma once

#include "codefi/io.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace codefi::cli {

struct BenchRequest {
  int table = 0;
  std::vector<std::size_t> n;  // empty: preset list
  std::vector<std::size_t> d;
  std::size_t mc_paths = 0;    // 0: preset value
  std::optional<std::uint64_t> seed;
  std::string config;          // replaces the built-in preset when set
  std::string out = "codefi-out";
};

/// Built-in configuration for a reference table (1-4).
io::Json preset(int table);

struct BenchRow {
  std::string label;
  std::optional<double> reference;
  double computed = 0.0;
  double seconds = 0.0;
  std::optional<bool> pass;  // unset: informational row
  std::string note;
};

struct BenchReport {
  int table = 0;
  std::vector<BenchRow> rows;
  bool all_pass() const;
  io::Json to_json() const;
};

BenchReport bench_table(const BenchRequest& request);

/// Runs the table, prints it, writes bench_table<k>.json; exit 0 iff every
/// checked row passes.
int run_bench(const BenchRequest& request, std::ostream& out);

}  // namespace codefi::cli
