#include "codefi/error.hpp"
#include "codefi/seq.hpp"
#include "embedded/sobol_table.hpp"

#include <array>
#include <bit>
#include <sstream>
#include <string>

namespace codefi::seq {
namespace {

constexpr int kBits = 32;

struct DirectionTable {
  // v[j][k] = k-th direction number of dimension j, scaled to 32 bits.
  std::vector<std::array<std::uint32_t, kBits>> v;
};

DirectionTable load_table() {
  DirectionTable table;
  std::array<std::uint32_t, kBits> first{};
  for (int k = 0; k < kBits; ++k) first[static_cast<std::size_t>(k)] = 1u << (kBits - 1 - k);
  table.v.push_back(first);

  std::istringstream in{std::string(embedded::sobol_joe_kuo)};
  std::string line;
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    unsigned dim = 0, s = 0, a = 0;
    fields >> dim >> s >> a;
    std::array<std::uint32_t, kBits> m{};
    for (unsigned i = 0; i < s; ++i) fields >> m[i];
    std::array<std::uint32_t, kBits> v{};
    for (unsigned k = 0; k < s && k < kBits; ++k) v[k] = m[k] << (kBits - 1 - k);
    for (unsigned k = s; k < kBits; ++k) {
      std::uint32_t value = v[k - s] ^ (v[k - s] >> s);
      for (unsigned i = 1; i < s; ++i) {
        if ((a >> (s - 1 - i)) & 1u) value ^= v[k - i];
      }
      v[k] = value;
    }
    table.v.push_back(v);
  }
  return table;
}

const DirectionTable& table() {
  static const DirectionTable instance = load_table();
  return instance;
}

}  // namespace

std::size_t sobol_max_dim() { return table().v.size(); }

GridMatrix gen_sobol(std::size_t n, std::size_t d) {
  if (n < 1 || d < 1) throw SpecificationError("gen_sobol requires n >= 1 and d >= 1");
  const auto& dirs = table().v;
  if (d > dirs.size()) {
    throw UnsupportedDimension("Sobol dimension " + std::to_string(d) + " exceeds direction-number table (" +
                               std::to_string(dirs.size()) + ")");
  }
  if (n >= (std::size_t{1} << kBits)) throw SpecificationError("too many Sobol points");

  Matrix points(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<std::uint32_t> state(d, 0);
  constexpr double scale = 1.0 / 4294967296.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const auto c = static_cast<std::size_t>(std::countr_one(static_cast<std::uint32_t>(i - 1)));
    for (std::size_t j = 0; j < d; ++j) {
      state[j] ^= dirs[j][c];
      points(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = static_cast<double>(state[j]) * scale;
    }
  }
  return GridMatrix(std::move(points));
}

}  // namespace codefi::seq
