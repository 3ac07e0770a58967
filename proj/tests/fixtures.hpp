#pragma once

#include <string>
#include <vector>

#include "coalesce/coalesce.hpp"
#include "coalesce/synthetic.hpp"

namespace coalesce::testing {

struct Fixture {
  SyntheticData raw;
  DesignArtifacts data;
};

inline Fixture make_fixture(int numeric, int categorical, std::size_t rows, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.rows = rows;
  spec.numeric = numeric;
  spec.categorical = categorical;
  spec.levels = 3;
  spec.seed = seed;
  Fixture fx{make_synthetic(spec), {}};
  fx.data = DesignArtifacts::build(fx.raw.schema, fx.raw.rows, fx.raw.f);
  return fx;
}

/// p = 6, N = 200: four numeric and two three-level categorical features.
inline Fixture p6_fixture() { return make_fixture(4, 2, 200, 6); }

/// p = 10, N = 1000: seven numeric and three three-level categorical features.
inline Fixture p10_fixture() { return make_fixture(7, 3, 1000, 10); }

inline std::vector<std::vector<std::string>> first_rows(const Fixture& fx, std::size_t n) {
  return {fx.raw.rows.begin(), fx.raw.rows.begin() + static_cast<std::ptrdiff_t>(std::min(n, fx.raw.rows.size()))};
}

}  // namespace coalesce::testing
