#pragma once

// Seeded synthetic tabular data with dependent features and a nonlinear
// "model" producing the predictions to explain. Used by the bench command and
// by the test fixtures.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coalesce/tabular.hpp"

namespace coalesce {

struct SyntheticSpec {
  std::size_t rows = 1000;
  int numeric = 7;
  int categorical = 3;
  int levels = 3;
  double correlation = 0.5;  // loading of every feature on a shared latent factor
  std::uint64_t seed = 1;
};

struct SyntheticData {
  FeatureSchema schema;
  std::vector<std::vector<std::string>> rows;
  PredictionVector f;
};

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Standard normal quantile for u in (0, 1), Newton iteration on erf.
inline double normal_quantile(double u) {
  const double target = 2.0 * u - 1.0;
  double x = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double step = (std::erf(x) - target) / (2.0 / std::sqrt(M_PI) * std::exp(-x * x));
    x -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return std::sqrt(2.0) * x;
}

inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = spec.correlation;
  const double rest = std::sqrt(1.0 - rho * rho);

  SyntheticData out;
  for (int i = 0; i < spec.numeric; ++i) out.schema.features.push_back({"x" + std::to_string(i + 1), FeatureKind::Numeric, {}});
  for (int i = 0; i < spec.categorical; ++i) {
    Feature f{"c" + std::to_string(i + 1), FeatureKind::Categorical, {}};
    for (int l = 0; l < spec.levels; ++l) f.levels.push_back("L" + std::to_string(l));
    out.schema.features.push_back(std::move(f));
  }

  // Thresholds splitting a standard normal into `levels` equiprobable bins.
  std::vector<double> cuts;
  for (int l = 1; l < spec.levels; ++l) cuts.push_back(normal_quantile(static_cast<double>(l) / spec.levels));

  Eigen::VectorXd f(static_cast<Eigen::Index>(spec.rows));
  out.rows.reserve(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    const double z = normal(rng);
    std::vector<double> x(static_cast<std::size_t>(spec.numeric));
    for (auto& xi : x) xi = rho * z + rest * normal(rng);
    std::vector<int> level(static_cast<std::size_t>(spec.categorical));
    for (auto& l : level) {
      const double latent = rho * z + rest * normal(rng);
      l = 0;
      while (l < static_cast<int>(cuts.size()) && latent > cuts[static_cast<std::size_t>(l)]) ++l;
    }

    double y = 2.0;
    for (std::size_t i = 0; i < x.size(); ++i) y += (1.0 + 0.25 * static_cast<double>(i)) * (i % 2 ? -1.0 : 1.0) * x[i];
    if (x.size() >= 2) y += 0.5 * x[0] * x[1];
    if (x.size() >= 3) y += std::sin(x[2]);
    for (std::size_t i = 0; i < level.size(); ++i) y += 0.8 * static_cast<double>(level[i]) * (i % 2 ? -1.0 : 1.0);
    if (!x.empty() && !level.empty()) y += 0.3 * x[0] * static_cast<double>(level[0]);
    f[static_cast<Eigen::Index>(r)] = y;

    std::vector<std::string> cells;
    for (double xi : x) cells.push_back(format_real(xi));
    for (int l : level) cells.push_back("L" + std::to_string(l));
    out.rows.push_back(std::move(cells));
  }
  out.f = PredictionVector(std::move(f));
  return out;
}

/// Writes the data as CSV with the predictions in a trailing column.
inline void write_synthetic_csv(std::ostream& os, const SyntheticData& data, const std::string& prediction_column = "prediction") {
  const auto names = data.schema.names();
  for (const auto& n : names) os << n << ',';
  os << prediction_column << '\n';
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    for (const auto& c : data.rows[r]) os << c << ',';
    os << format_real(data.f.values[static_cast<Eigen::Index>(r)]) << '\n';
  }
}

}  // namespace coalesce
