#include <gtest/gtest.h>

#include <random>

#include "coalesce/exact_oracle.hpp"
#include "fixtures.hpp"

namespace coalesce {
namespace {

// Orthogonal zero-mean columns x1 = (-1, 1, -1, 1), x2 = (-1, -1, 1, 1) and
// f = (1, 2, 3, 6). By hand: intercept = mean(f) = 3,
// b1 = sum(x1 f) / 4 = 1, b2 = sum(x2 f) / 4 = 1.5, and dropping one column
// leaves the others unchanged.
DesignArtifacts orthogonal_toy() {
  FeatureSchema s{{{"x1", FeatureKind::Numeric, {}}, {"x2", FeatureKind::Numeric, {}}}, ""};
  std::vector<std::vector<std::string>> rows{{"-1", "-1"}, {"1", "-1"}, {"-1", "1"}, {"1", "1"}};
  return DesignArtifacts::build(s, rows, PredictionVector(Eigen::Vector4d(1, 2, 3, 6)));
}

TEST(FitSubsetOls, HandComputedNormalEquations) {
  const auto d = orthogonal_toy();
  const auto& map = d.design.column_map;
  EXPECT_TRUE(fit_subset_ols(d.gram, build_mask(Coalition(Mask{3}), map)).isApprox(Eigen::Vector3d(3, 1, 1.5), 1e-14));
  EXPECT_TRUE(fit_subset_ols(d.gram, build_mask(Coalition(Mask{1}), map)).isApprox(Eigen::Vector2d(3, 1), 1e-14));
  EXPECT_TRUE(fit_subset_ols(d.gram, build_mask(Coalition(Mask{2}), map)).isApprox(Eigen::Vector2d(3, 1.5), 1e-14));
}

TEST(FitSubsetOls, EmptyCoalitionIsMean) {
  const auto fx = testing::p6_fixture();
  const auto beta = fit_subset_ols(fx.data.gram, build_mask(Coalition(Mask{0}), fx.data.design.column_map));
  ASSERT_EQ(beta.size(), 1);
  EXPECT_NEAR(beta[0], fx.data.f.values.mean(), 1e-12 * std::abs(fx.data.f.values.mean()));
}

TEST(FitSubsetOls, FullCoalitionMatchesConstrainedSolve) {
  const auto fx = testing::p6_fixture();
  const auto& d = fx.data;
  const auto mask = build_mask(Coalition(Mask{63}), d.design.column_map);
  const auto exact = fit_subset_ols(d.gram, mask);
  const auto approx = solve_coalition(d.gram, mask, kappa_default(d.gram));
  EXPECT_LE((exact - approx).cwiseAbs().maxCoeff(), 1e-12 * exact.cwiseAbs().maxCoeff());
}

TEST(FitSubsetOls, SingularSubmatrix) {
  FeatureSchema s{{{"a", FeatureKind::Numeric, {}}, {"b", FeatureKind::Numeric, {}}}, ""};
  std::vector<std::vector<std::string>> rows{{"1", "2"}, {"2", "4"}, {"3", "6"}, {"4", "8"}};
  const auto d = DesignArtifacts::build(s, rows, PredictionVector(Eigen::Vector4d(1, 0, 1, 0)));
  EXPECT_NO_THROW(fit_subset_ols(d.gram, build_mask(Coalition(Mask{1}), d.design.column_map)));
  try {
    fit_subset_ols(d.gram, build_mask(Coalition(Mask{3}), d.design.column_map), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularSubmatrix);
    EXPECT_EQ(e.coalition(), 3u);
  }
  EXPECT_THROW(fit_subset_raw(d.design, d.f, build_mask(Coalition(Mask{3}), d.design.column_map)), Error);
  EXPECT_THROW(fit_exact(d.gram, enumerate_all(2), d.design.column_map), Error);
}

// Subsetting X^T X and refitting from the raw reduced rows agree.
TEST(OracleProperties, SubsetGramIdentity) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int numeric = 1 + static_cast<int>(rng() % 4);
    const int categorical = static_cast<int>(rng() % 3);
    const auto fx = testing::make_fixture(numeric, categorical, 30 + rng() % 50, rng());
    const auto& d = fx.data;
    const auto plan = enumerate_all(d.p());
    for (const auto& c : plan.coalitions) {
      const auto mask = build_mask(c, d.design.column_map);
      const auto a = fit_subset_ols(d.gram, mask);
      const auto b = fit_subset_raw(d.design, d.f, mask);
      EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff())) << "mask " << c.mask;
    }
  }
}

TEST(OracleProperties, OrderIndependent) {
  const auto fx = testing::p6_fixture();
  const auto& d = fx.data;
  auto plan = enumerate_all(6);
  const Eigen::VectorXd x = d.design.values.row(2).transpose();
  const auto forward = explain_exact(d.gram, plan, d.design.column_map, x);
  std::reverse(plan.coalitions.begin(), plan.coalitions.end());
  std::reverse(plan.weights.begin(), plan.weights.end());
  const auto backward = explain_exact(d.gram, plan, d.design.column_map, x);
  for (Eigen::Index s = 0; s < forward.size(); ++s) EXPECT_EQ(forward[s], backward[forward.size() - 1 - s]);
  const auto threaded = fit_exact(d.gram, plan, d.design.column_map, 4);
  EXPECT_TRUE((oracle_contributions(threaded, x).array() == backward.array()).all());
}

TEST(ExplainExact, ConstantResponse) {
  const auto fx = testing::p6_fixture();
  const auto& d = fx.data;
  const auto gram = compute_gram(d.design, PredictionVector(Eigen::VectorXd::Constant(200, -1.5)));
  const auto v = explain_exact(gram, enumerate_all(6), d.design.column_map, d.design.values.row(9).transpose());
  EXPECT_LE((v.array() + 1.5).abs().maxCoeff(), 1e-12);
}

TEST(ExplainExact, ApproxAgreesAtLargeKappa) {
  const auto fx = testing::p6_fixture();
  const auto& d = fx.data;
  const auto plan = enumerate_all(6);
  const auto coeffs = solve_plan_chunked(d.gram, plan, d.design.column_map, kappa_default(d.gram, 1e8));
  for (Eigen::Index r : {0, 1, 50}) {
    const Eigen::VectorXd x = d.design.values.row(r).transpose();
    const auto exact = explain_exact(d.gram, plan, d.design.column_map, x);
    const auto approx = contributions(coeffs, x);
    EXPECT_LE((exact - approx).cwiseAbs().maxCoeff(), 1e-6 * exact.cwiseAbs().maxCoeff());
  }
}

TEST(ExplainSequential, MatchesGramOracle) {
  const auto fx = testing::make_fixture(3, 1, 120, 5);
  const auto& d = fx.data;
  const auto plan = enumerate_all(4);
  const Eigen::MatrixXd rows = d.design.values.topRows(3);
  const auto seq = explain_sequential(d.design, d.f, plan, rows);
  const auto fit = fit_exact(d.gram, plan, d.design.column_map);
  for (Eigen::Index r = 0; r < 3; ++r) {
    const auto v = oracle_contributions(fit, rows.row(r).transpose());
    EXPECT_LE((seq.row(r).transpose() - v).cwiseAbs().maxCoeff(), 1e-10 * v.cwiseAbs().maxCoeff());
  }
}

}  // namespace
}  // namespace coalesce
