#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "coalesce/shapley.hpp"
#include "fixtures.hpp"

namespace coalesce {
namespace {

// Shapley values by the permutation definition: average marginal contribution
// of feature i over all p! orderings.
Eigen::VectorXd brute_force_shapley(int p, const Eigen::VectorXd& v_by_mask) {
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
  double perms = 0;
  do {
    Mask m = 0;
    for (int i : order) {
      const Mask next = m | (Mask{1} << i);
      phi[i] += v_by_mask[static_cast<Eigen::Index>(next)] - v_by_mask[static_cast<Eigen::Index>(m)];
      m = next;
    }
    ++perms;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / perms;
}

TEST(SolveKernelShap, OneFeature) {
  const auto plan = enumerate_all(1);
  const auto r = solve_kernel_shap(build_Z(plan), plan.weights, Eigen::Vector2d(2.5, 4.0));
  EXPECT_DOUBLE_EQ(r.phi0, 2.5);
  EXPECT_DOUBLE_EQ(r.phi[0], 1.5);
}

TEST(SolveKernelShap, ConstantGame) {
  const auto plan = enumerate_all(5);
  const auto r = solve_kernel_shap(build_Z(plan), plan.weights, Eigen::VectorXd::Constant(32, 7.0));
  EXPECT_NEAR(r.phi0, 7.0, 1e-12);
  EXPECT_LE(r.phi.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SolveKernelShap, MatchesPermutationDefinition) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int p : {2, 3, 5, 7}) {
    const auto plan = enumerate_all(p);
    Eigen::VectorXd v(static_cast<Eigen::Index>(plan.size()));
    for (Eigen::Index s = 0; s < v.size(); ++s) v[s] = g(rng);
    const auto r = solve_kernel_shap(build_Z(plan), plan.weights, v);
    const auto ref = brute_force_shapley(p, v);
    EXPECT_LE((r.phi - ref).cwiseAbs().maxCoeff(), 1e-4 * ref.cwiseAbs().maxCoeff()) << "p " << p;
  }
}

TEST(SolveKernelShap, AdditiveGameIsExact) {
  const int p = 6;
  const auto plan = enumerate_all(p);
  const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(p, -2, 3);
  Eigen::VectorXd v(static_cast<Eigen::Index>(plan.size()));
  for (std::size_t s = 0; s < plan.size(); ++s) {
    double acc = 1.0;
    for (int i = 0; i < p; ++i) acc += plan.coalitions[s].contains(i) ? a[i] : 0.0;
    v[static_cast<Eigen::Index>(s)] = acc;
  }
  const auto r = solve_kernel_shap(build_Z(plan), plan.weights, v);
  // Anchor weights 1e6 against interior weights ~1e-2 cost a few digits.
  EXPECT_LE((r.phi - a).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(r.phi0, 1.0, 1e-8);
}

TEST(SolveKernelShap, Linearity) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  const auto plan = sample_coalitions(8, 500, 2);
  const KernelShapSystem system(build_Z(plan), plan.weights);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd v1(static_cast<Eigen::Index>(plan.size())), v2(v1.size());
    for (Eigen::Index s = 0; s < v1.size(); ++s) {
      v1[s] = g(rng);
      v2[s] = 10 * g(rng);
    }
    const auto a = system.solve(v1), b = system.solve(v2), ab = system.solve(v1 + v2);
    const double scale = std::max({std::abs(ab.phi0), ab.phi.cwiseAbs().maxCoeff(), 1e-300});
    EXPECT_LE(std::abs(ab.phi0 - a.phi0 - b.phi0), 1e-10 * scale);
    EXPECT_LE((ab.phi - a.phi - b.phi).cwiseAbs().maxCoeff(), 1e-10 * scale);
  }
}

TEST(SolveKernelShap, DeficientPlans) {
  EXPECT_THROW(
      {
        const auto plan = sample_coalitions(5, 1, 1);
        KernelShapSystem(build_Z(plan), plan.weights);
      },
      Error);
  // Features 0 and 1 always appear together.
  CoalitionPlan plan;
  plan.p = 3;
  for (Mask m : {0b000u, 0b011u, 0b100u, 0b111u}) plan.coalitions.emplace_back(m);
  plan.weights = {1e6, 3, 2, 1e6};
  try {
    KernelShapSystem(build_Z(plan), plan.weights);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularNormalMatrix);
  }
  const auto ok = enumerate_all(3);
  EXPECT_THROW(solve_kernel_shap(build_Z(ok), ok.weights, Eigen::VectorXd::Zero(7)), Error);
}

TEST(ShapleyProperties, AnchoredEfficiency) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  const auto batch = explain_approx(fx.data, plan, testing::first_rows(fx, 40));
  for (std::size_t r = 0; r < batch.results.size(); ++r) {
    const auto& res = *batch.results[r];
    const double vfull = batch.v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(plan.size() - 1));
    const double vempty = batch.v(static_cast<Eigen::Index>(r), 0);
    const double bound = 1e-4 * (std::abs(vfull) + std::abs(vempty) + 1);
    EXPECT_LE(std::abs(res.efficiency_gap), bound);
    EXPECT_LE(std::abs(res.base_gap), bound);
    EXPECT_NEAR(res.phi0 + res.phi.sum() - vfull, res.efficiency_gap, 1e-9);
  }
}

// Rows come in swapped pairs (a, b, ...) and (b, a, ...), the model is
// symmetric in a and b, and the explained row has a == b, so the two features
// are interchangeable players and must receive equal Shapley values.
TEST(ShapleyProperties, SymmetricFeaturesGetEqualValues) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  FeatureSchema s{{{"a", FeatureKind::Numeric, {}}, {"b", FeatureKind::Numeric, {}}, {"c", FeatureKind::Numeric, {}},
                   {"d", FeatureKind::Categorical, {"u", "v"}}},
                  ""};
  std::vector<std::vector<std::string>> rows;
  std::vector<double> f;
  for (int i = 0; i < 100; ++i) {
    const double a = g(rng), b = 0.6 * a + g(rng), c = g(rng) + 0.3 * (a + b);
    const bool d = g(rng) > 0;
    const double y = 1 + a + b + a * b + 0.5 * c + (d ? 1.0 : 0.0) + 0.2 * (a + b) * c;
    for (int swap = 0; swap < 2; ++swap) {
      rows.push_back({format_real(swap ? b : a), format_real(swap ? a : b), format_real(c), d ? "v" : "u"});
      f.push_back(y);
    }
  }
  const auto data = DesignArtifacts::build(s, rows, PredictionVector(Eigen::Map<Eigen::VectorXd>(f.data(), 200)));
  const std::vector<std::vector<std::string>> x{{"0.7", "0.7", "-0.2", "v"}, {"-1.25", "-1.25", "0.5", "u"}};
  const auto batch = explain_exact_batch(data, enumerate_all(4), x);
  for (const auto& r : batch.results) {
    ASSERT_TRUE(r);
    EXPECT_NEAR(r->phi[0], r->phi[1], 1e-8);
  }
}

TEST(ShapleyProperties, ApproxMatchesExact) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  const auto rows = testing::first_rows(fx, 25);
  ApproxSettings settings;
  settings.kappa_multiplier = 1e6;
  const auto approx = explain_approx(fx.data, plan, rows, settings);
  const auto exact = explain_exact_batch(fx.data, plan, rows);
  double diff = 0, scale = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    diff = std::max(diff, (approx.results[r]->phi - exact.results[r]->phi).cwiseAbs().maxCoeff());
    scale = std::max(scale, exact.results[r]->phi.cwiseAbs().maxCoeff());
  }
  EXPECT_LE(diff, 1e-5 * scale);
}

TEST(ExplainBatch, SingleRowMatchesBatch) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  const auto rows = testing::first_rows(fx, 5);
  const auto batch = explain_approx(fx.data, plan, rows);
  const auto one = explain_approx(fx.data, plan, {rows[3]});
  EXPECT_TRUE((one.results[0]->phi.array() == batch.results[3]->phi.array()).all());
  EXPECT_EQ(one.results[0]->phi0, batch.results[3]->phi0);
}

TEST(ExplainBatch, PermutationEquivariant) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  auto rows = testing::first_rows(fx, 6);
  const auto a = explain_approx(fx.data, plan, rows);
  std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  std::vector<std::vector<std::string>> shuffled;
  for (auto i : perm) shuffled.push_back(rows[i]);
  const auto b = explain_approx(fx.data, plan, shuffled);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    EXPECT_TRUE((b.results[k]->phi.array() == a.results[perm[k]]->phi.array()).all());
  }
}

TEST(ExplainBatch, SolverRunsOnceForAllRows) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  ApproxSettings settings;
  settings.solver.chunk_size = 16;
  SolveStats stats;
  const auto batch = explain_approx(fx.data, plan, fx.raw.rows, settings, &stats);
  EXPECT_EQ(batch.results.size(), 200u);
  EXPECT_EQ(stats.chunks, 4u);
}

TEST(ExplainBatch, BadRowsAreReportedNotFatal) {
  const auto fx = testing::p6_fixture();
  const auto plan = enumerate_all(6);
  auto rows = testing::first_rows(fx, 4);
  rows[1].back() = "nope";   // unseen level
  rows[2][0] = "";           // missing value
  const auto batch = explain_approx(fx.data, plan, rows);
  ASSERT_EQ(batch.failures.size(), 2u);
  EXPECT_EQ(batch.failures[0].row, 1u);
  EXPECT_NE(batch.failures[0].message.find("UnseenLevel"), std::string::npos);
  EXPECT_EQ(batch.failures[1].row, 2u);
  EXPECT_TRUE(batch.results[0] && batch.results[3]);
  EXPECT_FALSE(batch.results[1] || batch.results[2]);
}

TEST(ExplainBatch, SampledPlan) {
  const auto fx = testing::make_fixture(8, 2, 300, 31);
  const auto plan = sample_coalitions(10, 3000, 5);
  const auto rows = testing::first_rows(fx, 3);
  ApproxSettings settings;
  settings.kappa_multiplier = 1e6;
  const auto approx = explain_approx(fx.data, plan, rows, settings);
  const auto exact = explain_exact_batch(fx.data, plan, rows);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& e = exact.results[r]->phi;
    EXPECT_LE((approx.results[r]->phi - e).cwiseAbs().maxCoeff(), 1e-5 * e.cwiseAbs().maxCoeff());
  }
}

}  // namespace
}  // namespace coalesce
