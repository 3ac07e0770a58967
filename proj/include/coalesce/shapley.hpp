#pragma once

// Kernel SHAP assembly: given v(S) over a coalition plan, solve the weighted
// least squares system Z^T W Z phi = Z^T W v for (phi0, phi_1..phi_p).

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "coalesce/cholesky.hpp"
#include "coalesce/coalitions.hpp"
#include "coalesce/constrained_solver.hpp"
#include "coalesce/error.hpp"
#include "coalesce/exact_oracle.hpp"
#include "coalesce/parallel.hpp"
#include "coalesce/tabular.hpp"

namespace coalesce {

struct ShapleyResult {
  double phi0 = 0.0;    // intercept of the WLS fit, approximates v(empty)
  Eigen::VectorXd phi;  // one entry per feature
  double efficiency_gap = 0.0;  // phi0 + sum(phi) - v(full)
  double base_gap = 0.0;        // phi0 - v(empty)
};

/// The factored normal matrix Z^T W Z of a plan; reused for every explained row.
class KernelShapSystem {
 public:
  KernelShapSystem(const MembershipMatrix& membership, std::span<const double> weights)
      : z_(membership.Z), w_(weights.begin(), weights.end()) {
    const auto rows = z_.rows();
    const auto k = z_.cols();
    if (static_cast<std::size_t>(rows) != w_.size()) {
      throw Error(ErrorKind::DimensionMismatch, "Z has " + std::to_string(rows) + " rows but there are " +
                                                    std::to_string(w_.size()) + " weights");
    }
    if (k < 2) throw Error(ErrorKind::InvalidArgument, "Z needs an intercept column and at least one feature");
    if (rows < k) {
      throw Error(ErrorKind::SingularNormalMatrix, "plan has " + std::to_string(rows) + " coalitions, fewer than p + 1 = " +
                                                       std::to_string(k) + "; draw more coalitions");
    }
    for (Eigen::Index j = 0; j < rows; ++j) {
      const double members = z_.row(j).sum();
      if (members == 1.0 && !empty_) empty_ = j;
      if (members == static_cast<double>(k) && !full_) full_ = j;
    }
    if (!empty_ || !full_) throw Error(ErrorKind::InvalidArgument, "plan must contain the empty and full coalitions");

    factor_.resize(k, k);
    for (Eigen::Index b = 0; b < k; ++b) {
      for (Eigen::Index a = b; a < k; ++a) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < rows; ++j) s += w_[static_cast<std::size_t>(j)] * z_(j, a) * z_(j, b);
        factor_(a, b) = s;
      }
    }
    if (auto bad = llt_in_place(factor_); bad >= 0) {
      throw Error(ErrorKind::SingularNormalMatrix,
                  "Z^T W Z is singular (column " + std::to_string(bad) +
                      "); the coalition plan does not separate all features, draw more coalitions");
    }
  }

  std::size_t features() const { return static_cast<std::size_t>(z_.cols() - 1); }
  std::size_t coalitions() const { return w_.size(); }

  ShapleyResult solve(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (static_cast<std::size_t>(v.size()) != w_.size()) {
      throw Error(ErrorKind::DimensionMismatch, "v has " + std::to_string(v.size()) + " entries for " +
                                                    std::to_string(w_.size()) + " coalitions");
    }
    const auto k = z_.cols();
    Eigen::VectorXd rhs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < z_.rows(); ++j) s += w_[static_cast<std::size_t>(j)] * z_(j, a) * v[j];
      rhs[a] = s;
    }
    llt_solve_in_place(factor_, rhs);

    ShapleyResult r;
    r.phi0 = rhs[0];
    r.phi = rhs.tail(k - 1);
    double total = r.phi0;
    for (Eigen::Index i = 0; i < r.phi.size(); ++i) total += r.phi[i];
    r.efficiency_gap = total - v[*full_];
    r.base_gap = r.phi0 - v[*empty_];
    for (Eigen::Index a = 0; a < k; ++a) {
      if (!std::isfinite(rhs[a])) throw Error(ErrorKind::NonFiniteValue, "Shapley value is not finite");
    }
    return r;
  }

 private:
  Eigen::MatrixXd z_;
  std::vector<double> w_;
  Eigen::MatrixXd factor_;
  std::optional<Eigen::Index> empty_, full_;
};

inline ShapleyResult solve_kernel_shap(const MembershipMatrix& z, std::span<const double> weights,
                                       const Eigen::Ref<const Eigen::VectorXd>& v) {
  return KernelShapSystem(z, weights).solve(v);
}

/// Everything derived from the training data that the explainers share.
struct DesignArtifacts {
  FeatureSchema schema;
  DesignMatrix design;
  PredictionVector f;
  GramSystem gram;

  static DesignArtifacts build(FeatureSchema schema, const std::vector<std::vector<std::string>>& rows,
                               PredictionVector f) {
    DesignArtifacts a;
    a.design = build_design(schema, rows);
    a.gram = compute_gram(a.design, f);
    a.schema = std::move(schema);
    a.f = std::move(f);
    return a;
  }

  int p() const { return static_cast<int>(schema.size()); }
  std::size_t q() const { return design.cols(); }
};

struct RowFailure {
  std::size_t row = 0;
  std::string message;
};

struct BatchExplanation {
  std::vector<std::optional<ShapleyResult>> results;  // one per requested row, empty on failure
  Eigen::MatrixXd v;                                  // |rows| x |plan|, NaN rows for failures
  std::vector<RowFailure> failures;
};

/// Encodes each row, evaluates v with `v_of(encoded_row)` and solves Kernel
/// SHAP. A row that cannot be encoded is reported and skipped.
template <class ContributionFn>
BatchExplanation explain_batch(const FeatureSchema& schema, const std::vector<ColumnRange>& column_map,
                               const CoalitionPlan& plan, const std::vector<std::vector<std::string>>& rows,
                               ContributionFn&& v_of, unsigned threads = 1) {
  const KernelShapSystem system(build_Z(plan), plan.weights);
  BatchExplanation out;
  out.results.resize(rows.size());
  out.v = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(plan.size()),
                                    std::nan(""));
  std::vector<std::optional<std::string>> errors(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t r) {
    try {
      const Eigen::VectorXd x = encode_row(schema, column_map, rows[r]);
      const Eigen::VectorXd v = v_of(x);
      out.v.row(static_cast<Eigen::Index>(r)) = v.transpose();
      out.results[r] = system.solve(v);
    } catch (const Error& e) {
      errors[r] = e.what();
    }
  });
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (errors[r]) out.failures.push_back({r, *errors[r]});
  }
  return out;
}

struct ApproxSettings {
  double kappa_multiplier = kDefaultKappaMultiplier;
  SolverOptions solver;
};

/// One constrained solve for the whole plan, then v for every row from the
/// shared coefficient set.
inline BatchExplanation explain_approx(const DesignArtifacts& data, const CoalitionPlan& plan,
                                       const std::vector<std::vector<std::string>>& rows,
                                       const ApproxSettings& settings = {}, SolveStats* stats = nullptr) {
  const double kappa = kappa_default(data.gram, settings.kappa_multiplier);
  const auto coeffs = solve_plan_chunked(data.gram, plan, data.design.column_map, kappa, settings.solver, stats);
  return explain_batch(
      data.schema, data.design.column_map, plan, rows,
      [&](const Eigen::VectorXd& x) { return contributions(coeffs, x); }, settings.solver.threads);
}

inline BatchExplanation explain_exact_batch(const DesignArtifacts& data, const CoalitionPlan& plan,
                                            const std::vector<std::vector<std::string>>& rows, unsigned threads = 1) {
  const auto fit = fit_exact(data.gram, plan, data.design.column_map, threads);
  return explain_batch(
      data.schema, data.design.column_map, plan, rows,
      [&](const Eigen::VectorXd& x) { return oracle_contributions(fit, x); }, threads);
}

}  // namespace coalesce
