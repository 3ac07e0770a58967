#pragma once

// Exact per-coalition least squares ("separate regression"): each coalition's
// OLS fit on its retained columns only. Deliberately uses Eigen's
// factorizations rather than the kernels in cholesky.hpp so it can serve as
// an independent check of the constrained solver.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "coalesce/coalitions.hpp"
#include "coalesce/constrained_solver.hpp"
#include "coalesce/error.hpp"
#include "coalesce/parallel.hpp"
#include "coalesce/tabular.hpp"

namespace coalesce {

/// Exact fits for a plan: retained design columns and OLS coefficients on them.
struct OracleFit {
  std::vector<std::vector<Eigen::Index>> retained;  // per coalition, ascending, starts with the intercept
  std::vector<Eigen::VectorXd> beta;                 // per coalition, aligned with `retained`

  std::size_t size() const { return beta.size(); }
};

inline std::vector<Eigen::Index> retained_columns(const ConstraintMask& mask) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask.constrained(j)) idx.push_back(static_cast<Eigen::Index>(j));
  }
  return idx;
}

/// Solves Q_A beta = m_A on the retained index set A. Subsetting X^T X is the
/// same as forming the normal equations of the reduced design.
inline Eigen::VectorXd fit_subset_ols(const GramSystem& gram, const ConstraintMask& mask, Mask coalition = 0) {
  if (mask.size() != gram.dim()) throw Error(ErrorKind::DimensionMismatch, "constraint mask length differs from q");
  const auto idx = retained_columns(mask);
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd qa(k, k);
  Eigen::VectorXd ma(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    ma[a] = gram.m[idx[a]];
    for (Eigen::Index b = 0; b < k; ++b) qa(a, b) = gram.Q(idx[a], idx[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(qa);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const auto diag = llt.matrixLLT().diagonal();
    for (Eigen::Index a = 0; a < k; ++a) {
      // Same relative floor as the approximate path: pivot^2 vs the original diagonal.
      if (!(diag[a] * diag[a] > kPivotTolerance * std::abs(qa(a, a)))) ok = false;
    }
  }
  if (!ok) {
    throw Error(ErrorKind::SingularSubmatrix,
                "retained Gram submatrix for coalition mask " + std::to_string(coalition) + " is singular")
        .with_coalition(coalition);
  }
  return llt.solve(ma);
}

/// Refits the reduced OLS from the raw design rows (column-pivoted QR).
/// This is the cost profile of fitting one model per coalition from scratch.
inline Eigen::VectorXd fit_subset_raw(const DesignMatrix& design, const PredictionVector& f, const ConstraintMask& mask,
                                      Mask coalition = 0) {
  if (mask.size() != design.cols()) throw Error(ErrorKind::DimensionMismatch, "constraint mask length differs from q");
  if (design.rows() != f.size()) throw Error(ErrorKind::DimensionMismatch, "design rows differ from predictions");
  const auto idx = retained_columns(mask);
  Eigen::MatrixXd xa(design.values.rows(), static_cast<Eigen::Index>(idx.size()));
  for (Eigen::Index a = 0; a < xa.cols(); ++a) xa.col(a) = design.values.col(idx[static_cast<std::size_t>(a)]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xa);
  if (qr.rank() < xa.cols()) {
    throw Error(ErrorKind::SingularSubmatrix,
                "reduced design for coalition mask " + std::to_string(coalition) + " is rank deficient")
        .with_coalition(coalition);
  }
  return qr.solve(f.values);
}

inline OracleFit fit_exact(const GramSystem& gram, const CoalitionPlan& plan,
                           const std::vector<ColumnRange>& column_map, unsigned threads = 1) {
  OracleFit fit;
  fit.retained.resize(plan.size());
  fit.beta.resize(plan.size());
  parallel_for(plan.size(), threads, [&](std::size_t s) {
    const auto& c = plan.coalitions[s];
    const auto mask = build_mask(c, column_map);
    fit.retained[s] = retained_columns(mask);
    fit.beta[s] = fit_subset_ols(gram, mask, c.mask);
  });
  return fit;
}

/// v_exact(S) = x*_A . beta_S for each coalition.
inline Eigen::VectorXd oracle_contributions(const OracleFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x_star) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(fit.size()));
  for (std::size_t s = 0; s < fit.size(); ++s) {
    const auto& idx = fit.retained[s];
    double acc = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      if (idx[a] >= x_star.size()) throw Error(ErrorKind::DimensionMismatch, "encoded row is too short");
      acc += x_star[idx[a]] * fit.beta[s][static_cast<Eigen::Index>(a)];
    }
    v[static_cast<Eigen::Index>(s)] = acc;
  }
  return v;
}

inline Eigen::VectorXd explain_exact(const GramSystem& gram, const CoalitionPlan& plan,
                                     const std::vector<ColumnRange>& column_map,
                                     const Eigen::Ref<const Eigen::VectorXd>& x_star) {
  return oracle_contributions(fit_exact(gram, plan, column_map), x_star);
}

/// Sequential comparator: for every coalition refit from raw rows and evaluate
/// at each explained row. Returns v as |rows| x |plan|.
inline Eigen::MatrixXd explain_sequential(const DesignMatrix& design, const PredictionVector& f,
                                          const CoalitionPlan& plan, const Eigen::Ref<const Eigen::MatrixXd>& x_rows) {
  Eigen::MatrixXd v(x_rows.rows(), static_cast<Eigen::Index>(plan.size()));
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const auto& c = plan.coalitions[s];
    const auto mask = build_mask(c, design.column_map);
    const auto idx = retained_columns(mask);
    const auto beta = fit_subset_raw(design, f, mask, c.mask);
    for (Eigen::Index r = 0; r < x_rows.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t a = 0; a < idx.size(); ++a) acc += x_rows(r, idx[a]) * beta[static_cast<Eigen::Index>(a)];
      v(r, static_cast<Eigen::Index>(s)) = acc;
    }
  }
  return v;
}

}  // namespace coalesce
