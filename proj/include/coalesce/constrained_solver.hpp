#pragma once

// Approximate subset regressions for every coalition at once.
//
// A coalition S keeps the design columns of its features and the intercept;
// the remaining columns are pushed towards zero by adding kappa to their
// diagonal entries of Q = X^T X:
//
//   (Q + kappa * D_S) mu_S = m,     D_S = diag(1 for every excluded column)
//
// As kappa grows mu_S converges to the exact least-squares fit on the retained
// columns. Stacking all coalitions gives the block-diagonal system
// (I (x) Q + kappa * D) mu = 1 (x) m, whose Cholesky factor is the collection
// of per-block factors. Both the per-block path and the assembled sparse path
// are provided and agree exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coalesce/cholesky.hpp"
#include "coalesce/coalitions.hpp"
#include "coalesce/error.hpp"
#include "coalesce/parallel.hpp"
#include "coalesce/tabular.hpp"

namespace coalesce {

inline constexpr double kDefaultKappaMultiplier = 1e3;
inline constexpr std::size_t kDefaultChunkSize = 1024;

/// diag[j] == 1 iff design column j is constrained to ~0 under the coalition.
struct ConstraintMask {
  std::vector<std::uint8_t> diag;

  std::size_t size() const { return diag.size(); }
  bool constrained(std::size_t j) const { return diag[j] != 0; }
};

/// mu_S for every planned coalition, one column per coalition in plan order.
struct CoefficientSet {
  Eigen::MatrixXd coefficients;  // q x |plan|

  std::size_t size() const { return static_cast<std::size_t>(coefficients.cols()); }
  auto operator[](std::size_t s) const { return coefficients.col(static_cast<Eigen::Index>(s)); }
};

struct SolverOptions {
  std::size_t chunk_size = kDefaultChunkSize;
  unsigned threads = 1;
  bool joint_assembly = false;  // factor each chunk as one assembled sparse matrix
};

struct SolveStats {
  std::size_t chunks = 0;
  std::size_t peak_blocks = 0;        // q x q blocks alive at once
  std::size_t peak_block_bytes = 0;   // storage of those blocks (or of the assembled sparse factor)
};

/// kappa = multiplier * max_i Q_ii.
inline double kappa_default(const GramSystem& gram, double multiplier = kDefaultKappaMultiplier) {
  if (!(gram.max_diag > 0.0) || !std::isfinite(gram.max_diag)) {
    throw Error(ErrorKind::DegenerateGram, "max diagonal of X^T X must be positive and finite");
  }
  if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
    throw Error(ErrorKind::InvalidArgument, "kappa multiplier must be positive and finite");
  }
  const double kappa = multiplier * gram.max_diag;
  if (!std::isfinite(kappa)) throw Error(ErrorKind::InvalidArgument, "kappa overflows");
  return kappa;
}

inline ConstraintMask build_mask(const Coalition& s, const std::vector<ColumnRange>& column_map) {
  const auto p = column_map.size();
  if (p < 64 && (s.mask >> p) != 0) {
    throw Error(ErrorKind::InvalidArgument, "coalition mask references features beyond p = " + std::to_string(p))
        .with_coalition(s.mask);
  }
  ConstraintMask out;
  out.diag.assign(design_width(column_map), 0);
  for (std::size_t i = 0; i < p; ++i) {
    if (s.contains(static_cast<int>(i))) continue;
    const auto& r = column_map[i];
    for (std::size_t c = r.first; c < r.end(); ++c) out.diag[c] = 1;
  }
  return out;
}

namespace detail {

inline void check_system(const GramSystem& gram, double kappa) {
  if (gram.Q.rows() != gram.Q.cols() || gram.Q.rows() != gram.m.size()) {
    throw Error(ErrorKind::DimensionMismatch, "Gram matrix and moment vector disagree in size");
  }
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw Error(ErrorKind::InvalidArgument, "kappa must be positive and finite");
}

inline void fill_block(const GramSystem& gram, const ConstraintMask& mask, double kappa,
                       Eigen::Ref<Eigen::MatrixXd> block) {
  const auto q = gram.Q.rows();
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = j; i < q; ++i) block(i, j) = gram.Q(i, j);
    if (mask.constrained(static_cast<std::size_t>(j))) block(j, j) = gram.Q(j, j) + kappa;
  }
}

inline Error not_spd(Mask coalition, Eigen::Index column) {
  return std::move(Error(ErrorKind::NotPositiveDefinite,
                         "block for coalition mask " + std::to_string(coalition) + " is not positive definite (pivot " +
                             std::to_string(column) +
                             "); check that the design has full column rank")
                       .with_coalition(coalition));
}

}  // namespace detail

/// Solves (Q + kappa * D_S) mu = m for one coalition via Cholesky.
inline Eigen::VectorXd solve_coalition(const GramSystem& gram, const ConstraintMask& mask, double kappa,
                                       Mask coalition = 0) {
  detail::check_system(gram, kappa);
  if (mask.size() != gram.dim()) throw Error(ErrorKind::DimensionMismatch, "constraint mask length differs from q");
  const auto q = gram.Q.rows();
  Eigen::MatrixXd block(q, q);
  detail::fill_block(gram, mask, kappa, block);
  if (auto bad = llt_in_place(block); bad >= 0) throw detail::not_spd(coalition, bad);
  Eigen::VectorXd mu = gram.m;
  llt_solve_in_place(block, mu);
  return mu;
}

namespace detail {

/// Lower triangle of the block-diagonal matrix diag(Q + kappa D_b) for the
/// given coalitions; every block keeps its full dense pattern.
inline SparseLower assemble_joint(const GramSystem& gram, const std::vector<ConstraintMask>& masks, double kappa) {
  const auto q = gram.Q.rows();
  const auto nb = static_cast<Eigen::Index>(masks.size());
  SparseLower a;
  a.n = nb * q;
  a.colptr.reserve(static_cast<std::size_t>(a.n) + 1);
  a.colptr.push_back(0);
  const auto per_block = static_cast<std::size_t>(q * (q + 1) / 2);
  a.rowidx.reserve(per_block * masks.size());
  a.values.reserve(per_block * masks.size());
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto& mask = masks[static_cast<std::size_t>(b)];
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index i = j; i < q; ++i) {
        double v = gram.Q(i, j);
        if (i == j && mask.constrained(static_cast<std::size_t>(j))) v = gram.Q(j, j) + kappa;
        a.rowidx.push_back(b * q + i);
        a.values.push_back(v);
      }
      a.colptr.push_back(static_cast<Eigen::Index>(a.values.size()));
    }
  }
  return a;
}

}  // namespace detail

/// Fits every coalition of `plan`, `chunk_size` coalitions at a time. The
/// result does not depend on chunk size, thread count, or assembly path.
inline CoefficientSet solve_plan_chunked(const GramSystem& gram, const CoalitionPlan& plan,
                                         const std::vector<ColumnRange>& column_map, double kappa,
                                         const SolverOptions& options = {}, SolveStats* stats = nullptr) {
  detail::check_system(gram, kappa);
  if (options.chunk_size < 1) throw Error(ErrorKind::InvalidArgument, "chunk size must be at least 1");
  if (design_width(column_map) != gram.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "column map width differs from the Gram dimension");
  }
  const auto q = gram.Q.rows();
  const auto n = plan.size();
  CoefficientSet out;
  out.coefficients.resize(q, static_cast<Eigen::Index>(n));

  SolveStats local;
  std::vector<Eigen::MatrixXd> blocks;
  std::vector<ConstraintMask> masks;
  for (std::size_t begin = 0; begin < n; begin += options.chunk_size) {
    const std::size_t end = std::min(n, begin + options.chunk_size);
    const std::size_t count = end - begin;
    ++local.chunks;

    masks.resize(count);
    for (std::size_t b = 0; b < count; ++b) masks[b] = build_mask(plan.coalitions[begin + b], column_map);

    if (options.joint_assembly) {
      const auto joint = detail::assemble_joint(gram, masks, kappa);
      SparseLower factor;
      Eigen::Index bad = -1;
      if (!sparse_llt(joint, factor, bad)) {
        const auto block = static_cast<std::size_t>(bad / q);
        throw detail::not_spd(plan.coalitions[begin + block].mask, bad % q);
      }
      std::vector<double> rhs(static_cast<std::size_t>(joint.n));
      for (std::size_t b = 0; b < count; ++b) {
        std::copy(gram.m.data(), gram.m.data() + q, rhs.begin() + static_cast<std::ptrdiff_t>(b * q));
      }
      sparse_llt_solve_in_place(factor, rhs);
      for (std::size_t b = 0; b < count; ++b) {
        out.coefficients.col(static_cast<Eigen::Index>(begin + b)) =
            Eigen::Map<const Eigen::VectorXd>(rhs.data() + b * q, q);
      }
      local.peak_blocks = std::max(local.peak_blocks, count);
      local.peak_block_bytes =
          std::max(local.peak_block_bytes, (joint.nnz() + factor.nnz()) * (sizeof(double) + sizeof(Eigen::Index)));
    } else {
      blocks.resize(count);
      for (auto& b : blocks) b.resize(q, q);
      parallel_for(count, options.threads, [&](std::size_t b) {
        auto& block = blocks[b];
        detail::fill_block(gram, masks[b], kappa, block);
        if (auto bad = llt_in_place(block); bad >= 0) throw detail::not_spd(plan.coalitions[begin + b].mask, bad);
        auto mu = out.coefficients.col(static_cast<Eigen::Index>(begin + b));
        mu = gram.m;
        llt_solve_in_place(block, mu);
      });
      local.peak_blocks = std::max(local.peak_blocks, blocks.size());
      local.peak_block_bytes =
          std::max(local.peak_block_bytes, blocks.size() * static_cast<std::size_t>(q * q) * sizeof(double));
    }
  }
  if (stats) *stats = local;
  return out;
}

/// v(S) = x* . mu_S for every planned coalition, using the full encoded row.
inline Eigen::VectorXd contributions(const CoefficientSet& coeffs, const Eigen::Ref<const Eigen::VectorXd>& x_star) {
  if (x_star.size() != coeffs.coefficients.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "encoded row has length " + std::to_string(x_star.size()) +
                                                  ", coefficients have " + std::to_string(coeffs.coefficients.rows()));
  }
  const auto q = x_star.size();
  Eigen::VectorXd v(coeffs.coefficients.cols());
  for (Eigen::Index s = 0; s < v.size(); ++s) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) acc += x_star[j] * coeffs.coefficients(j, s);
    v[s] = acc;
  }
  return v;
}

}  // namespace coalesce
