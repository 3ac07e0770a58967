#pragma once

// Cholesky kernels shared by the coalition blocks and the Kernel SHAP solve.
//
// The dense kernel and the sparse (CSC, natural ordering, up-looking) kernel
// accumulate every entry of L and every solve component in the same order:
//   L(k,j) = (A(k,j) - sum_{m<j, ascending} L(k,m) L(j,m)) / L(j,j)
// so factoring a block-diagonal matrix with the sparse kernel reproduces the
// per-block dense factors bit for bit. Compile without FP contraction.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace coalesce {

/// Relative pivot floor: a pivot d with d <= kPivotTolerance * A(k,k) is
/// treated as a factorization failure (rank deficiency).
inline constexpr double kPivotTolerance = 64 * std::numeric_limits<double>::epsilon();

namespace detail {
inline bool pivot_ok(double d, double a_kk) {
  return std::isfinite(d) && d > 0.0 && d > kPivotTolerance * std::abs(a_kk);
}
}  // namespace detail

/// Factors the lower triangle of `a` in place into L (upper triangle is left
/// untouched). Returns -1 on success or the column where a pivot failed.
inline Eigen::Index llt_in_place(Eigen::Ref<Eigen::MatrixXd> a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    // Row k of L, left to right.
    for (Eigen::Index j = 0; j < k; ++j) {
      double s = a(k, j);
      for (Eigen::Index m = 0; m < j; ++m) s -= a(k, m) * a(j, m);
      a(k, j) = s / a(j, j);
    }
    const double a_kk = a(k, k);
    double d = a_kk;
    for (Eigen::Index m = 0; m < k; ++m) d -= a(k, m) * a(k, m);
    if (!detail::pivot_ok(d, a_kk)) return k;
    a(k, k) = std::sqrt(d);
  }
  return -1;
}

/// Solves L L^T x = b in place given the lower factor from llt_in_place.
inline void llt_solve_in_place(const Eigen::Ref<const Eigen::MatrixXd>& l, Eigen::Ref<Eigen::VectorXd> b) {
  const Eigen::Index n = l.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = b[i];
    for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    double s = b[j];
    for (Eigen::Index i = j + 1; i < n; ++i) s -= l(i, j) * b[i];
    b[j] = s / l(j, j);
  }
}

/// Compressed sparse column storage of a lower-triangular matrix. Row indices
/// within a column are strictly ascending and the diagonal comes first.
struct SparseLower {
  Eigen::Index n = 0;
  std::vector<Eigen::Index> colptr;  // n + 1
  std::vector<Eigen::Index> rowidx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }
};

/// Up-looking sparse Cholesky without reordering. `a` holds the lower triangle
/// of an SPD matrix. Returns false (and leaves `failed_column`) on a bad pivot.
inline bool sparse_llt(const SparseLower& a, SparseLower& l, Eigen::Index& failed_column) {
  const Eigen::Index n = a.n;
  const auto N = static_cast<std::size_t>(n);

  // Upper triangle by columns (= lower by rows): column k lists rows i <= k.
  std::vector<Eigen::Index> up_ptr(N + 1, 0), up_row(a.nnz());
  std::vector<double> up_val(a.nnz());
  for (Eigen::Index j = 0; j < n; ++j) {
    for (auto p = a.colptr[j]; p < a.colptr[j + 1]; ++p) ++up_ptr[static_cast<std::size_t>(a.rowidx[p]) + 1];
  }
  for (std::size_t k = 0; k < N; ++k) up_ptr[k + 1] += up_ptr[k];
  {
    std::vector<Eigen::Index> next(up_ptr.begin(), up_ptr.end() - 1);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (auto p = a.colptr[j]; p < a.colptr[j + 1]; ++p) {
        auto dst = next[static_cast<std::size_t>(a.rowidx[p])]++;
        up_row[dst] = j;
        up_val[dst] = a.values[p];
      }
    }
  }

  // Elimination tree.
  std::vector<Eigen::Index> parent(N, -1), ancestor(N, -1);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (auto p = up_ptr[k]; p < up_ptr[k + 1]; ++p) {
      for (Eigen::Index i = up_row[p], inext; i != -1 && i < k; i = inext) {
        inext = ancestor[i];
        ancestor[i] = k;
        if (inext == -1) parent[i] = k;
      }
    }
  }

  // Pattern of row k of L (off-diagonal) in topological order, into stack[top, n).
  std::vector<Eigen::Index> stack(N), path(N);
  std::vector<Eigen::Index> mark(N, -1);
  auto ereach = [&](Eigen::Index k) {
    Eigen::Index top = n;
    mark[k] = k;
    for (auto p = up_ptr[k]; p < up_ptr[k + 1]; ++p) {
      Eigen::Index i = up_row[p];
      if (i > k) continue;
      Eigen::Index len = 0;
      for (; mark[i] != k; i = parent[i]) {
        path[len++] = i;
        mark[i] = k;
      }
      while (len > 0) stack[--top] = path[--len];
    }
    return top;
  };

  std::vector<Eigen::Index> count(N, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (auto t = ereach(k); t < n; ++t) ++count[stack[t]];
  }
  std::fill(mark.begin(), mark.end(), -1);

  l.n = n;
  l.colptr.assign(N + 1, 0);
  for (std::size_t k = 0; k < N; ++k) l.colptr[k + 1] = l.colptr[k] + count[k];
  l.rowidx.assign(static_cast<std::size_t>(l.colptr[N]), 0);
  l.values.assign(static_cast<std::size_t>(l.colptr[N]), 0.0);
  std::vector<Eigen::Index> fill(l.colptr.begin(), l.colptr.end() - 1);
  std::vector<double> x(N, 0.0);

  for (Eigen::Index k = 0; k < n; ++k) {
    const auto top = ereach(k);
    x[k] = 0.0;
    for (auto p = up_ptr[k]; p < up_ptr[k + 1]; ++p) x[up_row[p]] = up_val[p];
    const double a_kk = x[k];
    double d = a_kk;
    x[k] = 0.0;
    for (auto t = top; t < n; ++t) {
      const Eigen::Index i = stack[t];
      const double lki = x[i] / l.values[l.colptr[i]];
      x[i] = 0.0;
      for (auto p = l.colptr[i] + 1; p < fill[i]; ++p) x[l.rowidx[p]] -= l.values[p] * lki;
      d -= lki * lki;
      const auto p = fill[i]++;
      l.rowidx[p] = k;
      l.values[p] = lki;
    }
    if (!detail::pivot_ok(d, a_kk)) {
      failed_column = k;
      return false;
    }
    const auto p = fill[k]++;
    l.rowidx[p] = k;
    l.values[p] = std::sqrt(d);
  }
  failed_column = -1;
  return true;
}

/// Solves L L^T x = b in place with the factor from sparse_llt.
inline void sparse_llt_solve_in_place(const SparseLower& l, std::vector<double>& b) {
  for (Eigen::Index j = 0; j < l.n; ++j) {
    b[j] /= l.values[l.colptr[j]];
    for (auto p = l.colptr[j] + 1; p < l.colptr[j + 1]; ++p) b[l.rowidx[p]] -= l.values[p] * b[j];
  }
  for (Eigen::Index j = l.n - 1; j >= 0; --j) {
    for (auto p = l.colptr[j] + 1; p < l.colptr[j + 1]; ++p) b[j] -= l.values[p] * b[l.rowidx[p]];
    b[j] /= l.values[l.colptr[j]];
  }
}

}  // namespace coalesce
