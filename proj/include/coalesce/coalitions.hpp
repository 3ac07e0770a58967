#pragma once

// Coalition plans: exhaustive enumeration or kernel-weighted sampling, Shapley
// kernel weights, and the binary membership matrix Z.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coalesce/error.hpp"

namespace coalesce {

using Mask = std::uint64_t;

inline constexpr double kDefaultAnchorWeight = 1e6;
inline constexpr int kDefaultMaxExhaustiveFeatures = 20;
inline constexpr int kMaxFeatures = 62;

struct Coalition {
  Mask mask = 0;
  int size = 0;

  Coalition() = default;
  explicit Coalition(Mask m) : mask(m), size(std::popcount(m)) {}

  bool contains(int feature) const { return (mask >> feature) & 1U; }
  friend bool operator==(const Coalition& a, const Coalition& b) { return a.mask == b.mask; }
};

enum class PlanMode { Exhaustive, Sampled };

struct CoalitionPlan {
  int p = 0;
  std::vector<Coalition> coalitions;
  std::vector<double> weights;  // diagonal of W, parallel to coalitions
  PlanMode mode = PlanMode::Exhaustive;
  std::uint64_t seed = 0;       // sampled mode only
  std::size_t n_draws = 0;      // sampled mode only

  std::size_t size() const { return coalitions.size(); }
  Mask full_mask() const { return p >= 64 ? ~Mask{0} : (Mask{1} << p) - 1; }
};

struct MembershipMatrix {
  Eigen::MatrixXd Z;  // |plan| x (p + 1), column 0 all ones
};

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

/// Shapley kernel weight (p - 1) / (C(p, s) s (p - s)); the empty and full
/// coalitions get `anchor` instead of the (infinite) kernel value.
inline double shapley_kernel_weight(int p, int s, double anchor = kDefaultAnchorWeight) {
  if (p < 1 || s < 0 || s > p) {
    throw Error(ErrorKind::InvalidArgument,
                "coalition size " + std::to_string(s) + " out of range for p = " + std::to_string(p));
  }
  if (s == 0 || s == p) return anchor;
  return (p - 1) / (binomial(p, s) * s * (p - s));
}

namespace detail {
inline void check_feature_count(int p) {
  if (p < 1 || p > kMaxFeatures) {
    throw Error(ErrorKind::InvalidArgument, "feature count " + std::to_string(p) + " outside [1, " +
                                                std::to_string(kMaxFeatures) + "]");
  }
}
}  // namespace detail

/// All 2^p coalitions in binary counting order.
inline CoalitionPlan enumerate_all(int p, int max_features = kDefaultMaxExhaustiveFeatures,
                                   double anchor = kDefaultAnchorWeight) {
  detail::check_feature_count(p);
  if (p > max_features) {
    throw Error(ErrorKind::CoalitionCapExceeded,
                "exhaustive enumeration of " + std::to_string(p) + " features exceeds the cap of " +
                    std::to_string(max_features) + "; use sampled coalitions (sample:N) instead");
  }
  CoalitionPlan plan;
  plan.p = p;
  plan.mode = PlanMode::Exhaustive;
  const Mask n = Mask{1} << p;
  plan.coalitions.reserve(n);
  plan.weights.reserve(n);
  for (Mask m = 0; m < n; ++m) {
    plan.coalitions.emplace_back(m);
    plan.weights.push_back(shapley_kernel_weight(p, plan.coalitions.back().size, anchor));
  }
  return plan;
}

/// Draws `n_draws` coalitions with replacement from the non-empty, non-full
/// masks with probability proportional to the kernel weight. Repeated masks
/// are merged and weighted by their draw count; empty and full coalitions are
/// added with the anchor weight. Masks are ordered ascending.
inline CoalitionPlan sample_coalitions(int p, std::size_t n_draws, std::uint64_t seed,
                                       double anchor = kDefaultAnchorWeight) {
  detail::check_feature_count(p);
  if (n_draws < 1) throw Error(ErrorKind::InvalidArgument, "n_draws must be at least 1");

  CoalitionPlan plan;
  plan.p = p;
  plan.mode = PlanMode::Sampled;
  plan.seed = seed;
  plan.n_draws = n_draws;

  std::map<Mask, std::size_t> counts;
  if (p >= 2) {
    // Mass of size s is k(p, s) * C(p, s) = (p - 1) / (s (p - s)); masks of one size are equally likely.
    std::vector<double> size_mass;
    for (int s = 1; s < p; ++s) size_mass.push_back(shapley_kernel_weight(p, s) * binomial(p, s));
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick_size(size_mass.begin(), size_mass.end());
    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    std::vector<int> chosen;
    for (std::size_t d = 0; d < n_draws; ++d) {
      const int s = pick_size(rng) + 1;
      chosen.clear();
      std::sample(features.begin(), features.end(), std::back_inserter(chosen), s, rng);
      Mask m = 0;
      for (int f : chosen) m |= Mask{1} << f;
      ++counts[m];
    }
  }

  plan.coalitions.emplace_back(Mask{0});
  plan.weights.push_back(anchor);
  for (const auto& [mask, count] : counts) {
    plan.coalitions.emplace_back(mask);
    plan.weights.push_back(static_cast<double>(count));
  }
  plan.coalitions.emplace_back(plan.full_mask());
  plan.weights.push_back(anchor);
  return plan;
}

inline MembershipMatrix build_Z(const CoalitionPlan& plan) {
  MembershipMatrix out;
  const auto rows = static_cast<Eigen::Index>(plan.size());
  out.Z = Eigen::MatrixXd::Zero(rows, plan.p + 1);
  for (Eigen::Index j = 0; j < rows; ++j) {
    out.Z(j, 0) = 1.0;
    const auto& c = plan.coalitions[static_cast<std::size_t>(j)];
    for (int i = 0; i < plan.p; ++i) {
      if (c.contains(i)) out.Z(j, i + 1) = 1.0;
    }
  }
  return out;
}

}  // namespace coalesce
