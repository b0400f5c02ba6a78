#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace fdp::eval {

// kLess tests whether a tends to lie below b; kGreater the reverse.
enum class Sidedness { kTwoSided, kLess, kGreater };

struct RankSumResult {
  double w = 0;      // rank sum of sample a (midranks)
  double mean = 0;   // E[W] under the null
  double sd = 0;     // tie-corrected standard deviation of W
  double z = 0;      // (W - mean) / sd, 0 when sd = 0
  double p = 1;      // normal approximation with continuity correction
  std::optional<double> p_exact;  // full enumeration, when n_a + n_b <= kExactLimit
  Sidedness sidedness = Sidedness::kTwoSided;
};

inline constexpr std::size_t kExactLimit = 12;

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                Sidedness sidedness = Sidedness::kTwoSided);

// Midranks (1-based, ties share their average rank) of the concatenation.
std::vector<double> midranks(std::span<const double> values);

double normal_cdf(double z);

}  // namespace fdp::eval
