#include "fdp/eval/ranksum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fdp/error.hpp"

namespace fdp::eval {
namespace {

// Walks every n_a-subset of positions 0..N-1 and tallies how many rank sums
// are at least as extreme as the observed one. Ranks are doubled so ties
// compare exactly.
double exact_p(const std::vector<long>& twice_ranks, std::size_t na, long observed, long twice_mean, Sidedness side) {
  const std::size_t n = twice_ranks.size();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(na), true);
  std::size_t total = 0, extreme = 0;
  do {
    long w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) w += twice_ranks[i];
    ++total;
    switch (side) {
      case Sidedness::kLess: extreme += w <= observed; break;
      case Sidedness::kGreater: extreme += w >= observed; break;
      case Sidedness::kTwoSided: extreme += std::labs(w - twice_mean) >= std::labs(observed - twice_mean); break;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, Sidedness sidedness) {
  if (a.empty() || b.empty()) throw UsageError("rank-sum: both samples must be nonempty");
  for (double v : a)
    if (!std::isfinite(v)) throw DataError("rank-sum: non-finite value in sample a");
  for (double v : b)
    if (!std::isfinite(v)) throw DataError("rank-sum: non-finite value in sample b");

  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const auto ranks = midranks(all);

  RankSumResult r;
  r.sidedness = sidedness;
  r.w = std::accumulate(ranks.begin(), ranks.begin() + static_cast<long>(na), 0.0);
  r.mean = static_cast<double>(na) * static_cast<double>(n + 1) / 2.0;

  // Tie correction: subtract sum(t^3 - t) / (N (N - 1)) from N + 1.
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double dn = static_cast<double>(n);
  const double var = static_cast<double>(na) * static_cast<double>(nb) / 12.0 *
                     ((dn + 1.0) - (n > 1 ? ties / (dn * (dn - 1.0)) : 0.0));
  r.sd = var > 0 ? std::sqrt(var) : 0.0;

  const double diff = r.w - r.mean;
  if (r.sd > 0) {
    r.z = diff / r.sd;
    switch (sidedness) {
      case Sidedness::kTwoSided: {
        const double zc = std::max(0.0, std::abs(diff) - 0.5) / r.sd;
        r.p = std::min(1.0, 2.0 * normal_cdf(-zc));
        break;
      }
      case Sidedness::kLess: r.p = normal_cdf((diff + 0.5) / r.sd); break;
      case Sidedness::kGreater: r.p = normal_cdf(-(diff - 0.5) / r.sd); break;
    }
  } else {
    r.z = 0;
    r.p = 1;
  }

  if (n <= kExactLimit) {
    std::vector<long> twice(n);
    for (std::size_t i = 0; i < n; ++i) twice[i] = std::lround(2.0 * ranks[i]);
    const long observed = std::accumulate(twice.begin(), twice.begin() + static_cast<long>(na), 0L);
    const long twice_mean = static_cast<long>(na * (n + 1));
    r.p_exact = exact_p(twice, na, observed, twice_mean, sidedness);
  }
  return r;
}

}  // namespace fdp::eval
