#include "adqsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "adqsim/errors.hpp"
#include "adqsim/rng.hpp"

namespace adq::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw ContractError("variance needs at least 2 samples");
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / (xs.size() - 1);
}

// W1 via quantile functions: both empirical quantiles are piecewise constant,
// so integrating |Qa - Qb| over the merged probability breakpoints is exact
// for any pair of sample sizes.
double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw ContractError("wasserstein_1d requires non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const size_t na = sa.size(), nb = sb.size();
  size_t ia = 0, ib = 0;
  double total = 0.0;
  double p = 0.0;
  while (ia < na && ib < nb) {
    // exact breakpoint comparison: (ia+1)/na vs (ib+1)/nb cross-multiplied
    const unsigned long long ca = static_cast<unsigned long long>(ia + 1) * nb;
    const unsigned long long cb = static_cast<unsigned long long>(ib + 1) * na;
    const double next = ca <= cb ? static_cast<double>(ia + 1) / na
                                 : static_cast<double>(ib + 1) / nb;
    total += (next - p) * std::abs(sa[ia] - sb[ib]);
    p = next;
    if (ca <= cb) ++ia;
    if (cb <= ca) ++ib;
  }
  return total;
}

BootstrapCi bootstrap_ci(std::span<const double> samples, int resamples,
                         double level, std::uint64_t seed) {
  if (samples.size() < 2)
    throw ContractError("bootstrap_ci needs at least 2 samples");
  const int n = static_cast<int>(samples.size());
  const auto stat = [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) s += samples[static_cast<size_t>(i)];
    return s / idx.size();
  };
  return bootstrap_ci_statistic(n, stat, resamples, level, seed);
}

BootstrapCi bootstrap_ci_statistic(
    int n, const std::function<double(const std::vector<int>&)>& statistic,
    int resamples, double level, std::uint64_t seed) {
  if (n < 2) throw ContractError("bootstrap needs at least 2 samples");
  if (resamples < 2) throw ContractError("resamples must be >= 2");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("level must be in (0,1)");
  Rng rng(derive_seed(seed, "bootstrap"));
  std::vector<double> stats;
  stats.reserve(static_cast<size_t>(resamples));
  std::vector<int> idx(static_cast<size_t>(n));
  for (int r = 0; r < resamples; ++r) {
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = rng.uniform_int(0, n - 1);
    stats.push_back(statistic(idx));
  }
  std::sort(stats.begin(), stats.end());
  const double a = (1.0 - level) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * (stats.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, stats.size() - 1);
    const double w = pos - lo;
    return (1.0 - w) * stats[lo] + w * stats[hi];
  };
  BootstrapCi ci;
  ci.lo = quantile(a);
  ci.hi = quantile(1.0 - a);
  std::vector<int> identity(static_cast<size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);
  ci.mean = statistic(identity);
  return ci;
}

WelchResult welch_one_sided(std::span<const double> a, std::span<const double> b,
                            Alternative alternative) {
  if (a.size() < 2 || b.size() < 2)
    throw ContractError("welch test needs at least 2 samples per group");
  const double ma = mean(a), mb = mean(b);
  const double va = sample_variance(a), vb = sample_variance(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double qa = va / na, qb = vb / nb;
  if (qa + qb <= 0.0)
    throw ContractError("welch test undefined: zero variance in both samples");

  WelchResult r;
  r.t = (ma - mb) / std::sqrt(qa + qb);
  r.df = (qa + qb) * (qa + qb) /
         (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  boost::math::students_t_distribution<double> dist(r.df);
  const double cdf = boost::math::cdf(dist, r.t);
  r.p = alternative == Alternative::kLess ? cdf : 1.0 - cdf;
  return r;
}

std::vector<double> holm_correct(std::span<const double> p_values) {
  const size_t m = p_values.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t i, size_t j) { return p_values[i] < p_values[j]; });
  std::vector<double> adjusted(m, 0.0);
  double running_max = 0.0;
  for (size_t rank = 0; rank < m; ++rank) {
    const double scaled = static_cast<double>(m - rank) * p_values[order[rank]];
    running_max = std::max(running_max, scaled);
    adjusted[order[rank]] = std::min(1.0, running_max);
  }
  return adjusted;
}

}  // namespace adq::stats
