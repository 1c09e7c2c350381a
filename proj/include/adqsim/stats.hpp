#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace adq::stats {

double mean(std::span<const double> xs);
double sample_variance(std::span<const double> xs);

// 1D Wasserstein distance between empirical distributions via quantile-
// function integration; exact for piecewise-constant quantiles and unequal
// sample sizes. Both inputs must be non-empty.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

struct BootstrapCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap of the mean; deterministic given seed. Requires at
// least two samples.
BootstrapCi bootstrap_ci(std::span<const double> samples, int resamples,
                         double level, std::uint64_t seed);

// Percentile bootstrap of an arbitrary statistic over sample indices.
BootstrapCi bootstrap_ci_statistic(
    int n, const std::function<double(const std::vector<int>&)>& statistic,
    int resamples, double level, std::uint64_t seed);

enum class Alternative { kLess, kGreater };

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

// One-sided Welch's t-test with Welch-Satterthwaite degrees of freedom.
// kLess tests the alternative mean(a) < mean(b). Each sample needs >= 2
// entries; zero variance in both samples is an undefined test.
WelchResult welch_one_sided(std::span<const double> a, std::span<const double> b,
                            Alternative alternative);

// Holm step-down adjustment: monotone, clipped at 1, returned in input order.
std::vector<double> holm_correct(std::span<const double> p_values);

}  // namespace adq::stats
