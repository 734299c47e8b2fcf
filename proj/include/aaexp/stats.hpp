#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace aaexp {

double normal_quantile(double p);
double normal_cdf(double x);

double mean(std::span<const double> xs);
// Unbiased sample variance (divisor n - 1); zero when n < 2.
double sample_variance(std::span<const double> xs);
// Moment-ratio skewness g1; zero for a constant sample.
double skewness(std::span<const double> xs);

// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf);
// Asymptotic p-value of statistic d at sample size n, with Stephens'
// small-sample correction.
double ks_pvalue(double d, std::size_t n);

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
  bool passes(double level) const { return pvalue >= level; }
};

KsResult ks_test(std::vector<double> xs, const std::function<double(double)>& cdf);

}  // namespace aaexp
