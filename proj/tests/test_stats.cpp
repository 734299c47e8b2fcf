#include <cmath>
#include <vector>

#include "aaexp/random.hpp"
#include "aaexp/stats.hpp"
#include "doctest.h"

using namespace aaexp;

TEST_CASE("normal quantiles match tables") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.2) == doctest::Approx(-0.8416212335729143).epsilon(1e-14));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK_THROWS(normal_quantile(0.0));
  CHECK_THROWS(normal_quantile(1.0));
  CHECK(normal_cdf(normal_quantile(0.9)) == doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("moments of small samples") {
  std::vector<double> xs{1.0, 3.0};
  CHECK(mean(xs) == 2.0);
  CHECK(sample_variance(xs) == 2.0);
  std::vector<double> sym{-2.0, -1.0, 0.0, 1.0, 2.0};
  CHECK(skewness(sym) == doctest::Approx(0.0));
  std::vector<double> flat(10, 4.0);
  CHECK(sample_variance(flat) == 0.0);
  CHECK(skewness(flat) == 0.0);
  // Exponential-like right tail.
  std::vector<double> skewed{0.0, 0.0, 0.0, 0.0, 10.0};
  CHECK(skewness(skewed) > 1.0);
}

TEST_CASE("Kolmogorov p-value at the asymptotic 1% point") {
  const std::size_t n = 1000000;
  const double d = 1.62762 / std::sqrt(static_cast<double>(n));
  CHECK(ks_pvalue(d, n) == doctest::Approx(0.01).epsilon(2e-3));
  CHECK(ks_pvalue(0.0, 10) == 1.0);
  CHECK(ks_pvalue(1.0, 100) < 1e-12);
}

TEST_CASE("KS test accepts the true law and rejects a shifted one") {
  RandomStream rng(11);
  std::vector<double> xs(20000);
  for (double& x : xs) x = rng.uniform();
  auto uniform_cdf = [](double x) { return x < 0 ? 0.0 : (x > 1 ? 1.0 : x); };
  CHECK(ks_test(xs, uniform_cdf).passes(0.01));
  auto shifted = [](double x) { const double y = x - 0.05; return y < 0 ? 0.0 : (y > 1 ? 1.0 : y); };
  CHECK_FALSE(ks_test(xs, shifted).passes(0.01));
}

TEST_CASE("KS statistic of a two-point sample") {
  std::vector<double> xs{0.25, 0.75};
  auto cdf = [](double x) { return x; };
  CHECK(ks_statistic(xs, cdf) == doctest::Approx(0.25));
}
