#include <cmath>
#include <memory>

#include "aaexp/design.hpp"
#include "aaexp/error.hpp"
#include "aaexp/estimators.hpp"
#include "aaexp/sampler.hpp"
#include "doctest.h"

using namespace aaexp;

namespace {

const std::vector<double> kContrast{-1.0, 1.0};

History two_arm_history(std::vector<double> y1, std::vector<double> y0) {
  History h(1, 2);
  for (double y : y1) h.push_back(Round{{0.0}, 1, y, {0.5, 0.5}, 1.0, 0});
  for (double y : y0) h.push_back(Round{{0.0}, 0, y, {0.5, 0.5}, 1.0, 0});
  return h;
}

}  // namespace

TEST_CASE("score arithmetic") {
  const double mu[] = {1.0, 5.0};
  const double w[] = {0.5, 0.5};
  const auto r = score_from_parts(4, 1, 7.0, mu, w, 1.0, 3.0, kContrast);
  CHECK(r.psi == 7.0);
  CHECK(r.ipw_term_1 == 4.0);
  CHECK(r.ipw_term_0 == 0.0);
  CHECK(r.t == 4);

  const auto flat = score_from_parts(1, 0, 1.0, mu, w, 2.0, 3.0, kContrast);
  CHECK(flat.psi == 3.0);

  const auto weighted = score_from_parts(1, 0, 2.0, mu, w, 2.0, 3.0, kContrast, true);
  CHECK(weighted.psi == doctest::Approx((-2.0 + 3.0) * 0.5));

  CHECK_THROWS_AS(score_from_parts(1, 1, 0.0, mu, std::vector<double>{1.0, 0.0}, 1.0, 0.0,
                                   kContrast),
                  Error);
  CHECK_THROWS_AS(score_from_parts(1, 1, 0.0, mu, w, 0.0, 0.0, kContrast), Error);
}

TEST_CASE("score identity over random inputs") {
  RandomStream rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double mu[] = {20.0 * rng.normal(), 20.0 * rng.normal()};
    const double w1 = 0.05 + 0.9 * rng.uniform();
    const double w[] = {1.0 - w1, w1};
    const std::size_t a = rng.uniform() < 0.5 ? 1 : 0;
    const double e = 0.1 + 5.0 * rng.uniform();
    const auto r = score_from_parts(i, a, 30.0 * rng.normal(), mu, w, e, rng.normal(), kContrast);
    const double rebuilt = (r.ipw_term_1 - r.ipw_term_0) * r.importance_weight + r.plugin_term;
    CHECK(r.psi == doctest::Approx(rebuilt).epsilon(1e-12));
    CHECK(((r.ipw_term_1 != 0.0) + (r.ipw_term_0 != 0.0)) <= 1);
    CHECK((a == 1 ? r.ipw_term_0 : r.ipw_term_1) == 0.0);
    CHECK(r.importance_weight == 1.0 / e);
  }
}

TEST_CASE("multi-treatment policy score") {
  const double mu[] = {1.0, 2.0, 3.0};
  const double w[] = {0.2, 0.3, 0.5};
  const double pi[] = {0.0, 0.5, 2.0};
  const auto r = score_from_parts(1, 2, 4.0, mu, w, 0.5, 1.5, pi);
  CHECK(r.psi == doctest::Approx(2.0 * (4.0 - 3.0) / 0.5 * 2.0 + 1.5));
  CHECK(contrast_policy(3) == std::vector<double>{-1.0, 1.0, 0.0});
}

TEST_CASE("scores are unbiased under the design's own law") {
  const Scenario sc = build_paper_scenario(PaperCovariate::gaussian, VarianceMode::heterogeneous);
  auto sigma = std::make_shared<TrueStddev>(sc.outcome, sc.clamp);
  RandomStream rng(2);
  const double n = neyman_normalizer(*sigma, sc.q, 100000, rng).value;
  const DesignProbabilities d = neyman_design(sigma, n, default_ratio_bound(sc.clamp));
  // A deliberately wrong mean model with a known E_q.
  auto mu1 = [](double x) { return std::clamp(5.0 + 0.3 * x, -100.0, 100.0); };
  auto mu0 = [](double) { return 2.0; };
  const double plugin = 5.0 + 0.3 * 1.0 - 2.0;
  RejectionSampler sampler(sc.q, [&](Point x) { return d.density_ratio(x); }, d.ratio_bound());
  const int draws = 1000000;
  double sum = 0.0, sum2 = 0.0;
  double w[2];
  for (int i = 0; i < draws; ++i) {
    const SamplerDraw x = sampler.draw(rng);
    const double e = d.evaluate(x.x, w);
    const std::size_t a = rng.uniform() <= w[1] ? 1 : 0;
    const double y = sc.outcome.sample(a, x.x, rng);
    const double mu[] = {mu0(x.x[0]), mu1(x.x[0])};
    const double psi = score_from_parts(i, a, y, mu, w, e, plugin, kContrast).psi;
    sum += psi;
    sum2 += psi * psi;
  }
  const double m = sum / draws;
  const double se = std::sqrt((sum2 / draws - m * m) / draws);
  CHECK(std::abs(m - 3.0) < 3.0 * se);
}

TEST_CASE("estimate from scores") {
  const double two[] = {1.0, 3.0};
  const auto r = estimate_from_psi(two, 0.05);
  CHECK(r.theta_hat == 2.0);
  CHECK(r.variance_hat == 2.0);
  CHECK(r.T == 2);
  CHECK(r.ci_hi - r.theta_hat == doctest::Approx(r.theta_hat - r.ci_lo).epsilon(1e-15));
  CHECK(r.ci_hi - r.theta_hat ==
        doctest::Approx(1.959963984540054 * std::sqrt(2.0 / 2.0)).epsilon(1e-14));

  std::vector<ScoreRecord> flat(10);
  for (auto& s : flat) s.psi = 4.25;
  const auto c = aipwiw_estimate(flat, 0.05);
  CHECK(c.theta_hat == 4.25);
  CHECK(c.variance_hat == 0.0);
  CHECK(c.ci_lo == c.ci_hi);

  const double one[] = {1.0};
  CHECK_THROWS_AS(estimate_from_psi(one, 0.05), Error);
}

TEST_CASE("difference in means") {
  const auto r = difference_in_means(two_arm_history({5.0, 7.0}, {1.0, 3.0}), 0.05);
  CHECK(r.theta_hat == 4.0);
  CHECK(r.variance_hat == doctest::Approx(4.0 * (2.0 / 2.0 + 2.0 / 2.0)));
  CHECK(r.covers(4.0));
  const auto same = difference_in_means(two_arm_history({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.05);
  CHECK(same.theta_hat == 0.0);
  CHECK_THROWS_AS(difference_in_means(two_arm_history({1.0}, {1.0, 2.0}), 0.05), Error);
  const auto prefix = difference_in_means(two_arm_history({5.0, 7.0, 9.0}, {1.0, 3.0}), 0.05, 5);
  CHECK(prefix.T == 5);
}

TEST_CASE("AIPW estimator") {
  History h(1, 2);
  RandomStream rng(3);
  auto mu = [](std::size_t a, double x) { return a == 1 ? 2.0 * x : -x; };
  for (int t = 0; t < 100; ++t) {
    const double x = rng.normal();
    const std::size_t a = t % 2;
    h.push_back(Round{{x}, a, mu(a, x), {0.5, 0.5}, 1.0, 0});
  }
  auto nuisance = [&](std::size_t t) {
    const double x = h[t - 1].x[0];
    return RoundNuisance{{mu(0, x), mu(1, x)}, {0.5, 0.5}, 0.1 * static_cast<double>(t)};
  };
  const auto r = aipw_estimate(h, nuisance, 0.05);
  double plugin_mean = 0.0;
  for (int t = 1; t <= 100; ++t) plugin_mean += 0.1 * t;
  CHECK(r.theta_hat == doctest::Approx(plugin_mean / 100.0).epsilon(1e-14));

  // e = 1 makes AIPW and AIPWIW coincide.
  std::vector<ScoreRecord> scores;
  auto wrong = [&](std::size_t t) {
    return RoundNuisance{{0.3, -0.2}, {0.4, 0.6}, 1.0};
  };
  for (std::size_t t = 1; t <= h.size(); ++t) {
    const auto n = wrong(t);
    scores.push_back(score_from_parts(t, h[t - 1].a, h[t - 1].y, n.mu_hat, n.w, 1.0, n.plugin,
                                      kContrast));
  }
  CHECK(aipw_estimate(h, wrong, 0.05) == aipwiw_estimate(scores, 0.05));
}

TEST_CASE("plug-in expectation") {
  ArmSample a{PointSet(1), {}}, b{PointSet(1), {}};
  for (int i = 0; i < 20; ++i) {
    a.x.push_back(Covariate{static_cast<double>(i)});
    a.y.push_back(2.0);
    b.x.push_back(Covariate{static_cast<double>(i)});
    b.y.push_back(7.5);
  }
  const NuisanceModel m = NuisanceModel::from_samples({a, b}, Clamp{}, 100.0);
  RandomStream rng(4);
  const auto p = plugin_expectation(m, CovariateLaw::gaussian(0.0, 1.0), kContrast, 1024, rng);
  CHECK(p.value == doctest::Approx(5.5).epsilon(1e-13));
  CHECK(p.draws == 1024);
}
