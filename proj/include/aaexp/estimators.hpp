#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "aaexp/design.hpp"
#include "aaexp/history.hpp"
#include "aaexp/nuisance.hpp"
#include "aaexp/random.hpp"
#include "aaexp/scenario.hpp"

namespace aaexp {

// Evaluation policy pi(a), one weight per arm. contrast_policy gives
// pi(1) = +1, pi(0) = -1 and zero elsewhere, whose value is the ATE.
std::vector<double> contrast_policy(std::size_t num_arms);

// One round's score. For the binary contrast exactly one of ipw_term_1,
// ipw_term_0 is nonzero and ipw_policy = ipw_term_1 - ipw_term_0;
// importance_weight is q(x)/p(x) = 1/e(x).
//   psi = ipw_policy * importance_weight + plugin_term              (default)
//   psi = (ipw_policy + plugin_term) * importance_weight            (weighted_plugin)
struct ScoreRecord {
  std::size_t t = 0;
  std::size_t arm = 0;
  double psi = 0.0;
  double ipw_term_1 = 0.0;
  double ipw_term_0 = 0.0;
  double ipw_policy = 0.0;
  double plugin_term = 0.0;
  double importance_weight = 1.0;
  bool weighted_plugin = false;

  bool operator==(const ScoreRecord&) const = default;
};

// `mu_hat` and `w` hold one entry per arm at the round's covariate.
// Throws Error on a non-positive propensity for the observed arm or a
// non-positive ratio.
ScoreRecord score_from_parts(std::size_t t, std::size_t a, double y,
                             std::span<const double> mu_hat, std::span<const double> w,
                             double ratio, double plugin, std::span<const double> policy,
                             bool weighted_plugin = false);

// AIPWIW score for the binary contrast with a fitted model and design.
ScoreRecord aipwiw_score(double y, std::size_t a, Point x, const NuisanceModel& model,
                         const DesignProbabilities& design, double plugin_expectation,
                         std::size_t t = 0);

// E_q[sum_a pi(a) mu_hat(a)(X)] by `budget` draws of q from `rng`.
McEstimate plugin_expectation(const NuisanceModel& model, const CovariateLaw& q,
                              std::span<const double> policy, std::size_t budget,
                              RandomStream& rng);

struct EstimateReport {
  double theta_hat = 0.0;
  double variance_hat = 0.0;  // of sqrt(T)(theta_hat - theta_0)
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t T = 0;
  double alpha = 0.05;

  bool covers(double theta) const { return ci_lo <= theta && theta <= ci_hi; }
  bool operator==(const EstimateReport&) const = default;
};

// Mean of psi with the sample variance (divisor T - 1) and a normal
// interval at level alpha. Throws for T < 2.
EstimateReport estimate_from_psi(std::span<const double> psi, double alpha);
EstimateReport aipwiw_estimate(std::span<const ScoreRecord> scores, double alpha);

// mean(Y | A = 1) - mean(Y | A = 0) over the first `prefix` rounds (all when
// zero); variance_hat = T (s1^2/n1 + s0^2/n0). Throws when an arm has fewer
// than two observations.
EstimateReport difference_in_means(const History& history, double alpha,
                                   std::size_t prefix = 0);

struct RoundNuisance {
  std::vector<double> mu_hat;  // per arm at x_t
  std::vector<double> w;       // per arm at x_t
  double plugin = 0.0;
};

// AIPW without importance weighting: e = 1 in every round. `nuisance(t)`
// returns round t's (1-based) estimates.
EstimateReport aipw_estimate(const History& history,
                             const std::function<RoundNuisance(std::size_t)>& nuisance,
                             double alpha);

}  // namespace aaexp
