#include "aaexp/estimators.hpp"

#include <cmath>

#include "aaexp/error.hpp"
#include "aaexp/stats.hpp"

namespace aaexp {

std::vector<double> contrast_policy(std::size_t num_arms) {
  std::vector<double> p(num_arms, 0.0);
  p.at(0) = -1.0;
  p.at(1) = 1.0;
  return p;
}

ScoreRecord score_from_parts(std::size_t t, std::size_t a, double y,
                             std::span<const double> mu_hat, std::span<const double> w,
                             double ratio, double plugin, std::span<const double> policy,
                             bool weighted_plugin) {
  if (a >= w.size() || a >= mu_hat.size() || a >= policy.size())
    throw Error("score: treatment index out of range");
  if (!(w[a] > 0.0)) throw Error("score: propensity of the observed treatment must be positive");
  if (!(ratio > 0.0)) throw Error("score: density ratio must be positive");
  ScoreRecord r;
  r.t = t;
  r.arm = a;
  const double ipw = (y - mu_hat[a]) / w[a];
  if (a == 1) r.ipw_term_1 = ipw;
  if (a == 0) r.ipw_term_0 = ipw;
  r.ipw_policy = policy[a] * ipw;
  r.plugin_term = plugin;
  r.importance_weight = 1.0 / ratio;
  r.weighted_plugin = weighted_plugin;
  r.psi = weighted_plugin ? (r.ipw_policy + r.plugin_term) * r.importance_weight
                          : r.ipw_policy * r.importance_weight + r.plugin_term;
  return r;
}

ScoreRecord aipwiw_score(double y, std::size_t a, Point x, const NuisanceModel& model,
                         const DesignProbabilities& design, double plugin_expectation,
                         std::size_t t) {
  const std::size_t k = model.num_arms();
  std::vector<double> mu(k), w(k);
  for (std::size_t b = 0; b < k; ++b) mu[b] = model.predict_mean(b, x);
  const double e = design.evaluate(x, w);
  return score_from_parts(t, a, y, mu, w, e, plugin_expectation, contrast_policy(k));
}

McEstimate plugin_expectation(const NuisanceModel& model, const CovariateLaw& q,
                              std::span<const double> policy, std::size_t budget,
                              RandomStream& rng) {
  if (budget == 0) throw Error("plugin_expectation: budget must be positive");
  const PointSet xs = q.sample_many(rng, budget);
  std::vector<double> value(budget, 0.0);
  std::vector<NuisancePrediction> pred(budget);
  for (std::size_t a = 0; a < model.num_arms(); ++a) {
    if (policy[a] == 0.0) continue;
    model.predict_many(a, xs, pred);
    for (std::size_t i = 0; i < budget; ++i) value[i] += policy[a] * pred[i].mean;
  }
  McEstimate m;
  m.value = mean(value);
  m.std_error = std::sqrt(sample_variance(value) / static_cast<double>(budget));
  m.draws = budget;
  return m;
}

EstimateReport estimate_from_psi(std::span<const double> psi, double alpha) {
  if (psi.size() < 2) throw Error("estimate: at least two scores are required");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("estimate: alpha must lie in (0, 1)");
  EstimateReport r;
  r.T = psi.size();
  r.alpha = alpha;
  r.theta_hat = mean(psi);
  r.variance_hat = sample_variance(psi);
  const double half =
      normal_quantile(1.0 - alpha / 2.0) * std::sqrt(r.variance_hat / static_cast<double>(r.T));
  r.ci_lo = r.theta_hat - half;
  r.ci_hi = r.theta_hat + half;
  return r;
}

EstimateReport aipwiw_estimate(std::span<const ScoreRecord> scores, double alpha) {
  std::vector<double> psi;
  psi.reserve(scores.size());
  for (const auto& s : scores) psi.push_back(s.psi);
  return estimate_from_psi(psi, alpha);
}

EstimateReport difference_in_means(const History& history, double alpha, std::size_t prefix) {
  const std::size_t T = prefix == 0 ? history.size() : prefix;
  if (T > history.size()) throw Error("difference_in_means: prefix exceeds the history");
  std::vector<double> y1, y0;
  for (std::size_t i = 0; i < T; ++i) {
    if (history[i].a == 1) y1.push_back(history[i].y);
    else if (history[i].a == 0) y0.push_back(history[i].y);
  }
  if (y1.size() < 2 || y0.size() < 2)
    throw Error("difference_in_means: each arm needs at least two observations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("estimate: alpha must lie in (0, 1)");
  EstimateReport r;
  r.T = T;
  r.alpha = alpha;
  r.theta_hat = mean(y1) - mean(y0);
  const double se2 = sample_variance(y1) / static_cast<double>(y1.size()) +
                     sample_variance(y0) / static_cast<double>(y0.size());
  r.variance_hat = static_cast<double>(T) * se2;
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(se2);
  r.ci_lo = r.theta_hat - half;
  r.ci_hi = r.theta_hat + half;
  return r;
}

EstimateReport aipw_estimate(const History& history,
                             const std::function<RoundNuisance(std::size_t)>& nuisance,
                             double alpha) {
  const std::vector<double> policy = contrast_policy(history.num_arms());
  std::vector<double> psi;
  psi.reserve(history.size());
  for (std::size_t t = 1; t <= history.size(); ++t) {
    const Round& r = history[t - 1];
    const RoundNuisance n = nuisance(t);
    psi.push_back(score_from_parts(t, r.a, r.y, n.mu_hat, n.w, 1.0, n.plugin, policy).psi);
  }
  return estimate_from_psi(psi, alpha);
}

}  // namespace aaexp
