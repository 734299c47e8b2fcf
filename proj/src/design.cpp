#include "aaexp/design.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aaexp/error.hpp"
#include "aaexp/stats.hpp"

namespace aaexp {

namespace {

McEstimate summarize(double sum, double sum2, std::size_t n) {
  const double m = sum / static_cast<double>(n);
  const double var = std::max(0.0, (sum2 - static_cast<double>(n) * m * m) /
                                       static_cast<double>(n > 1 ? n - 1 : 1));
  return {m, std::sqrt(var / static_cast<double>(n)), n};
}

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

void StddevField::evaluate_many(const PointSet& xs, std::span<double> out) const {
  const std::size_t k = num_arms();
  for (std::size_t i = 0; i < xs.size(); ++i) evaluate(xs[i], out.subspan(i * k, k));
}

void TrueStddev::evaluate(Point x, std::span<double> out) const {
  for (std::size_t a = 0; a < outcome_.num_arms(); ++a) {
    double v = outcome_.variance(a, x);
    if (clamp_) v = std::clamp(v, clamp_->lo, clamp_->hi);
    out[a] = std::sqrt(v);
  }
}

void ModelStddev::evaluate(Point x, std::span<double> out) const {
  for (std::size_t a = 0; a < model_->num_arms(); ++a)
    out[a] = std::sqrt(model_->predict_variance(a, x));
}

void ModelStddev::evaluate_many(const PointSet& xs, std::span<double> out) const {
  const std::size_t k = model_->num_arms();
  std::vector<NuisancePrediction> pred(xs.size());
  for (std::size_t a = 0; a < k; ++a) {
    model_->predict_many(a, xs, pred);
    for (std::size_t i = 0; i < xs.size(); ++i) out[i * k + a] = std::sqrt(pred[i].variance);
  }
}

void ConstantStddev::evaluate(Point, std::span<double> out) const {
  std::copy(sigma_.begin(), sigma_.end(), out.begin());
}

void neyman_allocation(std::span<const double> sigma, std::span<double> w) {
  double total = 0.0;
  for (double s : sigma) {
    if (!(s > 0.0)) throw Error("neyman_allocation: standard deviations must be positive");
    total += s;
  }
  for (std::size_t a = 0; a < sigma.size(); ++a) w[a] = sigma[a] / total;
}

double efficient_ratio_numerator(std::span<const double> sigma, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t a = 0; a < sigma.size(); ++a) s += sigma[a] * sigma[a] / w[a];
  return std::sqrt(s);
}

PropensityFn neyman_propensity(std::shared_ptr<const StddevField> sigma) {
  return [sigma](Point x, std::span<double> w) {
    std::vector<double> s(sigma->num_arms());
    sigma->evaluate(x, s);
    neyman_allocation(s, w);
  };
}

PropensityFn uniform_propensity(std::size_t num_arms) {
  return [num_arms](Point, std::span<double> w) {
    for (std::size_t a = 0; a < num_arms; ++a) w[a] = 1.0 / static_cast<double>(num_arms);
  };
}

DensityRatio efficient_density_ratio(std::shared_ptr<const StddevField> sigma, PropensityFn w,
                                     const CovariateLaw& q, std::size_t budget,
                                     RandomStream& rng) {
  if (budget < 1000) throw Error("efficient_density_ratio: budget must be at least 1000");
  const std::size_t k = sigma->num_arms();
  auto numerator = [sigma, w, k](Point x) {
    std::vector<double> s(k), p(k);
    sigma->evaluate(x, s);
    w(x, p);
    return efficient_ratio_numerator(s, p);
  };
  Covariate x(q.dimension());
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < budget; ++i) {
    q.sample_into(rng, x);
    const double v = numerator(x);
    sum += v;
    sum2 += v * v;
  }
  const McEstimate n = summarize(sum, sum2, budget);
  const double norm = n.value;
  return {[numerator, norm](Point x) { return numerator(x) / norm; }, n};
}

void DesignProbabilities::propensities(Point x, std::span<double> w) const {
  evaluate(x, w);
}

double DesignProbabilities::propensity(std::size_t a, Point x) const {
  std::vector<double> w(num_arms_);
  evaluate(x, w);
  return w.at(a);
}

double DesignProbabilities::density_ratio(Point x) const {
  std::vector<double> w(num_arms_);
  return evaluate(x, w);
}

double DesignProbabilities::evaluate(Point x, std::span<double> w) const {
  if (!sigma_) {
    for (std::size_t a = 0; a < num_arms_; ++a) w[a] = 1.0 / static_cast<double>(num_arms_);
    return 1.0;
  }
  double s[16];
  std::vector<double> big;
  std::span<double> sig;
  if (num_arms_ <= 16) {
    sig = std::span<double>(s, num_arms_);
  } else {
    big.resize(num_arms_);
    sig = big;
  }
  sigma_->evaluate(x, sig);
  neyman_allocation(sig, w);
  return tilted_ ? sum_of(sig) / normalizer_ : 1.0;
}

DesignProbabilities uniform_design(std::size_t num_arms) {
  DesignProbabilities d;
  d.num_arms_ = num_arms;
  return d;
}

DesignProbabilities neyman_design(std::shared_ptr<const StddevField> sigma, double normalizer,
                                  double ratio_bound) {
  if (!sigma) throw Error("neyman_design: missing standard deviations");
  if (!(normalizer > 0.0) || !std::isfinite(normalizer))
    throw Error("neyman_design: normalizer must be positive");
  if (!(ratio_bound > 0.0)) throw Error("neyman_design: ratio bound must be positive");
  DesignProbabilities d;
  d.num_arms_ = sigma->num_arms();
  d.sigma_ = std::move(sigma);
  d.normalizer_ = normalizer;
  d.ratio_bound_ = ratio_bound;
  d.tilted_ = true;
  return d;
}

DesignProbabilities neyman_allocation_design(std::shared_ptr<const StddevField> sigma) {
  if (!sigma) throw Error("neyman_allocation_design: missing standard deviations");
  DesignProbabilities d;
  d.num_arms_ = sigma->num_arms();
  d.sigma_ = std::move(sigma);
  return d;
}

double default_ratio_bound(Clamp clamp) { return std::sqrt(clamp.hi / clamp.lo); }

McEstimate neyman_normalizer(const StddevField& sigma, const CovariateLaw& q, std::size_t budget,
                             RandomStream& rng) {
  if (budget == 0) throw Error("neyman_normalizer: budget must be positive");
  const std::size_t k = sigma.num_arms();
  const PointSet xs = q.sample_many(rng, budget);
  std::vector<double> s(budget * k);
  sigma.evaluate_many(xs, s);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < budget; ++i) {
    const double v = sum_of(std::span<const double>(s).subspan(i * k, k));
    sum += v;
    sum2 += v * v;
  }
  return summarize(sum, sum2, budget);
}

double running_average_normalizer(const StddevField& sigma, const History& history,
                                  std::size_t t) {
  if (t < 2 || t - 1 > history.size())
    throw Error("running_average_normalizer: needs at least one past round");
  const std::size_t k = sigma.num_arms();
  PointSet xs(history.dim());
  xs.reserve(t - 1);
  for (std::size_t i = 0; i + 1 < t; ++i) xs.push_back(history[i].x);
  std::vector<double> s(xs.size() * k);
  sigma.evaluate_many(xs, s);
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    sum += sum_of(std::span<const double>(s).subspan(i * k, k)) / history[i].ratio_used;
  return sum / static_cast<double>(t - 1);
}

DesignProbabilities estimated_design(std::shared_ptr<const NuisanceModel> model,
                                     const CovariateLaw& q, NormalizerMode mode,
                                     const History& history, std::size_t t, std::size_t budget,
                                     RandomStream& rng) {
  const Clamp clamp = model->clamp();
  auto sigma = std::make_shared<ModelStddev>(model);
  const double k = static_cast<double>(model->num_arms());
  double normalizer = 0.0;
  double bound = default_ratio_bound(clamp);
  if (mode == NormalizerMode::fresh_mc) {
    normalizer = neyman_normalizer(*sigma, q, budget, rng).value;
  } else {
    normalizer = running_average_normalizer(*sigma, history, t);
    // The weighted average is not confined to [K sqrt(lo), K sqrt(hi)].
    bound = std::max(bound, k * std::sqrt(clamp.hi) / normalizer);
  }
  return neyman_design(std::move(sigma), normalizer, bound);
}

McEstimate efficiency_bound(const StddevField& sigma, const PropensityFn& w, const RatioFn& ratio,
                            const CovariateLaw& q, std::size_t budget, RandomStream& rng) {
  if (budget == 0) throw Error("efficiency_bound: budget must be positive");
  const std::size_t k = sigma.num_arms();
  std::vector<double> s(k), p(k);
  Covariate x(q.dimension());
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < budget; ++i) {
    q.sample_into(rng, x);
    const double e = ratio(x);
    if (!(e > 0.0)) throw Error("efficiency_bound: density ratio must be positive on q's support");
    sigma.evaluate(x, s);
    w(x, p);
    double v = 0.0;
    for (std::size_t a = 0; a < k; ++a) v += s[a] * s[a] / p[a];
    v /= e;
    sum += v;
    sum2 += v * v;
  }
  return summarize(sum, sum2, budget);
}

BoundReport bound_report(const Scenario& scenario, std::size_t budget, RandomStream& rng) {
  if (budget < 2) throw Error("bound_report: budget must be at least 2");
  const TrueStddev sigma(scenario.outcome);
  const std::size_t k = scenario.num_treatments;
  std::vector<double> s(k);
  Covariate x(scenario.q.dimension());
  std::vector<double> total(budget), flat(budget);
  for (std::size_t i = 0; i < budget; ++i) {
    scenario.q.sample_into(rng, x);
    sigma.evaluate(x, s);
    double s1 = 0.0, s2 = 0.0;
    for (double v : s) {
      s1 += v;
      s2 += v * v;
    }
    total[i] = s1;
    flat[i] = static_cast<double>(k) * s2;
  }
  const double n = static_cast<double>(budget);
  const double m_total = mean(total);
  double sum_sq = 0.0, sum_sq2 = 0.0, sum_dev = 0.0, sum_dev2 = 0.0;
  double sum_flat = 0.0, sum_flat2 = 0.0, sum_gp = 0.0, sum_gp2 = 0.0;
  for (std::size_t i = 0; i < budget; ++i) {
    const double sq = total[i] * total[i];
    const double dev = (total[i] - m_total) * (total[i] - m_total);
    const double gp = flat[i] - sq;
    sum_sq += sq;
    sum_sq2 += sq * sq;
    sum_dev += dev;
    sum_dev2 += dev * dev;
    sum_flat += flat[i];
    sum_flat2 += flat[i] * flat[i];
    sum_gp += gp;
    sum_gp2 += gp * gp;
  }
  BoundReport r;
  r.draws = budget;
  r.normalizer = m_total;
  const McEstimate tau = summarize(sum_flat, sum_flat2, budget);
  const McEstimate tilde = summarize(sum_sq, sum_sq2, budget);
  const McEstimate gp = summarize(sum_gp, sum_gp2, budget);
  const McEstimate gd = summarize(sum_dev, sum_dev2, budget);
  r.tau = tau.value;
  r.tau_se = tau.std_error;
  r.tau_tilde = tilde.value;
  r.tau_tilde_se = tilde.std_error;
  r.tau_star = m_total * m_total;
  r.tau_star_se = 2.0 * std::abs(m_total) * std::sqrt(sample_variance(total) / n);
  r.gain_propensity = gp.value;
  r.gain_propensity_se = gp.std_error;
  r.gain_density = gd.value;
  r.gain_density_se = gd.std_error;
  return r;
}

double sample_size(double variance, double delta, double alpha, double beta, bool squared) {
  if (!(delta > 0.0)) throw Error("sample_size: delta must be positive");
  if (!(variance >= 0.0)) throw Error("sample_size: variance must be non-negative");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("sample_size: alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw Error("sample_size: beta must lie in (0, 1)");
  const double scale = variance / (delta * delta);
  const double za = normal_quantile(1.0 - alpha / 2.0);
  if (squared) {
    const double zb = normal_quantile(1.0 - beta);
    return scale * (za + zb) * (za + zb);
  }
  return scale * (za - normal_quantile(beta));
}

}  // namespace aaexp
