#include "aaexp/engine.hpp"

#include <algorithm>
#include <cmath>

#include "aaexp/error.hpp"
#include "aaexp/sampler.hpp"

namespace aaexp {

namespace {

constexpr std::uint64_t kOracleSeed = 0x0a11ce5eedULL;

struct KindName {
  DesignKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {DesignKind::DRCT, "DRCT"},
    {DesignKind::RCT, "RCT"},
    {DesignKind::AS_AIPW, "AS_AIPW"},
    {DesignKind::AAS_AIPWIW, "AAS_AIPWIW"},
    {DesignKind::AS_AIPW_ORACLE, "AS_AIPW_ORACLE"},
    {DesignKind::AAS_AIPWIW_ORACLE, "AAS_AIPWIW_ORACLE"},
    {DesignKind::AAS_AIPWIW_REJECTION, "AAS_AIPWIW_REJECTION"},
};

// Arm visited at position i of the order 1, 0, 2, 3, ...
std::size_t arm_at(std::size_t i) { return i == 0 ? 1 : i == 1 ? 0 : i; }

bool estimated_adaptive(DesignKind kind) {
  return kind == DesignKind::AS_AIPW || kind == DesignKind::AAS_AIPWIW ||
         kind == DesignKind::AAS_AIPWIW_REJECTION;
}

bool all_arms_seen(const History& h, std::size_t prefix, std::size_t K) {
  for (std::size_t a = 0; a < K; ++a)
    if (h.arm_count(a, prefix) == 0) return false;
  return true;
}

// Everything a round's design and score depend on, built from rounds 1..t-1.
class TrialContext {
 public:
  TrialContext(const Scenario& s, DesignKind kind, const EngineConfig& cfg, std::uint64_t seed,
               const OracleDesign* oracle)
      : s_(s),
        kind_(kind),
        cfg_(cfg),
        seed_(seed),
        K_(s.num_treatments),
        clamp_(cfg.clamp.value_or(s.clamp)),
        policy_(contrast_policy(K_)) {
    cfg.validate(K_);
    if (is_oracle(kind)) {
      if (oracle) {
        oracle_ = oracle;
      } else {
        owned_oracle_ = make_oracle_design(s, clamp_, cfg.oracle_budget);
        oracle_ = &*owned_oracle_;
      }
    }
  }

  std::size_t num_arms() const { return K_; }
  const std::vector<double>& policy() const { return policy_; }

  // The fitted model for round t; null while some arm has no data or when
  // nothing in the round reads it.
  std::shared_ptr<const NuisanceModel> model_for(const History& h, std::size_t t) const {
    if (uses_difference_in_means(kind_)) return nullptr;
    if (cfg_.frozen_means && is_oracle(kind_)) return nullptr;
    if (!all_arms_seen(h, t - 1, K_)) return nullptr;
    return std::make_shared<const NuisanceModel>(NuisanceModel::fit(h, t, clamp_, clamp_.hi));
  }

  DesignProbabilities design_for(const History& h, std::size_t t,
                                 const std::shared_ptr<const NuisanceModel>& model) const {
    switch (kind_) {
      case DesignKind::DRCT:
      case DesignKind::RCT:
        return uniform_design(K_);
      case DesignKind::AS_AIPW_ORACLE:
        return neyman_allocation_design(oracle_->sigma);
      case DesignKind::AAS_AIPWIW_ORACLE:
        return neyman_design(oracle_->sigma, oracle_->normalizer.value, oracle_->ratio_bound);
      default:
        break;
    }
    if (t <= cfg_.burn_in || !model) return uniform_design(K_);
    if (kind_ == DesignKind::AS_AIPW)
      return neyman_allocation_design(std::make_shared<ModelStddev>(model));
    const NormalizerMode mode = kind_ == DesignKind::AAS_AIPWIW_REJECTION
                                    ? NormalizerMode::running_average
                                    : cfg_.normalizer_mode;
    RandomStream rng = RandomStream::derive(seed_, "normalizer", t);
    return estimated_design(model, s_.q, mode, h, t, cfg_.normalizer_budget, rng);
  }

  // Forced arm for round t, if any.
  std::optional<std::size_t> forced_arm(std::size_t t) const {
    if (kind_ == DesignKind::DRCT) return arm_at((t - 1) % K_);
    if (estimated_adaptive(kind_) && t <= K_) return arm_at(t - 1);
    return std::nullopt;
  }

  void mean_estimates(const NuisanceModel* model, Point x, std::span<double> mu) const {
    if (cfg_.frozen_means) {
      std::copy(cfg_.frozen_means->begin(), cfg_.frozen_means->end(), mu.begin());
    } else if (model) {
      for (std::size_t a = 0; a < K_; ++a) mu[a] = model->predict_mean(a, x);
    } else {
      std::fill(mu.begin(), mu.end(), 0.0);
    }
  }

  double plugin_for(const NuisanceModel* model, std::size_t t, std::span<const double> mu) const {
    if (kind_ == DesignKind::AAS_AIPWIW_REJECTION) {
      double v = 0.0;
      for (std::size_t a = 0; a < K_; ++a) v += policy_[a] * mu[a];
      return v;
    }
    if (cfg_.frozen_means) {
      double v = 0.0;
      for (std::size_t a = 0; a < K_; ++a) v += policy_[a] * (*cfg_.frozen_means)[a];
      return v;
    }
    if (!model) return 0.0;
    RandomStream rng = RandomStream::derive(seed_, "plugin", t);
    return plugin_expectation(*model, s_.q, policy_, cfg_.plugin_budget, rng).value;
  }

  bool weighted_plugin() const { return kind_ == DesignKind::AAS_AIPWIW_REJECTION; }

 private:
  const Scenario& s_;
  DesignKind kind_;
  const EngineConfig& cfg_;
  std::uint64_t seed_;
  std::size_t K_;
  Clamp clamp_;
  std::vector<double> policy_;
  std::optional<OracleDesign> owned_oracle_;
  const OracleDesign* oracle_ = nullptr;
};

}  // namespace

std::string to_string(DesignKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  throw Error("to_string: unknown design kind");
}

DesignKind parse_design_kind(const std::string& name) {
  for (const auto& kn : kKindNames)
    if (name == kn.name) return kn.kind;
  throw ConfigError("design", "unknown design kind '" + name + "'");
}

const std::vector<DesignKind>& all_design_kinds() {
  static const std::vector<DesignKind> kinds = [] {
    std::vector<DesignKind> v;
    for (const auto& kn : kKindNames) v.push_back(kn.kind);
    return v;
  }();
  return kinds;
}

bool is_oracle(DesignKind kind) {
  return kind == DesignKind::AS_AIPW_ORACLE || kind == DesignKind::AAS_AIPWIW_ORACLE;
}

bool uses_difference_in_means(DesignKind kind) {
  return kind == DesignKind::DRCT || kind == DesignKind::RCT;
}

void EngineConfig::validate(std::size_t num_arms) const {
  if (num_arms < 2) throw ConfigError("num_treatments", "at least two arms are required");
  if (burn_in < num_arms)
    throw ConfigError("burn_in", "must be at least the number of arms");
  if (T <= burn_in) throw ConfigError("T", "must exceed burn_in");
  if (clamp && !(clamp->lo > 0.0 && clamp->lo < clamp->hi))
    throw ConfigError("clamp", "requires 0 < lo < hi");
  if (plugin_budget < 1) throw ConfigError("plugin_budget", "must be positive");
  if (normalizer_budget < 1000) throw ConfigError("normalizer_budget", "must be at least 1000");
  if (rejection_cap < 1) throw ConfigError("rejection_cap", "must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha", "must lie in (0, 1)");
  if (oracle_budget < 1000) throw ConfigError("oracle_budget", "must be at least 1000");
  if (frozen_means && frozen_means->size() != num_arms)
    throw ConfigError("frozen_means", "needs one value per arm");
}

OracleDesign make_oracle_design(const Scenario& scenario, Clamp clamp, std::size_t budget) {
  OracleDesign o;
  o.sigma = std::make_shared<const TrueStddev>(scenario.outcome, clamp);
  RandomStream rng(kOracleSeed);
  o.normalizer = neyman_normalizer(*o.sigma, scenario.q, budget, rng);
  o.ratio_bound = default_ratio_bound(clamp);
  return o;
}

std::size_t assign_treatment(double w1, double xi) { return xi <= w1 ? 1 : 0; }

std::size_t assign_from_propensities(std::span<const double> w, double xi) {
  if (w.size() < 2) throw Error("assign_from_propensities: at least two arms are required");
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const std::size_t a = arm_at(i);
    cum += w[a];
    if (xi <= cum) return a;
  }
  return arm_at(w.size() - 1);
}

TrialResult run_trial(const Scenario& scenario, DesignKind kind, const EngineConfig& cfg,
                      std::uint64_t seed, const OracleDesign* oracle) {
  const TrialContext ctx(scenario, kind, cfg, seed, oracle);
  const std::size_t K = ctx.num_arms();

  RandomStream cov_rng = RandomStream::derive(seed, "covariates", 0);
  RandomStream trt_rng = RandomStream::derive(seed, "treatment", 0);
  RandomStream out_rng = RandomStream::derive(seed, "outcomes", 0);

  TrialResult res;
  res.kind = kind;
  res.seed = seed;
  res.history = History(scenario.q.dimension(), K);
  res.history.reserve(cfg.T);
  if (!uses_difference_in_means(kind)) res.scores.reserve(cfg.T);

  std::vector<double> w(K), mu(K);
  for (std::size_t t = 1; t <= cfg.T; ++t) {
    const auto model = ctx.model_for(res.history, t);
    const DesignProbabilities design = ctx.design_for(res.history, t, model);

    Round r;
    if (design.tilts_covariates()) {
      RejectionSampler sampler(
          scenario.q, [&design](Point x) { return design.density_ratio(x); },
          design.ratio_bound(), cfg.rejection_cap);
      SamplerDraw d = sampler.draw(cov_rng);
      r.x = std::move(d.x);
      r.rejected_proposals = d.proposals - 1;
    } else {
      r.x = scenario.q.sample(cov_rng);
    }
    r.ratio_used = design.evaluate(r.x, w);
    r.propensities = w;

    if (const auto forced = ctx.forced_arm(t)) {
      r.a = *forced;
    } else {
      r.a = assign_from_propensities(w, trt_rng.uniform());
    }
    r.y = scenario.outcome.sample(r.a, r.x, out_rng);

    if (!uses_difference_in_means(kind)) {
      ctx.mean_estimates(model.get(), r.x, mu);
      const double plugin = ctx.plugin_for(model.get(), t, mu);
      res.scores.push_back(score_from_parts(t, r.a, r.y, mu, w, r.ratio_used, plugin,
                                            ctx.policy(), ctx.weighted_plugin()));
    }
    res.rejected_proposals += r.rejected_proposals;
    res.history.push_back(std::move(r));
  }
  res.estimate = estimate_at(res, cfg.T, cfg.alpha);
  return res;
}

EstimateReport estimate_at(const TrialResult& trial, std::size_t T, double alpha) {
  if (T > trial.history.size()) throw Error("estimate_at: horizon exceeds the trial length");
  if (uses_difference_in_means(trial.kind)) return difference_in_means(trial.history, alpha, T);
  return aipwiw_estimate(std::span<const ScoreRecord>(trial.scores.data(), T), alpha);
}

std::vector<ReplayedRound> replay_designs(const Scenario& scenario, DesignKind kind,
                                          const EngineConfig& cfg, std::uint64_t seed,
                                          const History& history, const OracleDesign* oracle) {
  const TrialContext ctx(scenario, kind, cfg, seed, oracle);
  std::vector<ReplayedRound> out;
  out.reserve(history.size());
  for (std::size_t t = 1; t <= history.size(); ++t) {
    const auto model = ctx.model_for(history, t);
    const DesignProbabilities design = ctx.design_for(history, t, model);
    ReplayedRound rr;
    rr.propensities.resize(ctx.num_arms());
    rr.ratio = design.evaluate(history[t - 1].x, rr.propensities);
    out.push_back(std::move(rr));
  }
  return out;
}

}  // namespace aaexp
