#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "aaexp/history.hpp"
#include "aaexp/nuisance.hpp"
#include "aaexp/random.hpp"
#include "aaexp/scenario.hpp"

namespace aaexp {

// Per-arm conditional standard deviations sigma(a)(x).
class StddevField {
 public:
  virtual ~StddevField() = default;
  virtual std::size_t num_arms() const = 0;
  // Writes sigma(a)(x) for every arm.
  virtual void evaluate(Point x, std::span<double> out) const = 0;
  // Row-major: out[i * num_arms() + a].
  virtual void evaluate_many(const PointSet& xs, std::span<double> out) const;
};

// sqrt of the scenario variance, optionally clamped to [sqrt(lo), sqrt(hi)].
// The outcome model must outlive the field.
class TrueStddev final : public StddevField {
 public:
  TrueStddev(const OutcomeModel& outcome, std::optional<Clamp> clamp = std::nullopt)
      : outcome_(outcome), clamp_(clamp) {}
  std::size_t num_arms() const override { return outcome_.num_arms(); }
  void evaluate(Point x, std::span<double> out) const override;

 private:
  const OutcomeModel& outcome_;
  std::optional<Clamp> clamp_;
};

// sqrt of the clamped kernel variance estimate.
class ModelStddev final : public StddevField {
 public:
  explicit ModelStddev(std::shared_ptr<const NuisanceModel> model) : model_(std::move(model)) {}
  std::size_t num_arms() const override { return model_->num_arms(); }
  void evaluate(Point x, std::span<double> out) const override;
  void evaluate_many(const PointSet& xs, std::span<double> out) const override;

 private:
  std::shared_ptr<const NuisanceModel> model_;
};

class ConstantStddev final : public StddevField {
 public:
  explicit ConstantStddev(std::vector<double> sigma) : sigma_(std::move(sigma)) {}
  std::size_t num_arms() const override { return sigma_.size(); }
  void evaluate(Point, std::span<double> out) const override;

 private:
  std::vector<double> sigma_;
};

// w(a|x) for every arm; entries are positive and sum to one.
using PropensityFn = std::function<void(Point, std::span<double>)>;
// e(x) = p(x) / q(x).
using RatioFn = std::function<double(Point)>;

// w*(a) = sigma(a) / sum_b sigma(b). Throws on a non-positive sigma.
void neyman_allocation(std::span<const double> sigma, std::span<double> w);
// sqrt(sum_a sigma(a)^2 / w(a)); equals sum_a sigma(a) at the Neyman allocation.
double efficient_ratio_numerator(std::span<const double> sigma, std::span<const double> w);

PropensityFn neyman_propensity(std::shared_ptr<const StddevField> sigma);
PropensityFn uniform_propensity(std::size_t num_arms);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
};

struct DensityRatio {
  RatioFn ratio;
  McEstimate normalizer;
};

// ratio(x) = sqrt(sum_a sigma^2(a)(x) / w(a|x)) / N, N = E_q of the numerator
// by `budget` draws of q from `rng`. Requires budget >= 1000.
DensityRatio efficient_density_ratio(std::shared_ptr<const StddevField> sigma, PropensityFn w,
                                     const CovariateLaw& q, std::size_t budget,
                                     RandomStream& rng);

enum class NormalizerMode { fresh_mc, running_average };

// Propensities and density ratio used in one round. The uniform design has
// w = 1/K and e = 1; the Neyman design has w = w* under `sigma` and
// e = (sum_a sigma(a)) / normalizer, or e = 1 when built as an allocation-only
// design.
class DesignProbabilities {
 public:
  std::size_t num_arms() const noexcept { return num_arms_; }
  bool is_uniform() const noexcept { return sigma_ == nullptr; }
  bool tilts_covariates() const noexcept { return tilted_; }
  double normalizer() const noexcept { return normalizer_; }
  double ratio_bound() const noexcept { return ratio_bound_; }
  const StddevField* sigma() const noexcept { return sigma_.get(); }

  void propensities(Point x, std::span<double> w) const;
  double propensity(std::size_t a, Point x) const;
  double density_ratio(Point x) const;
  // Propensities and ratio from a single sigma evaluation; returns e(x).
  double evaluate(Point x, std::span<double> w) const;

  friend DesignProbabilities uniform_design(std::size_t num_arms);
  friend DesignProbabilities neyman_design(std::shared_ptr<const StddevField> sigma,
                                           double normalizer, double ratio_bound);
  friend DesignProbabilities neyman_allocation_design(std::shared_ptr<const StddevField> sigma);

 private:
  std::size_t num_arms_ = 2;
  std::shared_ptr<const StddevField> sigma_;
  double normalizer_ = 1.0;
  double ratio_bound_ = 1.0;
  bool tilted_ = false;
};

DesignProbabilities uniform_design(std::size_t num_arms);
DesignProbabilities neyman_design(std::shared_ptr<const StddevField> sigma, double normalizer,
                                  double ratio_bound);
// Neyman propensities with covariates left at q (e = 1).
DesignProbabilities neyman_allocation_design(std::shared_ptr<const StddevField> sigma);

// sqrt(C_hi / C_lo): the sup of e under Neyman weights with clamped sigma.
double default_ratio_bound(Clamp clamp);

// E_q[sum_a sigma(a)] by `budget` draws of q.
McEstimate neyman_normalizer(const StddevField& sigma, const CovariateLaw& q, std::size_t budget,
                             RandomStream& rng);

// Importance-weighted average over rounds 1..t-1 of sum_a sigma(a)(X_s)
// times q(X_s)/p_s(X_s) = 1 / ratio_used_s. Throws for t < 2.
double running_average_normalizer(const StddevField& sigma, const History& history,
                                  std::size_t t);

// Neyman design with the efficient density ratio from a fitted model. `budget` draws from `rng` feed the
// fresh_mc normalizer; running_average uses rounds 1..t-1 of `history`.
DesignProbabilities estimated_design(std::shared_ptr<const NuisanceModel> model,
                                     const CovariateLaw& q, NormalizerMode mode,
                                     const History& history, std::size_t t, std::size_t budget,
                                     RandomStream& rng);

// tau(w, p) = E_q[(sum_a sigma^2(a)/w(a)) / e]. Throws on a non-positive ratio.
McEstimate efficiency_bound(const StddevField& sigma, const PropensityFn& w, const RatioFn& ratio,
                            const CovariateLaw& q, std::size_t budget, RandomStream& rng);

struct BoundReport {
  double tau = 0.0;        // uniform allocation with p = q
  double tau_tilde = 0.0;  // Neyman allocation with p = q
  double tau_star = 0.0;   // Neyman allocation with p = p*
  double gain_propensity = 0.0;
  double gain_density = 0.0;
  double tau_se = 0.0;
  double tau_tilde_se = 0.0;
  double tau_star_se = 0.0;
  double gain_propensity_se = 0.0;
  double gain_density_se = 0.0;
  double normalizer = 0.0;  // E_q[sum_a sigma(a)]
  std::size_t draws = 0;
};

// All three bounds from one common sample of q, using the true sigma.
BoundReport bound_report(const Scenario& scenario, std::size_t budget, RandomStream& rng);

// T* = (V / delta^2)(z_{1-alpha/2} - z_beta); with `squared`,
// (V / delta^2)(z_{1-alpha/2} + z_{1-beta})^2.
double sample_size(double variance, double delta, double alpha, double beta,
                   bool squared = false);

}  // namespace aaexp
