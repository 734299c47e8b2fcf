#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aaexp/point.hpp"
#include "aaexp/random.hpp"
#include "json.hpp"

namespace aaexp {

// Variance clamp (C_lo, C_hi). C_hi doubles as the bound on |mean|.
struct Clamp {
  double lo = 0.5;
  double hi = 100.0;

  bool operator==(const Clamp&) const = default;
};

enum class CovariateKind { gaussian, uniform, empirical };

// Covariate law q. Analytic kinds have independent coordinates with the
// given per-coordinate parameters.
class CovariateLaw {
 public:
  static CovariateLaw gaussian(std::vector<double> mean, std::vector<double> variance);
  static CovariateLaw gaussian(double mean, double variance, std::size_t dim = 1);
  static CovariateLaw uniform(std::vector<double> lo, std::vector<double> hi);
  static CovariateLaw uniform(double lo, double hi, std::size_t dim = 1);
  static CovariateLaw empirical(const std::vector<Covariate>& points);

  CovariateKind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dim_; }

  // Parameters (meaning depends on kind: mean/variance or lo/hi).
  const std::vector<double>& first_param() const noexcept { return a_; }
  const std::vector<double>& second_param() const noexcept { return b_; }
  const PointSet& points() const noexcept { return points_; }

  // Density for analytic kinds; probability mass of x for empirical laws.
  double density(Point x) const;
  // Marginal CDF of the first coordinate.
  double cdf(double x1) const;
  // Exact raw moment E[X_coord^k] under the law.
  double raw_moment(std::size_t coord, int k) const;

  Covariate sample(RandomStream& rng) const;
  void sample_into(RandomStream& rng, std::span<double> out) const;
  PointSet sample_many(RandomStream& rng, std::size_t n) const;

  bool operator==(const CovariateLaw&) const = default;

 private:
  CovariateLaw() = default;

  CovariateKind kind_ = CovariateKind::gaussian;
  std::size_t dim_ = 1;
  std::vector<double> a_;
  std::vector<double> b_;
  PointSet points_;
};

enum class NoiseFamily { gaussian, uniform, laplace, none };

// Per-arm conditional mean: a builtin form or polynomial coefficients in the
// first covariate coordinate (ascending powers), one list per arm.
struct MeanSpec {
  std::string builtin;
  std::vector<std::vector<double>> coefficients;

  bool operator==(const MeanSpec&) const = default;
};

// Per-arm conditional variance: a builtin expression or polynomials in x1.
struct VarianceSpec {
  std::string builtin;
  std::vector<std::vector<double>> coefficients;

  bool operator==(const VarianceSpec&) const = default;
};

class OutcomeModel {
 public:
  // `mean` must already be resolved to coefficients (see make_scenario).
  OutcomeModel(MeanSpec mean, VarianceSpec variance, NoiseFamily noise,
               std::size_t num_arms);

  std::size_t num_arms() const noexcept { return num_arms_; }
  const MeanSpec& mean_spec() const noexcept { return mean_; }
  const VarianceSpec& variance_spec() const noexcept { return variance_; }
  NoiseFamily noise() const noexcept { return noise_; }

  double mean(std::size_t arm, Point x) const;
  double variance(std::size_t arm, Point x) const;
  double stddev(std::size_t arm, Point x) const;
  // Y(arm) | X = x: mean(arm, x) plus mean-zero noise with variance(arm, x).
  double sample(std::size_t arm, Point x, RandomStream& rng) const;

  bool operator==(const OutcomeModel&) const = default;

 private:
  MeanSpec mean_;
  VarianceSpec variance_;
  NoiseFamily noise_;
  std::size_t num_arms_;
};

struct Scenario {
  CovariateLaw q;
  OutcomeModel outcome;
  std::size_t num_treatments = 2;
  Clamp clamp;
  std::optional<double> true_ate;

  bool operator==(const Scenario&) const = default;
};

// Resolves builtin means against q, fills true_ate when `true_ate` is empty
// and `compute_ate` is set, and validates every invariant.
Scenario make_scenario(CovariateLaw q, MeanSpec mean, VarianceSpec variance,
                       NoiseFamily noise, std::size_t num_treatments, Clamp clamp,
                       std::optional<double> true_ate, bool compute_ate = true);

enum class PaperCovariate { gaussian, uniform };
enum class VarianceMode { heterogeneous, homogeneous_variance, homogeneous_mean };

// Simulation scenarios with E_q[Y(1)] = 10 and E_q[Y(0)] = 7, so the ATE is 3.
// Gaussian q = N(1, 25); uniform q = U(-10, 10). Throws ConfigError for
// (uniform, homogeneous_mean): a linear mean cannot hit the targets when
// E_q[X] = 0.
Scenario build_paper_scenario(PaperCovariate covariate, VarianceMode mode);

// Normalising constants of the builtin mean forms under q, {C0, C1}.
std::vector<double> builtin_mean_constants(const std::string& builtin,
                                           const CovariateLaw& q);

nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

std::string to_string(NoiseFamily noise);
std::string to_string(CovariateKind kind);

}  // namespace aaexp
