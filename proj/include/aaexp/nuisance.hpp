#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "aaexp/history.hpp"
#include "aaexp/point.hpp"
#include "aaexp/scenario.hpp"

namespace aaexp {

struct ArmSample {
  PointSet x;
  std::vector<double> y;
};

struct NuisancePrediction {
  double mean = 0.0;           // clamped to [-mean_bound, mean_bound]
  double second_moment = 0.0;  // unclamped kernel estimate of E[Y^2 | x]
  double variance = 0.0;       // thre(second_moment - mean^2, clamp.lo, clamp.hi)
};

// Nadaraya-Watson estimates of the per-arm conditional mean, second moment
// and clamped variance, with a product Gaussian kernel and per-coordinate
// Silverman bandwidths h = max(1e-3, 1.06 sd n^{-1/5}).
//
// Queries whose kernel mass falls below 1e-12 return the arm's clamped sample
// mean and sample second moment.
class NuisanceModel {
 public:
  // Fits on rounds 1..t-1, i.e. the first t - 1 entries of `history`.
  // Throws Error when an arm has no observation in that prefix.
  static NuisanceModel fit(const History& history, std::size_t t, Clamp clamp,
                           double mean_bound);

  // One sample per arm. A positive `bandwidth` replaces the Silverman rule on
  // every coordinate of every arm.
  static NuisanceModel from_samples(std::vector<ArmSample> arms, Clamp clamp,
                                    double mean_bound,
                                    std::optional<double> bandwidth = std::nullopt);

  std::size_t num_arms() const noexcept { return arms_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t arm_size(std::size_t a) const { return arms_.at(a).n; }
  const std::vector<double>& bandwidth(std::size_t a) const { return arms_.at(a).h; }
  Clamp clamp() const noexcept { return clamp_; }
  double mean_bound() const noexcept { return mean_bound_; }

  NuisancePrediction predict(std::size_t a, Point x) const;
  double predict_mean(std::size_t a, Point x) const { return predict(a, x).mean; }
  double predict_second_moment(std::size_t a, Point x) const {
    return predict(a, x).second_moment;
  }
  double predict_variance(std::size_t a, Point x) const { return predict(a, x).variance; }

  // Batched prediction. For one-dimensional covariates, kernel sums inside
  // densely queried cells are interpolated from Chebyshev nodes (relative
  // error below 1e-9); everything else is evaluated directly. The result for
  // a given batch is deterministic.
  void predict_many(std::size_t a, const PointSet& xs,
                    std::span<NuisancePrediction> out) const;

 private:
  struct Arm {
    std::size_t n = 0;
    std::vector<std::vector<double>> cols;  // cols[j][i]: coordinate j of point i
    std::vector<double> y;
    std::vector<double> y2;
    std::vector<double> h;
    std::vector<double> inv_h;
    double fallback_mean = 0.0;
    double fallback_second = 0.0;
  };
  struct Sums {
    double s0, s1, s2;
  };
  struct NodeCache;

  NuisanceModel() = default;
  static Arm make_arm(ArmSample sample, std::size_t dim, std::optional<double> bandwidth);
  Sums direct_sums(const Arm& arm, Point x) const;
  NuisancePrediction finish(const Arm& arm, Sums s) const;

  std::size_t dim_ = 1;
  Clamp clamp_;
  double mean_bound_ = 100.0;
  std::vector<Arm> arms_;
  std::shared_ptr<NodeCache> cache_;
};

}  // namespace aaexp
