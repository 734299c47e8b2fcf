#include "aaexp/nuisance.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <string>
#include <unordered_map>

#include "aaexp/error.hpp"

namespace aaexp {

namespace {

constexpr double kMassFloor = 1e-12;
constexpr double kBandwidthFloor = 1e-3;

// Chebyshev cell settings: width in bandwidths, node count, minimum queries
// per cell, and admissible kernel-mass range over the nodes.
constexpr double kCellWidth = 3.0;
constexpr int kNodes = 24;
constexpr std::size_t kMinQueries = 8;
constexpr double kMinNodeMass = 1e-6;
constexpr double kMinMassRatio = 1e-3;

// exp(x) for x in [-700, 0]; relative error below 1e-14. Written so the
// kernel loops vectorise.
inline double kernel_exp(double x) {
  constexpr double shifter = 6755399441055744.0;
  double kd = x * 1.4426950408889634 + shifter;
  const std::uint64_t kb = std::bit_cast<std::uint64_t>(kd);
  kd -= shifter;
  double r = x - kd * 6.93147180369123816490e-01;
  r = r - kd * 1.90821492927058770002e-10;
  double p = 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const std::uint64_t bits = (kb + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

struct Acc {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
};

Acc sums_1d(const double* xs, const double* y, const double* y2, std::size_t n, double x,
            double inv_h) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2)
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (x - xs[i]) * inv_h;
    double a = u * u;
    a = a < 1400.0 ? a : 1400.0;
    const double w = kernel_exp(-0.5 * a);
    s0 += w;
    s1 += w * y[i];
    s2 += w * y2[i];
  }
  return {s0, s1, s2};
}

struct Cell {
  bool usable = false;
  double nodes[kNodes];
  double s0[kNodes], s1[kNodes], s2[kNodes];
};

// Barycentric weights of first-kind Chebyshev nodes.
const std::array<double, kNodes>& node_weights() {
  static const std::array<double, kNodes> w = [] {
    std::array<double, kNodes> out{};
    for (int j = 0; j < kNodes; ++j) {
      const double s = std::sin((2 * j + 1) * std::numbers::pi / (2 * kNodes));
      out[j] = (j % 2 == 0) ? s : -s;
    }
    return out;
  }();
  return w;
}

}  // namespace

struct NuisanceModel::NodeCache {
  std::mutex mu;
  std::vector<std::unordered_map<std::int64_t, Cell>> cells;
};

NuisanceModel::Arm NuisanceModel::make_arm(ArmSample sample, std::size_t dim,
                                           std::optional<double> bandwidth) {
  Arm arm;
  arm.n = sample.y.size();
  if (sample.x.size() != arm.n) throw Error("nuisance: covariate and outcome counts differ");
  if (arm.n > 0 && sample.x.dim() != dim) throw Error("nuisance: covariate dimension mismatch");
  arm.cols.assign(dim, std::vector<double>(arm.n));
  for (std::size_t i = 0; i < arm.n; ++i) {
    const Point p = sample.x[i];
    for (std::size_t j = 0; j < dim; ++j) arm.cols[j][i] = p[j];
  }
  arm.y = std::move(sample.y);
  arm.y2.resize(arm.n);
  double sy = 0.0, sy2 = 0.0;
  for (std::size_t i = 0; i < arm.n; ++i) {
    arm.y2[i] = arm.y[i] * arm.y[i];
    sy += arm.y[i];
    sy2 += arm.y2[i];
  }
  if (arm.n > 0) {
    arm.fallback_mean = sy / static_cast<double>(arm.n);
    arm.fallback_second = sy2 / static_cast<double>(arm.n);
  }
  arm.h.resize(dim);
  arm.inv_h.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double h;
    if (bandwidth) {
      h = *bandwidth;
    } else {
      double sd = 0.0;
      if (arm.n > 1) {
        double m = 0.0;
        for (double v : arm.cols[j]) m += v;
        m /= static_cast<double>(arm.n);
        double ss = 0.0;
        for (double v : arm.cols[j]) ss += (v - m) * (v - m);
        sd = std::sqrt(ss / static_cast<double>(arm.n - 1));
      }
      h = 1.06 * sd * std::pow(static_cast<double>(std::max<std::size_t>(arm.n, 1)), -0.2);
    }
    h = std::max(h, kBandwidthFloor);
    arm.h[j] = h;
    arm.inv_h[j] = 1.0 / h;
  }
  return arm;
}

NuisanceModel NuisanceModel::from_samples(std::vector<ArmSample> arms, Clamp clamp,
                                          double mean_bound, std::optional<double> bandwidth) {
  if (arms.empty()) throw Error("nuisance: no arms");
  if (bandwidth && !(*bandwidth > 0.0)) throw Error("nuisance: bandwidth must be positive");
  NuisanceModel m;
  m.dim_ = arms.front().x.dim();
  if (m.dim_ == 0) m.dim_ = 1;
  m.clamp_ = clamp;
  m.mean_bound_ = mean_bound;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    if (arms[a].y.empty())
      throw Error("nuisance: treatment " + std::to_string(a) +
                  " has no observations; extend burn_in so every arm is sampled");
    m.arms_.push_back(make_arm(std::move(arms[a]), m.dim_, bandwidth));
  }
  m.cache_ = std::make_shared<NodeCache>();
  m.cache_->cells.resize(m.arms_.size());
  return m;
}

NuisanceModel NuisanceModel::fit(const History& history, std::size_t t, Clamp clamp,
                                 double mean_bound) {
  if (t < 1 || t - 1 > history.size())
    throw Error("nuisance: fit at round " + std::to_string(t) + " needs rounds 1.." +
                std::to_string(t - 1));
  std::vector<ArmSample> arms(history.num_arms());
  for (auto& s : arms) s.x = PointSet(history.dim());
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const Round& r = history[i];
    arms.at(r.a).x.push_back(r.x);
    arms.at(r.a).y.push_back(r.y);
  }
  return from_samples(std::move(arms), clamp, mean_bound);
}

NuisanceModel::Sums NuisanceModel::direct_sums(const Arm& arm, Point x) const {
  if (dim_ == 1) {
    const Acc s = sums_1d(arm.cols[0].data(), arm.y.data(), arm.y2.data(), arm.n, x[0],
                          arm.inv_h[0]);
    return {s.s0, s.s1, s.s2};
  }
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  std::vector<double> e(arm.n, 0.0);
  for (std::size_t j = 0; j < dim_; ++j) {
    const double* c = arm.cols[j].data();
    const double xj = x[j], ih = arm.inv_h[j];
    double* ep = e.data();
#pragma omp simd
    for (std::size_t i = 0; i < arm.n; ++i) {
      const double u = (xj - c[i]) * ih;
      ep[i] += u * u;
    }
  }
  const double* y = arm.y.data();
  const double* y2 = arm.y2.data();
  const double* ep = e.data();
#pragma omp simd reduction(+ : s0, s1, s2)
  for (std::size_t i = 0; i < arm.n; ++i) {
    double a = ep[i];
    a = a < 1400.0 ? a : 1400.0;
    const double w = kernel_exp(-0.5 * a);
    s0 += w;
    s1 += w * y[i];
    s2 += w * y2[i];
  }
  return {s0, s1, s2};
}

NuisancePrediction NuisanceModel::finish(const Arm& arm, Sums s) const {
  NuisancePrediction p;
  if (s.s0 < kMassFloor) {
    p.mean = arm.fallback_mean;
    p.second_moment = arm.fallback_second;
  } else {
    p.mean = s.s1 / s.s0;
    p.second_moment = s.s2 / s.s0;
  }
  p.mean = std::clamp(p.mean, -mean_bound_, mean_bound_);
  p.variance = std::clamp(p.second_moment - p.mean * p.mean, clamp_.lo, clamp_.hi);
  return p;
}

NuisancePrediction NuisanceModel::predict(std::size_t a, Point x) const {
  const Arm& arm = arms_.at(a);
  if (x.size() != dim_) throw Error("nuisance: query dimension mismatch");
  return finish(arm, direct_sums(arm, x));
}

void NuisanceModel::predict_many(std::size_t a, const PointSet& xs,
                                 std::span<NuisancePrediction> out) const {
  const Arm& arm = arms_.at(a);
  if (out.size() != xs.size()) throw Error("nuisance: output size mismatch");
  if (xs.size() > 0 && xs.dim() != dim_) throw Error("nuisance: query dimension mismatch");
  if (dim_ != 1 || xs.size() < kMinQueries) {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = finish(arm, direct_sums(arm, xs[i]));
    return;
  }

  const double width = kCellWidth * arm.h[0];
  std::unordered_map<std::int64_t, std::size_t> counts;
  std::vector<std::int64_t> cell_of(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cell_of[i] = static_cast<std::int64_t>(std::floor(xs[i][0] / width));
    ++counts[cell_of[i]];
  }

  std::unordered_map<std::int64_t, const Cell*> active;
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto& cells = cache_->cells[a];
    for (const auto& [k, c] : counts) {
      if (c < kMinQueries) continue;
      auto it = cells.find(k);
      if (it == cells.end()) {
        Cell cell;
        const double centre = (static_cast<double>(k) + 0.5) * width;
        double lo = INFINITY, hi = 0.0;
        for (int j = 0; j < kNodes; ++j) {
          cell.nodes[j] = centre + 0.5 * width *
                                       std::cos((2 * j + 1) * std::numbers::pi / (2 * kNodes));
          const Acc s = sums_1d(arm.cols[0].data(), arm.y.data(), arm.y2.data(), arm.n,
                                cell.nodes[j], arm.inv_h[0]);
          cell.s0[j] = s.s0;
          cell.s1[j] = s.s1;
          cell.s2[j] = s.s2;
          lo = std::min(lo, s.s0);
          hi = std::max(hi, s.s0);
        }
        cell.usable = lo >= kMinNodeMass && lo >= kMinMassRatio * hi;
        it = cells.emplace(k, cell).first;
      }
      if (it->second.usable) active.emplace(k, &it->second);
    }
  }

  const auto& weights = node_weights();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i][0];
    auto it = active.find(cell_of[i]);
    if (it == active.end()) {
      out[i] = finish(arm, direct_sums(arm, xs[i]));
      continue;
    }
    const Cell& cell = *it->second;
    double num0 = 0.0, num1 = 0.0, num2 = 0.0, den = 0.0;
    int exact = -1;
    for (int j = 0; j < kNodes; ++j) {
      const double d = x - cell.nodes[j];
      if (d == 0.0) {
        exact = j;
        break;
      }
      const double w = weights[j] / d;
      num0 += w * cell.s0[j];
      num1 += w * cell.s1[j];
      num2 += w * cell.s2[j];
      den += w;
    }
    if (exact >= 0)
      out[i] = finish(arm, {cell.s0[exact], cell.s1[exact], cell.s2[exact]});
    else
      out[i] = finish(arm, {num0 / den, num1 / den, num2 / den});
  }
}

}  // namespace aaexp
