#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aaexp/point.hpp"

namespace aaexp {

// One experimental round. `propensities` holds w(a|x) for every arm at the
// observed covariate; `ratio_used` is e(x) = p(x)/q(x) at that covariate.
struct Round {
  Covariate x;
  std::size_t a = 0;
  double y = 0.0;
  std::vector<double> propensities;
  double ratio_used = 1.0;
  std::uint64_t rejected_proposals = 0;

  double w_used() const { return propensities.at(a); }
  bool operator==(const Round&) const = default;
};

// Ordered log of rounds; round t (1-based) is element t - 1.
class History {
 public:
  History() = default;
  History(std::size_t dim, std::size_t num_arms) : dim_(dim), num_arms_(num_arms) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_arms() const noexcept { return num_arms_; }
  std::size_t size() const noexcept { return rounds_.size(); }
  bool empty() const noexcept { return rounds_.empty(); }
  const Round& operator[](std::size_t i) const { return rounds_[i]; }
  const std::vector<Round>& rounds() const noexcept { return rounds_; }

  void push_back(Round r) { rounds_.push_back(std::move(r)); }
  void reserve(std::size_t n) { rounds_.reserve(n); }

  // Number of rounds among the first `prefix` assigned to arm a.
  std::size_t arm_count(std::size_t a, std::size_t prefix) const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < prefix && i < rounds_.size(); ++i) c += rounds_[i].a == a;
    return c;
  }

  bool operator==(const History&) const = default;

 private:
  std::size_t dim_ = 1;
  std::size_t num_arms_ = 2;
  std::vector<Round> rounds_;
};

}  // namespace aaexp
