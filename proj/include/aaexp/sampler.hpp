#pragma once

#include <cstdint>

#include "aaexp/design.hpp"
#include "aaexp/random.hpp"
#include "aaexp/scenario.hpp"

namespace aaexp {

// Accept iff u < e / bound (strict).
bool accept_decision(double ratio, double bound, double u);
bool accept_decision(Point x, const RatioFn& ratio, double bound, double u);

struct SamplerDraw {
  Covariate x;
  double ratio = 1.0;           // e(x) at the accepted covariate
  std::uint64_t proposals = 0;  // proposals consumed, including the accepted one
};

// Draws from e(x) q(x) by proposing from q. Each proposal consumes one draw
// of q and then one uniform from the stream.
class RejectionSampler {
 public:
  RejectionSampler(const CovariateLaw& q, RatioFn ratio, double bound,
                   std::uint64_t cap = 1'000'000);

  // Throws Error when a proposal's ratio exceeds the bound or when `cap`
  // proposals are rejected in a row.
  SamplerDraw draw(RandomStream& rng);

  std::uint64_t proposals() const noexcept { return proposals_; }
  std::uint64_t acceptances() const noexcept { return acceptances_; }
  double bound() const noexcept { return bound_; }

 private:
  const CovariateLaw& q_;
  RatioFn ratio_;
  double bound_;
  std::uint64_t cap_;
  std::uint64_t proposals_ = 0;
  std::uint64_t acceptances_ = 0;
};

}  // namespace aaexp
