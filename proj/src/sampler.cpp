#include "aaexp/sampler.hpp"

#include <sstream>

#include "aaexp/error.hpp"

namespace aaexp {

bool accept_decision(double ratio, double bound, double u) { return u < ratio / bound; }

bool accept_decision(Point x, const RatioFn& ratio, double bound, double u) {
  return accept_decision(ratio(x), bound, u);
}

RejectionSampler::RejectionSampler(const CovariateLaw& q, RatioFn ratio, double bound,
                                   std::uint64_t cap)
    : q_(q), ratio_(std::move(ratio)), bound_(bound), cap_(cap) {
  if (!(bound > 0.0)) throw Error("rejection sampler: bound must be positive");
  if (cap == 0) throw Error("rejection sampler: proposal cap must be positive");
}

SamplerDraw RejectionSampler::draw(RandomStream& rng) {
  SamplerDraw out;
  out.x.resize(q_.dimension());
  for (;;) {
    if (out.proposals == cap_) {
      std::ostringstream msg;
      msg << "rejection sampler: " << cap_ << " proposals without acceptance; the bound "
          << bound_ << " is too loose";
      throw Error(msg.str());
    }
    q_.sample_into(rng, out.x);
    const double e = ratio_(out.x);
    const double u = rng.uniform();
    ++out.proposals;
    ++proposals_;
    if (e > bound_) {
      std::ostringstream msg;
      msg << "rejection sampler: density ratio " << e << " exceeds the bound " << bound_;
      throw Error(msg.str());
    }
    if (accept_decision(e, bound_, u)) {
      ++acceptances_;
      out.ratio = e;
      return out;
    }
  }
}

}  // namespace aaexp
