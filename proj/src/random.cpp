#include "aaexp/random.hpp"

namespace aaexp {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

RandomStream RandomStream::derive(std::uint64_t seed, std::string_view name,
                                  std::uint64_t index) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  RandomStream out(0);
  out.engine_.seed(seq);
  return out;
}

double RandomStream::uniform() { return unit_(engine_); }

double RandomStream::normal() { return gauss_(engine_); }

std::size_t RandomStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  return pick(engine_);
}

}  // namespace aaexp
