#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace aaexp {

// Seeded pseudo-random stream. Streams are cheap to derive from a master
// seed by name, so every trial owns an independent family of sub-streams:
//
//   RandomStream covariates = RandomStream::derive(seed, "covariates");
//   RandomStream plugin     = RandomStream::derive(seed, "plugin", round);
//
// Derivation is a pure function of (seed, name, index); the same triple always
// yields the same sequence.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  static RandomStream derive(std::uint64_t seed, std::string_view name,
                             std::uint64_t index = 0);

  // Uniform on [0, 1).
  double uniform();
  double normal();
  // Uniform integer on [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace aaexp
