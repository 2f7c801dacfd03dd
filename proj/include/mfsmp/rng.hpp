// Copyright 2026 The mfsmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, domain, stream, counter), so particle loops can run in any order
// or on any number of threads and still produce identical output.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mfsmp::rng {

/// Separates independent uses of the same seed.
enum class Domain : std::uint64_t {
  BrownianIncrement = 1,
  InitialState = 2,
  Bootstrap = 3,
  SeedDerivation = 4,
  TestFixture = 5,
  Instance = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t bits(std::uint64_t seed, Domain domain, std::uint64_t stream,
                                    std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(domain));
  h = splitmix64(h ^ stream);
  return splitmix64(h ^ (counter * 0xd1b54a32d192ed03ULL));
}

/// Uniform on the open interval (0, 1).
inline double uniform(std::uint64_t seed, Domain domain, std::uint64_t stream,
                      std::uint64_t counter) {
  const std::uint64_t b = bits(seed, domain, stream, counter) >> 11;
  return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
}

/// Standard normal by Box-Muller on two uniforms from adjacent counters.
inline double normal(std::uint64_t seed, Domain domain, std::uint64_t stream,
                     std::uint64_t counter) {
  const double u1 = uniform(seed, domain, stream, 2 * counter);
  const double u2 = uniform(seed, domain, stream, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Child seed for a named sub-experiment (e.g. one replication of a study).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b = 0) {
  return bits(seed, Domain::SeedDerivation, a, b);
}

}  // namespace mfsmp::rng
