#pragma once

#include <array>
#include <cstdint>

namespace flowlab {

// xoshiro256++ seeded through splitmix64. Chosen over std::mt19937_64
// because the standard distributions are not bit-reproducible across
// standard libraries; everything here is plain integer/float arithmetic,
// so equal seeds give equal streams on every platform.
//
// Single-owner by contract: never share one Rng across threads. Parallel
// work derives independent streams with child(stream_index).
class Rng {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256++ / splitmix64";

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit mantissa.
  double uniform();
  // Standard normal via Marsaglia's polar method (pair-cached).
  double normal();

  // Deterministic derived stream; (seed, stream) -> child seed.
  Rng child(std::uint64_t stream) const;

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> state_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace flowlab
