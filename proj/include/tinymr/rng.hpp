// Deterministic 64-bit PRNG used everywhere randomness is needed.
//
// The generator is SplitMix64 with streams derived by hashing a root seed
// together with caller-supplied labels (sample id, repetition index, ...).
// Every draw is pure 64-bit integer arithmetic, so results are identical
// across platforms and runs. Job-level recovery depends on this: rerunning
// a job with the same seed must reproduce every subsample bit-for-bit.

#ifndef TINYMR_RNG_HPP
#define TINYMR_RNG_HPP

#include <cstdint>
#include <vector>

namespace tinymr {

// SplitMix64 finalizer. Full-avalanche mix of a 64-bit value.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// Hash (seed, a, b) into an independent stream state.
constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                      std::uint64_t b = 0) {
  std::uint64_t s = mix64(seed + kGolden);
  s = mix64(s ^ (a + kGolden));
  s = mix64(s ^ (b + kGolden));
  return s;
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() { return mix64(state_ += kGolden); }

  // Uniform in [0, bound). Lemire multiply-shift; bias is < 2^-64 per draw.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * bound) >> 64);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Exponential with the given mean, via inverse CDF.
  double next_exponential(double mean);

 private:
  std::uint64_t state_;
};

// Draws k distinct indices from [0, n) in random draw order (partial
// Fisher-Yates). k == n short-circuits to the identity order 0..n-1, which
// makes a full-fraction subsample an exhaustive in-order scan.
std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                      std::uint32_t k,
                                                      SplitMix64& rng);

}  // namespace tinymr

#endif  // TINYMR_RNG_HPP
