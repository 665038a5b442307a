#include "tinymr/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tinymr {

double SplitMix64::next_exponential(double mean) {
  // next_unit() < 1, so the log argument stays positive.
  return -mean * std::log(1.0 - next_unit());
}

std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                      std::uint32_t k,
                                                      SplitMix64& rng) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  if (k == n) return pool;
  std::vector<std::uint32_t> drawn(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    std::uint64_t j = i + rng.next_below(n - i);
    std::swap(pool[i], pool[j]);
    drawn[i] = pool[i];
  }
  return drawn;
}

}  // namespace tinymr
