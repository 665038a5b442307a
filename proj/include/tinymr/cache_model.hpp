// LRU cache simulation over task access traces: stack distances, miss-rate
// curves across task sizes, and the AMAT cost model. Stands in for hardware
// performance counters.
//
// Stack distance of an access is the number of distinct blocks referenced
// since the previous access to the same block; an access hits an LRU cache
// of capacity C iff its stack distance is < C. Computing distances once
// therefore yields the miss rate at every capacity.

#ifndef TINYMR_CACHE_MODEL_HPP
#define TINYMR_CACHE_MODEL_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tinymr/workload.hpp"

namespace tinymr {

constexpr std::uint64_t kInfiniteDistance =
    std::numeric_limits<std::uint64_t>::max();

struct AccessTrace {
  std::vector<std::uint64_t> accesses;  // block identifiers
  std::uint32_t block_bytes = 64;
};

struct CacheLevel {
  std::uint64_t capacity_blocks = 0;
  double hit_cycles = 0.0;
};

struct CacheConfig {
  std::uint64_t capacity_blocks = 1;  // primary (smallest) level
  std::vector<CacheLevel> levels;     // optional multi-level hierarchy
  std::uint32_t block_bytes = 64;     // one cache line

  void validate() const;
};

struct MissRateCurve {
  struct Point {
    std::uint64_t task_size_bytes = 0;
    double misses_per_instruction = 0.0;
    bool single_sample = false;  // size was below the smallest sample
  };
  std::vector<Point> points;

  void validate() const;
};

struct AmatModel {
  double fastest_hit_cycles = 1.0;
  std::vector<double> level_miss_penalties;
};

// Per-access stack distances, kInfiniteDistance for first-ever accesses.
// O(n log n) via a Fenwick tree over most-recent-access marks.
std::vector<std::uint64_t> stack_distances(const AccessTrace& trace);

// Miss rate of an LRU cache of the given capacity over the trace.
double simulate_lru(const AccessTrace& trace, const CacheConfig& config);
double simulate_lru_at(const AccessTrace& trace, std::uint64_t capacity_blocks);

// Local miss rate at each capacity from one stack-distance pass: accesses
// missing level i that also miss level i+1, as a fraction of level-i misses.
std::vector<double> miss_rates_for_levels(
    const AccessTrace& trace, const std::vector<std::uint64_t>& capacities);

// AMAT in cycles: fastest hit + sum over levels of compounded miss rate
// times that level's penalty. One local miss rate per level.
double amat(const AmatModel& model, const std::vector<double>& miss_rates_per_level);

// Block-access sequence a subsampling task issues over these samples:
// one pass per repetition; full-fraction passes scan blocks sequentially,
// partial-fraction passes interleave a sequential cursor touch with the
// random block lookup of each drawn record.
AccessTrace task_trace(const std::vector<const Sample*>& task_samples,
                       const SubsampleSpec& spec, std::uint32_t block_bytes);

std::uint64_t unique_blocks(const AccessTrace& trace);

// Median misses-per-instruction over `reps` randomly composed tasks of the
// given aggregate size. Traces use a single measurement repetition so the
// offline phase stays a small fraction of the job. Sets single_sample when
// the size is below the smallest drawn sample.
double measure_task_size(const Dataset& dataset, const SubsampleSpec& spec,
                         std::uint64_t size, const CacheConfig& config,
                         std::uint32_t reps, bool* single_sample);

// Task-size -> misses-per-instruction curve over the given sizes.
MissRateCurve profile_curve(const Dataset& dataset, const SubsampleSpec& spec,
                            const std::vector<std::uint64_t>& sizes,
                            const CacheConfig& config, std::uint32_t reps = 3);

// Curve CSV: header `task_size_bytes,misses_per_instruction`.
std::string curve_to_csv(const MissRateCurve& curve);
MissRateCurve curve_from_csv(const std::string& text);

}  // namespace tinymr

#endif  // TINYMR_CACHE_MODEL_HPP
