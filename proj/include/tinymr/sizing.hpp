// Task sizing: offline kneepoint detection on the task-size -> miss-rate
// relationship, and online packing of samples into kneepoint-sized tasks.
//
// The kneepoint is the largest task size before the first increase in the
// cache-miss growth rate. Detection grows the working set one candidate
// size at a time; the first observed growth rate becomes the baseline and
// the sweep stops at the first size whose growth rate exceeds it.

#ifndef TINYMR_SIZING_HPP
#define TINYMR_SIZING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tinymr/cache_model.hpp"
#include "tinymr/workload.hpp"

namespace tinymr {

struct KneepointReport {
  std::uint64_t kneepoint_bytes = 0;
  MissRateCurve curve;  // every measured point, in sweep order
  std::uint32_t samples_per_task = 1;
  std::uint64_t avg_sample_size_bytes = 0;
};

struct RepetitionRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;  // exclusive

  std::uint32_t count() const { return last - first; }
};

struct Task {
  std::uint64_t id = 0;
  std::vector<std::uint64_t> sample_ids;
  std::uint64_t size_bytes = 0;
  SubsampleSpec spec;
  RepetitionRange repetitions;
  bool outlier = false;  // single sample larger than the kneepoint
};

struct NodePartition {
  std::uint64_t node_id = 0;
  std::vector<std::uint64_t> sample_ids;

  std::uint64_t samples_count() const { return sample_ids.size(); }
};

// Measures one candidate size: returns (miss_rate, actual task bytes).
using MeasureFn =
    std::function<std::pair<double, std::uint64_t>(std::uint64_t)>;

// Sweeps candidate sizes lazily, stopping at the first growth-rate
// exceedance; returns the prior size, or the largest tested size when no
// exceedance occurs. Degenerate steps (zero size delta) are skipped and
// negative growth rates clamp to zero before comparison.
KneepointReport find_kneepoint(const MeasureFn& measure,
                               const std::vector<std::uint64_t>& candidate_sizes,
                               std::uint64_t avg_sample_size_bytes);

// Convenience: kneepoint search backed by the LRU cache model.
KneepointReport find_kneepoint(const Dataset& dataset, const SubsampleSpec& spec,
                               const std::vector<std::uint64_t>& candidate_sizes,
                               const CacheConfig& config);

// Geometric (x1.5) candidate schedule from one average sample size up to
// the per-node partition size.
std::vector<std::uint64_t> candidate_size_schedule(std::uint64_t avg_sample_bytes,
                                                   std::uint64_t partition_bytes,
                                                   double growth = 1.5);

// Groups samples into tasks of samples_per_task in manifest order. Samples
// individually larger than the kneepoint become singleton outlier tasks.
// kneepoint_bytes = UINT64_MAX packs everything into one task per call
// (large tasks); kneepoint_bytes = 1 yields one sample per task (tiniest).
std::vector<Task> pack_tasks(const Dataset& dataset,
                             const KneepointReport& report);

std::vector<NodePartition> partition_to_nodes(const Dataset& dataset,
                                              std::uint32_t n_nodes);

// Report serialization: flat key=value text plus the curve CSV alongside.
std::string report_to_text(const KneepointReport& report);
KneepointReport report_from_text(const std::string& text);

}  // namespace tinymr

#endif  // TINYMR_SIZING_HPP
