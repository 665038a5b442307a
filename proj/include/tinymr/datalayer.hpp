// In-memory replicated sample store: replica placement, failover fetch,
// scheduler-driven prefetch depth, and the feedback controller that grows
// or shrinks the replication factor to keep fetch latency inside the
// per-task SLO budget.

#ifndef TINYMR_DATALAYER_HPP
#define TINYMR_DATALAYER_HPP

#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tinymr/sizing.hpp"
#include "tinymr/workload.hpp"

namespace tinymr {

struct ReplicaPlan {
  std::uint32_t replication_factor = 1;
  std::vector<std::uint64_t> data_node_ids;     // active nodes
  std::vector<std::uint64_t> standby_node_ids;  // growth candidates
  std::map<std::uint64_t, std::vector<std::uint64_t>> assignment;

  void validate() const;
};

struct PrefetchController {
  std::uint32_t depth = 1;  // K
  double avg_fetch_ms = 0.0;
  double avg_exec_ms = 0.0;
  std::uint32_t margin = 1;

  void refresh() ;
};

// Full replication across the initial data nodes; per-sample node order is
// a seeded rotation so load spreads across replicas.
ReplicaPlan build_initial_plan(const std::vector<ManifestEntry>& manifest,
                               const std::vector<std::uint64_t>& data_node_ids,
                               std::uint64_t seed = 0);

// Transport seam between the replica logic and whatever serves the bytes
// (local stores in the simulator, TCP data nodes in the runtime).
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  // nullopt on timeout or node failure; elapsed_ms always set when provided.
  virtual std::optional<std::vector<std::uint8_t>> get(
      std::uint64_t node_id, std::uint64_t sample_id, double deadline_ms,
      double* elapsed_ms) = 0;
};

struct FetchOutcome {
  std::vector<std::uint8_t> payload;
  double fetch_ms = 0.0;
  std::uint64_t served_by = 0;
  std::uint32_t failovers = 0;
};

// Walks the sample's replica order with the per-attempt deadline, verifying
// the payload length against the manifest. Throws "sample unavailable" when
// every replica fails and "corrupt payload" on a size mismatch.
FetchOutcome fetch(std::uint64_t sample_id, const ReplicaPlan& plan,
                   SampleSource& source, std::uint64_t expected_bytes,
                   double deadline_ms);

// K = max(1, ceil(avg_fetch / max(avg_exec, 0.1ms)) + margin).
std::uint32_t compute_prefetch_depth(double avg_fetch_ms, double avg_exec_ms,
                                     std::uint32_t margin);

// Worker-local sample cache, LRU by bytes.
class WorkerCache {
 public:
  explicit WorkerCache(std::uint64_t capacity_bytes = 256ull << 20)
      : capacity_(capacity_bytes) {}

  bool contains(std::uint64_t sample_id) const;
  const std::vector<std::uint8_t>* find(std::uint64_t sample_id);
  void insert(std::uint64_t sample_id, std::vector<std::uint8_t> payload);
  std::uint64_t bytes() const { return bytes_; }

 private:
  std::uint64_t capacity_;
  std::uint64_t bytes_ = 0;
  std::list<std::uint64_t> order_;  // front = most recent
  std::unordered_map<std::uint64_t,
                     std::pair<std::list<std::uint64_t>::iterator,
                               std::vector<std::uint8_t>>>
      entries_;
};

struct PrefetchStats {
  std::vector<std::uint64_t> resident;  // now-resident sample ids
  std::uint32_t fetches_issued = 0;
  double fetch_ms_total = 0.0;
};

// Fetches every sample of the next K queued tasks that is not already in
// the worker cache. Idempotent: already-resident samples cost nothing.
PrefetchStats prefetch_for_queue(const std::vector<const Task*>& queue,
                                 std::uint32_t depth, const ReplicaPlan& plan,
                                 SampleSource& source,
                                 const std::map<std::uint64_t, std::uint64_t>& sample_bytes,
                                 WorkerCache& cache, double deadline_ms);

enum class ReplicationAction { kNone, kGrow, kShrink };

struct ReplicationControllerConfig {
  double beta_hi = 0.5;   // grow when p95 fetch > beta_hi * budget
  double beta_lo = 0.1;   // shrink when p95 fetch < beta_lo * budget
  std::uint32_t r_min = 2;
  std::uint32_t cooldown_windows = 0;  // extra unchanged windows required
};

struct ReplicationControllerState {
  std::uint32_t windows_since_change = 0;
  double interference_ratio = 1.0;  // logged diagnostic, not a control input
};

// One controller step over the latest stats window. Changes the factor by
// at most one node and never below r_min (when more than one node exists).
ReplicationAction adapt_replication(ReplicaPlan& plan,
                                    const std::vector<double>& fetch_window_ms,
                                    const std::vector<double>& exec_window_ms,
                                    double slo_budget_ms,
                                    const ReplicationControllerConfig& config,
                                    ReplicationControllerState& state);

// Audit dump: `sample_id,node_id,rank` per replica assignment.
std::string plan_to_csv(const ReplicaPlan& plan);

}  // namespace tinymr

#endif  // TINYMR_DATALAYER_HPP
