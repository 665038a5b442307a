// Two-step dynamic task scheduler. Step one assigns a single probe task to
// every node by seeded random permutation; step two batches tasks onto node
// queues sized by the execution-time feedback loop. Dispatch is pull-based:
// a node with an empty queue takes directly from the pending pool, which is
// what lets fast nodes absorb load from slow ones.

#ifndef TINYMR_SCHEDULER_HPP
#define TINYMR_SCHEDULER_HPP

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "tinymr/event_log.hpp"
#include "tinymr/sizing.hpp"

namespace tinymr {

struct NodeState {
  std::uint64_t node_id = 0;
  std::deque<std::uint64_t> queue;  // task ids awaiting dispatch to this node
  std::optional<std::uint64_t> inflight;
  double ewma_exec_ms = 0.0;
  double ewma_fetch_ms = 0.0;
  bool exec_seen = false;
  bool fetch_seen = false;
  std::uint64_t completed_count = 0;
};

struct ScheduleConfig {
  double ewma_alpha = 0.5;      // first observation initializes
  double target_queue_ms = 0.0; // 0: keep ~runway_factor tasks of runway
  double runway_factor = 4.0;
  std::uint32_t batch_min = 2;
  std::uint32_t batch_max = 16;
  std::uint64_t probe_seed = 0;
  double slo_ms = 0.0;          // 0: no deadline

  void validate() const;
};

// ewma <- alpha * observed + (1 - alpha) * old; first observation initializes.
double ewma_update(double old_value, double observed, double alpha, bool seen);

// Thread-safe shared scheduling service. All mutations of the pending pool
// and node queues serialize behind one lock (linearizable).
class Scheduler {
 public:
  Scheduler(const std::vector<Task>& tasks,
            const std::vector<std::uint64_t>& node_ids, ScheduleConfig config);

  // Step one: exactly one task per node, seeded random permutation. Tasks
  // land at the head of each node queue; the rest stay pooled. Returns
  // (node_id, task_id) pairs. Fewer tasks than nodes leaves the tail idle.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> initial_assign();

  // Step two: moves up to B pool tasks onto the node's queue, where
  // B = clamp(ceil(target_queue_ms / ewma_exec_ms), batch_min, batch_max).
  // Returns the task ids batched (empty pool yields an empty batch).
  std::vector<std::uint64_t> feedback_batch(std::uint64_t node_id);

  // Pops the node's queue head; an empty queue pulls one task straight from
  // the pending pool. Returns nothing only when queue and pool are empty.
  std::optional<std::uint64_t> next_task(std::uint64_t node_id);

  void record_completion(std::uint64_t node_id, double exec_ms,
                         double fetch_ms);

  NodeState node_snapshot(std::uint64_t node_id) const;
  std::size_t pending_count() const;
  bool all_done() const;  // pool drained, queues empty, nothing inflight
  std::size_t total_tasks() const { return total_tasks_; }
  const Task& task(std::uint64_t task_id) const;
  std::uint64_t steal_count() const { return steals_; }

 private:
  NodeState& node_ref(std::uint64_t node_id);

  mutable std::mutex mu_;
  std::vector<Task> tasks_;
  std::vector<NodeState> nodes_;
  std::deque<std::uint64_t> pool_;  // FIFO by task id
  ScheduleConfig config_;
  std::size_t total_tasks_ = 0;
  std::uint64_t steals_ = 0;
};

struct ThroughputSample {
  std::uint64_t job_size_bytes = 0;
  double throughput_bytes_per_ms = 0.0;
};

struct ClusterConfigProfile {
  std::uint32_t core_count = 0;
  double startup_ms = 0.0;
  std::vector<ThroughputSample> samples;  // ascending job size
};

struct ThroughputProfile {
  std::vector<ClusterConfigProfile> configs;
};

// Throughput at a job size, piecewise linear between samples and clamped
// at the range ends.
double interpolated_throughput(const ClusterConfigProfile& config,
                               std::uint64_t job_size_bytes);

// Predicted running time at a job size: startup + size / throughput.
double predicted_running_ms(const ClusterConfigProfile& config,
                            std::uint64_t job_size_bytes);

// Highest-throughput configuration whose predicted running time meets the
// SLO; falls back to the minimum predicted running time when none does.
std::uint32_t select_cluster_size_for_slo(const ThroughputProfile& profile,
                                          std::uint64_t job_size_bytes,
                                          double slo_ms);

}  // namespace tinymr

#endif  // TINYMR_SCHEDULER_HPP
