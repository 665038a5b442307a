// Deterministic discrete-event simulation of the platform: virtual clock,
// parameterized node speeds and startup costs, cache-model task durations,
// scheduler-driven prefetch, and the reduce-stage model. Runs the real
// scheduler, sizing, and data-layer code paths against simulated time.

#ifndef TINYMR_SIM_HPP
#define TINYMR_SIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tinymr/cache_model.hpp"
#include "tinymr/datalayer.hpp"
#include "tinymr/event_log.hpp"
#include "tinymr/runtime.hpp"
#include "tinymr/scheduler.hpp"

namespace tinymr {

struct SimConfig {
  std::uint32_t n_workers = 4;
  std::vector<double> speeds;          // empty: all 1.0
  double startup_ms = 200.0;
  double per_task_overhead_ms = 5.0;
  double runtime_tax = 0.0;            // fractional per-task slowdown
  CacheConfig cache;
  AmatModel amat;
  double compute_cycles_per_access = 0.0;  // work beyond the memory system
  double cycle_scale_ms = 1e-6;        // simulated cycles -> milliseconds
  std::uint32_t n_data_nodes = 2;
  std::uint32_t standby_data_nodes = 2;
  double fetch_base_ms = 0.5;          // shifted exponential latency
  double fetch_exp_mean_ms = 0.5;
  double fetch_ms_per_mb = 0.0;        // size-dependent component
  std::uint32_t prefetch_margin = 1;
  bool adapt_replication_enabled = false;
  std::uint32_t adapt_window_tasks = 10;
  ScheduleConfig sched;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimReport {
  double makespan_ms = 0.0;
  double startup_ms = 0.0;
  double throughput_bytes_per_s = 0.0;
  std::vector<double> utilization;     // per worker, busy / active span
  std::uint64_t stall_count = 0;
  std::uint64_t steal_count = 0;
  std::uint64_t tasks_executed = 0;
  std::uint32_t final_replication_factor = 0;
  EventLog log;
};

// Simulates the job end to end. Task duration is
//   overhead + |trace| * (compute + amat(levels)) * cycle_scale * (1 + tax),
// all over the node speed.
SimReport simulate_job(const JobSpec& job, const SimConfig& sim);

// Same, with an explicit task list (bench configurations).
SimReport simulate_job_tasks(const JobSpec& job, const SimConfig& sim,
                             const std::vector<Task>& tasks);

struct SweepRow {
  std::uint64_t task_size_bytes = 0;
  double throughput_bytes_per_s = 0.0;
  double makespan_ms = 0.0;
};

// One simulate_job per size under a shared seed, packing at that size.
std::vector<SweepRow> sweep_task_size(const JobSpec& job, const SimConfig& sim,
                                      const std::vector<std::uint64_t>& sizes);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Named platform presets encoding relative startup and per-task overheads.
struct PlatformProfile {
  std::string name;
  double startup_ratio = 1.0;       // x baseline startup
  double per_task_overhead_ratio = 1.0;
  double runtime_tax = 0.0;         // monitoring tax fraction
};

std::vector<PlatformProfile> platform_overhead_profiles();
SimConfig apply_profile(SimConfig base, const PlatformProfile& profile);

// Reduce-stage model calibrated from average map/shuffle/reduce times:
//   makespan(R) = startup + ceil(n_map/slots)*avg_map
//               + avg_shuffle*R + ceil(reduce_units/R)*avg_reduce
// with linear R-way fan-in cost.
struct ReduceModel {
  double avg_map_ms = 0.0;
  double avg_shuffle_ms = 0.0;
  double avg_reduce_ms = 0.0;
  double startup_ms = 0.0;
  std::uint32_t reduce_units = 1;  // total reduce work, in avg_reduce units
};

struct ReducePoint {
  std::uint32_t reducers = 0;
  double makespan_ms = 0.0;
};

std::vector<ReducePoint> reduce_stage_model(const ReduceModel& model,
                                            std::uint32_t n_map_tasks,
                                            std::uint32_t slots,
                                            std::uint32_t max_reducers = 64);

// BLT / BTT / BTS task lists sharing the pack_tasks code path.
enum class BenchConfig { kKneepoint, kLargeTasks, kTiniestTasks };
std::vector<Task> make_bench_tasks(const Dataset& dataset,
                                   const KneepointReport& report,
                                   BenchConfig config, std::uint32_t n_workers,
                                   const SubsampleSpec& spec);

const char* bench_config_name(BenchConfig config);

}  // namespace tinymr

#endif  // TINYMR_SIM_HPP
