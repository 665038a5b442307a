#include "tinymr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "tinymr/rng.hpp"
#include "tinymr/stats.hpp"

namespace tinymr {

void SimConfig::validate() const {
  if (n_workers < 1) throw std::invalid_argument("need >= 1 worker");
  if (n_data_nodes < 1) throw std::invalid_argument("need >= 1 data node");
  for (double s : speeds)
    if (s <= 0.0) throw std::invalid_argument("speeds must be positive");
  if (startup_ms < 0.0 || per_task_overhead_ms < 0.0 || runtime_tax < 0.0)
    throw std::invalid_argument("durations must be >= 0");
  cache.validate();
  std::size_t n_levels = cache.levels.empty() ? 1 : cache.levels.size();
  if (amat.level_miss_penalties.size() != n_levels)
    throw std::invalid_argument("amat penalties must match cache levels");
}

namespace {

std::vector<std::uint64_t> level_capacities(const CacheConfig& cache) {
  if (cache.levels.empty()) return {cache.capacity_blocks};
  std::vector<std::uint64_t> caps;
  for (const CacheLevel& l : cache.levels) caps.push_back(l.capacity_blocks);
  return caps;
}

struct RunwayEntry {
  std::uint64_t task_id = 0;
  double fetch_done_ms = 0.0;
  double fetch_latency_ms = 0.0;
  double pulled_ms = 0.0;
};

struct SimWorker {
  std::uint64_t node_id = 0;
  double speed = 1.0;
  bool busy = false;
  double busy_ms = 0.0;
  double fetch_free_ms = 0.0;
  // Tasks shipped to the node: fetch issued, execution pending.
  std::deque<RunwayEntry> runway;
};

struct CompletionEvent {
  double time_ms = 0.0;
  std::uint64_t seq = 0;  // tie-break for determinism
  std::size_t worker = 0;
  std::uint64_t task_id = 0;
  double exec_ms = 0.0;
  double fetch_ms = 0.0;

  bool operator>(const CompletionEvent& other) const {
    if (time_ms != other.time_ms) return time_ms > other.time_ms;
    return seq > other.seq;
  }
};

}  // namespace

SimReport simulate_job_tasks(const JobSpec& job, const SimConfig& sim,
                             const std::vector<Task>& tasks) {
  sim.validate();
  const Dataset& dataset = *job.dataset;

  // Data layer: initial full replication plus standby pool for the
  // adaptive controller.
  std::vector<std::uint64_t> data_ids;
  for (std::uint32_t i = 0; i < sim.n_data_nodes; ++i) data_ids.push_back(1000 + i);
  ReplicaPlan plan = build_initial_plan(dataset.manifest, data_ids, sim.seed);
  for (std::uint32_t i = 0; i < sim.standby_data_nodes; ++i)
    plan.standby_node_ids.push_back(2000 + i);
  const std::uint32_t initial_factor = plan.replication_factor;

  ScheduleConfig sched = sim.sched;
  sched.probe_seed = sim.seed;
  std::vector<std::uint64_t> node_ids;
  for (std::uint32_t i = 0; i < sim.n_workers; ++i) node_ids.push_back(i + 1);
  Scheduler scheduler(tasks, node_ids, sched);

  std::vector<SimWorker> workers(sim.n_workers);
  for (std::uint32_t i = 0; i < sim.n_workers; ++i) {
    workers[i].node_id = i + 1;
    workers[i].speed = sim.speeds.empty() ? 1.0 : sim.speeds[i];
  }

  SimReport out;
  std::uint64_t seq = 0;

  // Deterministic per-task base durations (speed applied at use).
  auto capacities = level_capacities(sim.cache);
  std::map<std::uint64_t, double> base_duration;
  auto duration_of = [&](const Task& t) {
    auto it = base_duration.find(t.id);
    if (it != base_duration.end()) return it->second;
    std::vector<const Sample*> samples;
    for (std::uint64_t sid : t.sample_ids)
      samples.push_back(&dataset.sample_by_id(sid));
    AccessTrace trace = task_trace(samples, t.spec, sim.cache.block_bytes);
    auto rates = miss_rates_for_levels(trace, capacities);
    double cycles = sim.compute_cycles_per_access + amat(sim.amat, rates);
    double exec =
        static_cast<double>(trace.accesses.size()) * cycles * sim.cycle_scale_ms;
    double dur = sim.per_task_overhead_ms + exec * (1.0 + sim.runtime_tax);
    base_duration[t.id] = dur;
    return dur;
  };

  auto fetch_latency = [&](std::uint64_t task_id) {
    const Task& t = scheduler.task(task_id);
    // First replica in each sample's rotation serves the fetch.
    double total = 0.0;
    for (std::uint64_t sid : t.sample_ids) {
      std::uint64_t node = plan.assignment.at(sid).front();
      SplitMix64 rng(derive_stream(sim.seed ^ 0xfe7c4, task_id * 131 + sid, node));
      double lat = sim.fetch_base_ms + rng.next_exponential(sim.fetch_exp_mean_ms);
      // Contention proxy: fewer replicas, slower responses.
      lat *= static_cast<double>(initial_factor) /
             static_cast<double>(plan.replication_factor);
      total += lat;
    }
    std::uint64_t bytes = 0;
    for (std::uint64_t sid : t.sample_ids)
      for (const ManifestEntry& e : dataset.manifest)
        if (e.id == sid) bytes += e.size_bytes;
    total += sim.fetch_ms_per_mb * static_cast<double>(bytes) / (1024.0 * 1024.0);
    return total;
  };

  // Pull tasks into a worker's runway up to the prefetch window and issue
  // their fetches on the serial channel. Before the probe task reports
  // back, the node holds exactly one task (the two-step contract); after
  // that the window is the executing task plus the next K.
  auto refill = [&](std::size_t wi, double now) {
    SimWorker& w = workers[wi];
    NodeState snap = scheduler.node_snapshot(w.node_id);
    std::uint32_t cap = w.busy ? 0 : 1;
    if (snap.exec_seen) {
      std::uint32_t k = compute_prefetch_depth(
          snap.fetch_seen ? snap.ewma_fetch_ms : 0.0,
          snap.ewma_exec_ms, sim.prefetch_margin);
      cap = k + (w.busy ? 0 : 1);
    }
    while (w.runway.size() < cap) {
      NodeState s = scheduler.node_snapshot(w.node_id);
      if (s.queue.empty() && scheduler.pending_count() > 0 && s.exec_seen) {
        for (std::uint64_t granted : scheduler.feedback_batch(w.node_id))
          out.log.record(now, "batch", w.node_id, granted);
        s = scheduler.node_snapshot(w.node_id);
      }
      bool from_pool = s.queue.empty();
      auto tid = scheduler.next_task(w.node_id);
      if (!tid) break;
      if (from_pool) out.log.record(now, "steal", w.node_id, *tid);
      double fetch_start = std::max(now, w.fetch_free_ms);
      double latency = fetch_latency(*tid);
      w.fetch_free_ms = fetch_start + latency;
      w.runway.push_back({*tid, fetch_start + latency, latency, now});
      out.log.record(now, "dispatch", w.node_id, *tid);
    }
  };

  std::priority_queue<CompletionEvent, std::vector<CompletionEvent>,
                      std::greater<CompletionEvent>>
      events;

  auto try_start = [&](std::size_t wi, double now) {
    SimWorker& w = workers[wi];
    if (w.busy || w.runway.empty()) return;
    RunwayEntry entry = w.runway.front();
    w.runway.pop_front();
    double earliest = std::max(now, sim.startup_ms);
    double start = std::max(earliest, entry.fetch_done_ms);
    if (entry.fetch_done_ms > earliest) {
      // Waiting on a task that sat in the window is a prefetch stall; a
      // task granted at this very instant could not have been prefetched
      // and its wait is dispatch latency, logged separately.
      if (entry.pulled_ms < now) {
        ++out.stall_count;
        out.log.record(earliest, "stall", w.node_id, entry.task_id);
      } else {
        out.log.record(earliest, "fetch_wait", w.node_id, entry.task_id);
      }
    }
    double dur = duration_of(scheduler.task(entry.task_id)) / w.speed;
    w.busy = true;
    w.busy_ms += dur;
    out.log.record(start, "start", w.node_id, entry.task_id);
    events.push({start + dur, seq++, wi, entry.task_id, dur,
                 entry.fetch_latency_ms});
    refill(wi, now);  // window advanced; issue the next fetch
  };

  // Probe round.
  for (auto [node, task] : scheduler.initial_assign())
    out.log.record(0.0, "assign", node, task);
  for (std::size_t wi = 0; wi < workers.size(); ++wi) {
    refill(wi, 0.0);
    try_start(wi, 0.0);
  }

  std::vector<double> adapt_fetch_window, adapt_exec_window;
  ReplicationControllerConfig adapt_config;
  ReplicationControllerState adapt_state;

  double clock = 0.0;
  std::uint64_t completed = 0;
  while (!events.empty()) {
    CompletionEvent ev = events.top();
    events.pop();
    if (ev.time_ms < clock)
      throw std::logic_error("virtual clock went backwards");
    clock = ev.time_ms;

    SimWorker& w = workers[ev.worker];
    w.busy = false;
    scheduler.record_completion(w.node_id, ev.exec_ms, ev.fetch_ms);
    out.log.record(clock, "complete", w.node_id, ev.task_id);
    ++completed;

    if (sim.adapt_replication_enabled) {
      adapt_exec_window.push_back(ev.exec_ms);
      adapt_fetch_window.push_back(ev.fetch_ms);
      if (completed % sim.adapt_window_tasks == 0 && sched.slo_ms > 0.0) {
        double budget =
            sched.slo_ms /
            std::max<double>(1.0, static_cast<double>(tasks.size()) /
                                      static_cast<double>(sim.n_workers));
        adapt_replication(plan, adapt_fetch_window, adapt_exec_window, budget,
                          adapt_config, adapt_state);
        adapt_fetch_window.clear();
        adapt_exec_window.clear();
      }
    }

    refill(ev.worker, clock);
    try_start(ev.worker, clock);

    // Work conservation: a node must never sit idle with pending work.
    if (!w.busy && w.runway.empty() && scheduler.pending_count() > 0)
      throw std::logic_error("idle worker with pending tasks");
  }

  if (completed != tasks.size())
    throw std::logic_error("simulation lost tasks");

  out.makespan_ms = std::max(clock, sim.startup_ms);
  out.startup_ms = sim.startup_ms;
  out.tasks_executed = completed;
  out.steal_count = scheduler.steal_count();
  out.final_replication_factor = plan.replication_factor;
  double span = out.makespan_ms - sim.startup_ms;
  for (const SimWorker& w : workers)
    out.utilization.push_back(span > 0.0 ? std::min(1.0, w.busy_ms / span) : 0.0);
  out.throughput_bytes_per_s =
      out.makespan_ms > 0.0
          ? static_cast<double>(dataset.total_bytes) / (out.makespan_ms / 1000.0)
          : 0.0;
  return out;
}

SimReport simulate_job(const JobSpec& job, const SimConfig& sim) {
  JobSpec resolved = job;
  resolved.resolve_dataset();
  KneepointReport report;
  if (resolved.kneepoint) {
    report = *resolved.kneepoint;
  } else {
    auto sizes = candidate_size_schedule(
        resolved.dataset->avg_sample_size_bytes(),
        std::max<std::uint64_t>(
            resolved.dataset->total_bytes / sim.n_workers,
            2 * resolved.dataset->avg_sample_size_bytes()));
    report = find_kneepoint(*resolved.dataset, resolved.subsample, sizes, sim.cache);
  }
  std::vector<Task> tasks = pack_tasks(*resolved.dataset, report);
  for (Task& t : tasks) {
    t.spec = resolved.subsample;
    t.repetitions = {0, resolved.subsample.repetitions};
  }
  return simulate_job_tasks(resolved, sim, tasks);
}

std::vector<SweepRow> sweep_task_size(const JobSpec& job, const SimConfig& sim,
                                      const std::vector<std::uint64_t>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("empty size sweep");
  JobSpec resolved = job;
  resolved.resolve_dataset();
  std::vector<SweepRow> rows;
  for (std::uint64_t size : sizes) {
    KneepointReport report;
    report.kneepoint_bytes = size;
    report.avg_sample_size_bytes = resolved.dataset->avg_sample_size_bytes();
    report.samples_per_task = static_cast<std::uint32_t>(std::max<std::uint64_t>(
        1, size / std::max<std::uint64_t>(1, report.avg_sample_size_bytes)));
    std::vector<Task> tasks = pack_tasks(*resolved.dataset, report);
    for (Task& t : tasks) {
      t.spec = resolved.subsample;
      t.repetitions = {0, resolved.subsample.repetitions};
    }
    SimReport r = simulate_job_tasks(resolved, sim, tasks);
    rows.push_back({size, r.throughput_bytes_per_s, r.makespan_ms});
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "task_size_bytes,throughput_bytes_per_s,makespan_ms\n";
  out.precision(17);
  for (const SweepRow& r : rows)
    out << r.task_size_bytes << ',' << r.throughput_bytes_per_s << ','
        << r.makespan_ms << '\n';
  return out.str();
}

std::vector<PlatformProfile> platform_overhead_profiles() {
  return {
      {"bts", 1.0, 1.0, 0.0},
      {"job-level-hadoop", 3.0, 1.5, 0.0},
      {"vanilla-hadoop", 4.0, 2.0, 0.20},
  };
}

SimConfig apply_profile(SimConfig base, const PlatformProfile& profile) {
  base.startup_ms *= profile.startup_ratio;
  base.per_task_overhead_ms *= profile.per_task_overhead_ratio;
  base.runtime_tax = profile.runtime_tax;
  return base;
}

std::vector<ReducePoint> reduce_stage_model(const ReduceModel& model,
                                            std::uint32_t n_map_tasks,
                                            std::uint32_t slots,
                                            std::uint32_t max_reducers) {
  if (slots < 1) throw std::invalid_argument("slots must be >= 1");
  if (model.reduce_units < 1)
    throw std::invalid_argument("reduce_units must be >= 1");
  std::vector<ReducePoint> curve;
  double map_phase =
      std::ceil(static_cast<double>(n_map_tasks) / slots) * model.avg_map_ms;
  for (std::uint32_t r = 1; r <= max_reducers; ++r) {
    double shuffle = model.avg_shuffle_ms * static_cast<double>(r);
    double reduce =
        std::ceil(static_cast<double>(model.reduce_units) / r) *
        model.avg_reduce_ms;
    curve.push_back({r, model.startup_ms + map_phase + shuffle + reduce});
  }
  return curve;
}

std::vector<Task> make_bench_tasks(const Dataset& dataset,
                                   const KneepointReport& report,
                                   BenchConfig config, std::uint32_t n_workers,
                                   const SubsampleSpec& spec) {
  std::vector<Task> tasks;
  switch (config) {
    case BenchConfig::kKneepoint:
      tasks = pack_tasks(dataset, report);
      break;
    case BenchConfig::kTiniestTasks: {
      KneepointReport tiny;
      tiny.kneepoint_bytes = 1;
      tiny.samples_per_task = 1;
      tiny.avg_sample_size_bytes = report.avg_sample_size_bytes;
      tasks = pack_tasks(dataset, tiny);
      break;
    }
    case BenchConfig::kLargeTasks: {
      // One task per node partition, still through the packing path.
      auto partitions = partition_to_nodes(dataset, n_workers);
      for (const NodePartition& part : partitions) {
        if (part.sample_ids.empty()) continue;
        Dataset view;
        for (std::uint64_t sid : part.sample_ids) {
          view.samples.push_back(dataset.sample_by_id(sid));
          view.manifest.push_back({sid, dataset.sample_by_id(sid).size_bytes(), ""});
          view.total_bytes += view.samples.back().size_bytes();
        }
        KneepointReport big;
        big.kneepoint_bytes = view.total_bytes;
        big.samples_per_task =
            static_cast<std::uint32_t>(view.samples.size());
        big.avg_sample_size_bytes = view.avg_sample_size_bytes();
        for (Task t : pack_tasks(view, big)) tasks.push_back(std::move(t));
      }
      for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].id = i;
      break;
    }
  }
  for (Task& t : tasks) {
    t.spec = spec;
    t.repetitions = {0, spec.repetitions};
  }
  return tasks;
}

const char* bench_config_name(BenchConfig config) {
  switch (config) {
    case BenchConfig::kKneepoint: return "bts";
    case BenchConfig::kLargeTasks: return "blt";
    case BenchConfig::kTiniestTasks: return "btt";
  }
  return "unknown";
}

}  // namespace tinymr
