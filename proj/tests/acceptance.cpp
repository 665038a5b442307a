// Acceptance suite: every criterion prints one PASS/FAIL line with its
// measured values; the process exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tinymr/cache_model.hpp"
#include "tinymr/datalayer.hpp"
#include "tinymr/rng.hpp"
#include "tinymr/runtime.hpp"
#include "tinymr/scheduler.hpp"
#include "tinymr/sim.hpp"
#include "tinymr/sizing.hpp"
#include "tinymr/stats.hpp"
#include "tinymr/workload.hpp"

using namespace tinymr;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& name, bool pass,
            const std::string& detail, double secs) {
  std::printf("[%s] %2d %-38s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

// Move-to-front list simulation; per-access miss decisions.
std::vector<bool> lru_decisions(const std::vector<std::uint64_t>& accesses,
                                std::uint64_t capacity) {
  std::vector<std::uint64_t> stack;
  std::vector<bool> missed(accesses.size());
  for (std::size_t i = 0; i < accesses.size(); ++i) {
    auto it = std::find(stack.begin(), stack.end(), accesses[i]);
    if (it == stack.end()) {
      missed[i] = true;
      stack.insert(stack.begin(), accesses[i]);
      if (stack.size() > capacity) stack.pop_back();
    } else {
      missed[i] = false;
      stack.erase(it);
      stack.insert(stack.begin(), accesses[i]);
    }
  }
  return missed;
}

// --- criterion 1 -----------------------------------------------------------

void criterion_1() {
  auto t0 = Clock::now();
  SplitMix64 rng(101);
  std::size_t checked = 0;
  bool pass = true;
  for (int trial = 0; trial < 200 && pass; ++trial) {
    std::size_t len = 500 + rng.next_below(9500);
    std::uint64_t alphabet = 2 + rng.next_below(510);
    std::uint64_t capacity = 1 + rng.next_below(256);
    AccessTrace trace;
    trace.accesses.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      double u = rng.next_unit();
      trace.accesses[i] = static_cast<std::uint64_t>(
          static_cast<double>(alphabet) * u * u);
      if (trace.accesses[i] >= alphabet) trace.accesses[i] = alphabet - 1;
    }
    auto dist = stack_distances(trace);
    auto oracle = lru_decisions(trace.accesses, capacity);
    for (std::size_t i = 0; i < len; ++i) {
      if ((dist[i] >= capacity) != oracle[i]) {
        pass = false;
        break;
      }
      ++checked;
    }
  }
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu access decisions matched", checked);
  report(1, "stack-distance / LRU equivalence", pass && secs < 30.0, buf, secs);
}

// --- criterion 2 -----------------------------------------------------------

std::uint64_t exhaustive_knee(const std::vector<std::uint64_t>& sizes,
                              const std::vector<double>& rates) {
  double baseline = -1.0;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    double g = (rates[i] - rates[i - 1]) /
               (static_cast<double>(sizes[i]) - static_cast<double>(sizes[i - 1]));
    if (g < 0.0) g = 0.0;
    if (baseline < 0.0) {
      baseline = g;
      continue;
    }
    if (g > baseline) return sizes[i - 1];
  }
  return sizes.back();
}

void criterion_2() {
  auto t0 = Clock::now();
  SplitMix64 rng(202);
  bool oracle_pass = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 4 + rng.next_below(10);
    std::vector<std::uint64_t> sizes;
    std::uint64_t size = 100000 + rng.next_below(100000);
    for (std::size_t i = 0; i < n; ++i) {
      sizes.push_back(size);
      size += 50000 + rng.next_below(400000);
    }
    std::vector<double> rates;
    double rate = 0.02 * rng.next_unit();
    double slope = 1e-9 * rng.next_unit();
    std::size_t jump = 2 + rng.next_below(n > 2 ? n - 2 : 1);
    for (std::size_t i = 0; i < n; ++i) {
      rates.push_back(rate);
      if (i + 1 < n)
        rate += slope * static_cast<double>(sizes[i + 1] - sizes[i]);
      if (i + 1 == jump) rate += 0.08 * rng.next_unit();
    }
    std::map<std::uint64_t, double> table;
    for (std::size_t i = 0; i < n; ++i) table[sizes[i]] = rates[i];
    auto measure = [&table](std::uint64_t s) {
      return std::make_pair(table.at(s), s);
    };
    auto got = find_kneepoint(measure, sizes, sizes[0]);
    if (got.kneepoint_bytes != exhaustive_knee(sizes, rates)) {
      oracle_pass = false;
      break;
    }
  }

  // Cache-shaped sweep: the knee must land within one step of the first
  // size whose working set spills the smallest level (1.5 MB).
  Dataset ds = generate_ratings_dataset(64, 256 * 1024, 77);
  SubsampleSpec spec;
  spec.fraction = 0.6;
  spec.repetitions = 1;
  spec.seed = 7;
  CacheConfig cache;
  cache.capacity_blocks = (1536 * 1024) / 64;
  auto sizes = candidate_size_schedule(ds.avg_sample_size_bytes(),
                                       12 * 1024 * 1024);
  auto knee = find_kneepoint(ds, spec, sizes, cache);

  std::size_t knee_index = sizes.size();
  std::size_t spill_index = sizes.size();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == knee.kneepoint_bytes) knee_index = i;
    if (spill_index == sizes.size()) {
      SplitMix64 pick(derive_stream(spec.seed, sizes[i], 0));
      std::vector<const Sample*> task;
      std::uint64_t bytes = 0;
      while (bytes < sizes[i] && task.size() < ds.samples.size()) {
        const Sample& s = ds.samples[pick.next_below(ds.samples.size())];
        bool dup = false;
        for (const Sample* t : task) dup |= (t->id == s.id);
        if (dup) continue;
        task.push_back(&s);
        bytes += s.size_bytes();
      }
      AccessTrace trace = task_trace(task, spec, 64);
      std::uint64_t ws = unique_blocks(trace) * 64;
      if (ws > 1536 * 1024) spill_index = i;
    }
  }
  bool shape_pass = knee_index < sizes.size() && spill_index < sizes.size();
  long gap = 0;
  if (shape_pass) {
    gap = static_cast<long>(spill_index) - static_cast<long>(knee_index);
    shape_pass = gap >= 0 && gap <= 1;
  }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "100 curves exact; knee at %.2f MB, spill step gap %ld",
                knee.kneepoint_bytes / 1048576.0, gap);
  report(2, "kneepoint detection", oracle_pass && shape_pass && secs < 30.0,
         buf, secs);
}

// --- criterion 3 -----------------------------------------------------------

struct BenchResult {
  double bts = 0.0, blt = 0.0, btt = 0.0;
};

BenchResult run_bench(const Dataset& ds, std::uint64_t seed) {
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 4;
  spec.seed = seed;
  SimConfig sim;
  sim.n_workers = 4;
  sim.startup_ms = 150.0;
  sim.per_task_overhead_ms = 40.0;  // multi-component pipeline launch cost
  sim.cache.block_bytes = 64;
  sim.cache.capacity_blocks = (1536 * 1024) / 64;
  sim.amat.level_miss_penalties = {63.0};
  sim.compute_cycles_per_access = 25.0;
  sim.cycle_scale_ms = 5e-5;
  sim.fetch_base_ms = 0.2;
  sim.fetch_exp_mean_ms = 0.1;
  sim.seed = seed;

  JobSpec job;
  job.seed = seed;
  job.dataset = std::make_shared<Dataset>(ds);
  job.subsample = spec;

  auto sizes = candidate_size_schedule(
      ds.avg_sample_size_bytes(),
      std::max<std::uint64_t>(ds.total_bytes / sim.n_workers,
                              2 * ds.avg_sample_size_bytes()));
  KneepointReport report = find_kneepoint(ds, spec, sizes, sim.cache);

  BenchResult out;
  out.bts = simulate_job_tasks(
                job, sim,
                make_bench_tasks(ds, report, BenchConfig::kKneepoint, 4, spec))
                .throughput_bytes_per_s;
  out.blt = simulate_job_tasks(
                job, sim,
                make_bench_tasks(ds, report, BenchConfig::kLargeTasks, 4, spec))
                .throughput_bytes_per_s;
  out.btt = simulate_job_tasks(
                job, sim,
                make_bench_tasks(ds, report, BenchConfig::kTiniestTasks, 4, spec))
                .throughput_bytes_per_s;
  return out;
}

void criterion_3() {
  auto t0 = Clock::now();
  Dataset uniform = generate_ratings_dataset(192, 256 * 1024, 33);
  BenchResult flat = run_bench(uniform, 33);

  Dataset tailed = generate_heavy_tailed_dataset(192, 256 * 1024, 34);
  BenchResult tail = run_bench(tailed, 34);

  double margin_flat = flat.bts / flat.blt;
  double margin_tail = tail.bts / tail.blt;
  bool pass = flat.bts >= 1.10 * flat.blt && flat.bts >= flat.btt &&
              margin_tail > margin_flat;
  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "bts/blt %.2f, bts/btt %.2f; with outliers bts/blt %.2f",
                margin_flat, flat.bts / flat.btt, margin_tail);
  report(3, "task-sizing throughput ordering", pass && secs < 60.0, buf, secs);
}

// --- criterion 4 -----------------------------------------------------------

void criterion_4() {
  auto t0 = Clock::now();
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 4;
  spec.seed = 44;
  const std::uint64_t capacity = (1536 * 1024) / 64;

  Dataset fits = generate_ratings_dataset(4, 256 * 1024, 4004);
  std::vector<const Sample*> small;
  for (const Sample& s : fits.samples) small.push_back(&s);

  Dataset spills = generate_ratings_dataset(60, 256 * 1024, 4004);
  std::vector<const Sample*> big;
  for (const Sample& s : spills.samples) big.push_back(&s);

  double mpi_small = simulate_lru_at(task_trace(small, spec, 64), capacity);
  double mpi_big = simulate_lru_at(task_trace(big, spec, 64), capacity);

  AmatModel model{1.0, {63.0}};
  double amat_small = amat(model, {mpi_small});
  double amat_big = amat(model, {mpi_big});

  bool pass = mpi_big >= 10.0 * mpi_small && amat_big / amat_small >= 10.0;
  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "mpi ratio %.1fx, amat ratio %.1fx",
                mpi_big / mpi_small, amat_big / amat_small);
  report(4, "miss-per-instruction growth", pass && secs < 30.0, buf, secs);
}

// --- criterion 5 -----------------------------------------------------------

void criterion_5() {
  auto t0 = Clock::now();
  FailureModel model;
  model.node_count = 100;
  model.slo_minutes = 10.0;
  model.safety_factor = 1.5;
  model.mttf_minutes = 4.3 * 30.44 * 24.0 * 60.0;
  double fw = expected_failures(model);
  bool pass = std::abs(fw - 0.0078) <= 0.0005;
  char buf[64];
  std::snprintf(buf, sizeof buf, "fw = %.5f", fw);
  report(5, "failure calculus", pass, buf, seconds_since(t0));
}

// --- criterion 6 -----------------------------------------------------------

struct MiniCluster {
  std::unique_ptr<Master> master;
  std::vector<std::unique_ptr<WorkerRuntime>> workers;
  std::vector<std::thread> threads;
  std::future<JobResult> result;

  explicit MiniCluster(const JobSpec& spec) {
    master = std::make_unique<Master>(spec, "127.0.0.1:0");
    result = std::async(std::launch::async, [this] { return master->run(); });
    for (std::uint32_t i = 0; i < spec.n_workers; ++i) {
      workers.push_back(std::make_unique<WorkerRuntime>(master->addr()));
      threads.emplace_back([w = workers.back().get()] { w->serve(); });
    }
  }

  ~MiniCluster() {
    for (auto& w : workers) w->kill();
    for (auto& t : threads)
      if (t.joinable()) t.join();
  }
};

void criterion_6() {
  auto t0 = Clock::now();
  JobSpec spec;
  spec.seed = 606;
  spec.dataset = std::make_shared<Dataset>(
      generate_ratings_dataset(96, 128 * 1024, 606));
  spec.subsample.fraction = 0.5;
  spec.subsample.repetitions = 40;
  spec.subsample.seed = 606;
  KneepointReport knee;
  knee.avg_sample_size_bytes = spec.dataset->avg_sample_size_bytes();
  knee.kneepoint_bytes = 4 * knee.avg_sample_size_bytes;
  knee.samples_per_task = 4;
  spec.kneepoint = knee;
  spec.n_workers = 4;
  spec.n_data_nodes = 2;
  spec.fetch_deadline_ms = 500.0;

  JobResult oracle = run_job_local(spec);

  bool exact = false, recovered = false, failover = false;
  std::uint32_t restarts_kill = 0, restarts_data = 0;
  {
    MiniCluster cluster(spec);
    JobResult live = cluster.result.get();
    exact = live.restarts == 0 &&
            live.stat.aggregate == oracle.stat.aggregate &&
            live.stat.total_count == oracle.stat.total_count &&
            live.stat.parts.size() == oracle.stat.parts.size();
  }
  {
    MiniCluster cluster(spec);
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    cluster.workers[2]->kill();
    JobResult live = cluster.result.get();
    restarts_kill = live.restarts;
    recovered = live.restarts == 1 &&
                live.stat.aggregate == oracle.stat.aggregate;
  }
  {
    MiniCluster cluster(spec);
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    cluster.master->data_nodes()[1]->stop();
    JobResult live = cluster.result.get();
    restarts_data = live.restarts;
    failover = live.restarts == 0 &&
               live.stat.aggregate == oracle.stat.aggregate;
  }

  double secs = seconds_since(t0);
  bool pass = exact && recovered && failover && secs < 120.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "oracle %s, worker-kill restarts=%u, replica-kill restarts=%u",
                exact ? "bit-exact" : "MISMATCH", restarts_kill, restarts_data);
  report(6, "end-to-end determinism and recovery", pass, buf, secs);
}

// --- criterion 7 -----------------------------------------------------------

// Log oracle: whenever a completion happens while the pending pool still
// holds tasks, the freed node must take on more work at that same instant
// (a start, or a dispatch whose start may trail on a cold fetch). Pool
// occupancy is reconstructed from assign/batch/steal rows, each of which
// moves exactly one task out of the pool.
bool log_work_conserving(const EventLog& log, std::size_t total_tasks) {
  std::size_t left_pool = 0;
  std::map<double, std::map<std::uint64_t, int>> work_at;
  for (const Event& e : log.rows())
    if (e.event == "start" || e.event == "dispatch")
      work_at[e.timestamp_ms][e.node_id]++;
  for (const Event& e : log.rows()) {
    if (e.event == "assign" || e.event == "batch" || e.event == "steal")
      ++left_pool;
    if (e.event == "complete" && left_pool < total_tasks) {
      auto at = work_at.find(e.timestamp_ms);
      if (at == work_at.end()) return false;
      auto node_it = at->second.find(e.node_id);
      if (node_it == at->second.end() || node_it->second <= 0) return false;
      --node_it->second;
    }
  }
  return true;
}

void criterion_7() {
  auto t0 = Clock::now();
  bool pass = true;
  std::uint64_t stalls = 0;
  std::size_t jobs = 0;
  for (std::uint64_t seed = 1; seed <= 50 && pass; ++seed) {
    JobSpec job;
    job.seed = seed;
    job.dataset = std::make_shared<Dataset>(
        generate_ratings_dataset(24 + seed % 3 * 8, 32 * 1024, seed));
    job.subsample.fraction = 0.5;
    job.subsample.repetitions = 2;
    job.subsample.seed = seed;
    KneepointReport knee;
    knee.avg_sample_size_bytes = job.dataset->avg_sample_size_bytes();
    knee.kneepoint_bytes = 2 * knee.avg_sample_size_bytes;
    knee.samples_per_task = 2;
    job.kneepoint = knee;

    SimConfig sim;
    sim.n_workers = 2 + seed % 4;
    sim.startup_ms = 50.0;
    sim.per_task_overhead_ms = 5.0;
    sim.cache.capacity_blocks = (256 * 1024) / 64;
    sim.amat.level_miss_penalties = {63.0};
    sim.cycle_scale_ms = 1e-5;
    sim.fetch_base_ms = 0.3;   // far below K x exec
    sim.fetch_exp_mean_ms = 0.2;
    sim.seed = seed;

    SimReport r = simulate_job(job, sim);  // throws on idle violations
    stalls += r.stall_count;
    if (r.stall_count != 0) pass = false;
    if (!log_work_conserving(r.log, r.tasks_executed)) pass = false;
    ++jobs;
  }
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu jobs, %llu stalls", jobs,
                static_cast<unsigned long long>(stalls));
  report(7, "work conservation and stall freedom", pass && secs < 60.0, buf,
         secs);
}

// --- criterion 8 -----------------------------------------------------------

void criterion_8() {
  auto t0 = Clock::now();
  SimConfig sim;
  sim.n_workers = 4;
  sim.speeds = {1.0, 1.0, 1.0, 0.85};
  sim.startup_ms = 0.0;
  sim.per_task_overhead_ms = 4.0;
  sim.cache.capacity_blocks = (256 * 1024) / 64;
  sim.amat.level_miss_penalties = {63.0};
  sim.cycle_scale_ms = 1e-5;
  sim.fetch_base_ms = 0.0;
  sim.fetch_exp_mean_ms = 0.0;
  sim.seed = 88;

  auto job_of = [&](std::uint32_t n_samples, std::uint32_t per_task) {
    JobSpec job;
    job.seed = 88;
    job.dataset = std::make_shared<Dataset>(
        generate_ratings_dataset(n_samples, 32 * 1024, 88));
    job.subsample.fraction = 0.5;
    job.subsample.repetitions = 2;
    job.subsample.seed = 88;
    KneepointReport knee;
    knee.avg_sample_size_bytes = job.dataset->avg_sample_size_bytes();
    knee.kneepoint_bytes = per_task * knee.avg_sample_size_bytes;
    knee.samples_per_task = per_task;
    job.kneepoint = knee;
    return job;
  };

  auto run_with = [&](std::uint32_t n_samples, std::uint32_t per_task) {
    return simulate_job(job_of(n_samples, per_task), sim);
  };

  // Durations are deterministic, so a serial single-speed run measures the
  // total work exactly; the bound spreads it across the aggregate speed.
  SimConfig uniform = sim;
  uniform.speeds = {1.0};
  uniform.n_workers = 1;

  auto bound_of = [&](std::uint32_t n_samples, std::uint32_t per_task) {
    SimReport serial = simulate_job(job_of(n_samples, per_task), uniform);
    double total_work = serial.makespan_ms - serial.startup_ms;
    double speed_sum = 0.0;
    for (double s : sim.speeds) speed_sum += s;
    return total_work / speed_sum;
  };

  SimReport large = run_with(960, 2);
  double large_bound = bound_of(960, 2);
  double large_ratio = (large.makespan_ms - large.startup_ms) / large_bound;

  SimReport tiny = run_with(8, 2);
  double tiny_bound = bound_of(8, 2);
  double tiny_ratio = (tiny.makespan_ms - tiny.startup_ms) / tiny_bound;

  bool pass = large_ratio <= 1.05 && tiny_ratio >= 1.10;
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "large %.3fx bound, tiny %.3fx bound",
                large_ratio, tiny_ratio);
  report(8, "heterogeneous cluster balance", pass && secs < 60.0, buf, secs);
}

// --- criterion 9 -----------------------------------------------------------

void criterion_9() {
  auto t0 = Clock::now();
  SplitMix64 rng(909);
  bool pass = true;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    ThroughputProfile profile;
    std::size_t n = 1 + rng.next_below(6);
    for (std::size_t i = 0; i < n; ++i) {
      ClusterConfigProfile c;
      c.core_count = static_cast<std::uint32_t>(12 * (i + 1));
      c.startup_ms = 100.0 + 8000.0 * rng.next_unit();
      std::uint64_t size = 1 << 20;
      for (int s = 0; s < 4; ++s) {
        c.samples.push_back({size, 5.0 + 800.0 * rng.next_unit()});
        size *= 3;
      }
      profile.configs.push_back(std::move(c));
    }
    std::uint64_t job = (1 << 20) + rng.next_below(96ull << 20);
    double slo = 500.0 + 150000.0 * rng.next_unit();

    const ClusterConfigProfile* best = nullptr;
    double best_tp = -1.0;
    const ClusterConfigProfile* fastest = nullptr;
    double fastest_ms = 1e300;
    for (const auto& c : profile.configs) {
      double running = predicted_running_ms(c, job);
      double tp = interpolated_throughput(c, job);
      if (running <= slo && tp > best_tp) {
        best = &c;
        best_tp = tp;
      }
      if (running < fastest_ms) {
        fastest = &c;
        fastest_ms = running;
      }
    }
    std::uint32_t expected = best ? best->core_count : fastest->core_count;
    if (select_cluster_size_for_slo(profile, job, slo) != expected) pass = false;
  }

  // Startup-heavy synthetic: the big cluster misses the tight bound.
  ThroughputProfile profile;
  profile.configs.push_back({12, 500.0, {{100 << 20, 2000.0}}});
  profile.configs.push_back({72, 60000.0, {{100 << 20, 12000.0}}});
  bool tight = select_cluster_size_for_slo(profile, 100 << 20, 60000.0) == 12;
  bool loose = select_cluster_size_for_slo(profile, 100 << 20, 120000.0) == 72;
  pass = pass && tight && loose;

  double secs = seconds_since(t0);
  report(9, "SLO cluster sizing", pass && secs < 5.0,
         "100 random profiles exact; startup-heavy case ordered", secs);
}

// --- criterion 10 ----------------------------------------------------------

void criterion_10() {
  auto t0 = Clock::now();
  ReduceModel map_heavy;
  map_heavy.avg_map_ms = 500.0;
  map_heavy.avg_shuffle_ms = 1.0;
  map_heavy.avg_reduce_ms = 5.0;
  map_heavy.reduce_units = 16;
  auto flat_curve = reduce_stage_model(map_heavy, 64, 8, 16);
  bool flattened = false;
  std::uint32_t flat_at = 0;
  for (std::size_t i = 1; i < flat_curve.size() && i < 8; ++i) {
    double gain = (flat_curve[i - 1].makespan_ms - flat_curve[i].makespan_ms) /
                  flat_curve[i - 1].makespan_ms;
    if (gain < 0.01) {
      flattened = true;
      flat_at = flat_curve[i].reducers;
      break;
    }
  }

  ReduceModel reduce_heavy;
  reduce_heavy.avg_map_ms = 10.0;
  reduce_heavy.avg_shuffle_ms = 15.0;
  reduce_heavy.avg_reduce_ms = 200.0;
  reduce_heavy.reduce_units = 64;
  auto curve = reduce_stage_model(reduce_heavy, 16, 8, 64);
  auto best = std::min_element(curve.begin(), curve.end(),
                               [](const ReducePoint& a, const ReducePoint& b) {
                                 return a.makespan_ms < b.makespan_ms;
                               });

  bool pass = flattened && flat_at <= 8 && best->reducers > 1;
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "map-heavy flat at R=%u; reduce-heavy best R=%u",
                flat_at, best->reducers);
  report(10, "reduce-stage model shapes", pass && secs < 5.0, buf, secs);
}

// --- criterion 11 ----------------------------------------------------------

void criterion_11() {
  auto t0 = Clock::now();
  // Desk-scale default: 24 MB dataset, 30 statistical repetitions.
  Dataset ds = generate_ratings_dataset(96, 256 * 1024, 1111);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 30;
  spec.seed = 1111;
  CacheConfig cache;
  cache.capacity_blocks = (1536 * 1024) / 64;

  auto offline_start = Clock::now();
  auto sizes = candidate_size_schedule(ds.avg_sample_size_bytes(),
                                       ds.total_bytes / 4);
  KneepointReport report_out = find_kneepoint(ds, spec, sizes, cache);
  double offline_s = seconds_since(offline_start);

  JobSpec job;
  job.seed = 1111;
  job.dataset = std::make_shared<Dataset>(ds);
  job.subsample = spec;
  job.kneepoint = report_out;
  SimConfig sim;
  sim.n_workers = 4;
  sim.startup_ms = 150.0;
  sim.per_task_overhead_ms = 12.0;
  sim.cache = cache;
  sim.amat.level_miss_penalties = {63.0};
  sim.cycle_scale_ms = 2e-4;
  sim.seed = 1111;

  auto online_start = Clock::now();
  SimReport sr = simulate_job(job, sim);
  double online_s = seconds_since(online_start);

  double ratio = offline_s / online_s;
  bool pass = ratio <= 0.10 && sr.tasks_executed > 0;
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "offline %.2fs / online %.2fs = %.1f%%",
                offline_s, online_s, 100.0 * ratio);
  report(11, "offline phase cost", pass, buf, secs);
}

// --- criterion 12 ----------------------------------------------------------

void criterion_12() {
  auto t0 = Clock::now();
  Dataset ds = generate_ratings_dataset(4, 118 * 1024, 1212);
  SubsampleSpec spec;
  spec.fraction = 0.1;
  spec.repetitions = 250;
  spec.confidence = 0.98;
  spec.seed = 1212;

  std::uint32_t covered = 0, trials = 0;
  for (const Sample& s : ds.samples) {
    double mu = 0.0;
    for (const Record& r : s.records) mu += r.value;
    mu /= static_cast<double>(s.records.size());
    double var = 0.0;
    for (const Record& r : s.records) var += (r.value - mu) * (r.value - mu);
    var /= static_cast<double>(s.records.size());

    for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
      auto result = subsample(s, spec, rep);
      double hw = subsample_ci_halfwidth(var, s.records.size(), result.count,
                                         spec.confidence);
      if (std::abs(result.statistic - mu) <= hw) ++covered;
      ++trials;
    }
  }
  double coverage = static_cast<double>(covered) / static_cast<double>(trials);
  bool pass = trials == 1000 && std::abs(coverage - 0.98) <= 0.01;
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "coverage %.3f over %u trials", coverage,
                trials);
  report(12, "subsampling CI coverage", pass && secs < 60.0, buf, secs);
}

}  // namespace

int main() {
  std::printf("tinymr acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  criterion_12();
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", g_failures);
  return 1;
}
