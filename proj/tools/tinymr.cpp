// tinymr command line: profile datasets, detect kneepoints, run real
// master/worker jobs, drive simulations, and emit plot-ready CSV.
//
// Exit codes: 0 success, 2 usage/config error, 3 connectivity, 4 job
// failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tinymr/cache_model.hpp"
#include "tinymr/kv_config.hpp"
#include "tinymr/runtime.hpp"
#include "tinymr/sim.hpp"
#include "tinymr/sizing.hpp"
#include "tinymr/workload.hpp"

namespace fs = std::filesystem;
using namespace tinymr;

namespace {

int log_level() {
  const char* env = std::getenv("TINYMR_LOG");
  if (!env) return 1;
  try {
    return std::stoi(env);
  } catch (...) {
    return 1;
  }
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "tinymr: " << msg << "\n";
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path);
  f << content;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

std::vector<std::uint64_t> parse_sizes(const std::string& csv) {
  std::vector<std::uint64_t> sizes;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) sizes.push_back(std::stoull(tok));
  return sizes;
}

// Dataset reference: `manifest:<path>`, `eaglet:<n>:<mean_bytes>` or
// `ratings:<n>:<bytes_per_movie>`.
Dataset resolve_dataset_ref(const std::string& ref, std::uint64_t seed) {
  auto first = ref.find(':');
  if (first == std::string::npos)
    throw std::runtime_error("bad dataset ref: " + ref);
  std::string kind = ref.substr(0, first);
  std::string rest = ref.substr(first + 1);
  if (kind == "manifest") return load_dataset(rest);
  auto second = rest.find(':');
  if (second == std::string::npos)
    throw std::runtime_error("bad dataset ref: " + ref);
  auto n = static_cast<std::uint32_t>(std::stoul(rest.substr(0, second)));
  std::uint64_t bytes = std::stoull(rest.substr(second + 1));
  if (kind == "eaglet") return generate_heavy_tailed_dataset(n, bytes, seed);
  if (kind == "ratings") return generate_ratings_dataset(n, bytes, seed);
  throw std::runtime_error("unknown dataset kind: " + kind);
}

CacheConfig cache_from_kv(const KvConfig& kv) {
  CacheConfig cache;
  cache.block_bytes = static_cast<std::uint32_t>(kv.get_u64("block_bytes", 64));
  std::uint64_t l2_kb = kv.get_u64("cache_kb", 1536);
  std::uint64_t l3_kb = kv.get_u64("cache_l3_kb", 0);
  cache.capacity_blocks = std::max<std::uint64_t>(1, l2_kb * 1024 / cache.block_bytes);
  if (l3_kb > 0) {
    cache.levels.push_back({cache.capacity_blocks, 1.0});
    cache.levels.push_back(
        {std::max<std::uint64_t>(1, l3_kb * 1024 / cache.block_bytes),
         kv.get_double("l3_hit_cycles", 10.0)});
  }
  return cache;
}

AmatModel amat_from_kv(const KvConfig& kv, const CacheConfig& cache) {
  AmatModel amat;
  amat.fastest_hit_cycles = kv.get_double("hit_cycles", 1.0);
  if (cache.levels.empty()) {
    amat.level_miss_penalties = {kv.get_double("miss_penalty", 63.0)};
  } else {
    amat.level_miss_penalties = {kv.get_double("l3_penalty", 10.0),
                                 kv.get_double("memory_penalty", 63.0)};
  }
  return amat;
}

SubsampleSpec spec_from_kv(const KvConfig& kv, std::uint64_t seed) {
  SubsampleSpec spec;
  spec.fraction = kv.get_double("fraction", 0.5);
  spec.repetitions = static_cast<std::uint32_t>(kv.get_u64("repetitions", 4));
  spec.confidence = kv.get_double("confidence", 0.98);
  spec.seed = seed;
  return spec;
}

SimConfig sim_from_kv(const KvConfig& kv, std::uint64_t seed) {
  SimConfig sim;
  sim.n_workers = static_cast<std::uint32_t>(kv.get_u64("workers", 4));
  sim.startup_ms = kv.get_double("startup_ms", 200.0);
  sim.per_task_overhead_ms = kv.get_double("per_task_overhead_ms", 5.0);
  sim.runtime_tax = kv.get_double("runtime_tax", 0.0);
  sim.cache = cache_from_kv(kv);
  sim.amat = amat_from_kv(kv, sim.cache);
  sim.compute_cycles_per_access = kv.get_double("compute_cycles", 0.0);
  sim.cycle_scale_ms = kv.get_double("cycle_scale_ms", 1e-6);
  sim.n_data_nodes = static_cast<std::uint32_t>(kv.get_u64("data_nodes", 2));
  sim.fetch_base_ms = kv.get_double("fetch_base_ms", 0.5);
  sim.fetch_exp_mean_ms = kv.get_double("fetch_exp_mean_ms", 0.5);
  sim.fetch_ms_per_mb = kv.get_double("fetch_ms_per_mb", 0.0);
  sim.prefetch_margin = static_cast<std::uint32_t>(kv.get_u64("prefetch_margin", 1));
  sim.adapt_replication_enabled = kv.get_bool("adapt_replication", false);
  sim.standby_data_nodes =
      static_cast<std::uint32_t>(kv.get_u64("standby_data_nodes", 2));
  sim.sched.slo_ms = kv.get_double("slo_ms", 0.0);
  sim.seed = seed;
  std::string speeds = kv.get("speeds", "");
  if (!speeds.empty()) {
    std::istringstream in(speeds);
    std::string tok;
    while (std::getline(in, tok, ',')) sim.speeds.push_back(std::stod(tok));
    if (sim.speeds.size() != sim.n_workers)
      throw std::runtime_error("speeds list must match worker count");
  }
  return sim;
}

int cmd_profile(const std::string& manifest, const std::string& out_dir,
                std::uint64_t cache_kb, const std::string& sizes_csv,
                std::uint64_t seed) {
  Dataset dataset;
  try {
    dataset = load_dataset(manifest);
  } catch (const std::exception& e) {
    std::cerr << "tinymr profile: " << e.what() << "\n";
    return 2;
  }
  CacheConfig cache;
  cache.capacity_blocks = std::max<std::uint64_t>(1, cache_kb * 1024 / 64);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 1;
  spec.seed = seed;

  std::vector<std::uint64_t> sizes;
  if (!sizes_csv.empty()) {
    sizes = parse_sizes(sizes_csv);
  } else {
    sizes = candidate_size_schedule(dataset.avg_sample_size_bytes(),
                                    dataset.total_bytes);
  }
  if (sizes.size() < 3) {
    std::cerr << "tinymr profile: need at least 3 candidate sizes\n";
    return 2;
  }

  KneepointReport report = find_kneepoint(dataset, spec, sizes, cache);
  // Full curve over the same schedule for plotting.
  MissRateCurve curve = profile_curve(dataset, spec, sizes, cache);
  report.curve = curve;

  fs::path dir(out_dir);
  write_file(dir / "curve.csv", curve_to_csv(curve));
  write_file(dir / "kneepoint.txt", report_to_text(report));
  std::cout << report.kneepoint_bytes << "\n";
  return 0;
}

JobSpec jobspec_from_file(const std::string& path, std::uint64_t seed_override,
                          bool has_seed_override) {
  KvConfig kv = KvConfig::load(path);
  JobSpec spec;
  std::uint64_t seed = has_seed_override ? seed_override : kv.get_u64("seed", 1);
  spec.seed = seed;
  std::string dataset_ref = kv.require("dataset");
  spec.dataset = std::make_shared<Dataset>(resolve_dataset_ref(dataset_ref, seed));
  spec.subsample = spec_from_kv(kv, seed);
  spec.cache = cache_from_kv(kv);
  if (kv.has("kneepoint_bytes")) {
    KneepointReport report;
    report.kneepoint_bytes = kv.get_u64("kneepoint_bytes", 0);
    report.avg_sample_size_bytes = spec.dataset->avg_sample_size_bytes();
    report.samples_per_task = static_cast<std::uint32_t>(std::max<std::uint64_t>(
        1, report.kneepoint_bytes /
               std::max<std::uint64_t>(1, report.avg_sample_size_bytes)));
    spec.kneepoint = report;
  }
  spec.n_workers = static_cast<std::uint32_t>(kv.get_u64("workers", 2));
  spec.n_data_nodes = static_cast<std::uint32_t>(kv.get_u64("data_nodes", 2));
  spec.slo_ms = kv.get_double("slo_ms", 0.0);
  spec.monitor_enabled = kv.get_bool("monitor", false);
  spec.restart_cap = static_cast<std::uint32_t>(kv.get_u64("restart_cap", 3));
  return spec;
}

int cmd_run(const std::string& jobspec_path, const std::string& role,
            const std::string& addr, const std::string& out_dir,
            std::uint64_t seed_override, bool has_seed) {
  if (role == "worker") {
    try {
      WorkerRuntime worker(addr);
      worker.serve();
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "tinymr worker: " << e.what() << "\n";
      return 3;
    }
  }
  if (role != "master") {
    std::cerr << "tinymr run: role must be master or worker\n";
    return 2;
  }
  JobSpec spec;
  try {
    spec = jobspec_from_file(jobspec_path, seed_override, has_seed);
  } catch (const std::exception& e) {
    std::cerr << "tinymr run: " << e.what() << "\n";
    return 2;
  }
  try {
    Master master(spec, addr);
    info("master listening on " + master.addr());
    JobResult result = master.run();
    nlohmann::json report{
        {"aggregate", result.stat.aggregate},
        {"total_count", result.stat.total_count},
        {"samples", result.stat.per_sample.size()},
        {"wall_ms", result.wall_ms},
        {"startup_ms", result.startup_ms},
        {"restarts", result.restarts},
        {"kneepoint_bytes", result.kneepoint.kneepoint_bytes},
    };
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "job_result.json", report.dump(2) + "\n");
      result.log.save((fs::path(out_dir) / "events.csv").string());
      write_file(fs::path(out_dir) / "replica_plan.csv",
                 plan_to_csv(result.plan));
    }
    std::cout << report.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "tinymr run: " << e.what() << "\n";
    std::string what = e.what();
    if (what.find("restart cap") != std::string::npos) return 4;
    return 3;
  }
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed) {
  KvConfig kv;
  try {
    kv = KvConfig::load(scenario_path);
  } catch (const std::exception& e) {
    std::cerr << "tinymr simulate: " << e.what() << "\n";
    return 2;
  }
  try {
    std::uint64_t seed = has_seed ? seed_override : kv.get_u64("seed", 1);
    JobSpec job;
    job.seed = seed;
    job.dataset = std::make_shared<Dataset>(
        resolve_dataset_ref(kv.require("dataset"), seed));
    job.subsample = spec_from_kv(kv, seed);
    SimConfig sim = sim_from_kv(kv, seed);
    std::string name = kv.get("name", "scenario");
    fs::path dir(out_dir.empty() ? "." : out_dir);

    if (kv.has("sweep_sizes")) {
      auto sizes = parse_sizes(kv.require("sweep_sizes"));
      auto rows = sweep_task_size(job, sim, sizes);
      write_file(dir / (name + "_sweep.csv"), sweep_to_csv(rows));
      std::cout << sweep_to_csv(rows);
      return 0;
    }
    if (kv.has("elasticity")) {
      // One run per simulated core count, shared seed.
      std::ostringstream csv;
      csv << "cores,makespan_ms,throughput_bytes_per_s\n";
      for (std::uint64_t cores : parse_sizes(kv.require("elasticity"))) {
        SimConfig scaled = sim;
        scaled.n_workers = static_cast<std::uint32_t>(cores);
        scaled.speeds.clear();
        SimReport r = simulate_job(job, scaled);
        csv << cores << ',' << r.makespan_ms << ','
            << r.throughput_bytes_per_s << '\n';
      }
      write_file(dir / (name + "_elasticity.csv"), csv.str());
      std::cout << csv.str();
      return 0;
    }
    if (kv.has("kneepoint_bytes")) {
      KneepointReport report;
      report.kneepoint_bytes = kv.get_u64("kneepoint_bytes", 1);
      report.avg_sample_size_bytes = job.dataset->avg_sample_size_bytes();
      report.samples_per_task = static_cast<std::uint32_t>(std::max<std::uint64_t>(
          1, report.kneepoint_bytes /
                 std::max<std::uint64_t>(1, report.avg_sample_size_bytes)));
      job.kneepoint = report;
    }
    SimReport report = simulate_job(job, sim);
    std::ostringstream csv;
    csv << "makespan_ms,startup_ms,throughput_bytes_per_s,stalls,steals,tasks\n"
        << report.makespan_ms << ',' << report.startup_ms << ','
        << report.throughput_bytes_per_s << ',' << report.stall_count << ','
        << report.steal_count << ',' << report.tasks_executed << '\n';
    write_file(dir / (name + "_report.csv"), csv.str());
    report.log.save((dir / (name + "_events.csv")).string());
    std::cout << csv.str();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "tinymr simulate: " << e.what() << "\n";
    return 2;
  }
}

int cmd_bench(const std::string& preset, const std::string& dataset_ref,
              const std::string& out_dir, std::uint64_t seed,
              std::uint32_t n_workers) {
  SimConfig sim;
  SubsampleSpec spec;
  spec.seed = seed;
  if (preset == "eaglet") {
    // Multi-component pipeline: noticeable per-task startup.
    sim.per_task_overhead_ms = 40.0;
    spec.fraction = 0.5;
    spec.repetitions = 4;
  } else if (preset == "ratings") {
    // Single-stage pipeline: tiny per-task overhead.
    sim.per_task_overhead_ms = 1.0;
    spec.fraction = 0.5;
    spec.repetitions = 4;
  } else {
    std::cerr << "tinymr bench: unknown preset " << preset << "\n";
    return 2;
  }
  sim.n_workers = n_workers;
  sim.startup_ms = 150.0;
  sim.cache.block_bytes = 64;
  sim.cache.capacity_blocks = 1536 * 1024 / 64;  // 1.5 MB equivalent
  sim.amat.level_miss_penalties = {63.0};
  sim.compute_cycles_per_access = 25.0;
  sim.cycle_scale_ms = 5e-5;
  sim.seed = seed;

  try {
    JobSpec job;
    job.seed = seed;
    job.dataset = std::make_shared<Dataset>(
        resolve_dataset_ref(dataset_ref, seed));
    job.subsample = spec;

    auto sizes = candidate_size_schedule(
        job.dataset->avg_sample_size_bytes(),
        std::max<std::uint64_t>(job.dataset->total_bytes / sim.n_workers,
                                2 * job.dataset->avg_sample_size_bytes()));
    KneepointReport report =
        find_kneepoint(*job.dataset, spec, sizes, sim.cache);

    std::ostringstream csv;
    csv << "config,tasks,throughput_bytes_per_s,relative\n";
    double base = 0.0;
    for (BenchConfig config : {BenchConfig::kKneepoint, BenchConfig::kLargeTasks,
                               BenchConfig::kTiniestTasks}) {
      auto tasks = make_bench_tasks(*job.dataset, report, config,
                                    sim.n_workers, spec);
      SimReport r = simulate_job_tasks(job, sim, tasks);
      if (config == BenchConfig::kKneepoint) base = r.throughput_bytes_per_s;
      csv << bench_config_name(config) << ',' << tasks.size() << ','
          << r.throughput_bytes_per_s << ','
          << (base > 0.0 ? r.throughput_bytes_per_s / base : 0.0) << '\n';
    }
    if (!out_dir.empty())
      write_file(fs::path(out_dir) / ("bench_" + preset + ".csv"), csv.str());
    std::cout << csv.str();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "tinymr bench: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinymr: cache-locality-aware map-reduce for subsampling workloads"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path, out_dir, addr = "127.0.0.1:0", role = "master";
  std::uint64_t seed = 1, cache_kb = 1536;
  bool seed_set = false;
  std::string sizes_csv, manifest, jobspec, scenario, preset, dataset_ref;
  std::uint32_t nodes = 4;

  app.add_option("--config", config_path, "flat key = value config file");
  auto* seed_opt = app.add_option("--seed", seed, "root seed");
  app.add_option("--out", out_dir, "output directory");

  auto* profile = app.add_subcommand("profile", "measure a miss-rate curve and detect the kneepoint");
  profile->add_option("manifest", manifest, "dataset manifest path")->required();
  profile->add_option("--cache-kb", cache_kb, "primary cache capacity in KiB");
  profile->add_option("--sizes", sizes_csv, "comma-separated candidate sizes in bytes");

  auto* run = app.add_subcommand("run", "run a job as master or worker");
  run->add_option("jobspec", jobspec, "job spec file (master role)");
  run->add_option("--role", role, "master or worker");
  run->add_option("--addr", addr, "listen (master) or connect (worker) address");

  auto* simulate = app.add_subcommand("simulate", "run a simulator scenario file");
  simulate->add_option("scenario", scenario, "scenario file")->required();

  auto* bench = app.add_subcommand("bench", "compare BTS/BLT/BTT configurations");
  bench->add_option("preset", preset, "eaglet or ratings")->required();
  bench->add_option("--dataset", dataset_ref,
                    "dataset ref (default: preset-shaped synthetic)");
  bench->add_option("--nodes", nodes, "simulated worker count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  seed_set = seed_opt->count() > 0;
  if (!config_path.empty()) {
    try {
      KvConfig kv = KvConfig::load(config_path);
      if (!seed_set && kv.has("seed")) {
        seed = kv.get_u64("seed", seed);
        seed_set = true;
      }
      if (out_dir.empty()) out_dir = kv.get("out", "");
    } catch (const std::exception& e) {
      std::cerr << "tinymr: " << e.what() << "\n";
      return 2;
    }
  }

  try {
    if (profile->parsed())
      return cmd_profile(manifest, out_dir.empty() ? "." : out_dir, cache_kb,
                         sizes_csv, seed);
    if (run->parsed()) {
      if (role == "master" && jobspec.empty()) {
        std::cerr << "tinymr run: master role requires a jobspec file\n";
        return 2;
      }
      return cmd_run(jobspec, role, addr, out_dir, seed, seed_set);
    }
    if (simulate->parsed())
      return cmd_simulate(scenario, out_dir, seed, seed_set);
    if (bench->parsed()) {
      if (dataset_ref.empty())
        dataset_ref =
            preset == "ratings" ? "ratings:96:262144" : "eaglet:192:262144";
      return cmd_bench(preset, dataset_ref, out_dir, seed, nodes);
    }
  } catch (const std::exception& e) {
    std::cerr << "tinymr: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
