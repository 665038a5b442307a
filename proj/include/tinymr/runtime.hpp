// Master/worker job orchestration over the framed transport: the full
// map-shuffle-reduce pipeline, job-level recovery, and the failure calculus
// that justifies it. On any worker failure the entire job reruns with the
// same seed, so the recovered aggregate is identical to the fault-free one.

#ifndef TINYMR_RUNTIME_HPP
#define TINYMR_RUNTIME_HPP

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tinymr/datalayer.hpp"
#include "tinymr/event_log.hpp"
#include "tinymr/frame.hpp"
#include "tinymr/scheduler.hpp"
#include "tinymr/sizing.hpp"
#include "tinymr/workload.hpp"

namespace tinymr {

// --- failure calculus -------------------------------------------------------

struct FailureModel {
  double mttf_minutes = 0.0;      // mean time to a node or disk failure
  double slo_minutes = 0.0;       // P(w): worst-case running time
  double safety_factor = 1.0;     // w
  std::uint32_t node_count = 0;   // N
  double task_level_cost = 0.0;   // cost_tl: monitoring slowdown factor
};

// Expected failures per execution: fw = N * w * P(w) / mttf.
double expected_failures(const FailureModel& model);

struct RecoveryReport {
  double fw = 0.0;
  double cost_tl = 0.0;
  bool job_level = false;
};

// Job-level recovery is recommended when fw <= cost_tl (ties break toward
// the simpler mechanism).
RecoveryReport justify_job_level_recovery(const FailureModel& model);

// --- job spec and result ----------------------------------------------------

struct JobSpec {
  std::string manifest_path;                // empty when dataset is in memory
  std::shared_ptr<const Dataset> dataset;   // resolved before launch
  SubsampleSpec subsample;
  std::optional<KneepointReport> kneepoint; // nullopt: compute offline
  CacheConfig cache;                        // used when computing offline
  std::uint32_t n_workers = 1;
  std::uint32_t n_data_nodes = 1;
  ScheduleConfig sched;
  double slo_ms = 0.0;
  std::uint64_t seed = 0;
  bool monitor_enabled = false;
  std::uint32_t restart_cap = 3;
  std::uint32_t prefetch_margin = 1;
  double heartbeat_ms = 500.0;
  std::uint32_t heartbeat_misses = 3;
  double fetch_deadline_ms = 2000.0;

  void resolve_dataset();  // loads manifest_path when dataset is unset
};

struct JobResult {
  JobStatistic stat;
  double wall_ms = 0.0;
  double startup_ms = 0.0;
  std::uint32_t restarts = 0;
  EventLog log;
  KneepointReport kneepoint;
  ReplicaPlan plan;  // for the audit dump
};

// Sequential in-process oracle: pack, subsample, combine on one thread.
JobResult run_job_local(const JobSpec& spec);

// --- data node ---------------------------------------------------------------

// One data node: an in-memory sample store behind a framed TCP listener.
// Reads dominate; the store serializes behind one lock.
class DataNodeServer {
 public:
  DataNodeServer(std::uint64_t node_id, const std::string& bind_addr);
  ~DataNodeServer();

  void start();
  void stop();  // kills the listener and every open connection
  std::string addr() const { return addr_; }
  std::uint64_t node_id() const { return node_id_; }
  std::uint64_t served_count() const { return served_.load(); }
  std::vector<double> recent_serve_ms() const;  // sliding response window

  void put(std::uint64_t sample_id, std::vector<std::uint8_t> payload);

 private:
  void accept_loop();
  void serve(int fd);

  std::uint64_t node_id_;
  std::string addr_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> served_{0};
  std::thread accept_thread_;
  mutable std::mutex store_mu_;
  std::unordered_map<std::uint64_t, std::vector<std::uint8_t>> store_;
  std::deque<double> recent_serve_ms_;
  std::mutex conns_mu_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

// Fetches samples from remote data nodes over the framed data protocol.
class TcpSampleSource : public SampleSource {
 public:
  explicit TcpSampleSource(
      const std::vector<std::pair<std::uint64_t, std::string>>& endpoints);

  std::optional<std::vector<std::uint8_t>> get(std::uint64_t node_id,
                                               std::uint64_t sample_id,
                                               double deadline_ms,
                                               double* elapsed_ms) override;

 private:
  std::mutex mu_;
  std::map<std::uint64_t, std::string> addrs_;
  std::map<std::uint64_t, std::unique_ptr<FrameConn>> conns_;
};

// --- master -------------------------------------------------------------------

class Master {
 public:
  Master(JobSpec spec, const std::string& bind_addr);
  ~Master();

  // Binds, waits for the roster, runs the job (restarting on failures up to
  // the cap), releases the workers, and returns the combined result.
  JobResult run();

  std::string addr() const { return addr_; }

  // Live data node handles (failure injection and inspection).
  std::vector<DataNodeServer*> data_nodes();

 private:
  struct WorkerConn;

  void start_data_nodes();
  void distribute_samples();
  void setup_workers(const KneepointReport& report);
  bool execute_job(JobResult* result, std::string* failed_worker);
  void dispatch_ready(WorkerConn& w);
  void abort_workers();

  JobSpec spec_;
  std::string addr_;
  int listen_fd_ = -1;
  std::vector<std::unique_ptr<DataNodeServer>> data_nodes_;
  std::vector<std::unique_ptr<WorkerConn>> workers_;
  std::unique_ptr<Scheduler> scheduler_;
  EventLog log_;
  std::mutex log_mu_;
  std::chrono::steady_clock::time_point job_start_;
  void* inbox_ptr_ = nullptr;

  double now_ms() const;
  void log_event(const std::string& event, std::uint64_t node, std::uint64_t task);
};

// --- worker -------------------------------------------------------------------

class WorkerRuntime {
 public:
  struct JobContext;

  // Connects and registers; throws on refused connection.
  WorkerRuntime(const std::string& master_addr,
                std::uint64_t cache_bytes = 256ull << 20);
  ~WorkerRuntime();

  // Serves jobs until the master sends DONE. Returns tasks executed.
  std::uint64_t serve();

  // Abruptly severs the connection mid-job (failure injection).
  void kill();

 private:
  std::uint64_t serve_loop(std::unique_ptr<JobContext>& ctx);
  void run_job(const SetupMsg& setup, JobContext* ctx);
  void heartbeat_loop();
  void prefetch_loop(JobContext& ctx);

  FrameConn conn_;
  std::atomic<bool> alive_{true};
  std::atomic<bool> in_job_{false};
  std::uint64_t node_id_ = 0;
  std::uint64_t cache_bytes_;
  std::atomic<std::uint64_t> tasks_executed_{0};
  std::thread heartbeat_thread_;
  std::mutex write_mu_;

  bool send(const Frame& f);
};

}  // namespace tinymr

#endif  // TINYMR_RUNTIME_HPP
