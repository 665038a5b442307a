#include "tinymr/runtime.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tinymr/stats.hpp"

namespace tinymr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Result task ids carry the attempt epoch in the top 16 bits so results
// from an aborted attempt can never be mistaken for current ones.
constexpr int kEpochShift = 48;

std::uint64_t with_epoch(std::uint64_t task_id, std::uint32_t epoch) {
  return task_id | (static_cast<std::uint64_t>(epoch) << kEpochShift);
}

}  // namespace

// --- failure calculus --------------------------------------------------------

double expected_failures(const FailureModel& model) {
  if (model.mttf_minutes <= 0.0)
    throw std::invalid_argument("mttf must be positive");
  return static_cast<double>(model.node_count) * model.safety_factor *
         model.slo_minutes / model.mttf_minutes;
}

RecoveryReport justify_job_level_recovery(const FailureModel& model) {
  RecoveryReport report;
  report.fw = expected_failures(model);
  report.cost_tl = model.task_level_cost;
  report.job_level = report.fw <= report.cost_tl;
  return report;
}

// --- job spec ----------------------------------------------------------------

void JobSpec::resolve_dataset() {
  if (dataset) return;
  if (manifest_path.empty())
    throw std::runtime_error("job spec has neither dataset nor manifest");
  dataset = std::make_shared<Dataset>(load_dataset(manifest_path));
}

namespace {

KneepointReport resolve_kneepoint(const JobSpec& spec) {
  if (spec.kneepoint) return *spec.kneepoint;
  auto sizes = candidate_size_schedule(
      spec.dataset->avg_sample_size_bytes(),
      std::max<std::uint64_t>(spec.dataset->total_bytes / spec.n_workers,
                              2 * spec.dataset->avg_sample_size_bytes()));
  return find_kneepoint(*spec.dataset, spec.subsample, sizes, spec.cache);
}

std::vector<Task> build_tasks(const JobSpec& spec,
                              const KneepointReport& report,
                              std::uint32_t epoch) {
  if (spec.subsample.repetitions == 0) return {};  // empty job, no dispatch
  std::vector<Task> tasks = pack_tasks(*spec.dataset, report);
  for (Task& t : tasks) {
    t.spec = spec.subsample;
    t.repetitions = {0, spec.subsample.repetitions};
    t.id = with_epoch(t.id, epoch);
  }
  return tasks;
}

}  // namespace

JobResult run_job_local(const JobSpec& spec) {
  JobSpec resolved = spec;
  resolved.resolve_dataset();
  auto t0 = Clock::now();
  KneepointReport report = resolve_kneepoint(resolved);
  std::vector<Task> tasks = build_tasks(resolved, report, 0);
  JobResult result;
  result.kneepoint = report;
  result.startup_ms = ms_since(t0);
  std::vector<IntermediateResult> items;
  for (const Task& t : tasks) {
    for (std::uint64_t sid : t.sample_ids) {
      const Sample& sample = resolved.dataset->sample_by_id(sid);
      for (std::uint32_t rep = t.repetitions.first; rep < t.repetitions.last;
           ++rep)
        items.push_back(subsample(sample, t.spec, rep));
    }
  }
  if (!items.empty()) result.stat = reduce_combine(items);
  result.wall_ms = ms_since(t0);
  return result;
}

// --- data node -----------------------------------------------------------------

DataNodeServer::DataNodeServer(std::uint64_t node_id,
                               const std::string& bind_addr)
    : node_id_(node_id) {
  std::uint16_t port = 0;
  listen_fd_ = tcp_listen(bind_addr, &port);
  auto colon = bind_addr.rfind(':');
  addr_ = bind_addr.substr(0, colon) + ":" + std::to_string(port);
}

DataNodeServer::~DataNodeServer() { stop(); }

void DataNodeServer::start() {
  if (running_.exchange(true)) return;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void DataNodeServer::stop() {
  if (!running_.exchange(false)) {
    if (listen_fd_ >= 0) {
      ::shutdown(listen_fd_, SHUT_RDWR);
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    return;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  {
    std::lock_guard<std::mutex> lock(conns_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(conns_mu_);
    threads.swap(conn_threads_);
  }
  for (std::thread& t : threads)
    if (t.joinable()) t.join();
}

void DataNodeServer::put(std::uint64_t sample_id,
                         std::vector<std::uint8_t> payload) {
  std::lock_guard<std::mutex> lock(store_mu_);
  store_[sample_id] = std::move(payload);
}

void DataNodeServer::accept_loop() {
  while (running_.load()) {
    int fd = tcp_accept(listen_fd_, 100.0);
    if (fd < 0) continue;
    std::lock_guard<std::mutex> lock(conns_mu_);
    if (!running_.load()) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve(fd); });
  }
}

std::vector<double> DataNodeServer::recent_serve_ms() const {
  std::lock_guard<std::mutex> lock(store_mu_);
  return {recent_serve_ms_.begin(), recent_serve_ms_.end()};
}

void DataNodeServer::serve(int fd) {
  FrameConn conn(fd);
  try {
    while (running_.load()) {
      auto frame = conn.read_frame();
      if (!frame) break;
      if (frame->type == FrameType::kGet) {
        auto t0 = Clock::now();
        PayloadReader r(frame->payload);
        std::uint64_t sid = r.u64();
        PayloadWriter w;
        {
          std::lock_guard<std::mutex> lock(store_mu_);
          auto it = store_.find(sid);
          if (it == store_.end()) {
            w.u8(0);
            w.u64(sid);
          } else {
            w.u8(1);
            w.u64(sid);
            w.bytes(it->second.data(), it->second.size());
            ++served_;
          }
        }
        bool ok = conn.write_frame(Frame{FrameType::kGet, w.take()});
        {
          std::lock_guard<std::mutex> lock(store_mu_);
          recent_serve_ms_.push_back(ms_since(t0));
          if (recent_serve_ms_.size() > 64) recent_serve_ms_.pop_front();
        }
        if (!ok) break;
      } else if (frame->type == FrameType::kPut) {
        PayloadReader r(frame->payload);
        std::uint64_t sid = r.u64();
        put(sid, r.rest());
        PayloadWriter w;
        w.u8(1);
        if (!conn.write_frame(Frame{FrameType::kPut, w.take()})) break;
      } else {
        break;  // unknown request on the data protocol
      }
    }
  } catch (const std::exception&) {
    // Malformed request: drop the connection, keep serving others.
  }
}

// --- tcp sample source ----------------------------------------------------------

TcpSampleSource::TcpSampleSource(
    const std::vector<std::pair<std::uint64_t, std::string>>& endpoints) {
  for (const auto& [id, addr] : endpoints) addrs_[id] = addr;
}

std::optional<std::vector<std::uint8_t>> TcpSampleSource::get(
    std::uint64_t node_id, std::uint64_t sample_id, double deadline_ms,
    double* elapsed_ms) {
  auto t0 = Clock::now();
  auto fail = [&]() -> std::optional<std::vector<std::uint8_t>> {
    if (elapsed_ms) *elapsed_ms = ms_since(t0);
    return std::nullopt;
  };

  std::lock_guard<std::mutex> lock(mu_);
  auto addr_it = addrs_.find(node_id);
  if (addr_it == addrs_.end()) return fail();

  auto& conn = conns_[node_id];
  if (!conn || conn->closed()) {
    int fd = tcp_connect(addr_it->second, deadline_ms);
    if (fd < 0) return fail();
    conn = std::make_unique<FrameConn>(fd);
  }

  PayloadWriter w;
  w.u64(sample_id);
  if (!conn->write_frame(Frame{FrameType::kGet, w.take()})) {
    conn.reset();
    return fail();
  }
  auto reply = conn->read_frame(deadline_ms);
  if (!reply || reply->type != FrameType::kGet) {
    conn.reset();  // timed out or severed; next call reconnects
    return fail();
  }
  PayloadReader r(reply->payload);
  std::uint8_t ok = r.u8();
  std::uint64_t sid = r.u64();
  if (!ok || sid != sample_id) return fail();
  if (elapsed_ms) *elapsed_ms = ms_since(t0);
  return r.rest();
}

// --- master ----------------------------------------------------------------------

struct Master::WorkerConn {
  std::uint64_t node_id = 0;
  std::unique_ptr<FrameConn> conn;
  std::thread reader;
  std::uint32_t outstanding = 0;  // touched only by the command loop
  std::atomic<double> last_seen_ms{0.0};
  std::atomic<bool> alive{true};
};

namespace {

struct InboxMsg {
  enum Kind { kResult, kHeartbeat, kMonitor, kDown } kind = kDown;
  std::uint64_t node_id = 0;
  ResultMsg result;
  MonitorMsg monitor;
};

}  // namespace

// Serialized command inbox: reader threads produce, the run loop consumes.
struct MasterInbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<InboxMsg> queue;

  void push(InboxMsg msg) {
    {
      std::lock_guard<std::mutex> lock(mu);
      queue.push_back(std::move(msg));
    }
    cv.notify_one();
  }

  std::optional<InboxMsg> pop(double timeout_ms) {
    std::unique_lock<std::mutex> lock(mu);
    if (!cv.wait_for(lock, std::chrono::duration<double, std::milli>(timeout_ms),
                     [this] { return !queue.empty(); }))
      return std::nullopt;
    InboxMsg msg = std::move(queue.front());
    queue.pop_front();
    return msg;
  }
};

static MasterInbox& inbox_of(void* p) { return *static_cast<MasterInbox*>(p); }

Master::Master(JobSpec spec, const std::string& bind_addr) : spec_(std::move(spec)) {
  spec_.resolve_dataset();
  if (spec_.n_workers < 1) throw std::invalid_argument("need >= 1 worker");
  if (spec_.n_data_nodes < 1) throw std::invalid_argument("need >= 1 data node");
  std::uint16_t port = 0;
  listen_fd_ = tcp_listen(bind_addr, &port);
  auto colon = bind_addr.rfind(':');
  addr_ = bind_addr.substr(0, colon) + ":" + std::to_string(port);
}

Master::~Master() {
  for (auto& w : workers_) {
    w->alive.store(false);
    if (w->conn) w->conn->close();
    if (w->reader.joinable()) w->reader.join();
  }
  for (auto& d : data_nodes_) d->stop();
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
  }
  delete static_cast<MasterInbox*>(inbox_ptr_);
}

std::vector<DataNodeServer*> Master::data_nodes() {
  std::vector<DataNodeServer*> out;
  for (auto& d : data_nodes_) out.push_back(d.get());
  return out;
}

double Master::now_ms() const { return ms_since(job_start_); }

void Master::log_event(const std::string& event, std::uint64_t node,
                       std::uint64_t task) {
  std::lock_guard<std::mutex> lock(log_mu_);
  log_.record(now_ms(), event, node, task);
}

void Master::start_data_nodes() {
  auto host = addr_.substr(0, addr_.rfind(':'));
  for (std::uint32_t i = 0; i < spec_.n_data_nodes; ++i) {
    auto node = std::make_unique<DataNodeServer>(1000 + i, host + ":0");
    node->start();
    data_nodes_.push_back(std::move(node));
  }
}

void Master::distribute_samples() {
  // Full replication: every data node receives every sample, over the same
  // PUT path external loaders would use.
  for (auto& node : data_nodes_) {
    int fd = tcp_connect(node->addr());
    if (fd < 0) throw std::runtime_error("data node unreachable at launch");
    FrameConn conn(fd);
    for (const Sample& s : spec_.dataset->samples) {
      PayloadWriter w;
      w.u64(s.id);
      auto payload = encode_payload(s);
      w.bytes(payload.data(), payload.size());
      if (!conn.write_frame(Frame{FrameType::kPut, w.take()}))
        throw std::runtime_error("data node PUT failed");
      auto ack = conn.read_frame(5000.0);
      if (!ack || ack->type != FrameType::kPut)
        throw std::runtime_error("data node PUT not acknowledged");
    }
  }
}

void Master::setup_workers(const KneepointReport& report) {
  SetupMsg setup;
  setup.spec = spec_.subsample;
  setup.report = report;
  setup.plan_seed = spec_.seed;
  setup.prefetch_margin = spec_.prefetch_margin;
  setup.monitor_enabled = spec_.monitor_enabled;
  setup.fetch_deadline_ms = spec_.fetch_deadline_ms;
  for (auto& d : data_nodes_) setup.data_nodes.emplace_back(d->node_id(), d->addr());
  setup.manifest_text = manifest_to_text(spec_.dataset->manifest);
  for (auto& w : workers_) {
    if (!w->alive.load()) continue;
    setup.node_id = w->node_id;
    if (!w->conn->write_frame(encode_setup(setup)))
      throw std::runtime_error("worker setup failed");
    w->outstanding = 0;
    log_event("setup", w->node_id, 0);
  }
}

void Master::abort_workers() {
  for (auto& w : workers_) {
    if (!w->alive.load()) continue;
    w->conn->write_frame(Frame{FrameType::kAbort, {}});
    w->outstanding = 0;
  }
}

void Master::dispatch_ready(WorkerConn& w) {
  // Keep a few tasks of runway shipped to the worker so its prefetcher has
  // a horizon; batching replenishes the node queue from the pool. Until the
  // probe task reports back, the node gets exactly one task.
  constexpr std::uint32_t kRunwayTasks = 4;
  std::uint32_t cap =
      scheduler_->node_snapshot(w.node_id).exec_seen ? kRunwayTasks : 1;
  while (w.outstanding < cap) {
    NodeState snapshot = scheduler_->node_snapshot(w.node_id);
    if (snapshot.queue.empty() && scheduler_->pending_count() > 0 &&
        snapshot.exec_seen) {
      auto granted = scheduler_->feedback_batch(w.node_id);
      if (!granted.empty()) log_event("batch", w.node_id, granted.front());
    }
    auto task_id = scheduler_->next_task(w.node_id);
    if (!task_id) break;
    const Task& task = scheduler_->task(*task_id);
    TaskMsg msg;
    msg.task_id = task.id;
    msg.repetitions = task.repetitions;
    msg.outlier = task.outlier;
    msg.sample_ids = task.sample_ids;
    if (!w.conn->write_frame(encode_task(msg))) return;
    ++w.outstanding;
    log_event("dispatch", w.node_id, task.id);
  }
}

bool Master::execute_job(JobResult* result, std::string* failed_worker) {
  std::uint32_t epoch = result->restarts;
  KneepointReport report = result->kneepoint;
  std::vector<Task> tasks = build_tasks(spec_, report, epoch);

  std::vector<std::uint64_t> node_ids;
  for (auto& w : workers_)
    if (w->alive.load()) node_ids.push_back(w->node_id);
  if (node_ids.empty()) throw std::runtime_error("no workers remain");

  ScheduleConfig sched = spec_.sched;
  sched.probe_seed = spec_.seed + epoch;
  scheduler_ = std::make_unique<Scheduler>(tasks, node_ids, sched);

  auto* inbox = static_cast<MasterInbox*>(inbox_ptr_);
  {
    // Drain messages left over from an aborted attempt.
    std::lock_guard<std::mutex> lock(inbox->mu);
    inbox->queue.clear();
  }

  for (auto [node, task] : scheduler_->initial_assign())
    log_event("assign", node, task);
  for (auto& w : workers_)
    if (w->alive.load()) dispatch_ready(*w);

  std::map<std::uint64_t, std::vector<IntermediateResult>> done;
  const std::size_t total = tasks.size();
  double stale_after = spec_.heartbeat_ms * spec_.heartbeat_misses;

  while (done.size() < total) {
    auto msg = inbox->pop(spec_.heartbeat_ms);
    double now = now_ms();
    if (msg) {
      if (msg->kind == InboxMsg::kDown) {
        for (auto& w : workers_)
          if (w->node_id == msg->node_id) w->alive.store(false);
        *failed_worker = "worker " + std::to_string(msg->node_id);
        log_event("worker_down", msg->node_id, 0);
        return false;
      }
      if (msg->kind == InboxMsg::kHeartbeat) {
        for (auto& w : workers_)
          if (w->node_id == msg->node_id) w->last_seen_ms.store(now);
      } else if (msg->kind == InboxMsg::kMonitor) {
        log_event("monitor", msg->monitor.node_id, msg->monitor.tasks_done);
      } else if (msg->kind == InboxMsg::kResult) {
        const ResultMsg& r = msg->result;
        if ((r.task_id >> kEpochShift) != epoch) continue;  // stale attempt
        if (done.count(r.task_id)) continue;
        done[r.task_id] = r.items;
        for (auto& w : workers_) {
          if (w->node_id != msg->node_id) continue;
          w->last_seen_ms.store(now);
          if (w->outstanding > 0) --w->outstanding;
          scheduler_->record_completion(w->node_id, r.exec_ms, r.fetch_ms);
          log_event("complete", w->node_id, r.task_id);
          if (r.stall_ms > 0.5) log_event("stall", w->node_id, r.task_id);
          dispatch_ready(*w);
        }
      }
    }
    for (auto& w : workers_) {
      if (!w->alive.load()) continue;
      double seen = w->last_seen_ms.load();
      if (seen > 0.0 && now - seen > stale_after) {
        w->alive.store(false);
        w->conn->close();
        *failed_worker = "worker " + std::to_string(w->node_id) + " (heartbeat)";
        log_event("worker_down", w->node_id, 0);
        return false;
      }
    }
  }

  std::vector<IntermediateResult> items;
  for (auto& [task, part] : done)
    items.insert(items.end(), part.begin(), part.end());
  if (!items.empty()) result->stat = reduce_combine(items);
  return true;
}

JobResult Master::run() {
  job_start_ = Clock::now();
  JobResult result;

  // Startup phase: roster, data staging, plan, sizing report.
  while (workers_.size() < spec_.n_workers) {
    int fd = tcp_accept(listen_fd_, 30000.0);
    if (fd < 0) throw std::runtime_error("timed out waiting for workers");
    FrameConn probe(fd);
    auto frame = probe.read_frame(5000.0);
    if (!frame || frame->type != FrameType::kRegister) continue;
    auto w = std::make_unique<WorkerConn>();
    w->node_id = workers_.size() + 1;
    w->conn = std::make_unique<FrameConn>(std::move(probe));
    workers_.push_back(std::move(w));
    log_event("register", workers_.back()->node_id, 0);
  }

  inbox_ptr_ = new MasterInbox();
  for (auto& w : workers_) {
    WorkerConn* wc = w.get();
    wc->reader = std::thread([this, wc] {
      auto& inbox = inbox_of(inbox_ptr_);
      auto down = [&] {
        if (!wc->alive.load()) return;
        InboxMsg msg;
        msg.kind = InboxMsg::kDown;
        msg.node_id = wc->node_id;
        inbox.push(std::move(msg));
      };
      try {
        while (true) {
          auto frame = wc->conn->read_frame();
          if (!frame) {
            down();
            return;
          }
          InboxMsg msg;
          msg.node_id = wc->node_id;
          switch (frame->type) {
            case FrameType::kResult:
              msg.kind = InboxMsg::kResult;
              msg.result = decode_result(*frame);
              break;
            case FrameType::kHeartbeat:
              msg.kind = InboxMsg::kHeartbeat;
              break;
            case FrameType::kMonitor:
              msg.kind = InboxMsg::kMonitor;
              msg.monitor = decode_monitor(*frame);
              break;
            default:
              continue;
          }
          inbox.push(std::move(msg));
        }
      } catch (const std::exception&) {
        down();  // protocol violation counts as a failed worker
      }
    });
  }

  start_data_nodes();
  distribute_samples();
  {
    std::vector<std::uint64_t> data_ids;
    for (auto& d : data_nodes_) data_ids.push_back(d->node_id());
    result.plan = build_initial_plan(spec_.dataset->manifest, data_ids, spec_.seed);
  }
  result.kneepoint = resolve_kneepoint(spec_);
  setup_workers(result.kneepoint);
  result.startup_ms = now_ms();

  std::string failed;
  while (true) {
    if (execute_job(&result, &failed)) break;
    ++result.restarts;
    log_event("restart", 0, result.restarts);
    if (result.restarts > spec_.restart_cap)
      throw std::runtime_error("restart cap exceeded after " + failed);
    abort_workers();
    setup_workers(result.kneepoint);
  }

  for (auto& w : workers_) {
    if (!w->alive.load()) continue;
    w->conn->write_frame(Frame{FrameType::kDone, {}});
  }
  result.wall_ms = now_ms();
  log_event("done", 0, 0);
  {
    std::lock_guard<std::mutex> lock(log_mu_);
    result.log = log_;
  }
  return result;
}

// --- worker ------------------------------------------------------------------------

struct WorkerRuntime::JobContext {
  SetupMsg setup;
  std::vector<ManifestEntry> manifest;
  std::map<std::uint64_t, std::uint64_t> sample_bytes;
  ReplicaPlan plan;
  std::unique_ptr<TcpSampleSource> source;
  WorkerCache cache;
  std::map<std::uint64_t, double> fetch_cost_ms;  // per first-time fetch
  std::set<std::uint64_t> inflight;

  std::mutex mu;
  std::condition_variable queue_cv;    // executor & prefetcher wake-up
  std::condition_variable resident_cv; // a fetch finished
  std::deque<TaskMsg> queue;
  bool stop = false;

  double ewma_fetch_ms = 0.0;
  double ewma_exec_ms = 0.0;
  bool fetch_seen = false, exec_seen = false;
  std::deque<double> fetch_window;
  std::uint64_t tasks_done = 0;

  std::thread exec_thread;
  std::thread prefetch_thread;
  std::thread monitor_thread;

  explicit JobContext(std::uint64_t cache_bytes) : cache(cache_bytes) {}
};

WorkerRuntime::WorkerRuntime(const std::string& master_addr,
                             std::uint64_t cache_bytes)
    : conn_(tcp_connect(master_addr)), cache_bytes_(cache_bytes) {
  if (conn_.closed()) throw std::runtime_error("connection refused");
  PayloadWriter w;
  w.u64(derive_stream(0xbeef, reinterpret_cast<std::uintptr_t>(this)));
  if (!conn_.write_frame(Frame{FrameType::kRegister, w.take()}))
    throw std::runtime_error("register failed");
  heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
}

WorkerRuntime::~WorkerRuntime() {
  alive_.store(false);
  conn_.close();
  if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
}

bool WorkerRuntime::send(const Frame& f) {
  std::lock_guard<std::mutex> lock(write_mu_);
  return conn_.write_frame(f);
}

void WorkerRuntime::kill() {
  alive_.store(false);
  conn_.close();
}

void WorkerRuntime::heartbeat_loop() {
  // One beat per 500 ms; the master declares failure after three misses.
  while (alive_.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    if (!alive_.load()) break;
    if (!send(Frame{FrameType::kHeartbeat, {}})) break;
  }
}

namespace {

void teardown(WorkerRuntime::JobContext* ctx);

}  // namespace

std::uint64_t WorkerRuntime::serve() {
  std::unique_ptr<JobContext> ctx;
  try {
    return serve_loop(ctx);
  } catch (const std::exception&) {
    // A protocol violation severs the connection; job-level recovery on
    // the master side takes it from here.
    kill();
    if (ctx) teardown(ctx.get());
    return tasks_executed_.load();
  }
}

std::uint64_t WorkerRuntime::serve_loop(std::unique_ptr<JobContext>& ctx) {
  while (alive_.load()) {
    auto frame = conn_.read_frame();
    if (!frame) break;
    switch (frame->type) {
      case FrameType::kKneepoint: {
        if (ctx) teardown(ctx.get());
        SetupMsg setup = decode_setup(*frame);
        node_id_ = setup.node_id;
        auto fresh = std::make_unique<JobContext>(cache_bytes_);
        fresh->setup = setup;
        fresh->manifest = manifest_from_text(setup.manifest_text);
        for (const ManifestEntry& e : fresh->manifest)
          fresh->sample_bytes[e.id] = e.size_bytes;
        std::vector<std::uint64_t> data_ids;
        for (auto& [id, addr] : setup.data_nodes) data_ids.push_back(id);
        fresh->plan =
            build_initial_plan(fresh->manifest, data_ids, setup.plan_seed);
        fresh->source = std::make_unique<TcpSampleSource>(setup.data_nodes);
        ctx = std::move(fresh);
        run_job(setup, ctx.get());
        break;
      }
      case FrameType::kTask: {
        if (!ctx) break;
        TaskMsg task = decode_task(*frame);
        {
          std::lock_guard<std::mutex> lock(ctx->mu);
          ctx->queue.push_back(std::move(task));
        }
        ctx->queue_cv.notify_all();
        break;
      }
      case FrameType::kAbort:
        if (ctx) teardown(ctx.get());
        ctx.reset();
        break;
      case FrameType::kDone:
        if (ctx) teardown(ctx.get());
        return tasks_executed_.load();
      default:
        break;
    }
  }
  if (ctx) teardown(ctx.get());
  return tasks_executed_.load();
}

namespace {

void teardown(WorkerRuntime::JobContext* ctx) {
  {
    std::lock_guard<std::mutex> lock(ctx->mu);
    ctx->stop = true;
    ctx->queue.clear();
  }
  ctx->queue_cv.notify_all();
  ctx->resident_cv.notify_all();
  if (ctx->exec_thread.joinable()) ctx->exec_thread.join();
  if (ctx->prefetch_thread.joinable()) ctx->prefetch_thread.join();
  if (ctx->monitor_thread.joinable()) ctx->monitor_thread.join();
}

}  // namespace

void WorkerRuntime::prefetch_loop(JobContext& ctx) {
  PrefetchController controller;
  controller.margin = ctx.setup.prefetch_margin;
  std::unique_lock<std::mutex> lock(ctx.mu);
  while (!ctx.stop) {
    // Prefetch horizon: every sample of the next K queued tasks.
    controller.avg_fetch_ms = ctx.fetch_seen ? ctx.ewma_fetch_ms : 0.0;
    controller.avg_exec_ms = ctx.exec_seen ? ctx.ewma_exec_ms : 0.0;
    controller.refresh();
    std::optional<std::uint64_t> want;
    std::uint32_t horizon = std::min<std::uint32_t>(
        controller.depth, static_cast<std::uint32_t>(ctx.queue.size()));
    for (std::uint32_t i = 0; i < horizon && !want; ++i)
      for (std::uint64_t sid : ctx.queue[i].sample_ids)
        if (!ctx.cache.contains(sid) && !ctx.inflight.count(sid)) {
          want = sid;
          break;
        }
    if (!want) {
      ctx.queue_cv.wait(lock);
      continue;
    }
    std::uint64_t sid = *want;
    std::uint64_t bytes = ctx.sample_bytes.at(sid);
    ctx.inflight.insert(sid);
    lock.unlock();
    std::optional<FetchOutcome> got;
    try {
      got = fetch(sid, ctx.plan, *ctx.source, bytes,
                  ctx.setup.fetch_deadline_ms);
    } catch (const std::exception&) {
      got.reset();  // unavailable: the executor path will surface the error
    }
    lock.lock();
    ctx.inflight.erase(sid);
    if (got) {
      ctx.fetch_cost_ms[sid] = got->fetch_ms;
      ctx.fetch_window.push_back(got->fetch_ms);
      if (ctx.fetch_window.size() > 64) ctx.fetch_window.pop_front();
      ctx.ewma_fetch_ms =
          ewma_update(ctx.ewma_fetch_ms, got->fetch_ms, 0.5, ctx.fetch_seen);
      ctx.fetch_seen = true;
      ctx.cache.insert(sid, std::move(got->payload));
    }
    ctx.resident_cv.notify_all();
  }
}

void WorkerRuntime::run_job(const SetupMsg& setup, JobContext* ctx) {
  ctx->prefetch_thread = std::thread([this, ctx] { prefetch_loop(*ctx); });

  if (setup.monitor_enabled) {
    ctx->monitor_thread = std::thread([this, ctx] {
      while (true) {
        {
          std::unique_lock<std::mutex> lock(ctx->mu);
          if (ctx->queue_cv.wait_for(lock, std::chrono::seconds(1),
                                     [ctx] { return ctx->stop; }))
            return;
        }
        MonitorMsg m;
        m.node_id = node_id_;
        {
          std::lock_guard<std::mutex> lock(ctx->mu);
          m.tasks_done = ctx->tasks_done;
          m.queue_depth = static_cast<std::uint32_t>(ctx->queue.size());
          if (!ctx->fetch_window.empty())
            m.fetch_p95_ms = percentile(
                {ctx->fetch_window.begin(), ctx->fetch_window.end()}, 0.95);
        }
        if (!send(encode_monitor(m))) return;
      }
    });
  }

  ctx->exec_thread = std::thread([this, ctx] {
    std::unique_lock<std::mutex> lock(ctx->mu);
    while (!ctx->stop) {
      if (ctx->queue.empty()) {
        ctx->queue_cv.wait(lock);
        continue;
      }
      TaskMsg task = std::move(ctx->queue.front());
      ctx->queue.pop_front();
      ctx->queue_cv.notify_all();  // horizon moved; wake the prefetcher

      ResultMsg result;
      result.task_id = task.task_id;
      double exec_ms = 0.0;
      bool failed = false;
      for (std::uint64_t sid : task.sample_ids) {
        // Wait for residency; fetch directly when the prefetcher has not
        // claimed the sample (its own misses count as stall time).
        auto stall_start = Clock::now();
        std::vector<std::uint8_t> payload;
        while (!ctx->stop) {
          if (const auto* p = ctx->cache.find(sid)) {
            payload = *p;
            break;
          }
          if (!ctx->inflight.count(sid)) {
            std::uint64_t bytes = ctx->sample_bytes.at(sid);
            ctx->inflight.insert(sid);
            lock.unlock();
            std::optional<FetchOutcome> got;
            try {
              got = fetch(sid, ctx->plan, *ctx->source, bytes,
                          ctx->setup.fetch_deadline_ms);
            } catch (const std::exception&) {
              got.reset();
            }
            lock.lock();
            ctx->inflight.erase(sid);
            ctx->resident_cv.notify_all();
            if (!got) {
              failed = true;
              break;
            }
            ctx->fetch_cost_ms[sid] = got->fetch_ms;
            ctx->cache.insert(sid, std::move(got->payload));
            continue;
          }
          ctx->resident_cv.wait(lock);
        }
        if (ctx->stop || failed) break;
        result.stall_ms += ms_since(stall_start);
        auto cost = ctx->fetch_cost_ms.find(sid);
        if (cost != ctx->fetch_cost_ms.end()) {
          result.fetch_ms += cost->second;
          ctx->fetch_cost_ms.erase(cost);
        }

        lock.unlock();
        Sample sample;
        sample.id = sid;
        sample.records = decode_payload(payload.data(), payload.size());
        auto t0 = Clock::now();
        for (std::uint32_t rep = task.repetitions.first;
             rep < task.repetitions.last; ++rep)
          result.items.push_back(subsample(sample, ctx->setup.spec, rep));
        exec_ms += ms_since(t0);
        lock.lock();
      }
      if (ctx->stop) break;
      if (failed) {
        // Sample unavailable on every replica: the worker cannot make
        // progress, so it drops the connection and lets the master's
        // job-level recovery take over.
        lock.unlock();
        kill();
        return;
      }
      result.exec_ms = exec_ms;
      ctx->ewma_exec_ms = ewma_update(ctx->ewma_exec_ms, exec_ms, 0.5, ctx->exec_seen);
      ctx->exec_seen = true;
      ++ctx->tasks_done;
      tasks_executed_.fetch_add(1);
      lock.unlock();
      if (!send(encode_result(result))) return;
      lock.lock();
    }
  });
}

}  // namespace tinymr
