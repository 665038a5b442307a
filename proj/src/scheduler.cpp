#include "tinymr/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tinymr/rng.hpp"

namespace tinymr {

void ScheduleConfig::validate() const {
  if (!(ewma_alpha > 0.0 && ewma_alpha <= 1.0))
    throw std::invalid_argument("ewma_alpha must be in (0,1]");
  if (batch_min < 1 || batch_max < batch_min)
    throw std::invalid_argument("bad batch bounds");
}

double ewma_update(double old_value, double observed, double alpha, bool seen) {
  if (observed < 0.0) throw std::invalid_argument("negative duration");
  if (!seen) return observed;
  return alpha * observed + (1.0 - alpha) * old_value;
}

Scheduler::Scheduler(const std::vector<Task>& tasks,
                     const std::vector<std::uint64_t>& node_ids,
                     ScheduleConfig config)
    : tasks_(tasks), config_(config), total_tasks_(tasks.size()) {
  if (node_ids.empty()) throw std::invalid_argument("no nodes");
  config_.validate();
  nodes_.resize(node_ids.size());
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    nodes_[i].node_id = node_ids[i];
  for (const Task& t : tasks_) pool_.push_back(t.id);
  std::sort(pool_.begin(), pool_.end());  // FIFO by task id
}

std::vector<std::pair<std::uint64_t, std::uint64_t>>
Scheduler::initial_assign() {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> assignments;
  if (pool_.empty()) return assignments;

  // Seeded random permutation of the pool; one probe task per node.
  std::vector<std::uint64_t> perm(pool_.begin(), pool_.end());
  SplitMix64 rng(derive_stream(config_.probe_seed, 0x9a0be));
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.next_below(i)]);

  std::size_t n = std::min(nodes_.size(), perm.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t task_id = perm[i];
    nodes_[i].queue.push_back(task_id);
    pool_.erase(std::find(pool_.begin(), pool_.end(), task_id));
    assignments.emplace_back(nodes_[i].node_id, task_id);
  }
  return assignments;
}

std::vector<std::uint64_t> Scheduler::feedback_batch(std::uint64_t node_id) {
  std::lock_guard<std::mutex> lock(mu_);
  NodeState& node = node_ref(node_id);

  double exec = node.exec_seen ? node.ewma_exec_ms : 0.0;
  double target = config_.target_queue_ms > 0.0
                      ? config_.target_queue_ms
                      : config_.runway_factor * exec;
  std::uint32_t batch = config_.batch_min;
  if (exec > 0.0) {
    double b = std::ceil(target / exec);
    batch = static_cast<std::uint32_t>(
        std::clamp(b, static_cast<double>(config_.batch_min),
                   static_cast<double>(config_.batch_max)));
  }

  std::vector<std::uint64_t> granted;
  while (granted.size() < batch && !pool_.empty()) {
    granted.push_back(pool_.front());
    pool_.pop_front();
    node.queue.push_back(granted.back());
  }
  return granted;
}

std::optional<std::uint64_t> Scheduler::next_task(std::uint64_t node_id) {
  std::lock_guard<std::mutex> lock(mu_);
  NodeState& node = node_ref(node_id);
  std::optional<std::uint64_t> task;
  if (!node.queue.empty()) {
    task = node.queue.front();
    node.queue.pop_front();
  } else if (!pool_.empty()) {
    // Steal path: an idle node drains the pool directly.
    task = pool_.front();
    pool_.pop_front();
    ++steals_;
  }
  if (task) node.inflight = task;
  return task;
}

void Scheduler::record_completion(std::uint64_t node_id, double exec_ms,
                                  double fetch_ms) {
  std::lock_guard<std::mutex> lock(mu_);
  NodeState& node = node_ref(node_id);
  node.ewma_exec_ms =
      ewma_update(node.ewma_exec_ms, exec_ms, config_.ewma_alpha, node.exec_seen);
  node.exec_seen = true;
  node.ewma_fetch_ms = ewma_update(node.ewma_fetch_ms, fetch_ms,
                                   config_.ewma_alpha, node.fetch_seen);
  node.fetch_seen = true;
  node.inflight.reset();
  ++node.completed_count;
}

NodeState Scheduler::node_snapshot(std::uint64_t node_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const NodeState& n : nodes_)
    if (n.node_id == node_id) return n;
  throw std::invalid_argument("unknown node " + std::to_string(node_id));
}

std::size_t Scheduler::pending_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return pool_.size();
}

bool Scheduler::all_done() const {
  std::lock_guard<std::mutex> lock(mu_);
  if (!pool_.empty()) return false;
  for (const NodeState& n : nodes_)
    if (!n.queue.empty() || n.inflight) return false;
  return true;
}

const Task& Scheduler::task(std::uint64_t task_id) const {
  for (const Task& t : tasks_)
    if (t.id == task_id) return t;
  throw std::invalid_argument("unknown task " + std::to_string(task_id));
}

NodeState& Scheduler::node_ref(std::uint64_t node_id) {
  for (NodeState& n : nodes_)
    if (n.node_id == node_id) return n;
  throw std::invalid_argument("unknown node " + std::to_string(node_id));
}

double interpolated_throughput(const ClusterConfigProfile& config,
                               std::uint64_t job_size_bytes) {
  if (config.samples.empty())
    throw std::invalid_argument("configuration has no throughput samples");
  const auto& s = config.samples;
  if (job_size_bytes <= s.front().job_size_bytes)
    return s.front().throughput_bytes_per_ms;
  if (job_size_bytes >= s.back().job_size_bytes)
    return s.back().throughput_bytes_per_ms;
  std::size_t i = 1;
  while (s[i].job_size_bytes < job_size_bytes) ++i;
  double x0 = static_cast<double>(s[i - 1].job_size_bytes);
  double x1 = static_cast<double>(s[i].job_size_bytes);
  double t = (static_cast<double>(job_size_bytes) - x0) / (x1 - x0);
  return s[i - 1].throughput_bytes_per_ms +
         t * (s[i].throughput_bytes_per_ms - s[i - 1].throughput_bytes_per_ms);
}

double predicted_running_ms(const ClusterConfigProfile& config,
                            std::uint64_t job_size_bytes) {
  double throughput = interpolated_throughput(config, job_size_bytes);
  if (throughput <= 0.0) return std::numeric_limits<double>::infinity();
  return config.startup_ms + static_cast<double>(job_size_bytes) / throughput;
}

std::uint32_t select_cluster_size_for_slo(const ThroughputProfile& profile,
                                          std::uint64_t job_size_bytes,
                                          double slo_ms) {
  if (profile.configs.empty()) throw std::invalid_argument("empty profile");

  // Qualification is on total predicted running time (startup included);
  // ranking among qualifiers is on achieved throughput at this job size.
  const ClusterConfigProfile* best_fit = nullptr;
  double best_fit_throughput = -1.0;
  const ClusterConfigProfile* fastest = nullptr;
  double fastest_ms = std::numeric_limits<double>::infinity();

  for (const ClusterConfigProfile& c : profile.configs) {
    double running = predicted_running_ms(c, job_size_bytes);
    double throughput = interpolated_throughput(c, job_size_bytes);
    if (running <= slo_ms && throughput > best_fit_throughput) {
      best_fit = &c;
      best_fit_throughput = throughput;
    }
    if (running < fastest_ms) {
      fastest = &c;
      fastest_ms = running;
    }
  }
  return best_fit ? best_fit->core_count : fastest->core_count;
}

}  // namespace tinymr
