#include "tinymr/datalayer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tinymr/rng.hpp"
#include "tinymr/stats.hpp"

namespace tinymr {

void ReplicaPlan::validate() const {
  if (replication_factor < 1)
    throw std::invalid_argument("replication_factor must be >= 1");
  if (replication_factor > data_node_ids.size())
    throw std::invalid_argument("replication_factor exceeds data node count");
  for (const auto& [sample, nodes] : assignment)
    if (nodes.size() != replication_factor)
      throw std::invalid_argument("sample " + std::to_string(sample) +
                                  " violates the replication factor");
}

void PrefetchController::refresh() {
  depth = compute_prefetch_depth(avg_fetch_ms, avg_exec_ms, margin);
}

ReplicaPlan build_initial_plan(const std::vector<ManifestEntry>& manifest,
                               const std::vector<std::uint64_t>& data_node_ids,
                               std::uint64_t seed) {
  if (data_node_ids.empty()) throw std::invalid_argument("no data nodes");
  if (manifest.empty()) throw std::runtime_error("empty manifest");

  ReplicaPlan plan;
  plan.data_node_ids = data_node_ids;
  plan.replication_factor = static_cast<std::uint32_t>(data_node_ids.size());
  for (const ManifestEntry& e : manifest) {
    std::uint64_t rot = derive_stream(seed, e.id) % data_node_ids.size();
    std::vector<std::uint64_t> order(data_node_ids.size());
    for (std::size_t j = 0; j < data_node_ids.size(); ++j)
      order[j] = data_node_ids[(rot + j) % data_node_ids.size()];
    plan.assignment[e.id] = std::move(order);
  }
  plan.validate();
  return plan;
}

FetchOutcome fetch(std::uint64_t sample_id, const ReplicaPlan& plan,
                   SampleSource& source, std::uint64_t expected_bytes,
                   double deadline_ms) {
  auto it = plan.assignment.find(sample_id);
  if (it == plan.assignment.end())
    throw std::runtime_error("sample " + std::to_string(sample_id) +
                             " not in replica plan");

  FetchOutcome out;
  for (std::uint64_t node : it->second) {
    double elapsed = 0.0;
    auto payload = source.get(node, sample_id, deadline_ms, &elapsed);
    out.fetch_ms += elapsed;
    if (!payload) {
      ++out.failovers;
      continue;
    }
    if (payload->size() != expected_bytes)
      throw std::runtime_error("corrupt payload");
    out.payload = std::move(*payload);
    out.served_by = node;
    return out;
  }
  throw std::runtime_error("sample unavailable");
}

std::uint32_t compute_prefetch_depth(double avg_fetch_ms, double avg_exec_ms,
                                     std::uint32_t margin) {
  if (avg_fetch_ms < 0.0 || avg_exec_ms < 0.0)
    throw std::invalid_argument("negative average duration");
  constexpr double kEpsilonMs = 0.1;
  double k = std::ceil(avg_fetch_ms / std::max(avg_exec_ms, kEpsilonMs)) +
             static_cast<double>(margin);
  return static_cast<std::uint32_t>(std::max(1.0, k));
}

bool WorkerCache::contains(std::uint64_t sample_id) const {
  return entries_.count(sample_id) > 0;
}

const std::vector<std::uint8_t>* WorkerCache::find(std::uint64_t sample_id) {
  auto it = entries_.find(sample_id);
  if (it == entries_.end()) return nullptr;
  order_.erase(it->second.first);
  order_.push_front(sample_id);
  it->second.first = order_.begin();
  return &it->second.second;
}

void WorkerCache::insert(std::uint64_t sample_id,
                         std::vector<std::uint8_t> payload) {
  if (contains(sample_id)) return;
  bytes_ += payload.size();
  order_.push_front(sample_id);
  entries_.emplace(sample_id,
                   std::make_pair(order_.begin(), std::move(payload)));
  while (bytes_ > capacity_ && order_.size() > 1) {
    std::uint64_t victim = order_.back();
    order_.pop_back();
    auto it = entries_.find(victim);
    bytes_ -= it->second.second.size();
    entries_.erase(it);
  }
}

PrefetchStats prefetch_for_queue(
    const std::vector<const Task*>& queue, std::uint32_t depth,
    const ReplicaPlan& plan, SampleSource& source,
    const std::map<std::uint64_t, std::uint64_t>& sample_bytes,
    WorkerCache& cache, double deadline_ms) {
  PrefetchStats stats;
  std::uint32_t horizon =
      std::min<std::uint32_t>(depth, static_cast<std::uint32_t>(queue.size()));
  for (std::uint32_t i = 0; i < horizon; ++i) {
    for (std::uint64_t sid : queue[i]->sample_ids) {
      if (cache.contains(sid)) {
        stats.resident.push_back(sid);
        continue;
      }
      auto bytes_it = sample_bytes.find(sid);
      if (bytes_it == sample_bytes.end())
        throw std::runtime_error("sample " + std::to_string(sid) +
                                 " missing from manifest");
      FetchOutcome got =
          fetch(sid, plan, source, bytes_it->second, deadline_ms);
      ++stats.fetches_issued;
      stats.fetch_ms_total += got.fetch_ms;
      cache.insert(sid, std::move(got.payload));
      stats.resident.push_back(sid);
    }
  }
  return stats;
}

ReplicationAction adapt_replication(ReplicaPlan& plan,
                                    const std::vector<double>& fetch_window_ms,
                                    const std::vector<double>& exec_window_ms,
                                    double slo_budget_ms,
                                    const ReplicationControllerConfig& config,
                                    ReplicationControllerState& state) {
  if (fetch_window_ms.empty() || exec_window_ms.empty())
    throw std::invalid_argument("empty stats window");

  // Interference diagnostic: fetch time relative to exec time in the same
  // window. Logged by callers; the control law below uses latency only.
  double fetch_mean = 0.0, exec_mean = 0.0;
  for (double v : fetch_window_ms) fetch_mean += v;
  for (double v : exec_window_ms) exec_mean += v;
  fetch_mean /= static_cast<double>(fetch_window_ms.size());
  exec_mean /= static_cast<double>(exec_window_ms.size());
  state.interference_ratio =
      exec_mean > 0.0 ? (exec_mean + fetch_mean) / exec_mean : 1.0;

  // Each invocation covers one stats window; a change is allowed only after
  // cooldown_windows unchanged windows have passed since the last one.
  if (state.windows_since_change < config.cooldown_windows) {
    ++state.windows_since_change;
    return ReplicationAction::kNone;
  }

  double p95 = percentile(fetch_window_ms, 0.95);

  if (p95 > config.beta_hi * slo_budget_ms && !plan.standby_node_ids.empty()) {
    std::uint64_t recruit = plan.standby_node_ids.front();
    plan.standby_node_ids.erase(plan.standby_node_ids.begin());
    plan.data_node_ids.push_back(recruit);
    plan.replication_factor += 1;
    for (auto& [sample, nodes] : plan.assignment) nodes.push_back(recruit);
    plan.validate();
    state.windows_since_change = 0;
    return ReplicationAction::kGrow;
  }

  if (p95 < config.beta_lo * slo_budget_ms &&
      plan.replication_factor > config.r_min && plan.data_node_ids.size() > 1) {
    std::uint64_t retired = plan.data_node_ids.back();
    plan.data_node_ids.pop_back();
    plan.standby_node_ids.push_back(retired);
    plan.replication_factor -= 1;
    for (auto& [sample, nodes] : plan.assignment)
      nodes.erase(std::find(nodes.begin(), nodes.end(), retired));
    plan.validate();
    state.windows_since_change = 0;
    return ReplicationAction::kShrink;
  }
  ++state.windows_since_change;
  return ReplicationAction::kNone;
}

std::string plan_to_csv(const ReplicaPlan& plan) {
  std::ostringstream out;
  out << "sample_id,node_id,rank\n";
  for (const auto& [sample, nodes] : plan.assignment)
    for (std::size_t rank = 0; rank < nodes.size(); ++rank)
      out << sample << ',' << nodes[rank] << ',' << rank << '\n';
  return out.str();
}

}  // namespace tinymr
