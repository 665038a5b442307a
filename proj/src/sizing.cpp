#include "tinymr/sizing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tinymr {

KneepointReport find_kneepoint(const MeasureFn& measure,
                               const std::vector<std::uint64_t>& candidate_sizes,
                               std::uint64_t avg_sample_size_bytes) {
  if (candidate_sizes.size() < 3)
    throw std::invalid_argument(
        "need at least 3 candidate sizes (baseline plus one comparison)");
  for (std::size_t i = 1; i < candidate_sizes.size(); ++i)
    if (candidate_sizes[i] <= candidate_sizes[i - 1])
      throw std::invalid_argument("candidate sizes must strictly increase");

  KneepointReport report;
  report.avg_sample_size_bytes = avg_sample_size_bytes;

  auto [rate, size] = measure(candidate_sizes[0]);
  report.curve.points.push_back({size, rate, false});

  double last_rate = rate;
  double last_size = static_cast<double>(size);
  std::uint64_t prev_size = size;
  double max_rate = -1.0;  // unset until the first growth rate
  std::uint64_t knee = 0;
  bool found = false;

  for (std::size_t i = 1; i < candidate_sizes.size(); ++i) {
    auto [r, s] = measure(candidate_sizes[i]);
    report.curve.points.push_back({s, r, false});
    double ds = static_cast<double>(s) - last_size;
    if (ds <= 0.0) continue;  // degenerate step, skip the point
    double growth = (r - last_rate) / ds;
    if (growth < 0.0) growth = 0.0;
    if (max_rate < 0.0) {
      max_rate = growth;  // the first growth rate becomes the baseline
    } else if (growth > max_rate) {
      knee = prev_size;
      found = true;
      break;
    }
    last_rate = r;
    last_size = static_cast<double>(s);
    prev_size = s;
  }
  if (!found) knee = prev_size;  // no increase ever: largest tested size

  report.kneepoint_bytes = knee;
  std::uint64_t per_task =
      avg_sample_size_bytes > 0 ? knee / avg_sample_size_bytes : 1;
  report.samples_per_task =
      static_cast<std::uint32_t>(std::max<std::uint64_t>(1, per_task));
  return report;
}

KneepointReport find_kneepoint(const Dataset& dataset, const SubsampleSpec& spec,
                               const std::vector<std::uint64_t>& candidate_sizes,
                               const CacheConfig& config) {
  MeasureFn measure = [&](std::uint64_t target) {
    double rate = measure_task_size(dataset, spec, target, config, 3, nullptr);
    // Growth-rate comparison needs rates at counter resolution; noise in
    // the fifth decimal would otherwise set a near-zero baseline that any
    // later wiggle exceeds.
    rate = std::round(rate * 1000.0) / 1000.0;
    return std::make_pair(rate, target);
  };
  return find_kneepoint(measure, candidate_sizes,
                        dataset.avg_sample_size_bytes());
}

std::vector<std::uint64_t> candidate_size_schedule(std::uint64_t avg_sample_bytes,
                                                   std::uint64_t partition_bytes,
                                                   double growth) {
  if (avg_sample_bytes == 0) throw std::invalid_argument("zero sample size");
  if (growth <= 1.0) throw std::invalid_argument("growth must exceed 1");
  std::vector<std::uint64_t> sizes;
  double s = static_cast<double>(avg_sample_bytes);
  while (sizes.size() < 64) {
    auto b = static_cast<std::uint64_t>(s);
    if (b >= partition_bytes) break;
    sizes.push_back(b);
    s *= growth;
  }
  sizes.push_back(partition_bytes);
  if (sizes.size() < 3)
    throw std::invalid_argument("partition too small for a size sweep");
  return sizes;
}

std::vector<Task> pack_tasks(const Dataset& dataset,
                             const KneepointReport& report) {
  if (dataset.samples.empty()) throw std::runtime_error("empty dataset");
  if (report.kneepoint_bytes < 1)
    throw std::invalid_argument("kneepoint_bytes must be >= 1");

  std::uint32_t per_task = std::max<std::uint32_t>(1, report.samples_per_task);
  std::vector<Task> tasks;
  Task current;
  auto flush = [&] {
    if (current.sample_ids.empty()) return;
    current.id = tasks.size();
    tasks.push_back(std::move(current));
    current = Task{};
  };
  for (const ManifestEntry& e : dataset.manifest) {
    if (e.size_bytes > report.kneepoint_bytes) {
      flush();
      current.sample_ids.push_back(e.id);
      current.size_bytes = e.size_bytes;
      current.outlier = true;
      flush();
      continue;
    }
    current.sample_ids.push_back(e.id);
    current.size_bytes += e.size_bytes;
    if (current.sample_ids.size() >= per_task) flush();
  }
  flush();
  return tasks;
}

std::vector<NodePartition> partition_to_nodes(const Dataset& dataset,
                                              std::uint32_t n_nodes) {
  if (n_nodes < 1) throw std::invalid_argument("n_nodes must be >= 1");
  std::vector<NodePartition> parts(n_nodes);
  for (std::uint32_t n = 0; n < n_nodes; ++n) parts[n].node_id = n;
  for (std::size_t i = 0; i < dataset.manifest.size(); ++i)
    parts[i % n_nodes].sample_ids.push_back(dataset.manifest[i].id);
  return parts;
}

std::string report_to_text(const KneepointReport& report) {
  std::ostringstream out;
  out << "kneepoint_bytes=" << report.kneepoint_bytes << '\n'
      << "samples_per_task=" << report.samples_per_task << '\n'
      << "avg_sample_size_bytes=" << report.avg_sample_size_bytes << '\n';
  return out.str();
}

KneepointReport report_from_text(const std::string& text) {
  KneepointReport report;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed report line: " + line);
    std::string key = line.substr(0, eq);
    std::uint64_t value = std::stoull(line.substr(eq + 1));
    if (key == "kneepoint_bytes") report.kneepoint_bytes = value;
    else if (key == "samples_per_task")
      report.samples_per_task = static_cast<std::uint32_t>(value);
    else if (key == "avg_sample_size_bytes") report.avg_sample_size_bytes = value;
    else throw std::runtime_error("unknown report key: " + key);
  }
  return report;
}

}  // namespace tinymr
