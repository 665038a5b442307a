#include "tinymr/cache_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tinymr {

void CacheConfig::validate() const {
  if (capacity_blocks < 1)
    throw std::invalid_argument("capacity_blocks must be >= 1");
  if (block_bytes == 0) throw std::invalid_argument("block_bytes must be > 0");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i].capacity_blocks <= levels[i - 1].capacity_blocks)
      throw std::invalid_argument("level capacities must strictly increase");
    if (levels[i].hit_cycles <= levels[i - 1].hit_cycles)
      throw std::invalid_argument("level hit cycles must strictly increase");
  }
}

void MissRateCurve::validate() const {
  if (points.size() < 2)
    throw std::invalid_argument("curve needs at least 2 points");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].task_size_bytes <= points[i - 1].task_size_bytes)
      throw std::invalid_argument("curve sizes must strictly increase");
}

namespace {

// Fenwick tree of 0/1 marks over trace positions.
class MarkTree {
 public:
  explicit MarkTree(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t pos, int delta) {
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1))
      tree_[i] += delta;
  }

  // Sum of marks in positions [0, pos].
  std::int64_t prefix(std::size_t pos) const {
    std::int64_t s = 0;
    for (std::size_t i = pos + 1; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace

std::vector<std::uint64_t> stack_distances(const AccessTrace& trace) {
  const auto& a = trace.accesses;
  std::vector<std::uint64_t> dist(a.size());
  MarkTree marks(a.size());
  // block -> position of its most recent access; exactly the marked spots.
  std::unordered_map<std::uint64_t, std::size_t> last;
  last.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = last.find(a[i]);
    if (it == last.end()) {
      dist[i] = kInfiniteDistance;
    } else {
      // Distinct blocks touched strictly between the previous access and
      // now: every such block's most recent access lies in (prev, i).
      std::size_t prev = it->second;
      dist[i] = static_cast<std::uint64_t>(marks.prefix(i - 1) -
                                           marks.prefix(prev));
      marks.add(prev, -1);
    }
    marks.add(i, +1);
    last[a[i]] = i;
  }
  return dist;
}

double simulate_lru_at(const AccessTrace& trace, std::uint64_t capacity_blocks) {
  if (trace.accesses.empty()) throw std::runtime_error("empty trace");
  if (capacity_blocks < 1)
    throw std::invalid_argument("capacity_blocks must be >= 1");
  auto dist = stack_distances(trace);
  std::uint64_t misses = 0;
  for (std::uint64_t d : dist)
    if (d >= capacity_blocks) ++misses;
  return static_cast<double>(misses) / static_cast<double>(dist.size());
}

double simulate_lru(const AccessTrace& trace, const CacheConfig& config) {
  config.validate();
  return simulate_lru_at(trace, config.capacity_blocks);
}

std::vector<double> miss_rates_for_levels(
    const AccessTrace& trace, const std::vector<std::uint64_t>& capacities) {
  if (trace.accesses.empty()) throw std::runtime_error("empty trace");
  for (std::size_t i = 1; i < capacities.size(); ++i)
    if (capacities[i] <= capacities[i - 1])
      throw std::invalid_argument("capacities must strictly increase");
  auto dist = stack_distances(trace);
  std::vector<std::uint64_t> misses(capacities.size(), 0);
  for (std::uint64_t d : dist)
    for (std::size_t l = 0; l < capacities.size(); ++l)
      if (d >= capacities[l]) ++misses[l];
  std::vector<double> rates(capacities.size());
  std::uint64_t upstream = dist.size();
  for (std::size_t l = 0; l < capacities.size(); ++l) {
    rates[l] = upstream == 0
                   ? 0.0
                   : static_cast<double>(misses[l]) /
                         static_cast<double>(upstream);
    upstream = misses[l];
  }
  return rates;
}

double amat(const AmatModel& model, const std::vector<double>& miss_rates_per_level) {
  if (miss_rates_per_level.size() != model.level_miss_penalties.size())
    throw std::invalid_argument("one miss rate per level required");
  double cycles = model.fastest_hit_cycles;
  double compounded = 1.0;
  for (std::size_t i = 0; i < miss_rates_per_level.size(); ++i) {
    compounded *= miss_rates_per_level[i];
    cycles += compounded * model.level_miss_penalties[i];
  }
  return cycles;
}

AccessTrace task_trace(const std::vector<const Sample*>& task_samples,
                       const SubsampleSpec& spec, std::uint32_t block_bytes) {
  if (task_samples.empty()) throw std::invalid_argument("empty task");
  if (block_bytes == 0) throw std::invalid_argument("block_bytes must be > 0");
  spec.validate();

  AccessTrace trace;
  trace.block_bytes = block_bytes;

  // Samples occupy disjoint contiguous block ranges.
  std::vector<std::uint64_t> base(task_samples.size());
  std::uint64_t next_base = 0;
  for (std::size_t i = 0; i < task_samples.size(); ++i) {
    base[i] = next_base;
    std::uint64_t blocks =
        (task_samples[i]->size_bytes() + block_bytes - 1) / block_bytes;
    next_base += std::max<std::uint64_t>(blocks, 1);
  }

  const std::uint64_t total_blocks = next_base;
  const bool exhaustive = spec.fraction >= 1.0;
  for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
    if (exhaustive) {
      // No random lookups: one in-order pass over every block.
      for (std::uint64_t b = 0; b < total_blocks; ++b)
        trace.accesses.push_back(b);
      continue;
    }
    // Draw each sample's subsample indices, then emit them round-robin
    // across the task the way pipeline components stream every input per
    // pass. Reuse distances therefore span the task's working set, which
    // is what couples the miss rate to task size.
    std::vector<std::vector<std::uint32_t>> draws(task_samples.size());
    std::size_t max_draws = 0;
    for (std::size_t i = 0; i < task_samples.size(); ++i) {
      const Sample& s = *task_samples[i];
      auto n = static_cast<std::uint32_t>(s.records.size());
      if (n == 0) continue;
      draws[i] = subsample_indices(spec.seed, s.id, rep, n, spec.fraction);
      max_draws = std::max(max_draws, draws[i].size());
    }
    std::uint64_t cursor = 0;
    for (std::size_t j = 0; j < max_draws; ++j) {
      for (std::size_t i = 0; i < task_samples.size(); ++i) {
        if (j >= draws[i].size()) continue;
        // Normal scan touch, then the random lookup it pays for.
        trace.accesses.push_back(cursor);
        cursor = (cursor + 1) % total_blocks;
        std::uint64_t block =
            (static_cast<std::uint64_t>(draws[i][j]) * kRecordBytes) /
            block_bytes;
        trace.accesses.push_back(base[i] + block);
      }
    }
  }
  return trace;
}

std::uint64_t unique_blocks(const AccessTrace& trace) {
  std::vector<std::uint64_t> a = trace.accesses;
  std::sort(a.begin(), a.end());
  return static_cast<std::uint64_t>(
      std::unique(a.begin(), a.end()) - a.begin());
}

double measure_task_size(const Dataset& dataset, const SubsampleSpec& spec,
                         std::uint64_t size, const CacheConfig& config,
                         std::uint32_t reps, bool* single_sample) {
  if (dataset.samples.empty()) throw std::invalid_argument("empty dataset");
  config.validate();
  if (reps < 1) reps = 1;

  // Measurement pass: one repetition regardless of the job's repetition
  // count. This keeps the offline phase a small fraction of the job.
  SubsampleSpec measure = spec;
  measure.repetitions = 1;

  // Measurement tasks are composed of typically sized samples. Packing
  // assumes samples are roughly equal and isolates oversized outliers as
  // singletons, so letting an outlier into a small measurement task would
  // only corrupt the curve.
  std::uint64_t avg = dataset.avg_sample_size_bytes();
  std::vector<const Sample*> pool;
  for (const Sample& s : dataset.samples)
    if (s.size_bytes() <= 2 * avg) pool.push_back(&s);
  if (pool.empty())
    for (const Sample& s : dataset.samples) pool.push_back(&s);

  std::vector<double> rates;
  bool single = false;
  for (std::uint32_t r = 0; r < reps; ++r) {
    SplitMix64 pick(derive_stream(spec.seed, size, r));
    std::vector<const Sample*> task;
    std::uint64_t bytes = 0;
    while (bytes < size && task.size() < pool.size()) {
      const Sample* s = pool[pick.next_below(pool.size())];
      bool dup = false;
      for (const Sample* t : task) dup |= (t->id == s->id);
      if (dup) continue;
      task.push_back(s);
      bytes += s->size_bytes();
    }
    if (task.size() == 1 && task[0]->size_bytes() > size) single = true;
    AccessTrace trace = task_trace(task, measure, config.block_bytes);
    rates.push_back(simulate_lru_at(trace, config.capacity_blocks));
  }
  std::sort(rates.begin(), rates.end());
  if (single_sample) *single_sample = single;
  return rates[rates.size() / 2];
}

MissRateCurve profile_curve(const Dataset& dataset, const SubsampleSpec& spec,
                            const std::vector<std::uint64_t>& sizes,
                            const CacheConfig& config, std::uint32_t reps) {
  if (sizes.size() < 2) throw std::invalid_argument("need at least 2 sizes");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1])
      throw std::invalid_argument("sizes must strictly increase");

  MissRateCurve curve;
  for (std::uint64_t size : sizes) {
    bool single = false;
    double rate = measure_task_size(dataset, spec, size, config, reps, &single);
    curve.points.push_back({size, rate, single});
  }
  return curve;
}

std::string curve_to_csv(const MissRateCurve& curve) {
  std::ostringstream out;
  out << "task_size_bytes,misses_per_instruction\n";
  out.precision(17);
  for (const auto& p : curve.points)
    out << p.task_size_bytes << ',' << p.misses_per_instruction << '\n';
  return out.str();
}

MissRateCurve curve_from_csv(const std::string& text) {
  MissRateCurve curve;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "task_size_bytes,misses_per_instruction")
    throw std::runtime_error("bad curve CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c = line.find(',');
    if (c == std::string::npos)
      throw std::runtime_error("malformed curve line: " + line);
    MissRateCurve::Point p;
    p.task_size_bytes = std::stoull(line.substr(0, c));
    p.misses_per_instruction = std::stod(line.substr(c + 1));
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace tinymr
