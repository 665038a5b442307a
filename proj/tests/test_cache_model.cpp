#include <doctest.h>

#include <algorithm>
#include <list>
#include <set>
#include <unordered_set>

#include "tinymr/cache_model.hpp"
#include "tinymr/rng.hpp"

using namespace tinymr;

namespace {

// O(n^2) scan-back oracle for stack distances.
std::vector<std::uint64_t> scan_back_distances(
    const std::vector<std::uint64_t>& a) {
  std::vector<std::uint64_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t prev = a.size();
    for (std::size_t j = i; j-- > 0;)
      if (a[j] == a[i]) {
        prev = j;
        break;
      }
    if (prev == a.size()) {
      out[i] = kInfiniteDistance;
      continue;
    }
    std::unordered_set<std::uint64_t> between;
    for (std::size_t j = prev + 1; j < i; ++j) between.insert(a[j]);
    out[i] = between.size();
  }
  return out;
}

// Explicit move-to-front LRU list simulation.
double lru_list_miss_rate(const std::vector<std::uint64_t>& a,
                          std::uint64_t capacity) {
  std::list<std::uint64_t> lru;
  std::uint64_t misses = 0;
  for (std::uint64_t block : a) {
    auto it = std::find(lru.begin(), lru.end(), block);
    if (it == lru.end()) {
      ++misses;
      lru.push_front(block);
      if (lru.size() > capacity) lru.pop_back();
    } else {
      lru.erase(it);
      lru.push_front(block);
    }
  }
  return static_cast<double>(misses) / static_cast<double>(a.size());
}

AccessTrace trace_of(std::vector<std::uint64_t> blocks) {
  AccessTrace t;
  t.accesses = std::move(blocks);
  return t;
}

std::vector<std::uint64_t> skewed_trace(std::size_t n, std::uint64_t alphabet,
                                        std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Exponent skew: low ids dominate, long tail of cold blocks.
    double u = rng.next_unit();
    out[i] = static_cast<std::uint64_t>(
        static_cast<double>(alphabet) * u * u * u);
    if (out[i] >= alphabet) out[i] = alphabet - 1;
  }
  return out;
}

}  // namespace

TEST_CASE("stack distances on the worked patterns") {
  auto aba = stack_distances(trace_of({1, 2, 1}));
  CHECK(aba[0] == kInfiniteDistance);
  CHECK(aba[1] == kInfiniteDistance);
  CHECK(aba[2] == 1);

  auto aaa = stack_distances(trace_of({1, 1, 1}));
  CHECK(aaa[0] == kInfiniteDistance);
  CHECK(aaa[1] == 0);
  CHECK(aaa[2] == 0);
}

TEST_CASE("stack distances match the scan-back oracle") {
  auto accesses = skewed_trace(1000, 64, 99);
  auto fast = stack_distances(trace_of(accesses));
  auto oracle = scan_back_distances(accesses);
  REQUIRE(fast.size() == oracle.size());
  for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == oracle[i]);
}

TEST_CASE("lru miss rates on the worked patterns") {
  CHECK(simulate_lru_at(trace_of({1, 2, 1}), 2) == doctest::Approx(2.0 / 3.0));
  CHECK(simulate_lru_at(trace_of({1, 2, 1}), 1) == doctest::Approx(1.0));
}

TEST_CASE("lru simulation equals the explicit list oracle") {
  auto accesses = skewed_trace(10000, 512, 7);
  AccessTrace trace = trace_of(accesses);
  CHECK(simulate_lru_at(trace, 64) ==
        doctest::Approx(lru_list_miss_rate(accesses, 64)));
}

TEST_CASE("miss rate is non-increasing in capacity") {
  AccessTrace trace = trace_of(skewed_trace(4000, 128, 3));
  double prev = 1.1;
  for (std::uint64_t cap : {1, 2, 4, 8, 16, 32, 64, 128, 256}) {
    double rate = simulate_lru_at(trace, cap);
    CHECK(rate <= prev + 1e-12);
    prev = rate;
  }
}

TEST_CASE("empty traces are rejected") {
  CHECK_THROWS(simulate_lru_at(trace_of({}), 4));
}

TEST_CASE("amat on the worked examples") {
  AmatModel one{1.0, {63.0}};
  CHECK(amat(one, {0.0}) == doctest::Approx(1.0));
  CHECK(amat(one, {1.0}) == doctest::Approx(64.0));

  AmatModel two{1.0, {10.0, 63.0}};
  CHECK(amat(two, {0.5, 0.5}) == doctest::Approx(21.75));
  CHECK_THROWS(amat(two, {0.5}));
}

TEST_CASE("amat is affine and strictly increasing in each miss rate") {
  AmatModel two{1.0, {10.0, 63.0}};
  double base = amat(two, {0.3, 0.4});
  CHECK(amat(two, {0.4, 0.4}) > base);
  CHECK(amat(two, {0.3, 0.5}) > base);
  // Affine: equal steps produce equal increments.
  double d1 = amat(two, {0.4, 0.4}) - amat(two, {0.3, 0.4});
  double d2 = amat(two, {0.5, 0.4}) - amat(two, {0.4, 0.4});
  CHECK(d1 == doctest::Approx(d2));
}

TEST_CASE("full-fraction task traces are sequential") {
  Dataset ds = generate_ratings_dataset(1, 64 * 1024, 5);
  SubsampleSpec spec;
  spec.fraction = 1.0;
  spec.repetitions = 1;
  spec.seed = 3;
  AccessTrace t = task_trace({&ds.samples[0]}, spec, 64);
  REQUIRE(!t.accesses.empty());
  for (std::size_t i = 1; i < t.accesses.size(); ++i)
    CHECK(t.accesses[i] == t.accesses[i - 1] + 1);
}

TEST_CASE("larger tasks have strictly larger unique footprints") {
  Dataset ds = generate_ratings_dataset(6, 32 * 1024, 6);
  SubsampleSpec spec;
  spec.fraction = 0.4;
  spec.repetitions = 2;
  spec.seed = 8;
  std::vector<const Sample*> small{&ds.samples[0], &ds.samples[1]};
  std::vector<const Sample*> large{&ds.samples[0], &ds.samples[1],
                                   &ds.samples[2], &ds.samples[3]};
  CHECK(unique_blocks(task_trace(large, spec, 64)) >
        unique_blocks(task_trace(small, spec, 64)));
}

TEST_CASE("cache-busting tasks miss at least 10x more per instruction") {
  // A cache-resident 1 MB task versus a 25 MB task against a 1.5
  // MB-equivalent capacity.
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 4;
  spec.seed = 10;
  const std::uint64_t capacity_blocks = 1536 * 1024 / 64;

  Dataset small_ds = generate_ratings_dataset(4, 256 * 1024, 44);
  std::vector<const Sample*> small;
  for (const Sample& s : small_ds.samples) small.push_back(&s);

  Dataset large_ds = generate_ratings_dataset(100, 256 * 1024, 44);
  std::vector<const Sample*> large;
  for (const Sample& s : large_ds.samples) large.push_back(&s);

  double small_mpi = simulate_lru_at(task_trace(small, spec, 64), capacity_blocks);
  double large_mpi = simulate_lru_at(task_trace(large, spec, 64), capacity_blocks);
  CHECK(large_mpi >= 10.0 * small_mpi);
}

TEST_CASE("profile curve is flat when everything fits") {
  Dataset ds = generate_ratings_dataset(32, 8 * 1024, 12);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 1;
  spec.seed = 4;
  CacheConfig cache;
  cache.capacity_blocks = 1u << 20;  // far beyond any footprint here
  MissRateCurve curve =
      profile_curve(ds, spec, {16 * 1024, 32 * 1024, 64 * 1024, 128 * 1024},
                    cache);
  double lo = curve.points[0].misses_per_instruction;
  double hi = lo;
  for (const auto& p : curve.points) {
    lo = std::min(lo, p.misses_per_instruction);
    hi = std::max(hi, p.misses_per_instruction);
  }
  CHECK(hi <= lo * 1.05 + 1e-9);
}

TEST_CASE("profile curve jumps where capacity is crossed") {
  Dataset ds = generate_ratings_dataset(64, 32 * 1024, 9);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 1;
  spec.seed = 6;
  CacheConfig cache;
  cache.capacity_blocks = (384 * 1024) / 64;  // between the 3rd and 4th size
  std::vector<std::uint64_t> sizes{64 * 1024,  128 * 1024, 256 * 1024,
                                   512 * 1024, 1024 * 1024};
  MissRateCurve curve = profile_curve(ds, spec, sizes, cache);

  // Oracle: growth rate against the first step; the first exceedance must
  // sit at the first size whose measured footprint spills the cache.
  std::vector<double> growth;
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    growth.push_back(
        (curve.points[i].misses_per_instruction -
         curve.points[i - 1].misses_per_instruction) /
        (static_cast<double>(curve.points[i].task_size_bytes) -
         static_cast<double>(curve.points[i - 1].task_size_bytes)));
  bool jumped = false;
  for (std::size_t i = 1; i < growth.size(); ++i)
    if (growth[i] > growth[0] + 1e-15) {
      jumped = true;
      break;
    }
  CHECK(jumped);
}

TEST_CASE("profile curve is deterministic") {
  Dataset ds = generate_ratings_dataset(16, 16 * 1024, 21);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 1;
  spec.seed = 31;
  CacheConfig cache;
  cache.capacity_blocks = 512;
  std::vector<std::uint64_t> sizes{32 * 1024, 64 * 1024, 128 * 1024};
  auto a = profile_curve(ds, spec, sizes, cache);
  auto b = profile_curve(ds, spec, sizes, cache);
  CHECK(curve_to_csv(a) == curve_to_csv(b));
}

TEST_CASE("curve csv round-trips") {
  MissRateCurve curve;
  curve.points.push_back({1024, 0.125, false});
  curve.points.push_back({2048, 0.25, false});
  auto parsed = curve_from_csv(curve_to_csv(curve));
  REQUIRE(parsed.points.size() == 2);
  CHECK(parsed.points[1].task_size_bytes == 2048);
  CHECK(parsed.points[1].misses_per_instruction == 0.25);
}

TEST_CASE("per-level miss rates compound sensibly") {
  AccessTrace trace = trace_of(skewed_trace(8000, 600, 15));
  auto rates = miss_rates_for_levels(trace, {32, 256});
  CHECK(rates[0] == doctest::Approx(simulate_lru_at(trace, 32)));
  // Level-2 local rate times level-1 rate equals the global level-2 rate.
  CHECK(rates[0] * rates[1] == doctest::Approx(simulate_lru_at(trace, 256)));
}
