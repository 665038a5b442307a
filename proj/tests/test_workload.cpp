#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tinymr/rng.hpp"
#include "tinymr/stats.hpp"
#include "tinymr/workload.hpp"

using namespace tinymr;

namespace {

// Brute-force oracle: the exhaustive mean of a sample's values.
double exhaustive_mean(const Sample& s) {
  double sum = 0.0;
  for (const Record& r : s.records) sum += r.value;
  return sum / static_cast<double>(s.records.size());
}

double exhaustive_variance(const Sample& s) {
  double mu = exhaustive_mean(s);
  double acc = 0.0;
  for (const Record& r : s.records) acc += (r.value - mu) * (r.value - mu);
  return acc / static_cast<double>(s.records.size());
}

Sample make_sample(std::uint64_t id, std::uint32_t n, std::uint64_t seed) {
  Sample s;
  s.id = id;
  s.records.resize(n);
  SplitMix64 rng(derive_stream(seed, id));
  for (std::uint32_t i = 0; i < n; ++i) {
    s.records[i].key = i;
    s.records[i].value = rng.next_unit();
  }
  return s;
}

}  // namespace

TEST_CASE("full-fraction subsample equals the exhaustive mean") {
  Sample s = make_sample(3, 1000, 7);
  SubsampleSpec spec;
  spec.fraction = 1.0;
  spec.repetitions = 1;
  spec.seed = 99;
  auto r = subsample(s, spec, 0);
  CHECK(r.statistic == doctest::Approx(exhaustive_mean(s)).epsilon(1e-12));
  CHECK(r.count == 1000);
}

TEST_CASE("subsample is deterministic") {
  Sample s = make_sample(11, 512, 3);
  SubsampleSpec spec;
  spec.fraction = 0.25;
  spec.repetitions = 8;
  spec.seed = 42;
  auto a = subsample(s, spec, 5);
  auto b = subsample(s, spec, 5);
  CHECK(a.statistic == b.statistic);
  CHECK(a.count == b.count);
  auto c = subsample(s, spec, 6);
  CHECK(a.statistic != c.statistic);
}

TEST_CASE("subsample rejects empty samples") {
  Sample s;
  s.id = 1;
  SubsampleSpec spec;
  CHECK_THROWS_WITH(subsample(s, spec, 0), "empty sample");
}

TEST_CASE("count never exceeds the drawn fraction bound") {
  Sample s = make_sample(4, 777, 5);
  SubsampleSpec spec;
  spec.fraction = 0.31;
  spec.repetitions = 4;
  spec.seed = 8;
  for (std::uint32_t rep = 0; rep < 4; ++rep) {
    auto r = subsample(s, spec, rep);
    CHECK(r.count <= static_cast<std::uint64_t>(
                         std::ceil(spec.fraction * s.records.size())));
  }
}

TEST_CASE("empirical CI coverage tracks the confidence level") {
  // 10^4-record sample, fraction 0.1, 1000 repetitions: the analytic 98%
  // interval must cover the true mean in at least 97% of trials.
  Sample s = make_sample(21, 10000, 13);
  double mu = exhaustive_mean(s);
  double var = exhaustive_variance(s);
  SubsampleSpec spec;
  spec.fraction = 0.1;
  spec.repetitions = 1000;
  spec.confidence = 0.98;
  spec.seed = 2024;
  std::uint32_t covered = 0;
  for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep) {
    auto r = subsample(s, spec, rep);
    double hw = subsample_ci_halfwidth(var, s.records.size(), r.count,
                                       spec.confidence);
    if (std::abs(r.statistic - mu) <= hw) ++covered;
  }
  CHECK(covered >= 970);
}

TEST_CASE("reduce of a single part is that part") {
  IntermediateResult p{5, 0, 0.25, 100};
  auto stat = reduce_combine({p});
  CHECK(stat.aggregate == 0.25);
  CHECK(stat.total_count == 100);
  CHECK(stat.per_sample.at(5).mean == 0.25);
}

TEST_CASE("reduce_combine is order-insensitive bit-for-bit") {
  std::vector<IntermediateResult> parts;
  SplitMix64 rng(17);
  for (std::uint64_t sid = 1; sid <= 20; ++sid)
    for (std::uint32_t rep = 0; rep < 5; ++rep)
      parts.push_back({sid, rep, rng.next_unit(), 50 + rng.next_below(100)});
  auto direct = reduce_combine(parts);

  std::vector<IntermediateResult> shuffled = parts;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
  auto permuted = reduce_combine(shuffled);
  CHECK(direct.aggregate == permuted.aggregate);
  CHECK(direct.total_count == permuted.total_count);
  for (const auto& [sid, st] : direct.per_sample) {
    CHECK(permuted.per_sample.at(sid).mean == st.mean);
    CHECK(permuted.per_sample.at(sid).count == st.count);
  }
}

TEST_CASE("reduce matches a sequential fold oracle over 400 parts") {
  Dataset ds = generate_heavy_tailed_dataset(20, 4096, 55);
  SubsampleSpec spec;
  spec.fraction = 0.5;
  spec.repetitions = 20;
  spec.seed = 5;
  std::vector<IntermediateResult> parts;
  for (const Sample& s : ds.samples)
    for (std::uint32_t rep = 0; rep < spec.repetitions; ++rep)
      parts.push_back(subsample(s, spec, rep));
  REQUIRE(parts.size() == 400);

  // Oracle: sort canonically, fold weighted sums sequentially.
  std::vector<IntermediateResult> sorted = parts;
  std::sort(sorted.begin(), sorted.end(),
            [](const IntermediateResult& a, const IntermediateResult& b) {
              if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
              return a.repetition_index < b.repetition_index;
            });
  double sum = 0.0;
  std::uint64_t count = 0;
  for (const auto& p : sorted) {
    sum += p.statistic * static_cast<double>(p.count);
    count += p.count;
  }
  double expected = sum / static_cast<double>(count);

  auto stat = reduce_combine(parts);
  CHECK(stat.aggregate == expected);
  CHECK(stat.total_count == count);
}

TEST_CASE("partition-then-merge equals direct combination") {
  SplitMix64 rng(31);
  std::vector<IntermediateResult> parts;
  for (std::uint64_t sid = 1; sid <= 12; ++sid)
    for (std::uint32_t rep = 0; rep < 4; ++rep)
      parts.push_back({sid, rep, rng.next_unit(), 10 + rng.next_below(90)});
  auto direct = reduce_combine(parts);

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<IntermediateResult> g1, g2, g3;
    for (const auto& p : parts) {
      switch (rng.next_below(3)) {
        case 0: g1.push_back(p); break;
        case 1: g2.push_back(p); break;
        default: g3.push_back(p); break;
      }
    }
    if (g1.empty() || g2.empty() || g3.empty()) continue;
    auto merged = merge_statistics(merge_statistics(reduce_combine(g1),
                                                    reduce_combine(g2)),
                                   reduce_combine(g3));
    CHECK(merged.aggregate == direct.aggregate);
    CHECK(merged.total_count == direct.total_count);
  }
}

TEST_CASE("reduce of nothing is an error") {
  CHECK_THROWS_WITH(reduce_combine({}), "nothing to reduce");
}

TEST_CASE("heavy-tailed generator matches the study shape") {
  // 400 families at a 589 KiB mean is roughly the 230 MB study dataset;
  // the forced outliers are exactly 15x and 7x the mean.
  const std::uint64_t mean = 603136;  // 589 KiB
  Dataset ds = generate_heavy_tailed_dataset(400, mean, 3);
  CHECK(ds.samples.size() == 400);
  const double total_target = 400.0 * static_cast<double>(mean);
  CHECK(ds.total_bytes > static_cast<std::uint64_t>(total_target * 0.8));
  CHECK(ds.total_bytes < static_cast<std::uint64_t>(total_target * 1.2));
  std::uint64_t max_size = 0;
  for (const auto& e : ds.manifest) max_size = std::max(max_size, e.size_bytes);
  CHECK(max_size == 15 * mean);
}

TEST_CASE("two samples leaves exactly the outliers") {
  Dataset ds = generate_heavy_tailed_dataset(2, 16384, 9);
  REQUIRE(ds.samples.size() == 2);
  CHECK(ds.samples[0].size_bytes() == 15 * 16384);
  CHECK(ds.samples[1].size_bytes() == 7 * 16384);
  CHECK_THROWS(generate_heavy_tailed_dataset(1, 16384, 9));
}

TEST_CASE("generators are byte-deterministic under a fixed seed") {
  Dataset a = generate_heavy_tailed_dataset(16, 8192, 77);
  Dataset b = generate_heavy_tailed_dataset(16, 8192, 77);
  CHECK(manifest_to_text(a.manifest) == manifest_to_text(b.manifest));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    CHECK(encode_payload(a.samples[i]) == encode_payload(b.samples[i]));

  Dataset r1 = generate_ratings_dataset(5, 4096, 3);
  Dataset r2 = generate_ratings_dataset(5, 4096, 3);
  for (std::size_t i = 0; i < r1.samples.size(); ++i)
    CHECK(encode_payload(r1.samples[i]) == encode_payload(r2.samples[i]));
}

TEST_CASE("ratings dataset hits the per-movie size") {
  const std::uint64_t per_movie = 118 * 1024;
  Dataset ds = generate_ratings_dataset(64, per_movie, 4);
  CHECK(ds.samples.size() == 64);
  for (const auto& e : ds.manifest) CHECK(e.size_bytes == 120832);
  for (const Sample& s : ds.samples)
    for (const Record& r : s.records) {
      CHECK(r.value >= 1.0);
      CHECK(r.value <= 5.0);
    }
  // At the full catalogue scale the total lands on ~2 GiB: the movie count
  // is itself ~2 GiB / 118 KiB.
  const double full_total = 17770.0 * 120832.0;
  CHECK(full_total / static_cast<double>(1ull << 31) ==
        doctest::Approx(1.0).epsilon(0.01));
  CHECK(static_cast<double>(1ull << 31) / 120832.0 ==
        doctest::Approx(17770.0).epsilon(0.01));

  Dataset one = generate_ratings_dataset(1, 4096, 5);
  CHECK(one.samples.size() == 1);
}

TEST_CASE("manifest round-trips through text") {
  Dataset ds = generate_heavy_tailed_dataset(8, 4096, 2);
  auto text = manifest_to_text(ds.manifest);
  auto parsed = manifest_from_text(text);
  REQUIRE(parsed.size() == ds.manifest.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].id == ds.manifest[i].id);
    CHECK(parsed[i].size_bytes == ds.manifest[i].size_bytes);
    CHECK(parsed[i].locator == ds.manifest[i].locator);
  }
}

TEST_CASE("datasets round-trip through disk") {
  namespace fs = std::filesystem;
  Dataset ds = generate_ratings_dataset(6, 2048, 8);
  fs::path dir = fs::temp_directory_path() / "tinymr_ds_roundtrip";
  fs::remove_all(dir);
  std::string manifest = save_dataset(ds, dir.string());
  Dataset loaded = load_dataset(manifest);
  REQUIRE(loaded.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    CHECK(encode_payload(loaded.samples[i]) == encode_payload(ds.samples[i]));
  CHECK(loaded.total_bytes == ds.total_bytes);
  fs::remove_all(dir);
}
