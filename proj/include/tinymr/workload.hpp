// Subsampling workload model: samples, datasets, the subsample map function,
// the order-insensitive reduce combiner, and synthetic dataset generators.
//
// A sample is all records sharing one unique key (one family's genome, one
// movie's ratings). Records are fixed 16-byte units: an 8-byte key and an
// 8-byte numeric value, little-endian on disk and on the wire.

#ifndef TINYMR_WORKLOAD_HPP
#define TINYMR_WORKLOAD_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tinymr/rng.hpp"

namespace tinymr {

constexpr std::uint64_t kRecordBytes = 16;

struct Record {
  std::uint64_t key = 0;
  double value = 0.0;
};

struct Sample {
  std::uint64_t id = 0;
  std::vector<Record> records;

  std::uint64_t size_bytes() const { return records.size() * kRecordBytes; }
};

struct ManifestEntry {
  std::uint64_t id = 0;
  std::uint64_t size_bytes = 0;
  std::string locator;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<ManifestEntry> manifest;  // one entry per sample, same order
  std::uint64_t total_bytes = 0;

  const Sample& sample_by_id(std::uint64_t id) const;
  std::uint64_t avg_sample_size_bytes() const;
  void rebuild_manifest(const std::string& locator_prefix = "mem:");
};

struct SubsampleSpec {
  double fraction = 1.0;       // portion of records drawn per sample, (0,1]
  std::uint32_t repetitions = 1;
  double confidence = 0.98;    // target confidence level, (0,1)
  std::uint64_t seed = 0;

  void validate() const;
};

struct IntermediateResult {
  std::uint64_t sample_id = 0;
  std::uint32_t repetition_index = 0;
  double statistic = 0.0;  // mean of the selected values
  std::uint64_t count = 0; // records used
};

struct PerSampleStat {
  double mean = 0.0;
  std::uint64_t count = 0;
};

// Combined job output. Holds the canonical (sorted) part list so that any
// grouping of partial combines can be merged and recombined exactly.
struct JobStatistic {
  std::vector<IntermediateResult> parts;        // sorted by (sample_id, rep)
  std::map<std::uint64_t, PerSampleStat> per_sample;
  double aggregate = 0.0;                       // count-weighted overall mean
  std::uint64_t total_count = 0;
};

// Number of records a subsample of this spec draws from an n-record sample.
std::uint32_t subsample_draw_count(double fraction, std::uint32_t n_records);

// Record indices drawn for (seed, sample_id, repetition), in draw order.
// Shared by subsample() and the cache model's trace synthesis so both see
// the same access pattern.
std::vector<std::uint32_t> subsample_indices(std::uint64_t seed,
                                             std::uint64_t sample_id,
                                             std::uint32_t repetition,
                                             std::uint32_t n_records,
                                             double fraction);

IntermediateResult subsample(const Sample& sample, const SubsampleSpec& spec,
                             std::uint32_t repetition);

JobStatistic reduce_combine(const std::vector<IntermediateResult>& parts);

// Merge two combined outputs. Recombines the canonical union, so
// merge(reduce_combine(a), reduce_combine(b)) == reduce_combine(a + b)
// bit-for-bit.
JobStatistic merge_statistics(const JobStatistic& a, const JobStatistic& b);

// Heavy-tailed synthetic dataset (log-normal sizes around mean_size_bytes,
// sigma such that P(size > 5x mean) ~ 1%) with mandatory 15x and 7x outlier
// samples.
Dataset generate_heavy_tailed_dataset(std::uint32_t n_samples,
                                      std::uint64_t mean_size_bytes,
                                      std::uint64_t seed);

// Movie-ratings-shaped dataset: every sample is one movie's (date, user,
// rating) tuples of ~bytes_per_movie.
Dataset generate_ratings_dataset(std::uint32_t n_movies,
                                 std::uint64_t bytes_per_movie,
                                 std::uint64_t seed);

// Flat binary payload of fixed-width little-endian records.
std::vector<std::uint8_t> encode_payload(const Sample& sample);
std::vector<Record> decode_payload(const std::uint8_t* data, std::size_t len);

// Manifest file: one `id,size_bytes,locator` line per sample, LF-terminated.
std::string manifest_to_text(const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> manifest_from_text(const std::string& text);

// Writes manifest + per-sample payload files under dir; returns manifest path.
std::string save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace tinymr

#endif  // TINYMR_WORKLOAD_HPP
