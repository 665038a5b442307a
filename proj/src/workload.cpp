#include "tinymr/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tinymr {

namespace {

// Little-endian scalar IO; payload files and frames share this layout.
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t double_bits(double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  return v;
}

double bits_double(std::uint64_t v) {
  double d;
  std::memcpy(&d, &v, sizeof d);
  return d;
}

std::uint64_t round_to_record(std::uint64_t bytes) {
  std::uint64_t n = bytes / kRecordBytes;
  if (n == 0) n = 1;
  return n * kRecordBytes;
}

}  // namespace

const Sample& Dataset::sample_by_id(std::uint64_t id) const {
  for (const Sample& s : samples)
    if (s.id == id) return s;
  throw std::runtime_error("unknown sample id " + std::to_string(id));
}

std::uint64_t Dataset::avg_sample_size_bytes() const {
  if (samples.empty()) return 0;
  return total_bytes / samples.size();
}

void Dataset::rebuild_manifest(const std::string& locator_prefix) {
  manifest.clear();
  total_bytes = 0;
  for (const Sample& s : samples) {
    manifest.push_back({s.id, s.size_bytes(), locator_prefix + std::to_string(s.id)});
    total_bytes += s.size_bytes();
  }
}

void SubsampleSpec::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("fraction must be in (0,1]");
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("confidence must be in (0,1)");
}

std::uint32_t subsample_draw_count(double fraction, std::uint32_t n_records) {
  auto k = static_cast<std::uint32_t>(
      std::ceil(fraction * static_cast<double>(n_records)));
  if (k < 1) k = 1;
  if (k > n_records) k = n_records;
  return k;
}

std::vector<std::uint32_t> subsample_indices(std::uint64_t seed,
                                             std::uint64_t sample_id,
                                             std::uint32_t repetition,
                                             std::uint32_t n_records,
                                             double fraction) {
  std::uint32_t k = subsample_draw_count(fraction, n_records);
  SplitMix64 rng(derive_stream(seed, sample_id, repetition));
  return sample_without_replacement(n_records, k, rng);
}

IntermediateResult subsample(const Sample& sample, const SubsampleSpec& spec,
                             std::uint32_t repetition) {
  spec.validate();
  if (sample.records.empty()) throw std::runtime_error("empty sample");
  if (repetition >= spec.repetitions)
    throw std::invalid_argument("repetition out of range");

  auto idx = subsample_indices(spec.seed, sample.id, repetition,
                               static_cast<std::uint32_t>(sample.records.size()),
                               spec.fraction);
  // Ascending-index summation keeps the mean bit-identical regardless of
  // draw order.
  std::sort(idx.begin(), idx.end());
  double sum = 0.0;
  for (std::uint32_t i : idx) sum += sample.records[i].value;

  IntermediateResult r;
  r.sample_id = sample.id;
  r.repetition_index = repetition;
  r.count = idx.size();
  r.statistic = sum / static_cast<double>(idx.size());
  return r;
}

JobStatistic reduce_combine(const std::vector<IntermediateResult>& parts) {
  if (parts.empty()) throw std::runtime_error("nothing to reduce");

  JobStatistic out;
  out.parts = parts;
  std::sort(out.parts.begin(), out.parts.end(),
            [](const IntermediateResult& a, const IntermediateResult& b) {
              if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
              return a.repetition_index < b.repetition_index;
            });

  // Count-weighted fold in canonical order.
  std::uint64_t sid = out.parts.front().sample_id;
  double ssum = 0.0;
  std::uint64_t scount = 0;
  double gsum = 0.0;
  std::uint64_t gcount = 0;
  auto flush = [&] {
    out.per_sample[sid] = {ssum / static_cast<double>(scount), scount};
  };
  for (const IntermediateResult& p : out.parts) {
    if (p.sample_id != sid) {
      flush();
      sid = p.sample_id;
      ssum = 0.0;
      scount = 0;
    }
    ssum += p.statistic * static_cast<double>(p.count);
    scount += p.count;
    gsum += p.statistic * static_cast<double>(p.count);
    gcount += p.count;
  }
  flush();
  out.aggregate = gsum / static_cast<double>(gcount);
  out.total_count = gcount;
  return out;
}

JobStatistic merge_statistics(const JobStatistic& a, const JobStatistic& b) {
  std::vector<IntermediateResult> all = a.parts;
  all.insert(all.end(), b.parts.begin(), b.parts.end());
  return reduce_combine(all);
}

Dataset generate_heavy_tailed_dataset(std::uint32_t n_samples,
                                      std::uint64_t mean_size_bytes,
                                      std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument(
        "need at least 2 samples to place the 15x and 7x outliers");
  if (mean_size_bytes < kRecordBytes)
    throw std::invalid_argument("mean_size_bytes below one record");

  // Log-normal sized so that P(size > 5x mean) ~ 1%:
  // (ln 5 + sigma^2/2) / sigma = z_{0.99}  =>  sigma ~ 0.8459.
  constexpr double kSigma = 0.8459;
  const double mean = static_cast<double>(mean_size_bytes);
  const double mu = std::log(mean) - kSigma * kSigma / 2.0;

  Dataset ds;
  ds.samples.resize(n_samples);
  SplitMix64 size_rng(derive_stream(seed, 0x5a3e5));
  for (std::uint32_t i = 0; i < n_samples; ++i) {
    double bytes;
    if (i == 0) {
      bytes = 15.0 * mean;
    } else if (i == 1) {
      bytes = 7.0 * mean;
    } else {
      // Box-Muller from two independent uniforms.
      double u1 = size_rng.next_unit();
      double u2 = size_rng.next_unit();
      while (u1 <= 0.0) u1 = size_rng.next_unit();
      double z = std::sqrt(-2.0 * std::log(u1)) *
                 std::cos(2.0 * M_PI * u2);
      bytes = std::exp(mu + kSigma * z);
    }
    Sample& s = ds.samples[i];
    s.id = i + 1;
    std::uint64_t n_records =
        round_to_record(static_cast<std::uint64_t>(bytes)) / kRecordBytes;
    s.records.resize(n_records);
    SplitMix64 value_rng(derive_stream(seed, s.id, 0x7ec0));
    for (std::uint64_t r = 0; r < n_records; ++r) {
      s.records[r].key = value_rng.next();
      s.records[r].value = value_rng.next_unit();
    }
  }
  ds.rebuild_manifest();
  return ds;
}

Dataset generate_ratings_dataset(std::uint32_t n_movies,
                                 std::uint64_t bytes_per_movie,
                                 std::uint64_t seed) {
  if (n_movies < 1) throw std::invalid_argument("n_movies must be >= 1");
  if (bytes_per_movie < kRecordBytes)
    throw std::invalid_argument("bytes_per_movie below one record");

  std::uint64_t n_records = round_to_record(bytes_per_movie) / kRecordBytes;
  Dataset ds;
  ds.samples.resize(n_movies);
  for (std::uint32_t i = 0; i < n_movies; ++i) {
    Sample& s = ds.samples[i];
    s.id = i + 1;
    s.records.resize(n_records);
    SplitMix64 rng(derive_stream(seed, s.id, 0x4a7e));
    for (std::uint64_t r = 0; r < n_records; ++r) {
      // Key packs (date, user id); value is a star rating in 1..5.
      std::uint32_t date = static_cast<std::uint32_t>(rng.next_below(2557));
      std::uint32_t user = static_cast<std::uint32_t>(rng.next_below(480189));
      s.records[r].key = (static_cast<std::uint64_t>(date) << 32) | user;
      s.records[r].value = static_cast<double>(1 + rng.next_below(5));
    }
  }
  ds.rebuild_manifest();
  return ds;
}

std::vector<std::uint8_t> encode_payload(const Sample& sample) {
  std::vector<std::uint8_t> out;
  out.reserve(sample.records.size() * kRecordBytes);
  for (const Record& r : sample.records) {
    put_u64(out, r.key);
    put_u64(out, double_bits(r.value));
  }
  return out;
}

std::vector<Record> decode_payload(const std::uint8_t* data, std::size_t len) {
  if (len % kRecordBytes != 0)
    throw std::runtime_error("payload length not a record multiple");
  std::vector<Record> records(len / kRecordBytes);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::uint8_t* p = data + i * kRecordBytes;
    records[i].key = get_u64(p);
    records[i].value = bits_double(get_u64(p + 8));
  }
  return records;
}

std::string manifest_to_text(const std::vector<ManifestEntry>& manifest) {
  std::ostringstream out;
  for (const ManifestEntry& e : manifest)
    out << e.id << ',' << e.size_bytes << ',' << e.locator << '\n';
  return out.str();
}

std::vector<ManifestEntry> manifest_from_text(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("malformed manifest line: " + line);
    ManifestEntry e;
    e.id = std::stoull(line.substr(0, c1));
    e.size_bytes = std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
    e.locator = line.substr(c2 + 1);
    out.push_back(std::move(e));
  }
  return out;
}

std::string save_dataset(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "samples");
  std::vector<ManifestEntry> manifest;
  for (const Sample& s : dataset.samples) {
    std::string rel = "samples/" + std::to_string(s.id) + ".bin";
    auto payload = encode_payload(s);
    std::ofstream f(fs::path(dir) / rel, std::ios::binary);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("failed to write " + rel);
    manifest.push_back({s.id, s.size_bytes(), rel});
  }
  std::string path = (fs::path(dir) / "manifest.csv").string();
  std::ofstream m(path);
  m << manifest_to_text(manifest);
  if (!m) throw std::runtime_error("failed to write manifest");
  return path;
}

Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream m(manifest_path);
  if (!m) throw std::runtime_error("unreadable manifest: " + manifest_path);
  std::stringstream buf;
  buf << m.rdbuf();
  Dataset ds;
  ds.manifest = manifest_from_text(buf.str());
  fs::path base = fs::path(manifest_path).parent_path();
  for (const ManifestEntry& e : ds.manifest) {
    std::ifstream f(base / e.locator, std::ios::binary);
    if (!f) throw std::runtime_error("missing sample payload: " + e.locator);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() != e.size_bytes)
      throw std::runtime_error("payload size mismatch for sample " +
                               std::to_string(e.id));
    Sample s;
    s.id = e.id;
    s.records = decode_payload(bytes.data(), bytes.size());
    ds.samples.push_back(std::move(s));
    ds.total_bytes += e.size_bytes;
  }
  return ds;
}

}  // namespace tinymr
