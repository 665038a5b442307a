// Flat `key = value` text files: job specs, simulator scenarios, CLI config.

#ifndef TINYMR_KV_CONFIG_HPP
#define TINYMR_KV_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

namespace tinymr {

class KvConfig {
 public:
  KvConfig() = default;

  // Parses `key = value` lines; '#' starts a comment; blank lines ignored.
  // Throws with the 1-based line number on malformed input.
  static KvConfig parse(const std::string& text);
  static KvConfig load(const std::string& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace tinymr

#endif  // TINYMR_KV_CONFIG_HPP
