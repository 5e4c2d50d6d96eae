#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace warpadam {

// Flat key=value settings with dotted section prefixes (inner.eta=0.001).
// Lines starting with '#' and blank lines are ignored. Every key read through
// a getter is remembered with its effective value so the full resolved
// configuration can be written back out as a manifest.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "config");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // Parses "key=value".
  void set_assignment(std::string_view assignment);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated; an empty value is an empty list.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<std::size_t> get_index_list(const std::string& key) const;

  // Marks a key as consumed without reading it through a typed getter.
  void touch(const std::string& key) const;
  // Keys present in the input but never read.
  std::vector<std::string> unused_keys() const;

  const std::map<std::string, std::string>& effective() const { return effective_; }
  void record_effective(const std::string& key, const std::string& value) const { effective_[key] = value; }
  // Sorted key=value lines of every effective setting.
  std::string manifest_text() const;

 private:
  const std::string* raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  mutable std::map<std::string, std::string> effective_;
};

std::string format_double(double x);

}  // namespace warpadam
