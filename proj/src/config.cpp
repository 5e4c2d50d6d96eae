#include "warpadam/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "warpadam/error.hpp"

namespace warpadam {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view line = text.substr(start, end == std::string_view::npos ? text.size() - start : end - start);
    ++line_no;
    const std::string t = trim(line);
    if (!t.empty() && t[0] != '#') {
      const auto eq = t.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
      }
      cfg.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw UsageError("empty config key");
  values_[key] = value;
}

void Config::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string* Config::raw(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void Config::touch(const std::string& key) const { used_.insert(key); }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(key);
  const std::string out = v ? *v : fallback;
  effective_[key] = out;
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  const std::string* v = raw(key);
  double out = fallback;
  if (v) {
    char* end = nullptr;
    errno = 0;
    out = std::strtod(v->c_str(), &end);
    if (v->empty() || *end != '\0' || errno == ERANGE) {
      throw UsageError("config key '" + key + "': not a number: '" + *v + "'");
    }
  }
  effective_[key] = format_double(out);
  return out;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const std::string* v = raw(key);
  std::int64_t out = fallback;
  if (v) {
    char* end = nullptr;
    errno = 0;
    out = std::strtoll(v->c_str(), &end, 10);
    if (v->empty() || *end != '\0' || errno == ERANGE) {
      throw UsageError("config key '" + key + "': not an integer: '" + *v + "'");
    }
  }
  effective_[key] = std::to_string(out);
  return out;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  const std::int64_t v = get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw UsageError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = raw(key);
  std::uint64_t out = fallback;
  if (v) {
    char* end = nullptr;
    errno = 0;
    out = std::strtoull(v->c_str(), &end, 10);
    if (v->empty() || *end != '\0' || errno == ERANGE || (*v)[0] == '-') {
      throw UsageError("config key '" + key + "': not an unsigned integer: '" + *v + "'");
    }
  }
  effective_[key] = std::to_string(out);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = raw(key);
  bool out = fallback;
  if (v) {
    if (*v == "true" || *v == "1" || *v == "yes") {
      out = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      out = false;
    } else {
      throw UsageError("config key '" + key + "': not a boolean: '" + *v + "'");
    }
  }
  effective_[key] = out ? "true" : "false";
  return out;
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  const std::string* v = raw(key);
  std::vector<std::string> out = fallback;
  if (v) {
    out.clear();
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
  }
  std::string joined;
  for (std::size_t i = 0; i < out.size(); ++i) joined += (i ? "," : "") + out[i];
  effective_[key] = joined;
  return out;
}

std::vector<std::size_t> Config::get_index_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : get_list(key, {})) {
    char* end = nullptr;
    const auto v = std::strtoull(item.c_str(), &end, 10);
    if (*end != '\0' || item[0] == '-') throw UsageError("config key '" + key + "': bad index '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

std::string Config::manifest_text() const {
  std::string out;
  for (const auto& [k, v] : effective_) out += k + "=" + v + "\n";
  return out;
}

}  // namespace warpadam
