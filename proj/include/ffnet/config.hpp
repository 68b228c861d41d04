#pragma once

// Flat key-value configuration with sections.
//
//   # comment
//   [synth]
//   n = 20000
//   seed = 7
//   [model]
//   proc_hidden = 512, 2048
//
// Keys are addressed as "section.key". Keys before any section header live in the
// empty section and are addressed by the bare key. Later assignments override earlier ones.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ffnet {

class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_text(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  /// Canonical text form: sections sorted, keys sorted. parse(serialize()) == *this.
  std::string serialize() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  friend bool operator==(const Config&, const Config&) = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ffnet
