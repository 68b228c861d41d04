#include "ffnet/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "ffnet/error.hpp"
#include "ffnet/nn_core.hpp"

namespace ffnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) {
        throw ParseError(line, "malformed section header '" + text + "'");
      }
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw ParseError(line, "empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = trim(text.substr(eq + 1));
  }
  return cfg;
}

Config Config::parse_text(const std::string& text) {
  std::istringstream ss(text);
  return parse(ss);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  return parse(in);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return nn::parse_double(it->second, key);
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("config key '" + key + "' must be a non-negative integer, got '" + s +
                          "'");
  }
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValidationError("config key '" + key + "' must be a boolean, got '" + s + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        std::vector<double> fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  for (std::string item; std::getline(ss, item, ',');) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    out.push_back(nn::parse_double(t, key));
  }
  return out;
}

std::string Config::serialize() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      sections[""][k] = v;
    } else {
      sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
  }
  std::ostringstream os;
  for (const auto& [name, kv] : sections) {
    if (!name.empty()) os << "[" << name << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  }
  return os.str();
}

}  // namespace ffnet
