#include "ffnet/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "ffnet/error.hpp"

namespace ffnet {

namespace {

using nlohmann::json;

json record_to_json(const FileRecord& r) {
  return {{"role", r.role}, {"path", r.path}, {"sha256", r.sha256}, {"bytes", r.bytes}};
}

FileRecord record_from_json(const json& j) {
  return {j.at("role").get<std::string>(), j.at("path").get<std::string>(),
          j.at("sha256").get<std::string>(), j.at("bytes").get<std::uintmax_t>()};
}

struct DigestContext {
  DigestContext() : ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256 initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx.get(), data, n) != 1) throw Error("sha256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw Error("sha256 final failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) {
      os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return os.str();
  }

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestContext d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  DigestContext d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

FileRecord describe_file(std::string role, const std::filesystem::path& path,
                         const std::string& recorded_path) {
  return {std::move(role), recorded_path, sha256_file(path), std::filesystem::file_size(path)};
}

std::string RunManifest::to_json() const {
  json j;
  j["format"] = "ffnet-manifest 1";
  j["command"] = command;
  j["config_snapshot"] = config_snapshot;
  j["seed"] = seed;
  j["options"] = options;
  j["inputs"] = json::array();
  for (const auto& r : inputs) j["inputs"].push_back(record_to_json(r));
  j["outputs"] = json::array();
  for (const auto& r : outputs) j["outputs"].push_back(record_to_json(r));
  j["started_utc"] = started_utc;
  j["wall_seconds"] = wall_seconds;
  j["tool_version"] = tool_version;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "ffnet-manifest 1") throw ValidationError("unknown manifest format");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_snapshot = j.at("config_snapshot").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.options = j.at("options").get<std::map<std::string, std::string>>();
    for (const auto& r : j.at("inputs")) m.inputs.push_back(record_from_json(r));
    for (const auto& r : j.at("outputs")) m.outputs.push_back(record_from_json(r));
    m.started_utc = j.value("started_utc", "");
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.tool_version = j.value("tool_version", "");
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << m.to_json();
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return RunManifest::from_json(ss.str());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace ffnet
