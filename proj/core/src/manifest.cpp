#include "ptlab/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ptlab/digest.hpp"
#include "ptlab/error.hpp"

namespace ptlab {

namespace {
using json = nlohmann::json;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
  return hex64(h);
}

std::string iso8601_utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::save(const std::filesystem::path& path) const {
  json j{{"subcommand", subcommand}, {"config", config},     {"inputs", inputs},
         {"artifacts", artifacts},   {"code_version", code_version}, {"seed", seed},
         {"started_at", started_at}, {"finished_at", finished_at}};
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + tmp.string());
    f << j.dump(2) << '\n';
    if (!f) throw Error(ErrorCategory::io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::io, "corrupt manifest " + path.string() + ": " + e.what());
  }
  RunManifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    m.code_version = j.at("code_version").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::io, "corrupt manifest " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace ptlab
