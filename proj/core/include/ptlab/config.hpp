#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ptlab/model.hpp"
#include "ptlab/sweep.hpp"
#include "ptlab/train.hpp"

namespace ptlab {

// Key-value config files:
//   # comment
//   peak_lr = 1e-3
//   lr = 1e-4, 3e-4, 1e-3        (comma lists where a list is expected)
// Unknown keys are schema violations, Error(config).
class KvConfig {
 public:
  KvConfig() = default;
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;
  std::vector<std::string> get_str_list(const std::string& key) const;

  // Throws Error(config) when a key outside `allowed` is present.
  void check_schema(const std::vector<std::string>& allowed, const std::string& origin) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

// Schema keys shared by the training subcommands (TrainConfig fields plus
// the model.* block used when initializing from scratch).
const std::vector<std::string>& train_config_schema();
TrainConfig train_config_from(const KvConfig& kv);
ModelConfig model_config_from(const KvConfig& kv);

const std::vector<std::string>& sweep_grid_schema();
SweepGrid sweep_grid_from(const KvConfig& kv);

}  // namespace ptlab
