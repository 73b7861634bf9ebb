#include "ptlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ptlab/error.hpp"

namespace ptlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw Error(ErrorCategory::config,
              "config key '" + key + "': cannot parse '" + value + "' as " + want);
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
  KvConfig kv;
  kv.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCategory::config,
                  origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(ErrorCategory::config, origin + ":" + std::to_string(line_no) + ": empty key");
    kv.values_[key] = value;
  }
  return kv;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open config: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_string(buf.str(), path.string());
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, it->second, "a number");
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "an integer");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, it->second, "an integer");
  }
}

uint64_t KvConfig::get_uint(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) bad_value(key, it->second, "an unsigned integer");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, it->second, "an unsigned integer");
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> KvConfig::get_str_list(const std::string& key) const {
  auto it = values_.find(key);
  std::vector<std::string> out;
  if (it == values_.end()) return out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<double> KvConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_str_list(key)) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::logic_error&) {
      bad_value(key, s, "a number list");
    }
  }
  return out;
}

std::vector<int64_t> KvConfig::get_int_list(const std::string& key) const {
  std::vector<int64_t> out;
  for (const auto& s : get_str_list(key)) {
    try {
      out.push_back(std::stoll(s));
    } catch (const std::logic_error&) {
      bad_value(key, s, "an integer list");
    }
  }
  return out;
}

void KvConfig::check_schema(const std::vector<std::string>& allowed,
                            const std::string& origin) const {
  for (const auto& [key, value] : values_)
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCategory::config, origin + ": unknown config key '" + key + "'");
}

const std::vector<std::string>& train_config_schema() {
  static const std::vector<std::string> keys{
      "peak_lr",       "batch_size", "warmup_ratio",     "epochs",
      "max_seq_len",   "beta",       "seed",             "weight_decay",
      "grad_clip_norm", "length_normalize",
      "model.vocab_size", "model.d_model", "model.n_layers", "model.n_heads",
      "model.max_seq_len", "model.seed"};
  return keys;
}

TrainConfig train_config_from(const KvConfig& kv) {
  TrainConfig cfg;
  cfg.peak_lr = kv.get_double("peak_lr", cfg.peak_lr);
  cfg.batch_size = kv.get_int("batch_size", cfg.batch_size);
  cfg.warmup_ratio = kv.get_double("warmup_ratio", cfg.warmup_ratio);
  cfg.epochs = kv.get_int("epochs", cfg.epochs);
  cfg.max_seq_len = kv.get_int("max_seq_len", cfg.max_seq_len);
  cfg.beta = kv.get_double("beta", cfg.beta);
  cfg.seed = kv.get_uint("seed", cfg.seed);
  cfg.weight_decay = kv.get_double("weight_decay", cfg.weight_decay);
  cfg.grad_clip_norm = kv.get_double("grad_clip_norm", cfg.grad_clip_norm);
  cfg.length_normalize = kv.get_bool("length_normalize", cfg.length_normalize);
  cfg.validate();
  return cfg;
}

ModelConfig model_config_from(const KvConfig& kv) {
  ModelConfig cfg;
  cfg.vocab_size = kv.get_int("model.vocab_size", cfg.vocab_size);
  cfg.d_model = kv.get_int("model.d_model", cfg.d_model);
  cfg.n_layers = kv.get_int("model.n_layers", cfg.n_layers);
  cfg.n_heads = kv.get_int("model.n_heads", cfg.n_heads);
  cfg.max_seq_len = kv.get_int("model.max_seq_len", cfg.max_seq_len);
  cfg.seed = kv.get_uint("model.seed", cfg.seed);
  cfg.validate();
  return cfg;
}

const std::vector<std::string>& sweep_grid_schema() {
  static std::vector<std::string> keys = [] {
    std::vector<std::string> k = train_config_schema();
    for (const char* extra : {"lr", "bs", "seeds", "tasks", "stage", "task_train_size",
                              "task_eval_size"})
      k.push_back(extra);
    return k;
  }();
  return keys;
}

SweepGrid sweep_grid_from(const KvConfig& kv) {
  SweepGrid grid;
  grid.lrs = kv.get_double_list("lr");
  grid.bss = kv.get_int_list("bs");
  grid.seeds = static_cast<int>(kv.get_int("seeds", grid.seeds));
  if (kv.has("tasks")) grid.tasks = kv.get_str_list("tasks");
  grid.stage = kv.get_str("stage", grid.stage);
  grid.task_train_size = static_cast<size_t>(kv.get_int("task_train_size",
                                                        static_cast<int64_t>(grid.task_train_size)));
  grid.task_eval_size = static_cast<size_t>(kv.get_int("task_eval_size",
                                                       static_cast<int64_t>(grid.task_eval_size)));
  grid.base = train_config_from(kv);
  std::sort(grid.lrs.begin(), grid.lrs.end());
  std::sort(grid.bss.begin(), grid.bss.end());
  grid.validate();
  return grid;
}

}  // namespace ptlab
