#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ptlab/model.hpp"
#include "ptlab/tensor.hpp"

namespace ptlab {

struct TrainConfig {
  double peak_lr = 1e-3;        // 1/step
  int64_t batch_size = 16;      // examples per optimizer step
  double warmup_ratio = 0.1;    // fraction of total steps
  int64_t epochs = 1;
  int64_t max_seq_len = 256;    // tokens
  double beta = 5.0;            // DPO KL penalty coefficient
  uint64_t seed = 0;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;  // 0 disables clipping
  bool length_normalize = true; // DPO length-normalized variant

  void validate() const;  // throws Error(config)
};

struct StepRecord {
  int64_t step;  // 1-based
  double lr;
  double loss;
  double grad_norm;  // pre-clip global norm
};

struct TrainLog {
  std::vector<StepRecord> steps;
  double wall_time_s = 0.0;
  std::string final_checkpoint;
  TrainConfig config;

  void save_jsonl(const std::filesystem::path& path) const;    // one record per step
  void save_summary(const std::filesystem::path& path) const;  // final summary JSON
};

// Piecewise-linear schedule: 0 -> peak over W = round(warmup_ratio * total)
// steps, then peak -> 0 at total. W = 0 starts at peak.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

// The per-example update-scale statistic: lr / batch_size.
double lr_bs_ratio(double lr, int64_t batch_size);

// Renders lr/bs scaled by 10^scale_exp the way the hyperparameter tables
// print it: three decimals, trailing zeros trimmed ("11.25", "0.097", "100").
std::string render_ratio(double lr, int64_t batch_size, int scale_exp);

// Decoupled-weight-decay adaptive-moment optimizer (beta1 0.9, beta2 0.999,
// eps 1e-8) with bias correction.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t t = 0;

  static AdamState init(const NamedTensors& params);
};

double global_grad_norm(const NamedTensors& params);  // float64 accumulation

// Applies global-norm clipping (when cfg.grad_clip_norm > 0), then the
// moment update, in place on params. Throws Error(train) on NaN gradients.
void optimizer_step(NamedTensors& params, AdamState& state, double lr, const TrainConfig& cfg);

// Builds the scalar batch loss on the given graph. Step is 1-based.
using BatchLossFn = std::function<Tensor(Graph&, std::span<const size_t> batch, int64_t step)>;

// Shared loop: per epoch, a seed-derived shuffle is split into
// floor(n / batch_size) full batches; total_steps = epochs * that count.
// Deterministic for a fixed config and dataset.
TrainLog run_training_loop(NamedTensors& params, size_t n_examples, const TrainConfig& cfg,
                           const BatchLossFn& loss_fn);

}  // namespace ptlab
