#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptlab/model.hpp"
#include "ptlab/train.hpp"

namespace ptlab {

// Grid sweep over (learning rate, batch size). Each cell trains
// independently from the same base checkpoint with its own seed and is then
// evaluated on its task; cells are embarrassingly parallel.
struct SweepGrid {
  std::vector<double> lrs;       // ascending
  std::vector<int64_t> bss;      // ascending
  int seeds = 1;                 // seeds per cell
  TrainConfig base;              // lr/bs/seed overridden per cell
  std::vector<std::string> tasks{"copy", "modchain"};
  std::string stage = "sft";     // sft | dpo | rm
  size_t task_train_size = 512;  // per-task dataset sizes
  size_t task_eval_size = 128;

  void validate() const;
};

struct SweepCell {
  double lr = 0.0;
  int64_t bs = 0;
  double ratio = 0.0;  // lr / bs
  std::string task;
  uint64_t seed = 0;
  std::string metric;  // metric name, e.g. "exact_match"
  double value = 0.0;  // NaN on cell divergence
  int64_t steps = 0;
  double wall_s = 0.0;
  std::string note;  // divergence diagnostic, empty otherwise
};

struct SweepResult {
  SweepGrid grid;
  std::vector<SweepCell> cells;  // ordered by (task, lr, bs, seed)
};

// Trains and evaluates every (lr, bs, seed, task) cell. Divergent cells
// record metric = NaN with a note instead of aborting the grid. `jobs` > 1
// runs cells on a thread pool; results are identical to sequential runs.
SweepResult run_sweep(const SweepGrid& grid, const ModelCheckpoint& base, int jobs = 1);

// CSV with header lr,batch_size,ratio,task,seed,metric,value ; one row per
// cell, sorted by (task, lr, bs, seed), floats in full-precision scientific
// notation.
void emit_contour(const SweepResult& result, const std::filesystem::path& path);

// Parses emit_contour output back into the CSV-visible cell payload.
SweepResult parse_contour(const std::filesystem::path& path);

// Grid spec + environment fingerprint companion JSON.
void save_sweep_json(const SweepResult& result, const std::filesystem::path& path);

struct TaskAnalysis {
  std::string task;
  double best_lr = 0.0;     // argmax over seed-averaged metric,
  int64_t best_bs = 0;      // ties toward smaller lr then smaller bs
  double best_ratio = 0.0;
  double best_value = 0.0;
  double correlation = 0.0;  // Spearman rank corr. of log(ratio) vs mean metric
  bool degenerate = false;   // all metrics equal; correlation reported as 0
};

// Requires >= 2 distinct ratios in the result.
std::vector<TaskAnalysis> ratio_analysis(const SweepResult& result);

}  // namespace ptlab
