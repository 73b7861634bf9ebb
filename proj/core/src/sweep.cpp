#include "ptlab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "ptlab/digest.hpp"
#include "ptlab/dpo.hpp"
#include "ptlab/error.hpp"
#include "ptlab/rm.hpp"
#include "ptlab/rng.hpp"
#include "ptlab/sft.hpp"
#include "ptlab/tasks.hpp"
#include "ptlab/version.hpp"

namespace ptlab {

namespace {

using json = nlohmann::json;

std::string metric_for_stage(const std::string& stage) {
  if (stage == "sft") return "exact_match";
  if (stage == "dpo") return "pair_accuracy";
  return "rm_accuracy";
}

// average ranks, ties shared
std::vector<double> ranks_of(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation; degenerate (zero-variance) axes report 0
double spearman(const std::vector<std::pair<double, double>>& points, bool* degenerate) {
  std::vector<double> xs, ys;
  for (const auto& [x, y] : points) {
    xs.push_back(x);
    ys.push_back(y);
  }
  auto rx = ranks_of(xs), ry = ranks_of(ys);
  const double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (degenerate) *degenerate = (syy == 0.0);
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct CellJob {
  size_t index;  // position in the output cell array
  double lr;
  int64_t bs;
  std::string task;
  uint64_t seed;      // seed index, 0-based
  uint64_t run_seed;  // derived training seed
};

// One independently trained and evaluated grid cell.
SweepCell run_cell(const SweepGrid& grid, const ModelCheckpoint& base, const CellJob& job,
                   const TaskData& task) {
  SweepCell cell;
  cell.lr = job.lr;
  cell.bs = job.bs;
  cell.ratio = lr_bs_ratio(job.lr, job.bs);
  cell.task = job.task;
  cell.seed = job.seed;
  cell.metric = metric_for_stage(grid.stage);

  TrainConfig cfg = grid.base;
  cfg.peak_lr = job.lr;
  cfg.batch_size = job.bs;
  cfg.seed = job.run_seed;

  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (grid.stage == "sft") {
      auto [model, log] = train_sft(base, task.train, cfg);
      cell.steps = static_cast<int64_t>(log.steps.size());
      cell.value = evaluate(model, task.eval_items);
    } else if (grid.stage == "dpo") {
      auto pairs = pairs_from_task(task, job.run_seed);
      const size_t held = std::min<size_t>(pairs.size() / 5, 200);
      std::vector<PreferencePair> train_pairs(pairs.begin(), pairs.end() - held);
      std::vector<PreferencePair> held_pairs(pairs.end() - held, pairs.end());
      ModelCheckpoint policy_base = base.clone();
      policy_base.set_role("policy");
      auto [policy, log, cache] = train_dpo(policy_base, train_pairs, cfg);
      cell.steps = static_cast<int64_t>(log.steps.size());
      cell.value = pair_accuracy(policy, held_pairs, cfg.length_normalize);
    } else if (grid.stage == "rm") {
      auto pairs = pairs_from_task(task, job.run_seed);
      const size_t held = std::min<size_t>(pairs.size() / 5, 200);
      std::vector<PreferencePair> train_pairs(pairs.begin(), pairs.end() - held);
      std::vector<PreferencePair> held_pairs(pairs.end() - held, pairs.end());
      auto [rm, log] = train_rm(base, train_pairs, cfg);
      cell.steps = static_cast<int64_t>(log.steps.size());
      cell.value = rm_accuracy(rm, held_pairs).overall;
    } else {
      throw Error(ErrorCategory::config, "unknown sweep stage '" + grid.stage + "'");
    }
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::train) {
      // divergence is data, not a crash
      cell.value = std::numeric_limits<double>::quiet_NaN();
      cell.note = e.what();
    } else {
      throw;
    }
  }
  cell.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

}  // namespace

void SweepGrid::validate() const {
  if (lrs.empty() || bss.empty()) throw Error(ErrorCategory::config, "sweep grid axes are empty");
  for (double lr : lrs)
    if (!(lr > 0)) throw Error(ErrorCategory::config, "sweep lr values must be > 0");
  for (int64_t bs : bss)
    if (bs < 1) throw Error(ErrorCategory::config, "sweep bs values must be >= 1");
  if (seeds < 1) throw Error(ErrorCategory::config, "sweep seeds must be >= 1");
  if (tasks.empty()) throw Error(ErrorCategory::config, "sweep needs at least one task");
  if (stage != "sft" && stage != "dpo" && stage != "rm")
    throw Error(ErrorCategory::config, "sweep stage must be sft|dpo|rm");
}

SweepResult run_sweep(const SweepGrid& grid, const ModelCheckpoint& base, int jobs) {
  grid.validate();

  // task datasets are shared read-only across cells
  std::vector<TaskData> task_data;
  for (const auto& name : grid.tasks) {
    TaskSpec spec;
    spec.kind = name;
    spec.train_size = grid.task_train_size;
    spec.eval_size = grid.task_eval_size;
    spec.seed = mix_seed(grid.base.seed, fnv1a64(name));
    task_data.push_back(gen_task(spec));
  }

  // cells ordered by (task, lr, bs, seed); output order is independent of
  // completion order
  std::vector<CellJob> jobs_list;
  for (size_t ti = 0; ti < grid.tasks.size(); ++ti)
    for (size_t li = 0; li < grid.lrs.size(); ++li)
      for (size_t bi = 0; bi < grid.bss.size(); ++bi)
        for (int si = 0; si < grid.seeds; ++si) {
          CellJob job;
          job.index = jobs_list.size();
          job.lr = grid.lrs[li];
          job.bs = grid.bss[bi];
          job.task = grid.tasks[ti];
          job.seed = static_cast<uint64_t>(si);
          job.run_seed = mix_seed(mix_seed(grid.base.seed, fnv1a64(grid.tasks[ti])),
                                  (li << 20) ^ (bi << 10) ^ static_cast<uint64_t>(si));
          jobs_list.push_back(job);
        }

  SweepResult result;
  result.grid = grid;
  result.cells.resize(jobs_list.size());

  auto task_of = [&](const std::string& name) -> const TaskData& {
    for (size_t i = 0; i < grid.tasks.size(); ++i)
      if (grid.tasks[i] == name) return task_data[i];
    throw Error(ErrorCategory::internal, "unregistered task " + name);
  };

  if (jobs <= 1) {
    for (const auto& job : jobs_list)
      result.cells[job.index] = run_cell(grid, base, job, task_of(job.task));
  } else {
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= jobs_list.size()) return;
        try {
          result.cells[jobs_list[i].index] =
              run_cell(grid, base, jobs_list[i], task_of(jobs_list[i].task));
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  return result;
}

void emit_contour(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + path.string());
  f << "lr,batch_size,ratio,task,seed,metric,value\n";
  char buf[256];
  for (const auto& c : result.cells) {
    std::snprintf(buf, sizeof(buf), "%.17e,%lld,%.17e,%s,%llu,%s,%.17e\n", c.lr,
                  static_cast<long long>(c.bs), c.ratio, c.task.c_str(),
                  static_cast<unsigned long long>(c.seed), c.metric.c_str(), c.value);
    f << buf;
  }
}

SweepResult parse_contour(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "lr,batch_size,ratio,task,seed,metric,value")
    throw Error(ErrorCategory::data, "not a contour CSV: " + path.string());

  SweepResult result;
  size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string part;
    while (std::getline(ss, part, ',')) parts.push_back(part);
    if (parts.size() != 7)
      throw Error(ErrorCategory::data,
                  path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
    SweepCell c;
    c.lr = std::stod(parts[0]);
    c.bs = std::stoll(parts[1]);
    c.ratio = std::stod(parts[2]);
    c.task = parts[3];
    c.seed = std::stoull(parts[4]);
    c.metric = parts[5];
    c.value = std::stod(parts[6]);
    result.cells.push_back(std::move(c));
  }
  return result;
}

void save_sweep_json(const SweepResult& result, const std::filesystem::path& path) {
  json grid_j{{"lr", result.grid.lrs},
              {"bs", result.grid.bss},
              {"seeds", result.grid.seeds},
              {"tasks", result.grid.tasks},
              {"stage", result.grid.stage},
              {"task_train_size", result.grid.task_train_size},
              {"task_eval_size", result.grid.task_eval_size},
              {"base_seed", result.grid.base.seed},
              {"warmup_ratio", result.grid.base.warmup_ratio},
              {"epochs", result.grid.base.epochs},
              {"beta", result.grid.base.beta}};
  json env{{"version", kVersion}, {"compiler", __VERSION__}, {"cells", result.cells.size()}};
  json j{{"grid", grid_j}, {"environment", env}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
}

std::vector<TaskAnalysis> ratio_analysis(const SweepResult& result) {
  // collect distinct ratios
  std::vector<double> ratios;
  for (const auto& c : result.cells) ratios.push_back(c.ratio);
  std::sort(ratios.begin(), ratios.end());
  ratios.erase(std::unique(ratios.begin(), ratios.end()), ratios.end());
  if (ratios.size() < 2)
    throw Error(ErrorCategory::data, "ratio_analysis needs >= 2 distinct lr/bs ratios");

  // group by task
  std::vector<std::string> tasks;
  for (const auto& c : result.cells)
    if (std::find(tasks.begin(), tasks.end(), c.task) == tasks.end()) tasks.push_back(c.task);

  std::vector<TaskAnalysis> out;
  for (const auto& task : tasks) {
    // seed-average each (lr, bs)
    struct CellAgg {
      double lr;
      int64_t bs;
      double sum = 0.0;
      size_t count = 0;
    };
    std::vector<CellAgg> aggs;
    for (const auto& c : result.cells) {
      if (c.task != task) continue;
      auto it = std::find_if(aggs.begin(), aggs.end(),
                             [&](const CellAgg& a) { return a.lr == c.lr && a.bs == c.bs; });
      if (it == aggs.end()) {
        aggs.push_back({c.lr, c.bs});
        it = aggs.end() - 1;
      }
      it->sum += c.value;
      it->count += 1;
    }

    TaskAnalysis ta;
    ta.task = task;
    bool first = true;
    std::vector<std::pair<double, double>> points;  // log(ratio), mean metric
    for (const auto& a : aggs) {
      const double mean = a.sum / static_cast<double>(a.count);
      const double ratio = lr_bs_ratio(a.lr, a.bs);
      points.emplace_back(std::log(ratio), mean);
      // argmax with ties toward smaller lr, then smaller bs
      bool better = false;
      if (first || mean > ta.best_value) {
        better = true;
      } else if (mean == ta.best_value) {
        if (a.lr < ta.best_lr || (a.lr == ta.best_lr && a.bs < ta.best_bs)) better = true;
      }
      if (better) {
        ta.best_lr = a.lr;
        ta.best_bs = a.bs;
        ta.best_ratio = ratio;
        ta.best_value = mean;
        first = false;
      }
    }

    ta.correlation = spearman(points, &ta.degenerate);
    out.push_back(std::move(ta));
  }
  return out;
}

}  // namespace ptlab
