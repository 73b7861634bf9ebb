// ptlab - desk-scale post-training laboratory.
//
// One binary, subcommand style. Every run writes a manifest.json from which
// `ptlab rerun` reproduces it bit-identically.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptlab/audit.hpp"
#include "ptlab/config.hpp"
#include "ptlab/data.hpp"
#include "ptlab/digest.hpp"
#include "ptlab/dpo.hpp"
#include "ptlab/error.hpp"
#include "ptlab/manifest.hpp"
#include "ptlab/model.hpp"
#include "ptlab/rm.hpp"
#include "ptlab/sft.hpp"
#include "ptlab/sweep.hpp"
#include "ptlab/tasks.hpp"
#include "ptlab/train.hpp"
#include "ptlab/version.hpp"

namespace fs = std::filesystem;
using namespace ptlab;

namespace {

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::config: return 3;
    case ErrorCategory::io: return 4;
    case ErrorCategory::data: return 5;
    case ErrorCategory::train: return 6;
    case ErrorCategory::internal: return 7;
  }
  return 7;
}

// --set key=value overrides, applied on top of the config file
KvConfig resolve_config(const std::string& config_file, const std::vector<std::string>& sets,
                        const std::vector<std::string>& schema) {
  KvConfig kv;
  if (!config_file.empty()) kv = KvConfig::parse_file(config_file);
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCategory::usage, "--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  kv.check_schema(schema, config_file.empty() ? "<flags>" : config_file);
  return kv;
}

fs::path resolve_out_dir(std::string out, const std::string& subcommand) {
  if (out.empty()) {
    const char* root = std::getenv("PTLAB_OUT");
    if (!root || !*root)
      throw Error(ErrorCategory::usage,
                  "--out is required (or set the PTLAB_OUT output root)");
    out = std::string(root) + "/" + subcommand;
  }
  fs::create_directories(out);
  return out;
}

void add_input(RunManifest& m, const std::string& path) {
  if (!path.empty()) m.inputs[path] = digest_file(path);
}

RunManifest start_manifest(const std::string& subcommand) {
  RunManifest m;
  m.subcommand = subcommand;
  m.code_version = kVersion;
  m.started_at = iso8601_utc_now();
  return m;
}

void put_train_config(RunManifest& m, const KvConfig& kv, const TrainConfig& cfg,
                      const ModelConfig& mcfg) {
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  m.config["peak_lr"] = fmt(cfg.peak_lr);
  m.config["batch_size"] = std::to_string(cfg.batch_size);
  m.config["warmup_ratio"] = fmt(cfg.warmup_ratio);
  m.config["epochs"] = std::to_string(cfg.epochs);
  m.config["max_seq_len"] = std::to_string(cfg.max_seq_len);
  m.config["beta"] = fmt(cfg.beta);
  m.config["seed"] = std::to_string(cfg.seed);
  m.config["weight_decay"] = fmt(cfg.weight_decay);
  m.config["grad_clip_norm"] = fmt(cfg.grad_clip_norm);
  m.config["length_normalize"] = cfg.length_normalize ? "true" : "false";
  m.config["model.vocab_size"] = std::to_string(mcfg.vocab_size);
  m.config["model.d_model"] = std::to_string(mcfg.d_model);
  m.config["model.n_layers"] = std::to_string(mcfg.n_layers);
  m.config["model.n_heads"] = std::to_string(mcfg.n_heads);
  m.config["model.max_seq_len"] = std::to_string(mcfg.max_seq_len);
  m.config["model.seed"] = std::to_string(mcfg.seed);
  (void)kv;
}

KvConfig kv_from_manifest(const RunManifest& m) {
  KvConfig kv;
  for (const auto& [k, v] : m.config)
    if (k.rfind("input.", 0) != 0) kv.set(k, v);
  return kv;
}

// ---------------------------------------------------------------------------
// training subcommands
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;    // sft data / preference pairs
  std::string config;  // config file
  std::string init;    // checkpoint path, empty = random init from model.*
  std::string out;
  std::vector<std::string> sets;
  uint64_t seed = UINT64_MAX;  // UINT64_MAX = not overridden
};

void apply_seed_flag(TrainArgs& a) {
  if (a.seed != UINT64_MAX) a.sets.push_back("seed=" + std::to_string(a.seed));
}

ModelCheckpoint init_model(const std::string& init_path, const ModelConfig& mcfg,
                           const std::string& role) {
  if (!init_path.empty()) return load_checkpoint(init_path);
  return ModelCheckpoint::random_init(mcfg, role);
}

int run_sft_cmd(TrainArgs a) {
  apply_seed_flag(a);
  KvConfig kv = resolve_config(a.config, a.sets, train_config_schema());
  TrainConfig cfg = train_config_from(kv);
  ModelConfig mcfg = model_config_from(kv);
  fs::path out = resolve_out_dir(a.out, "sft");

  RunManifest m = start_manifest("sft");
  m.seed = cfg.seed;
  m.config["input.data"] = a.data;
  m.config["input.init"] = a.init;
  add_input(m, a.data);
  add_input(m, a.init);
  add_input(m, a.config);
  put_train_config(m, kv, cfg, mcfg);

  auto loaded = load_sft(a.data, cfg.max_seq_len);
  if (!loaded.diagnostics.empty())
    std::fprintf(stderr, "note: %zu malformed lines skipped\n", loaded.diagnostics.size());
  ModelCheckpoint base = init_model(a.init, mcfg, "policy");

  auto [model, log] = train_sft(base, loaded.examples, cfg);

  fs::path ckpt = out / "checkpoint.ptlb";
  save_checkpoint(model, ckpt);
  log.final_checkpoint = ckpt.string();
  log.save_jsonl(out / "trainlog.jsonl");
  log.save_summary(out / "summary.json");
  m.artifacts["checkpoint"] = ckpt.string();
  m.artifacts["trainlog"] = (out / "trainlog.jsonl").string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");
  std::printf("sft: %zu steps, final loss %.6f -> %s\n", log.steps.size(),
              log.steps.empty() ? 0.0 : log.steps.back().loss, ckpt.string().c_str());
  return 0;
}

int run_dpo_cmd(TrainArgs a) {
  apply_seed_flag(a);
  KvConfig kv = resolve_config(a.config, a.sets, train_config_schema());
  TrainConfig cfg = train_config_from(kv);
  ModelConfig mcfg = model_config_from(kv);
  fs::path out = resolve_out_dir(a.out, "dpo");
  if (a.init.empty())
    throw Error(ErrorCategory::usage, "dpo requires --init (the SFT policy checkpoint)");

  RunManifest m = start_manifest("dpo");
  m.seed = cfg.seed;
  m.config["input.pairs"] = a.data;
  m.config["input.init"] = a.init;
  add_input(m, a.data);
  add_input(m, a.init);
  add_input(m, a.config);
  put_train_config(m, kv, cfg, mcfg);

  auto loaded = load_pairs(a.data, cfg.max_seq_len);
  if (!loaded.diagnostics.empty())
    std::fprintf(stderr, "note: %zu malformed lines skipped\n", loaded.diagnostics.size());
  ModelCheckpoint init = load_checkpoint(a.init);

  auto [policy, log, cache] = train_dpo(init, loaded.pairs, cfg);
  if (!cache.skipped().empty())
    std::fprintf(stderr, "note: %zu pairs exceeded the context and were excluded\n",
                 cache.skipped().size());

  fs::path ckpt = out / "checkpoint.ptlb";
  save_checkpoint(policy, ckpt);
  cache.save(out / "ref_cache.ptlb");
  log.final_checkpoint = ckpt.string();
  log.save_jsonl(out / "trainlog.jsonl");
  log.save_summary(out / "summary.json");
  m.artifacts["checkpoint"] = ckpt.string();
  m.artifacts["ref_cache"] = (out / "ref_cache.ptlb").string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");
  std::printf("dpo: %zu steps, final loss %.6f -> %s\n", log.steps.size(),
              log.steps.empty() ? 0.0 : log.steps.back().loss, ckpt.string().c_str());
  return 0;
}

int run_rm_cmd(TrainArgs a) {
  apply_seed_flag(a);
  KvConfig kv = resolve_config(a.config, a.sets, train_config_schema());
  TrainConfig cfg = train_config_from(kv);
  ModelConfig mcfg = model_config_from(kv);
  fs::path out = resolve_out_dir(a.out, "rm");

  RunManifest m = start_manifest("rm");
  m.seed = cfg.seed;
  m.config["input.pairs"] = a.data;
  m.config["input.init"] = a.init;
  add_input(m, a.data);
  add_input(m, a.init);
  add_input(m, a.config);
  put_train_config(m, kv, cfg, mcfg);

  auto loaded = load_pairs(a.data, cfg.max_seq_len);
  if (!loaded.diagnostics.empty())
    std::fprintf(stderr, "note: %zu malformed lines skipped\n", loaded.diagnostics.size());
  ModelCheckpoint init = init_model(a.init, mcfg, "reward-backbone");

  auto [rm, log] = train_rm(init, loaded.pairs, cfg);

  fs::path ckpt = out / "rm.ptlb";
  save_reward_model(rm, ckpt);
  log.final_checkpoint = ckpt.string();
  log.save_jsonl(out / "trainlog.jsonl");
  log.save_summary(out / "summary.json");
  m.artifacts["reward_model"] = ckpt.string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");
  std::printf("rm: %zu steps, final loss %.6f -> %s\n", log.steps.size(),
              log.steps.empty() ? 0.0 : log.steps.back().loss, ckpt.string().c_str());
  return 0;
}

int run_rm_eval_cmd(const std::string& rm_path, const std::string& pairs_path) {
  RewardModel rm = load_reward_model(rm_path);
  auto loaded = load_pairs(pairs_path, rm.backbone.config().max_seq_len);
  RmAccuracy acc = rm_accuracy(rm, loaded.pairs);
  std::printf("%s\n", rm_accuracy_json(acc).c_str());
  return 0;
}

int run_sweep_cmd(const std::string& grid_file, const std::string& stage,
                  const std::string& tasks_csv, const std::string& init,
                  const std::string& out_str, int jobs, std::vector<std::string> sets,
                  uint64_t seed) {
  if (seed != UINT64_MAX) sets.push_back("seed=" + std::to_string(seed));
  if (!stage.empty()) sets.push_back("stage=" + stage);
  if (!tasks_csv.empty()) sets.push_back("tasks=" + tasks_csv);
  KvConfig kv = resolve_config(grid_file, sets, sweep_grid_schema());
  SweepGrid grid = sweep_grid_from(kv);
  ModelConfig mcfg = model_config_from(kv);
  fs::path out = resolve_out_dir(out_str, "sweep");

  RunManifest m = start_manifest("sweep");
  m.seed = grid.base.seed;
  m.config["input.grid"] = grid_file;
  m.config["input.init"] = init;
  add_input(m, grid_file);
  add_input(m, init);
  for (const auto& [k, v] : kv.values()) m.config[k] = v;

  const std::string role = grid.stage == "rm" ? "reward-backbone" : "policy";
  ModelCheckpoint base = init_model(init, mcfg, role);
  if (grid.stage != "rm") base.set_role("policy");

  SweepResult result = run_sweep(grid, base, jobs);
  emit_contour(result, out / "contour.csv");
  save_sweep_json(result, out / "sweep.json");
  m.artifacts["contour"] = (out / "contour.csv").string();
  m.artifacts["sweep_json"] = (out / "sweep.json").string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");

  std::printf("sweep: %zu cells -> %s\n", result.cells.size(), (out / "contour.csv").string().c_str());
  try {
    for (const auto& ta : ratio_analysis(result))
      std::printf("  task %-10s best lr=%g bs=%lld ratio=%g metric=%.4f corr(log ratio)=%+.3f%s\n",
                  ta.task.c_str(), ta.best_lr, static_cast<long long>(ta.best_bs), ta.best_ratio,
                  ta.best_value, ta.correlation, ta.degenerate ? " (degenerate)" : "");
  } catch (const Error&) {
    // single-ratio grids have no analysis
  }
  return 0;
}

int run_gen_task_cmd(const std::string& kind, size_t train_size, size_t eval_size, uint64_t seed,
                     int min_diff, int max_diff, const std::string& out_str) {
  TaskSpec spec;
  spec.kind = kind;
  spec.train_size = train_size;
  spec.eval_size = eval_size;
  spec.seed = seed;
  spec.min_difficulty = min_diff;
  spec.max_difficulty = max_diff;
  fs::path out = resolve_out_dir(out_str, "task");

  RunManifest m = start_manifest("gen-task");
  m.seed = seed;
  m.config["kind"] = kind;
  m.config["train_size"] = std::to_string(train_size);
  m.config["eval_size"] = std::to_string(eval_size);
  m.config["min_difficulty"] = std::to_string(min_diff);
  m.config["max_difficulty"] = std::to_string(max_diff);
  m.config["seed"] = std::to_string(seed);

  TaskData task = gen_task(spec);
  export_task(task, out);
  m.artifacts["train"] = (out / "train.jsonl").string();
  m.artifacts["eval"] = (out / "eval.jsonl").string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");
  std::printf("gen-task: %zu train / %zu eval -> %s\n", task.train.size(),
              task.eval_items.size(), out.string().c_str());
  return 0;
}

int run_gen_pairs_cmd(size_t n, uint64_t seed, const std::string& out_str) {
  fs::path out = resolve_out_dir(out_str, "pairs");
  auto pairs = gen_preference_pairs(n, seed);

  std::ofstream f(out / "pairs.jsonl", std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot write " + (out / "pairs.jsonl").string());
  for (const auto& p : pairs) {
    // pairs are raw-prompt format; store the literal strings
    f << "{\"prompt\":\"" << p.prompt.text << "\",\"chosen\":\"" << detokenize(p.chosen)
      << "\",\"rejected\":\"" << detokenize(p.rejected) << "\",\"id\":\"" << p.pair_id << "\"}\n";
  }

  RunManifest m = start_manifest("gen-pairs");
  m.seed = seed;
  m.config["n"] = std::to_string(n);
  m.config["seed"] = std::to_string(seed);
  m.artifacts["pairs"] = (out / "pairs.jsonl").string();
  m.finished_at = iso8601_utc_now();
  m.save(out / "manifest.json");
  std::printf("gen-pairs: %zu pairs -> %s\n", pairs.size(), (out / "pairs.jsonl").string().c_str());
  return 0;
}

int run_eval_cmd(const std::string& ckpt, const std::string& task_dir) {
  ModelCheckpoint model = load_checkpoint(ckpt);
  auto items = load_eval_items(fs::path(task_dir) / "eval.jsonl");
  double acc = evaluate(model, items);
  std::printf("{\"accuracy\": %.6f, \"n_items\": %zu}\n", acc, items.size());
  return 0;
}

int run_audit_contamination_cmd(const std::vector<std::string>& train,
                                const std::vector<std::string>& bench, int n, bool exact,
                                const std::vector<std::string>& fields,
                                const std::string& json_out) {
  std::vector<fs::path> train_paths(train.begin(), train.end());
  std::vector<fs::path> bench_paths(bench.begin(), bench.end());
  ContaminationReport report = audit_report(train_paths, bench_paths, n, exact, fields);
  std::printf("%s", render_contamination_table(report).c_str());
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::trunc);
    if (!f) throw Error(ErrorCategory::io, "cannot write " + json_out);
    f << contamination_report_json(report) << '\n';
  }
  return 0;
}

int run_audit_languages_cmd(const std::string& data, const std::vector<std::string>& fields) {
  auto docs = load_jsonl_texts(data, fields);
  if (docs.empty()) throw Error(ErrorCategory::data, "no documents in " + data);
  auto detector = make_heuristic_detector();
  auto shares = language_distribution(docs, *detector);
  std::printf("%s", render_language_table(shares).c_str());
  return 0;
}

int run_rerun_cmd(const std::string& manifest_path, const std::string& out);

int dispatch_manifest(const RunManifest& m, const std::string& out) {
  auto cfg_sets = [&]() {
    std::vector<std::string> sets;
    for (const auto& [k, v] : m.config)
      if (k.rfind("input.", 0) != 0) sets.push_back(k + "=" + v);
    return sets;
  };
  auto input = [&](const std::string& key) {
    auto it = m.config.find("input." + key);
    return it == m.config.end() ? std::string() : it->second;
  };

  // verify the recorded input digests before re-running
  for (const auto& [path, digest] : m.inputs) {
    if (!fs::exists(path))
      throw Error(ErrorCategory::io, "rerun: input missing: " + path);
    if (digest_file(path) != digest)
      throw Error(ErrorCategory::data, "rerun: input changed since the original run: " + path);
  }

  if (m.subcommand == "sft" || m.subcommand == "dpo" || m.subcommand == "rm") {
    TrainArgs a;
    a.data = input(m.subcommand == "sft" ? "data" : "pairs");
    a.init = input("init");
    a.out = out;
    a.sets = cfg_sets();
    if (m.subcommand == "sft") return run_sft_cmd(a);
    if (m.subcommand == "dpo") return run_dpo_cmd(a);
    return run_rm_cmd(a);
  }
  if (m.subcommand == "sweep")
    return run_sweep_cmd(input("grid"), "", "", input("init"), out, 1, cfg_sets(), UINT64_MAX);
  if (m.subcommand == "gen-task")
    return run_gen_task_cmd(m.config.at("kind"), std::stoull(m.config.at("train_size")),
                            std::stoull(m.config.at("eval_size")), m.seed,
                            std::stoi(m.config.at("min_difficulty")),
                            std::stoi(m.config.at("max_difficulty")), out);
  if (m.subcommand == "gen-pairs")
    return run_gen_pairs_cmd(std::stoull(m.config.at("n")), m.seed, out);
  throw Error(ErrorCategory::usage, "rerun does not support subcommand '" + m.subcommand + "'");
}

int run_rerun_cmd(const std::string& manifest_path, const std::string& out) {
  RunManifest m = RunManifest::load(manifest_path);
  return dispatch_manifest(m, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ptlab - desk-scale post-training laboratory (SFT / DPO / reward modeling, "
               "LR-BS sweeps, dataset audits)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // ---- sft / dpo / rm ----
  TrainArgs sft_args, dpo_args, rm_args;
  auto add_train_flags = [](CLI::App* cmd, TrainArgs& a, const char* data_flag,
                            const char* data_desc) {
    cmd->add_option(data_flag, a.data, data_desc)->required();
    cmd->add_option("--config", a.config, "key=value config file (schema in README)");
    cmd->add_option("--init", a.init, "initial checkpoint (.ptlb); default: random init");
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_option("--seed", a.seed, "RNG seed (overrides config)");
    cmd->add_option("--set", a.sets, "override a config key, e.g. --set peak_lr=1e-3")
        ->take_all();
  };

  CLI::App* sft_cmd = app.add_subcommand("sft", "supervised finetuning (completion-only loss)");
  add_train_flags(sft_cmd, sft_args, "--data", "SFT JSON-lines file (messages format)");

  CLI::App* dpo_cmd =
      app.add_subcommand("dpo", "direct preference optimization from an SFT policy");
  add_train_flags(dpo_cmd, dpo_args, "--pairs", "preference pairs JSON-lines file");

  CLI::App* rm_cmd = app.add_subcommand("rm", "pairwise reward-model training");
  add_train_flags(rm_cmd, rm_args, "--pairs", "preference pairs JSON-lines file");

  // ---- rm-eval ----
  std::string rme_rm, rme_pairs;
  CLI::App* rme_cmd = app.add_subcommand("rm-eval", "preference accuracy of a reward model");
  rme_cmd->add_option("--rm", rme_rm, "reward model (.ptlb)")->required();
  rme_cmd->add_option("--pairs", rme_pairs, "preference pairs JSON-lines file")->required();

  // ---- sweep ----
  std::string sw_grid, sw_stage, sw_tasks, sw_init, sw_out;
  int sw_jobs = 1;
  uint64_t sw_seed = UINT64_MAX;
  std::vector<std::string> sw_sets;
  CLI::App* sw_cmd = app.add_subcommand("sweep", "learning-rate x batch-size grid sweep");
  sw_cmd->add_option("--grid", sw_grid, "grid config file (lr/bs lists, seeds, stage, tasks)")
      ->required();
  sw_cmd->add_option("--stage", sw_stage, "sft | dpo | rm (overrides grid file)");
  sw_cmd->add_option("--tasks", sw_tasks, "comma list: copy,modchain (overrides grid file)");
  sw_cmd->add_option("--init", sw_init, "base checkpoint; default: random init from model.*");
  sw_cmd->add_option("--out", sw_out, "output directory");
  sw_cmd->add_option("--jobs", sw_jobs, "worker threads for cells (default 1)");
  sw_cmd->add_option("--seed", sw_seed, "base RNG seed (overrides grid file)");
  sw_cmd->add_option("--set", sw_sets, "override a grid config key")->take_all();

  // ---- audit ----
  CLI::App* audit_cmd = app.add_subcommand("audit", "dataset contamination and language audits");
  audit_cmd->require_subcommand(1);
  std::vector<std::string> ac_train, ac_bench, ac_fields;
  int ac_n = 8;
  bool ac_exact = false;
  std::string ac_json;
  CLI::App* ac_cmd =
      audit_cmd->add_subcommand("contamination", "n-gram overlap of benchmarks vs training data");
  ac_cmd->add_option("--train", ac_train, "training corpus JSON-lines file(s)")
      ->required()
      ->take_all();
  ac_cmd->add_option("--bench", ac_bench, "benchmark JSON-lines file(s)")->required()->take_all();
  ac_cmd->add_option("--n", ac_n, "tokens per gram (default 8)");
  ac_cmd->add_flag("--exact", ac_exact, "store gram strings instead of 64-bit hashes");
  ac_cmd->add_option("--fields", ac_fields,
                     "JSON fields concatenated as item text (default: text, else prompt+answer)")
      ->delimiter(',');
  ac_cmd->add_option("--json", ac_json, "also write the report as JSON to this path");

  std::string al_data;
  std::vector<std::string> al_fields;
  CLI::App* al_cmd = audit_cmd->add_subcommand("languages", "per-document language distribution");
  al_cmd->add_option("--data", al_data, "corpus JSON-lines file")->required();
  al_cmd->add_option("--fields", al_fields, "JSON fields to read (default: text)")->delimiter(',');

  // ---- gen-task / gen-pairs ----
  std::string gt_kind = "copy", gt_out;
  size_t gt_train = 2000, gt_eval = 200;
  uint64_t gt_seed = 1;
  int gt_min = 0, gt_max = 0;
  CLI::App* gt_cmd = app.add_subcommand("gen-task", "generate a synthetic task dataset");
  gt_cmd->add_option("--kind", gt_kind, "modchain | copy")->required();
  gt_cmd->add_option("--train-size", gt_train, "training examples");
  gt_cmd->add_option("--eval-size", gt_eval, "held-out eval items");
  gt_cmd->add_option("--seed", gt_seed, "RNG seed");
  gt_cmd->add_option("--min-difficulty", gt_min, "chain/payload length lower bound (0 = default)");
  gt_cmd->add_option("--max-difficulty", gt_max, "chain/payload length upper bound (0 = default)");
  gt_cmd->add_option("--out", gt_out, "output directory");

  size_t gp_n = 2000;
  uint64_t gp_seed = 1;
  std::string gp_out;
  CLI::App* gp_cmd =
      app.add_subcommand("gen-pairs", "generate a separable synthetic preference set");
  gp_cmd->add_option("--n", gp_n, "number of pairs");
  gp_cmd->add_option("--seed", gp_seed, "RNG seed");
  gp_cmd->add_option("--out", gp_out, "output directory");

  // ---- eval ----
  std::string ev_ckpt, ev_task;
  CLI::App* ev_cmd = app.add_subcommand("eval", "greedy exact-match accuracy on a task dir");
  ev_cmd->add_option("--ckpt", ev_ckpt, "model checkpoint (.ptlb)")->required();
  ev_cmd->add_option("--task", ev_task, "task directory from gen-task")->required();

  // ---- rerun ----
  std::string rr_manifest, rr_out;
  CLI::App* rr_cmd = app.add_subcommand("rerun", "reproduce a run from its manifest.json");
  rr_cmd->add_option("--manifest", rr_manifest, "manifest.json of the original run")->required();
  rr_cmd->add_option("--out", rr_out, "output directory for the reproduced run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion")
      return app.exit(e);
    std::fprintf(stderr, "error: category=usage %s\n", e.what());
    return 2;
  }

  try {
    if (*sft_cmd) return run_sft_cmd(sft_args);
    if (*dpo_cmd) return run_dpo_cmd(dpo_args);
    if (*rm_cmd) return run_rm_cmd(rm_args);
    if (*rme_cmd) return run_rm_eval_cmd(rme_rm, rme_pairs);
    if (*sw_cmd)
      return run_sweep_cmd(sw_grid, sw_stage, sw_tasks, sw_init, sw_out, sw_jobs, sw_sets,
                           sw_seed);
    if (*ac_cmd) return run_audit_contamination_cmd(ac_train, ac_bench, ac_n, ac_exact, ac_fields,
                                                    ac_json);
    if (*al_cmd) return run_audit_languages_cmd(al_data, al_fields);
    if (*gt_cmd) return run_gen_task_cmd(gt_kind, gt_train, gt_eval, gt_seed, gt_min, gt_max,
                                         gt_out);
    if (*gp_cmd) return run_gen_pairs_cmd(gp_n, gp_seed, gp_out);
    if (*ev_cmd) return run_eval_cmd(ev_ckpt, ev_task);
    if (*rr_cmd) return run_rerun_cmd(rr_manifest, rr_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: category=%s %s\n", category_name(e.category()), e.what());
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: category=internal %s\n", e.what());
    return 7;
  }
  return 0;
}
