#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ptlab/data.hpp"
#include "ptlab/model.hpp"

namespace ptlab {

// Two synthetic task families:
//   modchain - multi-step modular arithmetic ("7+4+9 mod 10 = " -> "0"),
//              difficulty = chain length range
//   copy     - echo a lowercase payload ("seq abz ; " -> "abz"),
//              difficulty = payload length range
struct TaskSpec {
  std::string kind = "copy";  // "modchain" | "copy"
  size_t train_size = 2000;
  size_t eval_size = 200;
  int min_difficulty = 0;  // 0 = kind default
  int max_difficulty = 0;
  uint64_t seed = 1;

  void validate() const;
  void apply_kind_defaults();  // modchain [2,4], copy [1,8]
};

struct EvalItem {
  std::string prompt;
  std::string gold;
};

struct TaskData {
  TaskSpec spec;
  std::vector<SftExample> train;
  std::vector<EvalItem> eval_items;
};

// Deterministic per seed. Train and eval instances are disjoint by
// construction (distinct prompt hashes); requesting more instances than the
// task space holds is an Error(data).
TaskData gen_task(const TaskSpec& spec);

// Recomputes a modchain gold from its prompt string (independent checker).
std::string modchain_gold(const std::string& prompt);

// Greedy generation, stripped at EOS, exact string match against gold.
double evaluate(const ModelCheckpoint& model, std::span<const EvalItem> eval_items);

// Separable synthetic preference set: chosen completions are lowercase
// words, rejected ones digit strings, over shared prompts.
std::vector<PreferencePair> gen_preference_pairs(size_t n, uint64_t seed);

// Preference pairs derived from a task: chosen = gold completion,
// rejected = corrupted gold.
std::vector<PreferencePair> pairs_from_task(const TaskData& task, uint64_t seed);

// dir/task.json, dir/train.jsonl (SFT messages format, usable by the audit
// tooling), dir/eval.jsonl ({"prompt","gold"} lines).
void export_task(const TaskData& task, const std::filesystem::path& dir);
// Reads eval.jsonl back for `eval` runs.
std::vector<EvalItem> load_eval_items(const std::filesystem::path& path);

}  // namespace ptlab
