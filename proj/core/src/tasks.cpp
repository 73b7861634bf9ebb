#include "ptlab/tasks.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ptlab/digest.hpp"
#include "ptlab/error.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

namespace {

using json = nlohmann::json;

constexpr int64_t kTaskSeqLen = 256;  // generous fixed budget for task examples

SftExample make_example(const std::string& prompt, const std::string& gold) {
  SftExample ex;
  ex.prompt = tokenize(prompt);
  ex.completion = tokenize(gold);
  ex.completion.ids.push_back(kEosId);
  return ex;
}

double space_size(const std::string& kind, int lo, int hi) {
  const double base = kind == "modchain" ? 10.0 : 26.0;
  double total = 0.0;
  for (int l = lo; l <= hi; ++l) total += std::pow(base, l);
  return total;
}

}  // namespace

void TaskSpec::apply_kind_defaults() {
  if (min_difficulty <= 0 && max_difficulty <= 0) {
    if (kind == "modchain") {
      min_difficulty = 2;
      max_difficulty = 4;
    } else {
      min_difficulty = 1;
      max_difficulty = 8;
    }
  }
}

void TaskSpec::validate() const {
  if (kind != "modchain" && kind != "copy")
    throw Error(ErrorCategory::config, "unknown task kind '" + kind + "' (modchain|copy)");
  if (train_size < 1 || eval_size < 1)
    throw Error(ErrorCategory::config, "task sizes must be >= 1");
  if (min_difficulty < 1 || max_difficulty < min_difficulty)
    throw Error(ErrorCategory::config, "bad difficulty range");
}

TaskData gen_task(const TaskSpec& spec_in) {
  TaskSpec spec = spec_in;
  spec.apply_kind_defaults();
  spec.validate();

  const double space = space_size(spec.kind, spec.min_difficulty, spec.max_difficulty);
  if (static_cast<double>(spec.train_size + spec.eval_size) > space)
    throw Error(ErrorCategory::data,
                "task space too small for disjoint train/eval: need " +
                    std::to_string(spec.train_size + spec.eval_size) + " distinct instances, " +
                    "space holds " + std::to_string(static_cast<uint64_t>(space)));

  Rng rng(spec.seed);
  auto draw = [&]() -> std::pair<std::string, std::string> {  // prompt, gold
    const int len = spec.min_difficulty +
                    static_cast<int>(rng.uniform_int(spec.max_difficulty - spec.min_difficulty + 1));
    if (spec.kind == "modchain") {
      std::string prompt;
      int sum = 0;
      for (int i = 0; i < len; ++i) {
        int d = static_cast<int>(rng.uniform_int(10));
        sum += d;
        if (i) prompt += '+';
        prompt += static_cast<char>('0' + d);
      }
      prompt += " mod 10 = ";
      return {prompt, std::string(1, static_cast<char>('0' + sum % 10))};
    }
    std::string payload;
    for (int i = 0; i < len; ++i)
      payload += static_cast<char>('a' + rng.uniform_int(26));
    return {"seq " + payload + " ; ", payload};
  };

  TaskData task;
  task.spec = spec;
  std::unordered_set<uint64_t> seen;
  const size_t max_attempts = 1000 * (spec.train_size + spec.eval_size);
  size_t attempts = 0;

  auto fill = [&](size_t count, bool is_train) {
    size_t made = 0;
    while (made < count) {
      if (++attempts > max_attempts)
        throw Error(ErrorCategory::data, "could not generate disjoint task instances (space too small)");
      auto [prompt, gold] = draw();
      if (!seen.insert(fnv1a64(prompt)).second) continue;
      if (is_train)
        task.train.push_back(make_example(prompt, gold));
      else
        task.eval_items.push_back(EvalItem{prompt, gold});
      made += 1;
    }
  };
  fill(spec.train_size, true);
  fill(spec.eval_size, false);
  return task;
}

std::string modchain_gold(const std::string& prompt) {
  int sum = 0;
  size_t i = 0;
  while (i < prompt.size() && (std::isdigit(static_cast<unsigned char>(prompt[i])) || prompt[i] == '+')) {
    if (prompt[i] != '+') sum += prompt[i] - '0';
    ++i;
  }
  if (prompt.substr(i) != " mod 10 = ")
    throw Error(ErrorCategory::data, "not a modchain prompt: '" + prompt + "'");
  return std::string(1, static_cast<char>('0' + sum % 10));
}

double evaluate(const ModelCheckpoint& model, std::span<const EvalItem> eval_items) {
  if (eval_items.empty()) throw Error(ErrorCategory::data, "evaluate: empty eval set");
  size_t correct = 0;
  for (const auto& item : eval_items) {
    TokenSeq prompt = tokenize(item.prompt);
    TokenSeq gen = generate(model, prompt, static_cast<int64_t>(item.gold.size()) + 2);
    if (detokenize(gen) == item.gold) correct += 1;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_items.size());
}

std::vector<PreferencePair> gen_preference_pairs(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<PreferencePair> pairs;
  pairs.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::string key;
    for (int k = 0; k < 4; ++k) key += static_cast<char>('a' + rng.uniform_int(26));
    std::string chosen, rejected;
    const int clen = 3 + static_cast<int>(rng.uniform_int(3));
    const int rlen = 3 + static_cast<int>(rng.uniform_int(3));
    for (int k = 0; k < clen; ++k) chosen += static_cast<char>('a' + rng.uniform_int(26));
    for (int k = 0; k < rlen; ++k) rejected += static_cast<char>('0' + rng.uniform_int(10));

    PreferencePair p;
    p.prompt = tokenize("item " + key + " : ");
    p.chosen = tokenize(chosen);
    p.chosen.ids.push_back(kEosId);
    p.rejected = tokenize(rejected);
    p.rejected.ids.push_back(kEosId);
    p.pair_id = "pref-" + std::to_string(i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<PreferencePair> pairs_from_task(const TaskData& task, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a64(task.spec.kind)));
  std::vector<PreferencePair> pairs;
  pairs.reserve(task.train.size());
  for (size_t i = 0; i < task.train.size(); ++i) {
    const auto& ex = task.train[i];
    std::string gold = detokenize(ex.completion);
    std::string bad = gold;
    // corrupt one position, guaranteed different
    const size_t pos = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(bad.size())));
    if (task.spec.kind == "modchain") {
      bad[pos] = static_cast<char>('0' + (bad[pos] - '0' + 1 + rng.uniform_int(9)) % 10);
    } else {
      bad[pos] = static_cast<char>('a' + (bad[pos] - 'a' + 1 + rng.uniform_int(25)) % 26);
    }
    PreferencePair p;
    p.prompt = ex.prompt;
    p.chosen = ex.completion;
    p.rejected = tokenize(bad);
    p.rejected.ids.push_back(kEosId);
    p.pair_id = task.spec.kind + "-" + std::to_string(i);
    p.category = task.spec.kind;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void export_task(const TaskData& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    json j{{"kind", task.spec.kind},
           {"train_size", task.spec.train_size},
           {"eval_size", task.spec.eval_size},
           {"min_difficulty", task.spec.min_difficulty},
           {"max_difficulty", task.spec.max_difficulty},
           {"seed", task.spec.seed}};
    std::ofstream f(dir / "task.json", std::ios::trunc);
    if (!f) throw Error(ErrorCategory::io, "cannot write " + (dir / "task.json").string());
    f << j.dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "train.jsonl", std::ios::trunc);
    if (!f) throw Error(ErrorCategory::io, "cannot write " + (dir / "train.jsonl").string());
    for (const auto& ex : task.train) {
      json j{{"messages",
              json::array({json{{"role", "user"}, {"content", ex.prompt.text}},
                           json{{"role", "assistant"}, {"content", detokenize(ex.completion)}}})}};
      f << j.dump() << '\n';
    }
  }
  {
    std::ofstream f(dir / "eval.jsonl", std::ios::trunc);
    if (!f) throw Error(ErrorCategory::io, "cannot write " + (dir / "eval.jsonl").string());
    for (const auto& item : task.eval_items) {
      json j{{"prompt", item.prompt}, {"gold", item.gold}};
      f << j.dump() << '\n';
    }
  }
}

std::vector<EvalItem> load_eval_items(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCategory::io, "cannot open: " + path.string());
  std::vector<EvalItem> items;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      items.push_back(EvalItem{j.at("prompt").get<std::string>(), j.at("gold").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCategory::data,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (items.empty()) throw Error(ErrorCategory::data, "no eval items in " + path.string());
  return items;
}

}  // namespace ptlab
