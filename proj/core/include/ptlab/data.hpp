#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptlab/tokenizer.hpp"

namespace ptlab {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct SftExample {
  TokenSeq prompt;      // rendered conversation up to the final assistant turn
  TokenSeq completion;  // final assistant turn + EOS
};

struct PreferencePair {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  std::string pair_id;
  std::string category;  // optional evaluation label
};

struct LineDiagnostic {
  size_t line;  // 1-based
  std::string reason;
};

struct SftLoadResult {
  std::vector<SftExample> examples;
  std::vector<LineDiagnostic> diagnostics;
};

struct PairLoadResult {
  std::vector<PreferencePair> pairs;
  std::vector<LineDiagnostic> diagnostics;
};

// Chat template, one segment per turn:
//   "<|system|>\n{content}\n"  /  "<|user|>\n{content}\n"
//   "<|assistant|>\n{content}" + EOS token
// The final assistant turn supplies the completion; everything before it
// (including the final "<|assistant|>\n" header) is the prompt.
std::string render_prompt_text(const std::vector<Message>& turns);

// Builds the tokenized example and applies the truncation policy: the prompt
// is left-truncated so that BOS + prompt + completion fits max_seq_len; the
// completion is never truncated. Throws Error(data) when the completion
// alone does not fit.
SftExample render_sft_example(const std::vector<Message>& turns, int64_t max_seq_len);

// JSON-lines, one conversation per line:
//   {"messages":[{"role":"user","content":"..."}, ...]}
// Malformed lines are collected as diagnostics; zero valid records is a hard
// Error(data).
SftLoadResult load_sft(const std::filesystem::path& path, int64_t max_seq_len);

// JSON-lines: {"prompt":"...","chosen":"...","rejected":"..."}
// Optional "id" and "category" fields are honored.
PairLoadResult load_pairs(const std::filesystem::path& path, int64_t max_seq_len);

// Tokenizes a preference record through the same chat template SFT uses.
PreferencePair render_preference_pair(const std::string& prompt, const std::string& chosen,
                                      const std::string& rejected, std::string pair_id,
                                      int64_t max_seq_len);

struct BatchPlan {
  uint64_t seed = 0;
  int64_t batch_size = 1;
  std::vector<size_t> order;  // permutation of 0..n-1
  bool drop_last = false;

  // Deterministic shuffle of 0..n-1 under `seed`.
  static BatchPlan shuffled(size_t n, int64_t batch_size, uint64_t seed, bool drop_last);
};

// Splits plan.order into consecutive batches of plan.batch_size. The final
// short batch is dropped when drop_last is set; a plan that would produce
// zero batches is an Error(data).
std::vector<std::vector<size_t>> make_batches(size_t n_examples, const BatchPlan& plan);

}  // namespace ptlab
