#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ptlab/tensor.hpp"
#include "ptlab/tokenizer.hpp"

namespace ptlab {

struct ModelConfig {
  int64_t vocab_size = kByteVocabSize;  // 259
  int64_t d_model = 128;
  int64_t n_layers = 4;
  int64_t n_heads = 4;
  int64_t max_seq_len = 256;
  uint64_t seed = 42;

  void validate() const;  // throws Error(config)
  bool operator==(const ModelConfig&) const = default;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct ParamSpecEntry {
  std::string name;
  Shape shape;
};

// Parameter names and shapes are a pure function of the config.
std::vector<ParamSpecEntry> param_spec(const ModelConfig& cfg);

// Decoder-only transformer: pre-norm blocks, learned positional embeddings,
// GELU MLP (4x d_model), weight-tied output projection.
//
// A checkpoint is immutable by convention once constructed and safe to share
// read-only across threads; forward passes record onto caller-owned graphs.
// Training code works on a clone() with set_trainable(true).
class ModelCheckpoint {
 public:
  ModelCheckpoint() = default;

  static ModelCheckpoint random_init(const ModelConfig& cfg, std::string role = "policy");
  static ModelCheckpoint zeros(const ModelConfig& cfg, std::string role = "policy");

  const ModelConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  const std::string& role() const { return role_; }
  void set_role(std::string r) { role_ = std::move(r); }

  NamedTensors& params() { return params_; }
  const NamedTensors& params() const { return params_; }
  Tensor param(std::string_view name) const;  // throws Error(internal) if absent

  ModelCheckpoint clone() const;
  void set_trainable(bool trainable);

  // Final hidden states [T, d_model] after the last layer norm.
  Tensor hidden_states(Graph& g, std::span<const int32_t> tokens) const;
  // Next-token logits [T, vocab_size]; causal.
  Tensor forward(Graph& g, std::span<const int32_t> tokens) const;

 private:
  ModelConfig cfg_;
  NamedTensors params_;
  int64_t step_ = 0;
  std::string role_ = "policy";
};

// Log-probability of `completion` given BOS + prompt, summed over completion
// tokens; divided by the completion token count when length_normalize is on.
// The plain overload runs a throwaway graph and returns the float64
// accumulated value; the _node overload records onto g for training.
double sequence_logprob(const ModelCheckpoint& model, const TokenSeq& prompt,
                        const TokenSeq& completion, bool length_normalize);
Tensor sequence_logprob_node(Graph& g, const ModelCheckpoint& model,
                             std::span<const int32_t> prompt_ids,
                             std::span<const int32_t> completion_ids, bool length_normalize);

// Greedy decoding from BOS + prompt; stops at EOS or max_new_tokens. The
// returned sequence holds the newly generated ids (EOS included when hit).
TokenSeq generate(const ModelCheckpoint& model, const TokenSeq& prompt, int64_t max_new_tokens);

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the serialized container bytes, 16 hex chars.
std::string checkpoint_fingerprint(const ModelCheckpoint& model);

}  // namespace ptlab
