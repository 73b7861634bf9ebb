#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ptlab/data.hpp"
#include "ptlab/model.hpp"
#include "ptlab/train.hpp"

namespace ptlab {

// Reference log-probabilities are cached as raw sums plus completion token
// counts, so both the raw and the length-normalized convention can be
// reconstructed from one cache.
struct RefEntry {
  double logp_chosen = 0.0;    // raw sum over completion tokens
  double logp_rejected = 0.0;
  int64_t len_chosen = 0;
  int64_t len_rejected = 0;
};

class RefLogpCache {
 public:
  RefLogpCache() = default;
  RefLogpCache(bool normalize, std::string fingerprint)
      : normalize_(normalize), fingerprint_(std::move(fingerprint)) {}

  bool normalize() const { return normalize_; }
  const std::string& fingerprint() const { return fingerprint_; }
  size_t size() const { return entries_.size(); }
  const std::vector<std::string>& skipped() const { return skipped_; }

  void insert(const std::string& pair_id, const RefEntry& e);
  void mark_skipped(const std::string& pair_id) { skipped_.push_back(pair_id); }
  bool contains(const std::string& pair_id) const { return entries_.count(pair_id) > 0; }
  // Throws Error(data) naming the pair on a miss.
  const RefEntry& lookup(const std::string& pair_id) const;
  // Per the cache convention: raw sum / length when normalize() is set.
  double ref_logp_chosen(const std::string& pair_id) const;
  double ref_logp_rejected(const std::string& pair_id) const;

  void save(const std::filesystem::path& path) const;
  static RefLogpCache load(const std::filesystem::path& path);

 private:
  bool normalize_ = true;
  std::string fingerprint_;
  std::unordered_map<std::string, RefEntry> entries_;
  std::vector<std::string> ids_;  // insertion order, for stable serialization
  std::vector<std::string> skipped_;
};

// Sequence log-probs of chosen and rejected under the frozen reference, for
// every pair. Pairs that overflow the context are excluded and recorded in
// skipped(). Must cover the training set before training starts.
RefLogpCache cache_ref_logprobs(const ModelCheckpoint& ref, std::span<const PreferencePair> pairs,
                                bool normalize, int64_t max_seq_len);

// softplus(-beta * margin) with margin = (pol_c - ref_c) - (pol_r - ref_r).
// All four log-probs must share one normalization convention.
double dpo_loss(double policy_chosen, double policy_rejected, double ref_chosen,
                double ref_rejected, double beta);

// Policy log-probs from two independent forward passes per pair (one for
// chosen, one for rejected), combined with the cached reference values; mean
// over the batch. Length normalization follows cfg.length_normalize, which
// must match the cache convention.
Tensor dpo_batch_loss(Graph& g, const ModelCheckpoint& policy,
                      std::span<const PreferencePair> batch, const RefLogpCache& cache,
                      const TrainConfig& cfg);

// reference = frozen copy of sft_ckpt; the cache is built first, then the
// shared loop runs with dpo_batch_loss.
std::tuple<ModelCheckpoint, TrainLog, RefLogpCache> train_dpo(
    const ModelCheckpoint& sft_ckpt, const std::vector<PreferencePair>& pairs,
    const TrainConfig& cfg);

// Mean over pairs of the (normalized) policy-vs-reference margin; the
// quantity DPO pushes positive.
double mean_margin(const ModelCheckpoint& policy, const RefLogpCache& cache,
                   std::span<const PreferencePair> pairs, bool normalize);

// Fraction of pairs with policy logp(chosen) > logp(rejected); ties count
// as incorrect.
double pair_accuracy(const ModelCheckpoint& policy, std::span<const PreferencePair> pairs,
                     bool normalize);

}  // namespace ptlab
