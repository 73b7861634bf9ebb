#include "ptlab/dpo.hpp"

#include <cmath>

#include "ptlab/container.hpp"
#include "ptlab/error.hpp"

namespace ptlab {

void RefLogpCache::insert(const std::string& pair_id, const RefEntry& e) {
  if (entries_.emplace(pair_id, e).second) ids_.push_back(pair_id);
}

const RefEntry& RefLogpCache::lookup(const std::string& pair_id) const {
  auto it = entries_.find(pair_id);
  if (it == entries_.end())
    throw Error(ErrorCategory::data, "reference cache miss for pair '" + pair_id + "'");
  return it->second;
}

double RefLogpCache::ref_logp_chosen(const std::string& pair_id) const {
  const RefEntry& e = lookup(pair_id);
  return normalize_ ? e.logp_chosen / static_cast<double>(e.len_chosen) : e.logp_chosen;
}

double RefLogpCache::ref_logp_rejected(const std::string& pair_id) const {
  const RefEntry& e = lookup(pair_id);
  return normalize_ ? e.logp_rejected / static_cast<double>(e.len_rejected) : e.logp_rejected;
}

void RefLogpCache::save(const std::filesystem::path& path) const {
  Container c;
  c.set_meta("kind", "ref-cache");
  c.set_meta("normalize", normalize_ ? "1" : "0");
  c.set_meta("ref_fingerprint", fingerprint_);
  c.set_meta("pairs", std::to_string(ids_.size()));
  for (const auto& id : skipped_) c.set_meta("skipped:" + id, "context-overflow");
  for (const auto& id : ids_) {
    const RefEntry& e = entries_.at(id);
    float row[4] = {static_cast<float>(e.logp_chosen), static_cast<float>(e.logp_rejected),
                    static_cast<float>(e.len_chosen), static_cast<float>(e.len_rejected)};
    c.add_tensor(id, {4}, row);
  }
  c.save(path);
}

RefLogpCache RefLogpCache::load(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.require_meta("kind") != "ref-cache")
    throw Error(ErrorCategory::io, "not a reference cache: " + path.string());
  RefLogpCache cache(c.require_meta("normalize") == "1", c.require_meta("ref_fingerprint"));
  for (const auto& [k, v] : c.meta)
    if (k.rfind("skipped:", 0) == 0) cache.mark_skipped(k.substr(8));
  for (const auto& t : c.tensors) {
    if (t.data.size() != 4)
      throw Error(ErrorCategory::io, "corrupt ref cache entry '" + t.name + "'");
    RefEntry e;
    e.logp_chosen = t.data[0];
    e.logp_rejected = t.data[1];
    e.len_chosen = static_cast<int64_t>(t.data[2]);
    e.len_rejected = static_cast<int64_t>(t.data[3]);
    cache.insert(t.name, e);
  }
  return cache;
}

RefLogpCache cache_ref_logprobs(const ModelCheckpoint& ref, std::span<const PreferencePair> pairs,
                                bool normalize, int64_t max_seq_len) {
  RefLogpCache cache(normalize, checkpoint_fingerprint(ref));
  for (const auto& p : pairs) {
    const int64_t need = 1 + static_cast<int64_t>(p.prompt.ids.size()) +
                         static_cast<int64_t>(std::max(p.chosen.ids.size(), p.rejected.ids.size()));
    if (need - 1 > max_seq_len || need - 1 > ref.config().max_seq_len) {
      cache.mark_skipped(p.pair_id);
      continue;
    }
    RefEntry e;
    e.logp_chosen = sequence_logprob(ref, p.prompt, p.chosen, false);
    e.logp_rejected = sequence_logprob(ref, p.prompt, p.rejected, false);
    e.len_chosen = static_cast<int64_t>(p.chosen.ids.size());
    e.len_rejected = static_cast<int64_t>(p.rejected.ids.size());
    cache.insert(p.pair_id, e);
  }
  return cache;
}

double dpo_loss(double policy_chosen, double policy_rejected, double ref_chosen,
                double ref_rejected, double beta) {
  if (!(beta > 0)) throw Error(ErrorCategory::config, "beta must be > 0");
  const double margin = (policy_chosen - ref_chosen) - (policy_rejected - ref_rejected);
  const double z = -beta * margin;
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));  // softplus(z)
}

Tensor dpo_batch_loss(Graph& g, const ModelCheckpoint& policy,
                      std::span<const PreferencePair> batch, const RefLogpCache& cache,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw Error(ErrorCategory::data, "dpo_batch_loss: empty batch");
  if (cache.normalize() != cfg.length_normalize)
    throw Error(ErrorCategory::config,
                "mixed normalization: cache normalize=" + std::to_string(cache.normalize()) +
                    " but config length_normalize=" + std::to_string(cfg.length_normalize));

  Tensor acc;
  for (const auto& p : batch) {
    const double ref_c = cache.ref_logp_chosen(p.pair_id);
    const double ref_r = cache.ref_logp_rejected(p.pair_id);
    // separate forward passes for chosen and rejected
    Tensor pol_c = sequence_logprob_node(g, policy, p.prompt.ids, p.chosen.ids,
                                         cfg.length_normalize);
    Tensor pol_r = sequence_logprob_node(g, policy, p.prompt.ids, p.rejected.ids,
                                         cfg.length_normalize);
    Tensor margin = add(g, add_scalar(g, pol_c, -ref_c), neg(g, add_scalar(g, pol_r, -ref_r)));
    Tensor loss = softplus(g, scale(g, margin, -cfg.beta));
    acc = acc.defined() ? add(g, acc, loss) : loss;
  }
  return scale(g, acc, 1.0 / static_cast<double>(batch.size()));
}

std::tuple<ModelCheckpoint, TrainLog, RefLogpCache> train_dpo(
    const ModelCheckpoint& sft_ckpt, const std::vector<PreferencePair>& pairs,
    const TrainConfig& cfg) {
  if (sft_ckpt.role() != "policy")
    throw Error(ErrorCategory::data,
                "train_dpo expects a checkpoint with role 'policy', got '" + sft_ckpt.role() + "'");

  // The reference is the frozen SFT checkpoint, realized as a log-prob cache
  // rather than a second resident model.
  RefLogpCache cache =
      cache_ref_logprobs(sft_ckpt, pairs, cfg.length_normalize, cfg.max_seq_len);

  std::vector<PreferencePair> usable;
  usable.reserve(pairs.size());
  for (const auto& p : pairs)
    if (cache.contains(p.pair_id)) usable.push_back(p);
  if (usable.empty()) throw Error(ErrorCategory::data, "no preference pairs fit the context");

  ModelCheckpoint policy = sft_ckpt.clone();
  policy.set_trainable(true);

  TrainLog log = run_training_loop(
      policy.params(), usable.size(), cfg,
      [&](Graph& g, std::span<const size_t> batch, int64_t) {
        std::vector<PreferencePair> items;
        items.reserve(batch.size());
        for (size_t i : batch) items.push_back(usable[i]);
        return dpo_batch_loss(g, policy, items, cache, cfg);
      });

  policy.set_trainable(false);
  policy.set_step(policy.step() + static_cast<int64_t>(log.steps.size()));
  policy.set_role("policy");
  return {std::move(policy), std::move(log), std::move(cache)};
}

double mean_margin(const ModelCheckpoint& policy, const RefLogpCache& cache,
                   std::span<const PreferencePair> pairs, bool normalize) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  size_t n = 0;
  for (const auto& p : pairs) {
    if (!cache.contains(p.pair_id)) continue;
    const RefEntry& e = cache.lookup(p.pair_id);
    double ref_c = e.logp_chosen, ref_r = e.logp_rejected;
    double pol_c = sequence_logprob(policy, p.prompt, p.chosen, false);
    double pol_r = sequence_logprob(policy, p.prompt, p.rejected, false);
    if (normalize) {
      ref_c /= static_cast<double>(e.len_chosen);
      ref_r /= static_cast<double>(e.len_rejected);
      pol_c /= static_cast<double>(p.chosen.ids.size());
      pol_r /= static_cast<double>(p.rejected.ids.size());
    }
    total += (pol_c - ref_c) - (pol_r - ref_r);
    n += 1;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double pair_accuracy(const ModelCheckpoint& policy, std::span<const PreferencePair> pairs,
                     bool normalize) {
  if (pairs.empty()) return 0.0;
  size_t correct = 0;
  for (const auto& p : pairs) {
    double c = sequence_logprob(policy, p.prompt, p.chosen, normalize);
    double r = sequence_logprob(policy, p.prompt, p.rejected, normalize);
    if (c > r) correct += 1;  // ties incorrect
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace ptlab
