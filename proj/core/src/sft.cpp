#include "ptlab/sft.hpp"

#include "ptlab/error.hpp"

namespace ptlab {

Tensor sft_loss(Graph& g, const ModelCheckpoint& model, std::span<const SftExample> batch) {
  if (batch.empty()) throw Error(ErrorCategory::data, "sft_loss: empty batch");

  // Per-example picked log-prob sums divided by the total completion-token
  // count give the batch-wide token mean.
  int64_t total_tokens = 0;
  for (const auto& ex : batch) total_tokens += static_cast<int64_t>(ex.completion.ids.size());
  if (total_tokens == 0)
    throw Error(ErrorCategory::data, "sft_loss: empty loss (batch has zero completion tokens)");

  Tensor acc;
  for (const auto& ex : batch) {
    if (ex.completion.ids.empty()) continue;
    Tensor lp = sequence_logprob_node(g, model, ex.prompt.ids, ex.completion.ids, false);
    acc = acc.defined() ? add(g, acc, lp) : lp;
  }
  return scale(g, acc, -1.0 / static_cast<double>(total_tokens));
}

std::pair<ModelCheckpoint, TrainLog> train_sft(const ModelCheckpoint& base,
                                               const std::vector<SftExample>& data,
                                               const TrainConfig& cfg) {
  ModelCheckpoint model = base.clone();
  model.set_trainable(true);

  TrainLog log = run_training_loop(
      model.params(), data.size(), cfg,
      [&](Graph& g, std::span<const size_t> batch, int64_t) {
        std::vector<SftExample> items;
        items.reserve(batch.size());
        for (size_t i : batch) items.push_back(data[i]);
        return sft_loss(g, model, items);
      });

  model.set_trainable(false);
  model.set_step(model.step() + static_cast<int64_t>(log.steps.size()));
  model.set_role("policy");
  return {std::move(model), std::move(log)};
}

}  // namespace ptlab
