#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ptlab/data.hpp"
#include "ptlab/model.hpp"
#include "ptlab/train.hpp"

namespace ptlab {

// Completion-only cross entropy: mean over completion-token positions across
// the whole batch. Prompt positions carry no gradient.
Tensor sft_loss(Graph& g, const ModelCheckpoint& model, std::span<const SftExample> batch);

// Trains a clone of `base` with sft_loss under the shared loop; the result
// is tagged role "policy".
std::pair<ModelCheckpoint, TrainLog> train_sft(const ModelCheckpoint& base,
                                               const std::vector<SftExample>& data,
                                               const TrainConfig& cfg);

}  // namespace ptlab
