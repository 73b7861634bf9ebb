#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ptlab/data.hpp"
#include "ptlab/model.hpp"
#include "ptlab/train.hpp"

namespace ptlab {

// Scalar reward head over the transformer backbone. The head reads the
// hidden state at the final response token.
struct RewardModel {
  ModelCheckpoint backbone;
  Tensor head_weight;  // [1, d_model]
  Tensor head_bias;    // [1, 1]

  // Zero-initialized head over a clone of the given backbone (conventionally
  // the SFT checkpoint).
  static RewardModel init_from(const ModelCheckpoint& backbone);

  NamedTensors trainable_params();  // backbone params + head
  void set_trainable(bool trainable);
};

double reward_score(const RewardModel& rm, const TokenSeq& prompt, const TokenSeq& response);
Tensor reward_score_node(Graph& g, const RewardModel& rm, std::span<const int32_t> prompt_ids,
                         std::span<const int32_t> response_ids);

// softplus(-(r_chosen - r_rejected)): the negative pairwise preference
// log-likelihood under the logistic model.
double rm_loss(double r_chosen, double r_rejected);

std::pair<RewardModel, TrainLog> train_rm(const ModelCheckpoint& init,
                                          const std::vector<PreferencePair>& pairs,
                                          const TrainConfig& cfg);

struct RmAccuracy {
  double overall = 0.0;
  std::map<std::string, double> per_category;
  size_t n_pairs = 0;
};

// Fraction of pairs with r_chosen > r_rejected; exact ties count as
// incorrect. Per-category breakdown uses each pair's category label when
// any pair carries one.
RmAccuracy rm_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs);

std::string rm_accuracy_json(const RmAccuracy& acc);

void save_reward_model(const RewardModel& rm, const std::filesystem::path& path);
RewardModel load_reward_model(const std::filesystem::path& path);

}  // namespace ptlab
