#include "ptlab/rm.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "ptlab/container.hpp"
#include "ptlab/error.hpp"

namespace ptlab {

RewardModel RewardModel::init_from(const ModelCheckpoint& backbone) {
  RewardModel rm;
  rm.backbone = backbone.clone();
  rm.backbone.set_role("reward-backbone");
  rm.head_weight = Tensor::zeros({1, backbone.config().d_model});
  rm.head_bias = Tensor::zeros({1, 1});
  return rm;
}

NamedTensors RewardModel::trainable_params() {
  NamedTensors params = backbone.params();
  params.emplace_back("head.weight", head_weight);
  params.emplace_back("head.bias", head_bias);
  return params;
}

void RewardModel::set_trainable(bool trainable) {
  backbone.set_trainable(trainable);
  head_weight.set_requires_grad(trainable);
  head_bias.set_requires_grad(trainable);
}

Tensor reward_score_node(Graph& g, const RewardModel& rm, std::span<const int32_t> prompt_ids,
                         std::span<const int32_t> response_ids) {
  if (response_ids.empty()) throw Error(ErrorCategory::data, "reward_score: empty response");
  if (rm.head_weight.dim(1) != rm.backbone.config().d_model)
    throw Error(ErrorCategory::internal, "reward head width does not match backbone d_model");

  std::vector<int32_t> tokens;
  tokens.reserve(1 + prompt_ids.size() + response_ids.size());
  tokens.push_back(kBosId);
  tokens.insert(tokens.end(), prompt_ids.begin(), prompt_ids.end());
  tokens.insert(tokens.end(), response_ids.begin(), response_ids.end());

  // hidden state at the final response token; a trailing EOS is skipped so
  // the head reads the last content token
  int64_t pos = static_cast<int64_t>(tokens.size()) - 1;
  if (tokens[pos] == kEosId && pos > 0) pos -= 1;

  Tensor h = rm.backbone.hidden_states(g, tokens);
  Tensor last = slice_rows(g, h, pos, 1);
  return add(g, matmul_nt(g, last, rm.head_weight), rm.head_bias);
}

double reward_score(const RewardModel& rm, const TokenSeq& prompt, const TokenSeq& response) {
  Graph g;
  return reward_score_node(g, rm, prompt.ids, response.ids).item64();
}

double rm_loss(double r_chosen, double r_rejected) {
  const double z = -(r_chosen - r_rejected);
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));  // softplus(z)
}

std::pair<RewardModel, TrainLog> train_rm(const ModelCheckpoint& init,
                                          const std::vector<PreferencePair>& pairs,
                                          const TrainConfig& cfg) {
  if (pairs.empty()) throw Error(ErrorCategory::data, "train_rm: no preference pairs");

  RewardModel rm = RewardModel::init_from(init);
  rm.set_trainable(true);
  NamedTensors params = rm.trainable_params();

  TrainLog log = run_training_loop(
      params, pairs.size(), cfg, [&](Graph& g, std::span<const size_t> batch, int64_t) {
        Tensor acc;
        for (size_t i : batch) {
          const auto& p = pairs[i];
          Tensor rc = reward_score_node(g, rm, p.prompt.ids, p.chosen.ids);
          Tensor rr = reward_score_node(g, rm, p.prompt.ids, p.rejected.ids);
          Tensor loss = softplus(g, neg(g, add(g, rc, neg(g, rr))));
          acc = acc.defined() ? add(g, acc, loss) : loss;
        }
        return scale(g, acc, 1.0 / static_cast<double>(batch.size()));
      });

  rm.set_trainable(false);
  rm.backbone.set_step(rm.backbone.step() + static_cast<int64_t>(log.steps.size()));
  return {std::move(rm), std::move(log)};
}

RmAccuracy rm_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) throw Error(ErrorCategory::data, "rm_accuracy: no pairs");

  RmAccuracy acc;
  acc.n_pairs = pairs.size();
  std::map<std::string, std::pair<size_t, size_t>> per_cat;  // correct, total
  size_t correct = 0;
  for (const auto& p : pairs) {
    double rc = reward_score(rm, p.prompt, p.chosen);
    double rr = reward_score(rm, p.prompt, p.rejected);
    bool ok = rc > rr;  // ties incorrect
    correct += ok ? 1 : 0;
    if (!p.category.empty()) {
      auto& [c, t] = per_cat[p.category];
      c += ok ? 1 : 0;
      t += 1;
    }
  }
  acc.overall = static_cast<double>(correct) / static_cast<double>(pairs.size());
  for (const auto& [cat, ct] : per_cat)
    acc.per_category[cat] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return acc;
}

std::string rm_accuracy_json(const RmAccuracy& acc) {
  nlohmann::json j{{"overall", acc.overall},
                   {"per_category", acc.per_category},
                   {"n_pairs", acc.n_pairs}};
  return j.dump(2);
}

void save_reward_model(const RewardModel& rm, const std::filesystem::path& path) {
  Container c;
  c.set_meta("kind", "reward-model");
  const auto& cfg = rm.backbone.config();
  c.set_meta("vocab_size", std::to_string(cfg.vocab_size));
  c.set_meta("d_model", std::to_string(cfg.d_model));
  c.set_meta("n_layers", std::to_string(cfg.n_layers));
  c.set_meta("n_heads", std::to_string(cfg.n_heads));
  c.set_meta("max_seq_len", std::to_string(cfg.max_seq_len));
  c.set_meta("seed", std::to_string(cfg.seed));
  c.set_meta("step", std::to_string(rm.backbone.step()));
  c.set_meta("role", rm.backbone.role());
  for (const auto& [name, t] : rm.backbone.params()) c.add_tensor(name, t.shape(), t.data());
  c.add_tensor("head.weight", rm.head_weight.shape(), rm.head_weight.data());
  c.add_tensor("head.bias", rm.head_bias.shape(), rm.head_bias.data());
  c.save(path);
}

RewardModel load_reward_model(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.require_meta("kind") != "reward-model")
    throw Error(ErrorCategory::io, "not a reward model: " + path.string());
  ModelConfig cfg;
  cfg.vocab_size = std::stoll(c.require_meta("vocab_size"));
  cfg.d_model = std::stoll(c.require_meta("d_model"));
  cfg.n_layers = std::stoll(c.require_meta("n_layers"));
  cfg.n_heads = std::stoll(c.require_meta("n_heads"));
  cfg.max_seq_len = std::stoll(c.require_meta("max_seq_len"));
  cfg.seed = std::stoull(c.require_meta("seed"));

  RewardModel rm;
  rm.backbone = ModelCheckpoint::zeros(cfg, c.require_meta("role"));
  rm.backbone.set_step(std::stoll(c.require_meta("step")));

  auto spec = param_spec(cfg);
  if (c.tensors.size() != spec.size() + 2)
    throw Error(ErrorCategory::io, "corrupt reward model " + path.string());
  for (size_t i = 0; i < spec.size(); ++i) {
    const auto& ct = c.tensors[i];
    if (ct.name != spec[i].name || ct.shape != spec[i].shape)
      throw Error(ErrorCategory::io,
                  "corrupt reward model " + path.string() + ": tensor '" + ct.name + "'");
    std::copy(ct.data.begin(), ct.data.end(), rm.backbone.params()[i].second.data().begin());
  }
  const auto& hw = c.tensors[spec.size()];
  const auto& hb = c.tensors[spec.size() + 1];
  if (hw.name != "head.weight" || hb.name != "head.bias")
    throw Error(ErrorCategory::io, "corrupt reward model " + path.string() + ": missing head");
  rm.head_weight = Tensor::from(hw.shape, hw.data);
  rm.head_bias = Tensor::from(hb.shape, hb.data);
  return rm;
}

}  // namespace ptlab
