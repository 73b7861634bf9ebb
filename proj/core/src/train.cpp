#include "ptlab/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ptlab/data.hpp"
#include "ptlab/error.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

using json = nlohmann::json;

json config_json(const TrainConfig& c) {
  return json{{"peak_lr", c.peak_lr},
              {"batch_size", c.batch_size},
              {"warmup_ratio", c.warmup_ratio},
              {"epochs", c.epochs},
              {"max_seq_len", c.max_seq_len},
              {"beta", c.beta},
              {"seed", c.seed},
              {"weight_decay", c.weight_decay},
              {"grad_clip_norm", c.grad_clip_norm},
              {"length_normalize", c.length_normalize}};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(peak_lr > 0)) throw Error(ErrorCategory::config, "peak_lr must be > 0");
  if (batch_size < 1) throw Error(ErrorCategory::config, "batch_size must be >= 1");
  if (warmup_ratio < 0 || warmup_ratio >= 1)
    throw Error(ErrorCategory::config, "warmup_ratio must be in [0, 1)");
  if (epochs < 1) throw Error(ErrorCategory::config, "epochs must be >= 1");
  if (max_seq_len < 2) throw Error(ErrorCategory::config, "max_seq_len must be >= 2");
  if (!(beta > 0)) throw Error(ErrorCategory::config, "beta must be > 0");
  if (weight_decay < 0) throw Error(ErrorCategory::config, "weight_decay must be >= 0");
  if (grad_clip_norm < 0) throw Error(ErrorCategory::config, "grad_clip_norm must be >= 0");
}

void TrainLog::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + path.string());
  for (const auto& s : steps) {
    json j{{"step", s.step}, {"lr", s.lr}, {"loss", s.loss}, {"grad_norm", s.grad_norm}};
    f << j.dump() << '\n';
  }
}

void TrainLog::save_summary(const std::filesystem::path& path) const {
  json j{{"total_steps", steps.size()},
         {"final_loss", steps.empty() ? 0.0 : steps.back().loss},
         {"wall_time_s", wall_time_s},
         {"final_checkpoint", final_checkpoint},
         {"config", config_json(config)}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw Error(ErrorCategory::internal, "lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw Error(ErrorCategory::internal, "lr_at: step " + std::to_string(step) +
                                             " outside [0, " + std::to_string(total_steps) + "]");
  int64_t warmup = std::llround(cfg.warmup_ratio * static_cast<double>(total_steps));
  warmup = std::min(warmup, total_steps - 1);
  if (step < warmup)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return cfg.peak_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

double lr_bs_ratio(double lr, int64_t batch_size) {
  if (batch_size < 1) throw Error(ErrorCategory::config, "batch_size must be >= 1");
  return lr / static_cast<double>(batch_size);
}

std::string render_ratio(double lr, int64_t batch_size, int scale_exp) {
  double scaled = (lr * std::pow(10.0, scale_exp)) / static_cast<double>(batch_size);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", scaled);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

AdamState AdamState::init(const NamedTensors& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& [name, t] : params) {
    st.m.emplace_back(t.data().size(), 0.0f);
    st.v.emplace_back(t.data().size(), 0.0f);
  }
  return st;
}

double global_grad_norm(const NamedTensors& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

void optimizer_step(NamedTensors& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size())
    throw Error(ErrorCategory::internal, "optimizer state does not match parameter list");

  double norm = global_grad_norm(params);
  if (std::isnan(norm) || std::isinf(norm))
    throw Error(ErrorCategory::train, "NaN gradient in optimizer step");
  double clip_scale = 1.0;
  if (cfg.grad_clip_norm > 0 && norm > cfg.grad_clip_norm)
    clip_scale = cfg.grad_clip_norm / norm;

  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& t = params[pi].second;
    auto vals = t.data();
    auto grads = t.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != vals.size())
      throw Error(ErrorCategory::internal,
                  "optimizer state shape mismatch for " + params[pi].first);
    for (size_t i = 0; i < vals.size(); ++i) {
      const double g = static_cast<double>(grads[i]) * clip_scale;
      const double mi = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      const double vi = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double update = mhat / (std::sqrt(vhat) + kAdamEps);
      if (cfg.weight_decay > 0) update += cfg.weight_decay * vals[i];
      vals[i] = static_cast<float>(vals[i] - lr * update);
    }
  }
}

TrainLog run_training_loop(NamedTensors& params, size_t n_examples, const TrainConfig& cfg,
                           const BatchLossFn& loss_fn) {
  cfg.validate();
  if (n_examples == 0) throw Error(ErrorCategory::data, "training dataset is empty");

  const int64_t steps_per_epoch =
      static_cast<int64_t>(n_examples) / cfg.batch_size;  // floor; tail dropped
  const int64_t total_steps = cfg.epochs * steps_per_epoch;
  if (total_steps == 0)
    throw Error(ErrorCategory::data,
                "batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset of " +
                    std::to_string(n_examples) + " examples (zero steps)");

  TrainLog log;
  log.config = cfg;
  AdamState state = AdamState::init(params);
  const auto t0 = std::chrono::steady_clock::now();

  int64_t step = 0;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    BatchPlan plan =
        BatchPlan::shuffled(n_examples, cfg.batch_size, mix_seed(cfg.seed, epoch), true);
    auto batches = make_batches(n_examples, plan);
    for (const auto& batch : batches) {
      step += 1;
      for (auto& [name, t] : params) t.zero_grad();

      Graph g;
      Tensor loss = loss_fn(g, batch, step);
      const double loss_val = loss.item64();
      if (std::isnan(loss_val) || std::isinf(loss_val))
        throw Error(ErrorCategory::train, "divergence: non-finite loss at step " + std::to_string(step));
      g.backward(loss);

      const double norm = global_grad_norm(params);
      if (std::isnan(norm) || std::isinf(norm))
        throw Error(ErrorCategory::train, "NaN gradient at step " + std::to_string(step));

      const double lr = lr_at(step - 1, total_steps, cfg);
      optimizer_step(params, state, lr, cfg);
      log.steps.push_back(StepRecord{step, lr, loss_val, norm});
    }
  }

  log.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

}  // namespace ptlab
