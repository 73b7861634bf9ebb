#include "ptlab/model.hpp"

#include <cmath>

#include "ptlab/container.hpp"
#include "ptlab/digest.hpp"
#include "ptlab/error.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

void ModelConfig::validate() const {
  if (vocab_size < 1) throw Error(ErrorCategory::config, "vocab_size must be >= 1");
  if (d_model < 1) throw Error(ErrorCategory::config, "d_model must be >= 1");
  if (n_layers < 1) throw Error(ErrorCategory::config, "n_layers must be >= 1");
  if (n_heads < 1) throw Error(ErrorCategory::config, "n_heads must be >= 1");
  if (d_model % n_heads != 0)
    throw Error(ErrorCategory::config, "d_model (" + std::to_string(d_model) +
                                           ") must be divisible by n_heads (" +
                                           std::to_string(n_heads) + ")");
  if (max_seq_len < 2) throw Error(ErrorCategory::config, "max_seq_len must be >= 2");
}

std::vector<ParamSpecEntry> param_spec(const ModelConfig& cfg) {
  std::vector<ParamSpecEntry> spec;
  const int64_t d = cfg.d_model;
  spec.push_back({"tok_embedding", {cfg.vocab_size, d}});
  spec.push_back({"pos_embedding", {cfg.max_seq_len, d}});
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    std::string p = "layers." + std::to_string(l) + ".";
    spec.push_back({p + "ln1.gain", {d}});
    spec.push_back({p + "ln1.shift", {d}});
    spec.push_back({p + "attn.wq", {d, d}});
    spec.push_back({p + "attn.bq", {d}});
    spec.push_back({p + "attn.wk", {d, d}});
    spec.push_back({p + "attn.bk", {d}});
    spec.push_back({p + "attn.wv", {d, d}});
    spec.push_back({p + "attn.bv", {d}});
    spec.push_back({p + "attn.wo", {d, d}});
    spec.push_back({p + "attn.bo", {d}});
    spec.push_back({p + "ln2.gain", {d}});
    spec.push_back({p + "ln2.shift", {d}});
    spec.push_back({p + "mlp.w1", {d, 4 * d}});
    spec.push_back({p + "mlp.b1", {4 * d}});
    spec.push_back({p + "mlp.w2", {4 * d, d}});
    spec.push_back({p + "mlp.b2", {d}});
  }
  spec.push_back({"ln_f.gain", {d}});
  spec.push_back({"ln_f.shift", {d}});
  return spec;
}

namespace {

bool is_gain(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
}

bool is_weight_matrix(const ParamSpecEntry& e) { return e.shape.size() == 2; }

}  // namespace

ModelCheckpoint ModelCheckpoint::random_init(const ModelConfig& cfg, std::string role) {
  cfg.validate();
  ModelCheckpoint m;
  m.cfg_ = cfg;
  m.role_ = std::move(role);
  Rng rng(cfg.seed);
  for (const auto& e : param_spec(cfg)) {
    Tensor t = Tensor::zeros(e.shape);
    if (is_weight_matrix(e)) {
      auto v = t.data();
      for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 0.02));
    } else if (is_gain(e.name)) {
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    }
    // biases, shifts: zero
    m.params_.emplace_back(e.name, std::move(t));
  }
  return m;
}

ModelCheckpoint ModelCheckpoint::zeros(const ModelConfig& cfg, std::string role) {
  cfg.validate();
  ModelCheckpoint m;
  m.cfg_ = cfg;
  m.role_ = std::move(role);
  for (const auto& e : param_spec(cfg)) {
    Tensor t = Tensor::zeros(e.shape);
    if (is_gain(e.name)) std::fill(t.data().begin(), t.data().end(), 1.0f);
    m.params_.emplace_back(e.name, std::move(t));
  }
  return m;
}

Tensor ModelCheckpoint::param(std::string_view name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw Error(ErrorCategory::internal, "unknown parameter: " + std::string(name));
}

ModelCheckpoint ModelCheckpoint::clone() const {
  ModelCheckpoint m;
  m.cfg_ = cfg_;
  m.step_ = step_;
  m.role_ = role_;
  m.params_.reserve(params_.size());
  for (const auto& [n, t] : params_) m.params_.emplace_back(n, t.clone());
  return m;
}

void ModelCheckpoint::set_trainable(bool trainable) {
  for (auto& [n, t] : params_) t.set_requires_grad(trainable);
}

Tensor ModelCheckpoint::hidden_states(Graph& g, std::span<const int32_t> tokens) const {
  const int64_t t = static_cast<int64_t>(tokens.size());
  if (t == 0) throw Error(ErrorCategory::internal, "forward: empty token sequence");
  if (t > cfg_.max_seq_len)
    throw Error(ErrorCategory::data, "forward: sequence length " + std::to_string(t) +
                                         " exceeds max_seq_len " +
                                         std::to_string(cfg_.max_seq_len));
  const int64_t d = cfg_.d_model;
  const int64_t hd = d / cfg_.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor tok = embedding_lookup(g, param("tok_embedding"), tokens);
  Tensor pos = slice_rows(g, param("pos_embedding"), 0, t);
  Tensor x = add(g, tok, pos);

  for (int64_t l = 0; l < cfg_.n_layers; ++l) {
    std::string p = "layers." + std::to_string(l) + ".";
    // attention
    Tensor xn = layer_norm(g, x, param(p + "ln1.gain"), param(p + "ln1.shift"));
    Tensor q = add_bias(g, matmul(g, xn, param(p + "attn.wq")), param(p + "attn.bq"));
    Tensor k = add_bias(g, matmul(g, xn, param(p + "attn.wk")), param(p + "attn.bk"));
    Tensor v = add_bias(g, matmul(g, xn, param(p + "attn.wv")), param(p + "attn.bv"));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg_.n_heads));
    for (int64_t h = 0; h < cfg_.n_heads; ++h) {
      Tensor qh = slice_cols(g, q, h * hd, hd);
      Tensor kh = slice_cols(g, k, h * hd, hd);
      Tensor vh = slice_cols(g, v, h * hd, hd);
      Tensor scores = scale(g, matmul_nt(g, qh, kh), inv_sqrt_hd);
      Tensor probs = causal_softmax(g, scores);
      heads.push_back(matmul(g, probs, vh));
    }
    Tensor ctx = concat_cols(g, heads);
    Tensor attn_out = add_bias(g, matmul(g, ctx, param(p + "attn.wo")), param(p + "attn.bo"));
    x = add(g, x, attn_out);
    // mlp
    Tensor xn2 = layer_norm(g, x, param(p + "ln2.gain"), param(p + "ln2.shift"));
    Tensor h1 = gelu(g, add_bias(g, matmul(g, xn2, param(p + "mlp.w1")), param(p + "mlp.b1")));
    Tensor h2 = add_bias(g, matmul(g, h1, param(p + "mlp.w2")), param(p + "mlp.b2"));
    x = add(g, x, h2);
  }
  return layer_norm(g, x, param("ln_f.gain"), param("ln_f.shift"));
}

Tensor ModelCheckpoint::forward(Graph& g, std::span<const int32_t> tokens) const {
  Tensor h = hidden_states(g, tokens);
  return matmul_nt(g, h, param("tok_embedding"));  // weight-tied projection
}

Tensor sequence_logprob_node(Graph& g, const ModelCheckpoint& model,
                             std::span<const int32_t> prompt_ids,
                             std::span<const int32_t> completion_ids, bool length_normalize) {
  if (completion_ids.empty())
    throw Error(ErrorCategory::data, "sequence_logprob: empty completion (normalization undefined)");

  // input: BOS + prompt + completion[:-1]; target row t predicts full[t+1]
  std::vector<int32_t> full;
  full.reserve(1 + prompt_ids.size() + completion_ids.size());
  full.push_back(kBosId);
  full.insert(full.end(), prompt_ids.begin(), prompt_ids.end());
  full.insert(full.end(), completion_ids.begin(), completion_ids.end());
  if (static_cast<int64_t>(full.size()) > model.config().max_seq_len + 1)
    throw Error(ErrorCategory::data,
                "sequence_logprob: combined length " + std::to_string(full.size() - 1) +
                    " exceeds max_seq_len " + std::to_string(model.config().max_seq_len));

  std::vector<int32_t> inputs(full.begin(), full.end() - 1);
  std::vector<int32_t> targets(full.begin() + 1, full.end());
  std::vector<uint8_t> mask(targets.size(), 0);
  const size_t comp_start = targets.size() - completion_ids.size();
  for (size_t i = comp_start; i < targets.size(); ++i) mask[i] = 1;

  Tensor logits = model.forward(g, inputs);
  Tensor total = picked_logprob_sum(g, logits, targets, mask);
  if (length_normalize)
    return scale(g, total, 1.0 / static_cast<double>(completion_ids.size()));
  return total;
}

double sequence_logprob(const ModelCheckpoint& model, const TokenSeq& prompt,
                        const TokenSeq& completion, bool length_normalize) {
  Graph g;
  return sequence_logprob_node(g, model, prompt.ids, completion.ids, length_normalize).item64();
}

TokenSeq generate(const ModelCheckpoint& model, const TokenSeq& prompt, int64_t max_new_tokens) {
  std::vector<int32_t> ctx;
  ctx.reserve(1 + prompt.ids.size() + static_cast<size_t>(std::max<int64_t>(max_new_tokens, 0)));
  ctx.push_back(kBosId);
  ctx.insert(ctx.end(), prompt.ids.begin(), prompt.ids.end());
  if (static_cast<int64_t>(ctx.size()) > model.config().max_seq_len)
    throw Error(ErrorCategory::data, "generate: prompt does not fit in context");

  TokenSeq out;
  for (int64_t i = 0; i < max_new_tokens; ++i) {
    if (static_cast<int64_t>(ctx.size()) > model.config().max_seq_len) break;
    Graph g;
    Tensor logits = model.forward(g, ctx);
    const int64_t v = logits.dim(1);
    const float* row = logits.data().data() + (logits.dim(0) - 1) * v;
    int32_t best = 0;
    for (int64_t j = 1; j < v; ++j)
      if (row[j] > row[best]) best = static_cast<int32_t>(j);
    out.ids.push_back(best);
    if (best == kEosId) break;
    ctx.push_back(best);
  }
  out.text = detokenize(out.ids);
  return out;
}

namespace {

Container to_container(const ModelCheckpoint& m) {
  Container c;
  c.set_meta("kind", "checkpoint");
  c.set_meta("vocab_size", std::to_string(m.config().vocab_size));
  c.set_meta("d_model", std::to_string(m.config().d_model));
  c.set_meta("n_layers", std::to_string(m.config().n_layers));
  c.set_meta("n_heads", std::to_string(m.config().n_heads));
  c.set_meta("max_seq_len", std::to_string(m.config().max_seq_len));
  c.set_meta("seed", std::to_string(m.config().seed));
  c.set_meta("step", std::to_string(m.step()));
  c.set_meta("role", m.role());
  for (const auto& [name, t] : m.params()) c.add_tensor(name, t.shape(), t.data());
  return c;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path) {
  to_container(model).save(path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.require_meta("kind") != "checkpoint")
    throw Error(ErrorCategory::io,
                "not a model checkpoint: " + path.string() + " (kind=" + c.require_meta("kind") + ")");
  ModelConfig cfg;
  cfg.vocab_size = std::stoll(c.require_meta("vocab_size"));
  cfg.d_model = std::stoll(c.require_meta("d_model"));
  cfg.n_layers = std::stoll(c.require_meta("n_layers"));
  cfg.n_heads = std::stoll(c.require_meta("n_heads"));
  cfg.max_seq_len = std::stoll(c.require_meta("max_seq_len"));
  cfg.seed = std::stoull(c.require_meta("seed"));
  cfg.validate();

  ModelCheckpoint m = ModelCheckpoint::zeros(cfg, c.require_meta("role"));
  m.set_step(std::stoll(c.require_meta("step")));

  auto spec = param_spec(cfg);
  if (c.tensors.size() != spec.size())
    throw Error(ErrorCategory::io, "corrupt checkpoint " + path.string() + ": expected " +
                                       std::to_string(spec.size()) + " tensors, found " +
                                       std::to_string(c.tensors.size()));
  for (size_t i = 0; i < spec.size(); ++i) {
    const auto& ct = c.tensors[i];
    if (ct.name != spec[i].name || ct.shape != spec[i].shape)
      throw Error(ErrorCategory::io, "corrupt checkpoint " + path.string() + ": tensor '" +
                                         ct.name + "' does not match spec entry '" +
                                         spec[i].name + "'");
    std::copy(ct.data.begin(), ct.data.end(), m.params()[i].second.data().begin());
  }
  return m;
}

std::string checkpoint_fingerprint(const ModelCheckpoint& model) {
  auto bytes = to_container(model).serialize();
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace ptlab
