#include "sharplab/model.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sharplab {

std::string_view to_string(BlockType t) {
  switch (t) {
    case BlockType::Emb: return "Emb";
    case BlockType::QK: return "QK";
    case BlockType::VO: return "VO";
    case BlockType::FFN: return "FFN";
    case BlockType::Norm: return "Norm";
  }
  return "?";
}

BlockType parse_block_type(std::string_view s) {
  for (BlockType t : kAllBlockTypes) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown block type: " + std::string(s));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
  if (n_layer < 1) fail("n_layer must be >= 1");
  if (d_model < 2) fail("d_model must be >= 2");
  if (n_head < 1 || d_model % n_head != 0) fail("d_model must be divisible by n_head");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab < 2) fail("vocab must be >= 2");
  if (context < 2) fail("context must be >= 2");
  if (norm_eps < 0.0) fail("norm_eps must be >= 0");
  if (activation.kind == kernels::ActKind::LeakyReLU &&
      !(activation.alpha > 0.0 && activation.alpha < 1.0)) {
    fail("leaky_alpha must lie in (0, 1)");
  }
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t D = d_model;
  const std::size_t per_layer = 2 * D + 4 * D * D + 2 * D * d_ff;
  return vocab * D + context * D + n_layer * per_layer + D + (tie_head ? 0 : D * vocab);
}

namespace {

// Parses "h.<int>.<rest>" and returns <rest>, or empty if the prefix does not match.
std::string_view layer_suffix(std::string_view id, std::size_t* layer) {
  if (!id.starts_with("h.")) return {};
  id.remove_prefix(2);
  const auto dot = id.find('.');
  if (dot == std::string_view::npos || dot == 0) return {};
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(id.data(), id.data() + dot, value);
  if (ec != std::errc() || ptr != id.data() + dot) return {};
  if (layer) *layer = value;
  return id.substr(dot + 1);
}

}  // namespace

BlockType classify_param(std::string_view id) {
  if (id == "wte" || id == "wpe" || id == "lm_head") return BlockType::Emb;
  if (id == "ln_f.gamma") return BlockType::Norm;
  const std::string_view rest = layer_suffix(id, nullptr);
  if (rest == "attn.w_q" || rest == "attn.w_k") return BlockType::QK;
  if (rest == "attn.w_v" || rest == "attn.w_o") return BlockType::VO;
  if (rest == "mlp.w_1" || rest == "mlp.w_2") return BlockType::FFN;
  if (rest == "ln_1.gamma" || rest == "ln_2.gamma") return BlockType::Norm;
  throw std::invalid_argument("classify_param: unknown parameter id '" + std::string(id) + "'");
}

std::vector<ParamSpec> make_param_specs(const ModelConfig& c) {
  c.validate();
  const std::size_t D = c.d_model;
  const int last = static_cast<int>(c.n_layer) + 1;
  std::vector<ParamSpec> specs;
  auto add = [&specs](std::string id, Shape shape, int layer) {
    const BlockType t = classify_param(id);
    specs.push_back(ParamSpec{std::move(id), std::move(shape), t, layer});
  };
  add("wte", {c.vocab, D}, 0);
  add("wpe", {c.context, D}, 0);
  for (std::size_t l = 0; l < c.n_layer; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    const int layer = static_cast<int>(l) + 1;
    add(p + "ln_1.gamma", {D}, layer);
    add(p + "attn.w_q", {D, D}, layer);
    add(p + "attn.w_k", {D, D}, layer);
    add(p + "attn.w_v", {D, D}, layer);
    add(p + "attn.w_o", {D, D}, layer);
    add(p + "ln_2.gamma", {D}, layer);
    add(p + "mlp.w_1", {D, c.d_ff}, layer);
    add(p + "mlp.w_2", {c.d_ff, D}, layer);
  }
  add("ln_f.gamma", {D}, last);
  if (!c.tie_head) add("lm_head", {D, c.vocab}, last);
  return specs;
}

TransformerModel::TransformerModel(ModelConfig config, std::vector<ParamSpec> specs,
                                   NamedTensors params)
    : config_(std::move(config)), specs_(std::move(specs)), params_(std::move(params)) {
  config_.validate();
  if (specs_.size() != params_.size()) {
    throw std::invalid_argument("TransformerModel: registry and tensors disagree");
  }
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].id != params_.name(i) || specs_[i].shape != params_[i].shape()) {
      throw std::invalid_argument("TransformerModel: tensor '" + params_.name(i) +
                                  "' does not match its registry entry");
    }
    params_[i].require_finite(specs_[i].id);
  }
  if (params_.total_size() != config_.parameter_count()) {
    throw std::invalid_argument("TransformerModel: parameter count mismatch");
  }
}

const ParamSpec& TransformerModel::spec(std::string_view id) const {
  for (const auto& s : specs_) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("unknown parameter: " + std::string(id));
}

TransformerModel build_model(const ModelConfig& config, std::uint64_t seed) {
  std::vector<ParamSpec> specs = make_param_specs(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layer));
  NamedTensors params;
  for (const auto& s : specs) {
    Tensor t(s.shape);
    if (s.block_type == BlockType::Norm) {
      for (double& v : t.data()) v = 1.0;
    } else {
      const bool residual = s.id.ends_with("attn.w_o") || s.id.ends_with("mlp.w_2");
      for (double& v : t.data()) v = normal(rng) * (residual ? residual_scale : 1.0);
    }
    params.insert(s.id, std::move(t));
  }
  ModelConfig c = config;
  c.seed = seed;
  return TransformerModel(std::move(c), std::move(specs), std::move(params));
}

ForwardTrace trace_forward(Tape& tape, const TransformerModel& model,
                           std::span<const std::int32_t> inputs, std::size_t batch,
                           std::size_t seq, bool embedded_leaf) {
  const ModelConfig& c = model.config();
  if (seq == 0 || batch == 0) throw std::invalid_argument("trace_forward: empty batch");
  if (seq > c.context) {
    throw std::invalid_argument("trace_forward: sequence length " + std::to_string(seq) +
                                " exceeds context " + std::to_string(c.context));
  }
  if (inputs.size() != batch * seq) throw std::invalid_argument("trace_forward: token count");

  ForwardTrace tr;
  const NamedTensors& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) tr.params.push_back(tape.parameter(p.name(i), p[i]));
  std::size_t next = 0;
  auto take = [&]() { return tr.params[next++]; };

  const Var wte = take();
  const Var wpe = take();
  std::vector<std::int32_t> positions(batch * seq);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<std::int32_t>(i % seq);
  }
  Var x = ad::add(ad::gather_rows(wte, {inputs.begin(), inputs.end()}),
                  ad::gather_rows(wpe, std::move(positions)));
  if (embedded_leaf) x = tape.input(x.value());
  tr.embedded = x;

  const kernels::AttentionShape att{batch, seq, c.n_head, kernels::Masking::Causal,
                                    1.0 / std::sqrt(static_cast<double>(c.d_model / c.n_head))};
  for (std::size_t l = 0; l < c.n_layer; ++l) {
    const Var g1 = take(), wq = take(), wk = take(), wv = take(), wo = take();
    const Var g2 = take(), w1 = take(), w2 = take();
    const Var h = ad::normalize(x, g1, c.norm, c.norm_eps);
    const Var a = ad::attention(ad::matmul(h, wq), ad::matmul(h, wk), ad::matmul(h, wv), att);
    x = ad::add(x, ad::matmul(a, wo));
    const Var h2 = ad::normalize(x, g2, c.norm, c.norm_eps);
    x = ad::add(x, ad::matmul(ad::activation(ad::matmul(h2, w1), c.activation), w2));
  }
  const Var gf = take();
  const Var hf = ad::normalize(x, gf, c.norm, c.norm_eps);
  tr.logits = c.tie_head ? ad::matmul(hf, wte, false, true) : ad::matmul(hf, take());
  return tr;
}

LossTrace model_loss(const TransformerModel& model, const Batch& batch) {
  if (batch.targets.size() != batch.inputs.size()) {
    throw std::invalid_argument("model_loss: inputs and targets differ in length");
  }
  LossTrace out;
  out.tape = std::make_unique<Tape>();
  out.forward = trace_forward(*out.tape, model, batch.inputs, batch.batch, batch.seq);
  out.loss = ad::cross_entropy(out.forward.logits, batch.targets);
  out.value = out.loss.value().item();
  return out;
}

LossAndGrad model_loss_and_grad(const TransformerModel& model, const Batch& batch) {
  LossTrace tr = model_loss(model, batch);
  LossAndGrad out;
  out.loss = tr.value;
  out.grads = tr.tape->backward(tr.loss);
  return out;
}

Tensor model_logits(const TransformerModel& model, std::span<const std::int32_t> inputs,
                    std::size_t batch, std::size_t seq) {
  Tape tape;
  return trace_forward(tape, model, inputs, batch, seq).logits.value();
}

}  // namespace sharplab
