#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

enum class BlockType { Emb = 0, QK = 1, VO = 2, FFN = 3, Norm = 4 };

inline constexpr std::size_t kBlockTypeCount = 5;
inline constexpr std::array<BlockType, kBlockTypeCount> kAllBlockTypes = {
    BlockType::Emb, BlockType::QK, BlockType::VO, BlockType::FFN, BlockType::Norm};

std::string_view to_string(BlockType t);
BlockType parse_block_type(std::string_view s);

struct ModelConfig {
  std::size_t n_layer = 2;
  std::size_t d_model = 128;
  std::size_t n_head = 4;
  std::size_t d_ff = 512;
  std::size_t vocab = 2;
  std::size_t context = 64;
  kernels::NormKind norm = kernels::NormKind::LayerNorm;
  kernels::Activation activation{};
  double norm_eps = 1e-5;
  bool tie_head = true;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
  /// Closed-form parameter count.
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamSpec {
  std::string id;
  Shape shape;
  BlockType block_type = BlockType::Emb;
  /// 0 = embeddings, 1..L = transformer layers, L+1 = final norm (and untied head).
  int layer = 0;

  std::size_t size() const { return shape_size(shape); }
};

/// Block type of a parameter path such as "h.3.attn.w_q" or "ln_f.gamma".
BlockType classify_param(std::string_view id);

/// Decoder-only pre-norm transformer:
///   X <- X + SA(Norm(X)),  X <- X + FFN(Norm(X)),  logits = Norm_f(X) W_head.
class TransformerModel {
 public:
  TransformerModel(ModelConfig config, std::vector<ParamSpec> specs, NamedTensors params);

  const ModelConfig& config() const noexcept { return config_; }
  std::span<const ParamSpec> specs() const noexcept { return specs_; }
  const ParamSpec& spec(std::string_view id) const;
  NamedTensors& params() noexcept { return params_; }
  const NamedTensors& params() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.total_size(); }

 private:
  ModelConfig config_;
  std::vector<ParamSpec> specs_;
  NamedTensors params_;
};

/// The parameter registry implied by a config, in canonical order.
std::vector<ParamSpec> make_param_specs(const ModelConfig& config);

/// N(0, 0.02^2) weights, residual projections (w_o, w_2) further scaled by 1/sqrt(2L),
/// gains at 1.
TransformerModel build_model(const ModelConfig& config, std::uint64_t seed);

/// Token windows of shape batch x seq with aligned next-token targets.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
};

/// Nodes of a traced forward pass.
struct ForwardTrace {
  std::vector<Var> params;  // in registry order
  Var embedded;             // token + position embedding, (batch*seq) x D
  Var logits;               // (batch*seq) x vocab
};

/// Traces the forward pass. `embedded_leaf` makes the embedding sum an input leaf so
/// gradients with respect to it can be read back.
ForwardTrace trace_forward(Tape& tape, const TransformerModel& model,
                           std::span<const std::int32_t> inputs, std::size_t batch,
                           std::size_t seq, bool embedded_leaf = false);

struct LossTrace {
  std::unique_ptr<Tape> tape;
  ForwardTrace forward;
  Var loss;
  double value = 0.0;
};

/// Next-token cross-entropy averaged over batch and positions, with its traced graph.
LossTrace model_loss(const TransformerModel& model, const Batch& batch);

struct LossAndGrad {
  double loss = 0.0;
  GradMap grads;
};

LossAndGrad model_loss_and_grad(const TransformerModel& model, const Batch& batch);

/// Logits without building a differentiable graph, (batch*seq) x vocab.
Tensor model_logits(const TransformerModel& model, std::span<const std::int32_t> inputs,
                    std::size_t batch, std::size_t seq);

/// Checkpoint container of the model config, the character vocabulary and every
/// parameter tensor. Layout is documented in README.md; round trips are bit-exact.
void save_checkpoint(const std::string& path, const TransformerModel& model,
                     std::span<const std::uint8_t> vocabulary);
struct Checkpoint {
  TransformerModel model;
  std::vector<std::uint8_t> vocabulary;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sharplab
