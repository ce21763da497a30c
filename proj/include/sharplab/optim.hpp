#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "sharplab/model.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

enum class OptimizerKind { AdamW, AdamMini, Lion };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptHyper {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double eps = 1e-8;
  double clip = 1.0;

  void validate() const;
  friend bool operator==(const OptHyper&, const OptHyper&) = default;
};

/// AdamW / Adam-mini: (0.9, 0.95, 0.1). Lion: (0.9, 0.99, 0.5).
OptHyper default_hyper(OptimizerKind kind);

enum class ScheduleKind { Cosine, Wsd };

std::string_view to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(std::string_view s);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Cosine;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 2000;
  double lr_max = 1e-3;
  /// Cosine floor; negative means lr_max / 20. Unused by wsd, which decays to 0.
  double lr_min = -1.0;
  double wsd_stable_frac = 0.667;

  double floor_lr() const { return lr_min < 0.0 ? lr_max / 20.0 : lr_min; }
  /// Last step of the wsd plateau.
  std::size_t stable_end() const;
  void validate() const;
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// Learning rate at `step` in [0, total_steps]. Linear warmup from 0 reaches lr_max at
/// warmup_steps, then cosine to floor_lr() or wsd plateau and linear decay to 0.
double schedule_lr(const ScheduleConfig& cfg, std::size_t step);

using BlockRatios = std::array<double, kBlockTypeCount>;

/// Emb 10, QK 8, VO 4, FFN 6, Norm 1.
BlockRatios default_ratios();
/// Emb 4, QK 1, VO 4, FFN 4, Norm 1.
BlockRatios adam_mini_ratios();

struct BlockwiseLrConfig {
  bool enabled = false;
  BlockRatios ratios = default_ratios();
  std::size_t switch_step = 100;

  double ratio(BlockType t) const { return ratios[static_cast<std::size_t>(t)]; }
  void validate() const;
  friend bool operator==(const BlockwiseLrConfig&, const BlockwiseLrConfig&) = default;
};

double effective_lr(double base_lr, BlockType type, const BlockwiseLrConfig& cfg,
                    std::size_t step);
std::array<double, kBlockTypeCount> effective_lrs(double base_lr, const BlockwiseLrConfig& cfg,
                                                  std::size_t step);

/// Rescales all gradients by tau/g when their global L2 norm g exceeds tau.
/// Returns g, the norm before clipping.
double clip_global_norm(GradMap& grads, double tau);

// Single-tensor update rules. `t` is the 1-based step count after this update.
void adamw_update(Tensor& theta, const Tensor& g, Tensor& m, Tensor& v, std::size_t t,
                  double lr, double weight_decay, const OptHyper& h);
/// Shared second moment: v tracks mean(g^2) over the whole tensor.
void adam_mini_update(Tensor& theta, const Tensor& g, Tensor& m, double& v, std::size_t t,
                      double lr, double weight_decay, const OptHyper& h);
void lion_update(Tensor& theta, const Tensor& g, Tensor& m, double lr, double weight_decay,
                 const OptHyper& h);

/// Per-parameter optimizer state over a model registry. Gains (rank-1 tensors) are
/// exempt from weight decay.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, OptHyper hyper, std::span<const ParamSpec> specs);

  OptimizerKind kind() const noexcept { return kind_; }
  const OptHyper& hyper() const noexcept { return hyper_; }
  std::size_t step_count() const noexcept { return t_; }

  /// Applies one update with the learning rate of each parameter's block type.
  void step(NamedTensors& params, const GradMap& grads,
            const std::array<double, kBlockTypeCount>& lr_by_type);

  /// Number of stored second-moment scalars.
  std::size_t second_moment_count() const;

  const Tensor& first_moment(std::size_t i) const { return m_[i]; }

 private:
  OptimizerKind kind_;
  OptHyper hyper_;
  std::vector<ParamSpec> specs_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;       // per-coordinate second moments
  std::vector<double> v_mini_;  // shared second moments (Adam-mini, non-Emb)
  std::vector<bool> shared_;
  std::size_t t_ = 0;
};

}  // namespace sharplab
