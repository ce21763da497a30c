#include "sharplab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sharplab {

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::AdamMini: return "adam_mini";
    case OptimizerKind::Lion: return "lion";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view s) {
  for (auto k : {OptimizerKind::AdamW, OptimizerKind::AdamMini, OptimizerKind::Lion}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}

void OptHyper::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("OptHyper: betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("OptHyper: weight_decay must be >= 0");
  if (!(eps >= 0.0)) throw std::invalid_argument("OptHyper: eps must be >= 0");
  if (!(clip > 0.0)) throw std::invalid_argument("OptHyper: clip must be > 0");
}

OptHyper default_hyper(OptimizerKind kind) {
  OptHyper h;
  if (kind == OptimizerKind::Lion) {
    h.beta2 = 0.99;
    h.weight_decay = 0.5;
  }
  return h;
}

std::string_view to_string(ScheduleKind k) {
  return k == ScheduleKind::Cosine ? "cosine" : "wsd";
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "cosine") return ScheduleKind::Cosine;
  if (s == "wsd") return ScheduleKind::Wsd;
  throw std::invalid_argument("unknown schedule: " + std::string(s));
}

std::size_t ScheduleConfig::stable_end() const {
  const auto end = static_cast<std::size_t>(
      std::floor(wsd_stable_frac * static_cast<double>(total_steps)));
  return end < warmup_steps ? warmup_steps : end;
}

void ScheduleConfig::validate() const {
  if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
    throw std::invalid_argument("ScheduleConfig: need 0 < warmup_steps < total_steps");
  }
  if (!(lr_max > 0.0)) throw std::invalid_argument("ScheduleConfig: lr_max must be > 0");
  if (floor_lr() > lr_max) throw std::invalid_argument("ScheduleConfig: lr_min > lr_max");
  if (!(wsd_stable_frac > 0.0 && wsd_stable_frac < 1.0)) {
    throw std::invalid_argument("ScheduleConfig: wsd_stable_frac must lie in (0, 1)");
  }
  if (kind == ScheduleKind::Wsd && stable_end() >= total_steps) {
    throw std::invalid_argument("ScheduleConfig: wsd decay phase is empty");
  }
}

double schedule_lr(const ScheduleConfig& cfg, std::size_t step) {
  if (step > cfg.total_steps) {
    throw std::out_of_range("schedule_lr: step " + std::to_string(step) + " beyond total " +
                            std::to_string(cfg.total_steps));
  }
  const double s = static_cast<double>(step);
  if (step < cfg.warmup_steps) return cfg.lr_max * s / static_cast<double>(cfg.warmup_steps);
  if (cfg.kind == ScheduleKind::Cosine) {
    const double progress = (s - static_cast<double>(cfg.warmup_steps)) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    const double lo = cfg.floor_lr();
    return lo + 0.5 * (cfg.lr_max - lo) * (1.0 + std::cos(std::numbers::pi * progress));
  }
  const std::size_t stable = cfg.stable_end();
  if (step <= stable) return cfg.lr_max;
  return cfg.lr_max * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - stable);
}

BlockRatios default_ratios() { return {10.0, 8.0, 4.0, 6.0, 1.0}; }
BlockRatios adam_mini_ratios() { return {4.0, 1.0, 4.0, 4.0, 1.0}; }

void BlockwiseLrConfig::validate() const {
  for (double r : ratios) {
    if (!(r >= 1.0)) throw std::invalid_argument("BlockwiseLrConfig: ratios must be >= 1");
  }
  if (ratio(BlockType::Norm) != 1.0) {
    throw std::invalid_argument("BlockwiseLrConfig: the Norm ratio is fixed at 1");
  }
}

double effective_lr(double base_lr, BlockType type, const BlockwiseLrConfig& cfg,
                    std::size_t step) {
  if (!cfg.enabled || step < cfg.switch_step || type == BlockType::Norm) return base_lr;
  return base_lr * cfg.ratio(type);
}

std::array<double, kBlockTypeCount> effective_lrs(double base_lr, const BlockwiseLrConfig& cfg,
                                                  std::size_t step) {
  std::array<double, kBlockTypeCount> out{};
  for (BlockType t : kAllBlockTypes) {
    out[static_cast<std::size_t>(t)] = effective_lr(base_lr, t, cfg, step);
  }
  return out;
}

double clip_global_norm(GradMap& grads, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("clip_global_norm: tau must be > 0");
  const double g = global_norm(grads);
  if (g > tau) {
    const double s = tau / g;
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] *= s;
  }
  return g;
}

namespace {

void check_shapes(const Tensor& theta, const Tensor& g, const Tensor& m) {
  if (theta.shape() != g.shape() || theta.shape() != m.shape()) {
    throw std::invalid_argument("optimizer: parameter, gradient and state shapes differ");
  }
}

}  // namespace

void adamw_update(Tensor& theta, const Tensor& g, Tensor& m, Tensor& v, std::size_t t,
                  double lr, double weight_decay, const OptHyper& h) {
  check_shapes(theta, g, m);
  check_shapes(theta, g, v);
  if (t == 0) throw std::invalid_argument("adamw_update: step count starts at 1");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    theta[i] -= lr * (mhat / (std::sqrt(vhat) + h.eps) + weight_decay * theta[i]);
  }
}

void adam_mini_update(Tensor& theta, const Tensor& g, Tensor& m, double& v, std::size_t t,
                      double lr, double weight_decay, const OptHyper& h) {
  check_shapes(theta, g, m);
  if (t == 0) throw std::invalid_argument("adam_mini_update: step count starts at 1");
  double mean_sq = 0.0;
  for (double x : g.data()) mean_sq += x * x;
  mean_sq /= static_cast<double>(g.size());
  v = h.beta2 * v + (1.0 - h.beta2) * mean_sq;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const double denom = std::sqrt(v / c2) + h.eps;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    theta[i] -= lr * ((m[i] / c1) / denom + weight_decay * theta[i]);
  }
}

void lion_update(Tensor& theta, const Tensor& g, Tensor& m, double lr, double weight_decay,
                 const OptHyper& h) {
  check_shapes(theta, g, m);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double c = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    const double sign = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
    theta[i] -= lr * (sign + weight_decay * theta[i]);
    m[i] = h.beta2 * m[i] + (1.0 - h.beta2) * g[i];
  }
}

Optimizer::Optimizer(OptimizerKind kind, OptHyper hyper, std::span<const ParamSpec> specs)
    : kind_(kind), hyper_(hyper), specs_(specs.begin(), specs.end()) {
  hyper_.validate();
  for (const auto& s : specs_) {
    m_.emplace_back(s.shape);
    const bool shared = kind_ == OptimizerKind::AdamMini && s.block_type != BlockType::Emb;
    shared_.push_back(shared);
    v_.push_back(kind_ == OptimizerKind::Lion || shared ? Tensor() : Tensor(s.shape));
    v_mini_.push_back(0.0);
  }
}

void Optimizer::step(NamedTensors& params, const GradMap& grads,
                     const std::array<double, kBlockTypeCount>& lr_by_type) {
  if (params.size() != specs_.size() || grads.size() != specs_.size()) {
    throw std::invalid_argument("Optimizer::step: registry size mismatch");
  }
  ++t_;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ParamSpec& s = specs_[i];
    if (params.name(i) != s.id || grads.name(i) != s.id) {
      throw std::invalid_argument("Optimizer::step: tensor order differs from registry at " +
                                  s.id);
    }
    const double lr = lr_by_type[static_cast<std::size_t>(s.block_type)];
    const double wd = s.shape.size() >= 2 ? hyper_.weight_decay : 0.0;
    switch (kind_) {
      case OptimizerKind::AdamW:
        adamw_update(params[i], grads[i], m_[i], v_[i], t_, lr, wd, hyper_);
        break;
      case OptimizerKind::AdamMini:
        if (shared_[i]) {
          adam_mini_update(params[i], grads[i], m_[i], v_mini_[i], t_, lr, wd, hyper_);
        } else {
          adamw_update(params[i], grads[i], m_[i], v_[i], t_, lr, wd, hyper_);
        }
        break;
      case OptimizerKind::Lion:
        lion_update(params[i], grads[i], m_[i], lr, wd, hyper_);
        break;
    }
  }
}

std::size_t Optimizer::second_moment_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (kind_ == OptimizerKind::Lion) continue;
    n += shared_[i] ? 1 : v_[i].size();
  }
  return n;
}

}  // namespace sharplab
