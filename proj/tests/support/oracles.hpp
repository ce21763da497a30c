#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sharplab/autodiff.hpp"
#include "sharplab/model.hpp"
#include "sharplab/sharpness.hpp"

namespace sharplab::oracle {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0);

/// L=2, D=8, H=2, M=32, d=11, n=6.
ModelConfig tiny_config();

using Builder = std::function<Var(std::span<const Var>)>;

/// Builds y = build(inputs) on a tape, draws a random cotangent C and compares the
/// reverse-mode gradient of <C, y> (or y itself when scalar) with central differences
/// for every input. Returns the largest relative error.
double grad_check_once(const Builder& build, const std::vector<Tensor>& inputs,
                       std::mt19937_64& rng, double h = 1e-5);

struct GradCheck {
  std::string name;
  std::size_t draws = 0;
  double max_rel_error = 0.0;
};

/// Every differentiable primitive, `draws` random draws each.
std::vector<GradCheck> primitive_grad_checks(std::uint64_t seed, std::size_t draws);

/// Full tiny model loss against central differences over every parameter coordinate.
GradCheck model_grad_check(std::uint64_t seed, std::size_t draws);

struct Unbiasedness {
  std::size_t coords = 0;
  std::size_t within = 0;
  double fraction() const { return coords ? double(within) / double(coords) : 0.0; }
};

/// Mean of B g(.)g over `draws` label draws against the mean of the per-sample
/// estimator (1/B) sum_b grad l_b (.) grad l_b over independent draws, per coordinate
/// within 3 combined standard errors.
Unbiasedness fisher_unbiasedness(std::uint64_t seed, std::size_t draws);

/// Small model used by the Monte Carlo oracle: L=1, D=4, H=1, M=8, d=5, n=4.
ModelConfig micro_config();

}  // namespace sharplab::oracle
