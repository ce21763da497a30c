#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sharplab/kernels.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  bool requires_grad() const;
};

/// Everything a node's reverse rule needs: its inputs, its output and the incoming
/// cotangent. `input_grads[i]` is null when input i does not require a gradient.
struct BackwardContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& output_grad;
  std::span<Tensor* const> input_grads;
};

using ForwardFn = std::function<Tensor(std::span<const Tensor* const>)>;
using BackwardFn = std::function<void(const BackwardContext&)>;

/// Append-only record of primitive applications. Reverse-mode accumulation can start
/// from any scalar node; `replay` re-runs every forward rule from the leaves.
/// A tape is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient but is not a registered parameter.
  Var input(Tensor value);
  /// Registered parameter leaf; appears in the GradMap returned by backward().
  Var parameter(std::string id, Tensor value);

  Var record(std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  /// Exact reverse-mode gradients of a scalar node with respect to every registered
  /// parameter. Parameters the loss does not depend on get zero tensors.
  GradMap backward(Var loss);

  const Tensor& value(Var v) const;
  /// Gradient accumulated by the last backward() call (zeros if none).
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  /// Recomputes all non-leaf nodes from the trace and reports whether every value is
  /// bitwise identical to the recorded one.
  bool replay_matches() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& parameter_nodes() const noexcept { return params_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    ForwardFn forward;
    BackwardFn backward;
    std::string param_id;
    bool requires_grad = false;
  };

  Var push_leaf(Tensor value, bool requires_grad, std::string param_id);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> params_;
};

/// Differentiable primitives. All operands must live on the same tape.
namespace ad {

using kernels::Activation;
using kernels::ActKind;
using kernels::AttentionShape;
using kernels::Masking;
using kernels::NormKind;

Var matmul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var sum(Var a);
/// <C, Y> for a constant cotangent C.
Var inner(const Tensor& c, Var y);
Var softmax_rows(Var m, Masking masking = Masking::None);
Var normalize(Var x, Var gamma, NormKind kind, double eps);
Var activation(Var x, Activation act);
/// Rows of `table` selected by `ids` (embedding lookup).
Var gather_rows(Var table, std::vector<std::int32_t> ids);
Var cross_entropy(Var logits, std::vector<std::int32_t> targets);
Var attention(Var q, Var k, Var v, AttentionShape shape);

}  // namespace ad

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                        double h = 1e-5);

}  // namespace sharplab
