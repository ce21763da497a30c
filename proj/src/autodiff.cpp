#include "sharplab/autodiff.hpp"

#include <memory>
#include <stdexcept>

namespace sharplab {

const Tensor& Var::value() const {
  if (!tape) throw std::invalid_argument("Var: not attached to a tape");
  return tape->value(*this);
}

bool Var::requires_grad() const { return tape && tape->requires_grad(*this); }

Var Tape::push_leaf(Tensor value, bool requires_grad, std::string param_id) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.param_id = std::move(param_id);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push_leaf(std::move(value), false, {}); }

Var Tape::input(Tensor value) { return push_leaf(std::move(value), true, {}); }

Var Tape::parameter(std::string id, Tensor value) {
  if (id.empty()) throw std::invalid_argument("Tape::parameter: empty id");
  for (std::size_t p : params_) {
    if (nodes_[p].param_id == id) throw std::invalid_argument("Tape::parameter: duplicate " + id);
  }
  Var v = push_leaf(std::move(value), true, std::move(id));
  params_.push_back(v.id);
  return v;
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::invalid_argument("Tape: variable was not traced on this tape");
  }
}

Var Tape::record(std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
  Node node;
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  for (const Var& in : inputs) {
    check(in);
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    values.push_back(&nodes_[in.id].value);
  }
  node.value = forward(values);
  node.forward = std::move(forward);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

GradMap Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar");
  }
  for (Node& n : nodes_) {
    n.grad = n.requires_grad ? Tensor::zeros_like(n.value) : Tensor();
  }
  if (nodes_[loss.id].requires_grad) {
    nodes_[loss.id].grad[0] = 1.0;
    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward) continue;
      in_values.clear();
      in_grads.clear();
      for (std::size_t in : n.inputs) {
        in_values.push_back(&nodes_[in].value);
        in_grads.push_back(nodes_[in].requires_grad ? &nodes_[in].grad : nullptr);
      }
      n.backward(BackwardContext{in_values, n.value, n.grad, in_grads});
    }
  }
  GradMap grads;
  for (std::size_t p : params_) {
    const Node& n = nodes_[p];
    grads.insert(n.param_id, n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad);
  }
  return grads;
}

bool Tape::replay_matches() const {
  std::vector<Tensor> values(nodes_.size());
  std::vector<const Tensor*> in_values;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.forward) {
      values[id] = n.value;
      continue;
    }
    in_values.clear();
    for (std::size_t in : n.inputs) in_values.push_back(&values[in]);
    values[id] = n.forward(in_values);
    if (!(values[id] == n.value)) return false;
  }
  return true;
}

namespace ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) throw std::invalid_argument("ad: variable is not attached to a tape");
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b, bool ta, bool tb) {
  return tape_of(a).record(
      {a, b},
      [ta, tb](std::span<const Tensor* const> in) { return sharplab::matmul(*in[0], *in[1], ta, tb); },
      [ta, tb](const BackwardContext& c) {
        const Tensor& A = *c.inputs[0];
        const Tensor& B = *c.inputs[1];
        const Tensor& G = c.output_grad;
        if (Tensor* gA = c.input_grads[0]) {
          if (!ta && !tb) matmul_accumulate(G, B, false, true, *gA);
          else if (ta && !tb) matmul_accumulate(B, G, false, true, *gA);
          else if (!ta && tb) matmul_accumulate(G, B, false, false, *gA);
          else matmul_accumulate(B, G, true, true, *gA);
        }
        if (Tensor* gB = c.input_grads[1]) {
          if (!ta && !tb) matmul_accumulate(A, G, true, false, *gB);
          else if (ta && !tb) matmul_accumulate(A, G, false, false, *gB);
          else if (!ta && tb) matmul_accumulate(G, A, true, false, *gB);
          else matmul_accumulate(G, A, true, true, *gB);
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return tape_of(a).record(
      {a, b}, [](std::span<const Tensor* const> in) { return *in[0] + *in[1]; },
      [](const BackwardContext& c) {
        if (c.input_grads[0]) *c.input_grads[0] += c.output_grad;
        if (c.input_grads[1]) *c.input_grads[1] += c.output_grad;
      });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return tape_of(a).record(
      {a, b}, [](std::span<const Tensor* const> in) { return *in[0] - *in[1]; },
      [](const BackwardContext& c) {
        if (c.input_grads[0]) *c.input_grads[0] += c.output_grad;
        if (c.input_grads[1]) *c.input_grads[1] -= c.output_grad;
      });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  return tape_of(a).record(
      {a, b},
      [](std::span<const Tensor* const> in) { return sharplab::hadamard(*in[0], *in[1]); },
      [](const BackwardContext& c) {
        if (c.input_grads[0]) *c.input_grads[0] += sharplab::hadamard(c.output_grad, *c.inputs[1]);
        if (c.input_grads[1]) *c.input_grads[1] += sharplab::hadamard(c.output_grad, *c.inputs[0]);
      });
}

Var scale(Var a, double s) {
  return tape_of(a).record(
      {a}, [s](std::span<const Tensor* const> in) { return *in[0] * s; },
      [s](const BackwardContext& c) {
        Tensor& g = *c.input_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * c.output_grad[i];
      });
}

Var transpose(Var a) {
  return tape_of(a).record(
      {a}, [](std::span<const Tensor* const> in) { return sharplab::transpose(*in[0]); },
      [](const BackwardContext& c) { *c.input_grads[0] += sharplab::transpose(c.output_grad); });
}

Var sum(Var a) {
  return tape_of(a).record(
      {a}, [](std::span<const Tensor* const> in) { return Tensor::scalar(in[0]->sum()); },
      [](const BackwardContext& c) {
        const double g = c.output_grad[0];
        for (double& v : c.input_grads[0]->data()) v += g;
      });
}

Var inner(const Tensor& cot, Var y) {
  if (cot.size() != y.value().size()) throw std::invalid_argument("inner: size mismatch");
  return tape_of(y).record(
      {y}, [cot](std::span<const Tensor* const> in) { return Tensor::scalar(dot(cot, *in[0])); },
      [cot](const BackwardContext& c) {
        Tensor& g = *c.input_grads[0];
        const double s = c.output_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * cot[i];
      });
}

Var softmax_rows(Var m, Masking masking) {
  return tape_of(m).record(
      {m},
      [masking](std::span<const Tensor* const> in) { return kernels::softmax_rows(*in[0], masking); },
      [](const BackwardContext& c) {
        *c.input_grads[0] += kernels::softmax_rows_backward(c.output, c.output_grad);
      });
}

Var normalize(Var x, Var gamma, NormKind kind, double eps) {
  return tape_of(x).record(
      {x, gamma},
      [kind, eps](std::span<const Tensor* const> in) {
        return kernels::normalize(*in[0], *in[1], kind, eps);
      },
      [kind, eps](const BackwardContext& c) {
        kernels::normalize_backward(*c.inputs[0], *c.inputs[1], kind, eps, c.output_grad,
                                    c.input_grads[0], c.input_grads[1]);
      });
}

Var activation(Var x, Activation act) {
  return tape_of(x).record(
      {x}, [act](std::span<const Tensor* const> in) { return kernels::activation(*in[0], act); },
      [act](const BackwardContext& c) {
        const Tensor& z = *c.inputs[0];
        Tensor& g = *c.input_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += c.output_grad[i] * kernels::activation_derivative(z[i], act);
        }
      });
}

Var gather_rows(Var table, std::vector<std::int32_t> ids) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw std::invalid_argument("gather_rows: table must be a matrix");
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= t.rows()) {
      throw std::out_of_range("gather_rows: row id " + std::to_string(id) + " out of range");
    }
  }
  auto shared = std::make_shared<const std::vector<std::int32_t>>(std::move(ids));
  return tape_of(table).record(
      {table},
      [shared](std::span<const Tensor* const> in) {
        const Tensor& tab = *in[0];
        const std::size_t w = tab.cols();
        Tensor out(Shape{shared->size(), w});
        for (std::size_t r = 0; r < shared->size(); ++r) {
          const double* src = tab.raw() + static_cast<std::size_t>((*shared)[r]) * w;
          std::copy(src, src + w, out.raw() + r * w);
        }
        return out;
      },
      [shared](const BackwardContext& c) {
        Tensor& g = *c.input_grads[0];
        const std::size_t w = g.cols();
        for (std::size_t r = 0; r < shared->size(); ++r) {
          double* dst = g.raw() + static_cast<std::size_t>((*shared)[r]) * w;
          const double* src = c.output_grad.raw() + r * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
      });
}

Var cross_entropy(Var logits, std::vector<std::int32_t> targets) {
  auto shared = std::make_shared<const std::vector<std::int32_t>>(std::move(targets));
  return tape_of(logits).record(
      {logits},
      [shared](std::span<const Tensor* const> in) {
        return Tensor::scalar(kernels::cross_entropy(*in[0], *shared));
      },
      [shared](const BackwardContext& c) {
        Tensor g = kernels::cross_entropy_backward(*c.inputs[0], *shared);
        g *= c.output_grad[0];
        *c.input_grads[0] += g;
      });
}

Var attention(Var q, Var k, Var v, AttentionShape shape) {
  auto probs = std::make_shared<std::vector<Tensor>>();
  return tape_of(q).record(
      {q, k, v},
      [shape, probs](std::span<const Tensor* const> in) {
        return kernels::attention(*in[0], *in[1], *in[2], shape, probs.get());
      },
      [shape, probs](const BackwardContext& c) {
        kernels::attention_backward(*c.inputs[0], *c.inputs[1], *c.inputs[2], shape, *probs,
                                    c.output_grad, c.input_grads[0], c.input_grads[1],
                                    c.input_grads[2]);
      });
}

}  // namespace ad

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                        double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace sharplab
