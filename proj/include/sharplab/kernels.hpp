#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sharplab/tensor.hpp"

// Forward kernels and their vector-Jacobian products. The autodiff layer wraps
// these; the theory module and tests also call them directly.
namespace sharplab::kernels {

enum class Masking { None, Causal };
enum class NormKind { LayerNorm, RMSNorm };
enum class ActKind { ReLU, LeakyReLU, GELU };

struct Activation {
  ActKind kind = ActKind::GELU;
  double alpha = 0.01;  // LeakyReLU slope, must lie in (0, 1)

  friend bool operator==(const Activation&, const Activation&) = default;
};

/// Row-wise softmax of a rows x cols matrix. Causal masking zeroes column j > row i.
Tensor softmax_rows(const Tensor& m, Masking masking = Masking::None);
/// `keep` has one byte per entry; zero bytes are masked out (probability exactly 0).
Tensor softmax_rows(const Tensor& m, std::span<const std::uint8_t> keep);
/// VJP of softmax given its output `probs`.
Tensor softmax_rows_backward(const Tensor& probs, const Tensor& grad_out);

/// Row standardisation times gamma. LayerNorm subtracts the row mean and divides by
/// sqrt(biased variance + eps); RMSNorm divides by sqrt(mean square + eps).
Tensor normalize(const Tensor& x, const Tensor& gamma, NormKind kind, double eps);
/// The standardised rows alone (gamma = 1).
Tensor standardize(const Tensor& x, NormKind kind, double eps);
void normalize_backward(const Tensor& x, const Tensor& gamma, NormKind kind, double eps,
                        const Tensor& grad_out, Tensor* grad_x, Tensor* grad_gamma);

double activation(double z, const Activation& act);
double activation_derivative(double z, const Activation& act);
Tensor activation(const Tensor& x, const Activation& act);

/// Mean over rows of -log softmax(logits)[target].
double cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);
/// Gradient of the mean cross-entropy with respect to the logits.
Tensor cross_entropy_backward(const Tensor& logits, std::span<const std::int32_t> targets);

struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
  Masking masking = Masking::Causal;
  double scale = 1.0;
};

/// Multi-head attention over q, k, v of shape (batch*seq) x width. Heads split the
/// width into contiguous slices. `probs`, when non-null, receives the per-(batch, head)
/// attention matrices in batch-major order.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionShape& s,
                 std::vector<Tensor>* probs = nullptr);
void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionShape& s, const std::vector<Tensor>& probs,
                        const Tensor& grad_out, Tensor* grad_q, Tensor* grad_k,
                        Tensor* grad_v);

}  // namespace sharplab::kernels
