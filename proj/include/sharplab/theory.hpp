#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharplab/kernels.hpp"
#include "sharplab/tensor.hpp"

namespace sharplab::theory {

/// Permutation K (nm x nm) with K vec_col(A) = vec_row(A) for every n x m matrix A.
Tensor commutation_matrix(std::size_t n, std::size_t m);

/// Column-wise vectorization of a matrix, returned as an (rows*cols) x 1 tensor.
Tensor vec_col(const Tensor& a);
/// Row-wise vectorization, (rows*cols) x 1.
Tensor vec_row(const Tensor& a);

/// Row-wise softmax Jacobian d vec(A) / d vec(M): block diagonal with blocks
/// diag(a_i) - a_i^T a_i.
Tensor softmax_jacobian(const Tensor& probs);

/// Y = X + act(Norm(X; gamma) W1) W2, Q = <C, Y>.
struct FfnInstance {
  Tensor x, w1, w2, gamma, c;
  kernels::Activation act{kernels::ActKind::ReLU, 0.01};
};

/// Y = X + softmax(XN WQ WK^T XN^T / sqrt(D)) XN WV WO with XN = Norm(X; gamma),
/// single head, no mask. Q = <C, Y>.
struct AttentionInstance {
  Tensor x, wq, wk, wv, wo, gamma, c;
};

/// Y = Norm(X WE; gamma) with one-hot rows in X (n x d).
struct EmbeddingInstance {
  Tensor x, we, gamma;
};

FfnInstance random_ffn_instance(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                std::size_t m, kernels::Activation act);
AttentionInstance random_attention_instance(std::mt19937_64& rng, std::size_t n,
                                            std::size_t d);
EmbeddingInstance random_embedding_instance(std::mt19937_64& rng, std::size_t n,
                                            std::size_t d, std::size_t vocab);

struct BoundCheck {
  std::string group;
  double lhs = 0.0;        // analytic gradient (or Jacobian) norm
  double rhs = 0.0;        // bound
  double deviation = 0.0;  // relative error analytic vs autodiff

  double slack() const { return rhs - lhs; }
};

struct BoundReport {
  std::string theorem;
  std::vector<BoundCheck> checks;
  double psi = 0.0;
  double phi = 0.0;
  /// |‖X_std‖_F^2 - nD| (theorems 1, 2) or |z~_i - sum_k x_ik w~_k| (theorem 3).
  double identity_residual = 0.0;

  double max_deviation() const;
  double min_slack() const;
  bool ok(double tol = 1e-8) const;
  std::string describe() const;
};

class TheoryCheckError : public std::runtime_error {
 public:
  explicit TheoryCheckError(BoundReport report);
  const BoundReport& report() const noexcept { return report_; }

 private:
  BoundReport report_;
};

/// Analytic gradients and bounds checked against autodiff. Throw TheoryCheckError when
/// a deviation exceeds 1e-8 or an inequality has negative slack.
BoundReport theorem1_check(const FfnInstance& inst);
BoundReport theorem2_check(const AttentionInstance& inst);
BoundReport theorem3_check(const EmbeddingInstance& inst);

// Analytic pieces, exposed for tests.
struct FfnGrads {
  Tensor w1, w2, gamma;
};
FfnGrads theorem1_analytic(const FfnInstance& inst);

struct AttentionGrads {
  Tensor wq, wk, wv, wo, gamma;
};
AttentionGrads theorem2_analytic(const AttentionInstance& inst);

struct EmbeddingJacobians {
  Tensor d_gamma;  // nD x D
  Tensor d_we;     // nD x dD
};
EmbeddingJacobians theorem3_analytic(const EmbeddingInstance& inst);
EmbeddingJacobians theorem3_autodiff(const EmbeddingInstance& inst);

struct TheorySummary {
  std::size_t trials = 0;
  std::array<std::size_t, 3> passed{};
  std::vector<BoundReport> reports;
  double max_deviation = 0.0;
  /// Smallest rhs - lhs per "theorem/group", in first-seen order.
  std::vector<std::pair<std::string, double>> worst_slack;
};

/// Runs every theorem on `trials` random instances each.
TheorySummary theory_suite(std::uint64_t seed, std::size_t trials);

}  // namespace sharplab::theory
