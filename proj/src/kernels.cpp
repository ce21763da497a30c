#include "sharplab/kernels.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sharplab::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;
using ConstBlock = Eigen::Map<const RowMat, 0, Strided>;
using Block = Eigen::Map<RowMat, 0, Strided>;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected a matrix, got " +
                                shape_string(t.shape()));
  }
}

// Softmax of one row restricted to entries where keep(j) is true.
template <typename Keep>
void softmax_row(const double* in, double* out, std::size_t cols, Keep keep) {
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < cols; ++j) {
    if (keep(j)) {
      mx = std::max(mx, in[j]);
      any = true;
    }
  }
  if (!any) throw std::domain_error("softmax_rows: every entry of a row is masked");
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (keep(j)) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

}  // namespace

Tensor softmax_rows(const Tensor& m, Masking masking) {
  require_matrix(m, "softmax_rows");
  Tensor out(m.shape());
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* in = m.raw() + i * cols;
    double* o = out.raw() + i * cols;
    if (masking == Masking::Causal) {
      softmax_row(in, o, cols, [i](std::size_t j) { return j <= i; });
    } else {
      softmax_row(in, o, cols, [](std::size_t) { return true; });
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& m, std::span<const std::uint8_t> keep) {
  require_matrix(m, "softmax_rows");
  if (keep.size() != m.size()) throw std::invalid_argument("softmax_rows: mask size mismatch");
  Tensor out(m.shape());
  const std::size_t cols = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const std::uint8_t* k = keep.data() + i * cols;
    softmax_row(m.raw() + i * cols, out.raw() + i * cols, cols,
                [k](std::size_t j) { return k[j] != 0; });
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& probs, const Tensor& grad_out) {
  Tensor g(probs.shape());
  const std::size_t cols = probs.cols();
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double* p = probs.raw() + i * cols;
    const double* go = grad_out.raw() + i * cols;
    double inner = 0.0;
    for (std::size_t j = 0; j < cols; ++j) inner += p[j] * go[j];
    double* gi = g.raw() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) gi[j] = p[j] * (go[j] - inner);
  }
  return g;
}

namespace {

struct RowMoments {
  double mean = 0.0;
  double inv_scale = 0.0;
};

RowMoments row_moments(const double* x, std::size_t d, NormKind kind, double eps) {
  RowMoments mom;
  if (kind == NormKind::LayerNorm) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[j];
    mom.mean = s / static_cast<double>(d);
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double c = x[j] - mom.mean;
    sq += c * c;
  }
  const double denom = sq / static_cast<double>(d) + eps;
  if (!(denom > 0.0)) throw std::domain_error("normalize: zero row scale (division by zero)");
  mom.inv_scale = 1.0 / std::sqrt(denom);
  return mom;
}

void check_norm_args(const Tensor& x, NormKind kind, double eps) {
  require_matrix(x, "normalize");
  if (eps < 0.0) throw std::invalid_argument("normalize: eps must be >= 0");
  if (kind == NormKind::LayerNorm && x.cols() < 2) {
    throw std::invalid_argument("normalize: LayerNorm needs at least two columns");
  }
}

}  // namespace

Tensor standardize(const Tensor& x, NormKind kind, double eps) {
  check_norm_args(x, kind, eps);
  const std::size_t d = x.cols();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.raw() + i * d;
    const RowMoments mom = row_moments(xi, d, kind, eps);
    double* o = out.raw() + i * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = (xi[j] - mom.mean) * mom.inv_scale;
  }
  return out;
}

Tensor normalize(const Tensor& x, const Tensor& gamma, NormKind kind, double eps) {
  check_norm_args(x, kind, eps);
  if (gamma.size() != x.cols()) throw std::invalid_argument("normalize: gamma width mismatch");
  Tensor out = standardize(x, kind, eps);
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* o = out.raw() + i * d;
    for (std::size_t j = 0; j < d; ++j) o[j] *= gamma[j];
  }
  return out;
}

void normalize_backward(const Tensor& x, const Tensor& gamma, NormKind kind, double eps,
                        const Tensor& grad_out, Tensor* grad_x, Tensor* grad_gamma) {
  const std::size_t d = x.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  std::vector<double> xhat(d), dxhat(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.raw() + i * d;
    const double* go = grad_out.raw() + i * d;
    const RowMoments mom = row_moments(xi, d, kind, eps);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[j] = (xi[j] - mom.mean) * mom.inv_scale;
      dxhat[j] = go[j] * gamma[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat[j];
      if (grad_gamma) (*grad_gamma)[j] += go[j] * xhat[j];
    }
    if (!grad_x) continue;
    mean_dxhat *= inv_d;
    mean_dxhat_xhat *= inv_d;
    if (kind == NormKind::RMSNorm) mean_dxhat = 0.0;
    double* gx = grad_x->raw() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      gx[j] += mom.inv_scale * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
    }
  }
}

double activation(double z, const Activation& act) {
  switch (act.kind) {
    case ActKind::ReLU:
      return z > 0.0 ? z : 0.0;
    case ActKind::LeakyReLU:
      return z > 0.0 ? z : act.alpha * z;
    case ActKind::GELU:
      return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 * 0.5));
  }
  return 0.0;
}

double activation_derivative(double z, const Activation& act) {
  switch (act.kind) {
    case ActKind::ReLU:
      return z > 0.0 ? 1.0 : 0.0;
    case ActKind::LeakyReLU:
      return z > 0.0 ? 1.0 : act.alpha;
    case ActKind::GELU: {
      const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 * 0.5));
      const double pdf = std::exp(-0.5 * z * z) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + z * pdf;
    }
  }
  return 0.0;
}

Tensor activation(const Tensor& x, const Activation& act) {
  if (act.kind == ActKind::LeakyReLU && !(act.alpha > 0.0 && act.alpha < 1.0)) {
    throw std::invalid_argument("activation: LeakyReLU slope must lie in (0, 1)");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activation(x[i], act);
  return out;
}

namespace {

void check_targets(const Tensor& logits, std::span<const std::int32_t> targets) {
  require_matrix(logits, "cross_entropy");
  if (targets.size() != logits.rows()) {
    throw std::invalid_argument("cross_entropy: expected " + std::to_string(logits.rows()) +
                                " targets, got " + std::to_string(targets.size()));
  }
  const auto d = static_cast<std::int64_t>(logits.cols());
  for (std::int32_t t : targets) {
    if (t < 0 || t >= d) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " outside [0, " + std::to_string(d) + ")");
    }
  }
}

double log_sum_exp(const double* row, std::size_t d) {
  double mx = row[0];
  for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += std::exp(row[j] - mx);
  return mx + std::log(s);
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  check_targets(logits, targets);
  const std::size_t d = logits.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* row = logits.raw() + i * d;
    total += log_sum_exp(row, d) - row[targets[i]];
  }
  return total / static_cast<double>(logits.rows());
}

Tensor cross_entropy_backward(const Tensor& logits, std::span<const std::int32_t> targets) {
  check_targets(logits, targets);
  const std::size_t d = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  Tensor g(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* row = logits.raw() + i * d;
    const double lse = log_sum_exp(row, d);
    double* gi = g.raw() + i * d;
    for (std::size_t j = 0; j < d; ++j) gi[j] = std::exp(row[j] - lse) * inv_n;
    gi[targets[i]] -= inv_n;
  }
  return g;
}

namespace {

void check_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionShape& s) {
  require_matrix(q, "attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw std::invalid_argument("attention: q, k, v shapes differ");
  }
  if (q.rows() != s.batch * s.seq) throw std::invalid_argument("attention: row count mismatch");
  if (s.heads == 0 || q.cols() % s.heads != 0) {
    throw std::invalid_argument("attention: width not divisible by head count");
  }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionShape& s,
                 std::vector<Tensor>* probs) {
  check_attention(q, k, v, s);
  const std::size_t width = q.cols();
  const std::size_t dh = width / s.heads;
  const auto T = static_cast<Eigen::Index>(s.seq);
  const auto H = static_cast<Eigen::Index>(dh);
  Tensor out(q.shape());
  if (probs) probs->clear();
  Tensor scores(Shape{s.seq, s.seq});
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      const std::size_t off = b * s.seq * width + h * dh;
      ConstBlock Q(q.raw() + off, T, H, Strided(width));
      ConstBlock K(k.raw() + off, T, H, Strided(width));
      ConstBlock V(v.raw() + off, T, H, Strided(width));
      Eigen::Map<RowMat> S(scores.raw(), T, T);
      S.noalias() = s.scale * (Q * K.transpose());
      Tensor p = softmax_rows(scores, s.masking);
      Eigen::Map<const RowMat> P(p.raw(), T, T);
      Block O(out.raw() + off, T, H, Strided(width));
      O.noalias() = P * V;
      if (probs) probs->push_back(std::move(p));
    }
  }
  return out;
}

void attention_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionShape& s, const std::vector<Tensor>& probs,
                        const Tensor& grad_out, Tensor* grad_q, Tensor* grad_k,
                        Tensor* grad_v) {
  check_attention(q, k, v, s);
  if (probs.size() != s.batch * s.heads) {
    throw std::invalid_argument("attention_backward: cached probabilities missing");
  }
  const std::size_t width = q.cols();
  const std::size_t dh = width / s.heads;
  const auto T = static_cast<Eigen::Index>(s.seq);
  const auto H = static_cast<Eigen::Index>(dh);
  RowMat dP(T, T);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      const std::size_t off = b * s.seq * width + h * dh;
      ConstBlock Q(q.raw() + off, T, H, Strided(width));
      ConstBlock K(k.raw() + off, T, H, Strided(width));
      ConstBlock V(v.raw() + off, T, H, Strided(width));
      ConstBlock dO(grad_out.raw() + off, T, H, Strided(width));
      const Tensor& p = probs[b * s.heads + h];
      Eigen::Map<const RowMat> P(p.raw(), T, T);
      if (grad_v) {
        Block dV(grad_v->raw() + off, T, H, Strided(width));
        dV.noalias() += P.transpose() * dO;
      }
      if (!grad_q && !grad_k) continue;
      dP.noalias() = dO * V.transpose();
      // dS = P .* (dP - rowsum(P .* dP))
      for (Eigen::Index i = 0; i < T; ++i) {
        const double inner = P.row(i).dot(dP.row(i));
        for (Eigen::Index j = 0; j < T; ++j) dP(i, j) = P(i, j) * (dP(i, j) - inner);
      }
      if (grad_q) {
        Block dQ(grad_q->raw() + off, T, H, Strided(width));
        dQ.noalias() += s.scale * (dP * K);
      }
      if (grad_k) {
        Block dK(grad_k->raw() + off, T, H, Strided(width));
        dK.noalias() += s.scale * (dP.transpose() * Q);
      }
    }
  }
}

}  // namespace sharplab::kernels
