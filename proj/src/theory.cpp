#include "sharplab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sharplab/autodiff.hpp"

namespace sharplab::theory {

using kernels::ActKind;
using kernels::NormKind;

namespace {

constexpr double kTol = 1e-8;

Tensor ones(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}, 1.0); }

/// (1_{n x 1} (x) I_D): maps gamma to vec_row of the n x D matrix with gamma in every row.
Tensor broadcast_rows(std::size_t n, std::size_t d) { return kron(ones(n, 1), identity(d)); }

Tensor diag_of(const Tensor& m) { return diag(m.reshaped({m.size()})); }

Tensor row_of(const Tensor& c) { return c.reshaped({1, c.size()}); }

/// vec(C)^T J reshaped to `shape`.
Tensor pullback(const Tensor& c, const Tensor& jac, const Shape& shape) {
  return matmul(row_of(c), jac).reshaped(shape);
}

Tensor normal_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor t({r, c});
  for (double& v : t.data()) v = nd(rng);
  return t;
}

/// Gains bounded away from zero with random sign.
Tensor random_gamma(std::mt19937_64& rng, std::size_t d) {
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor g({d});
  for (double& v : g.data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return g;
}

double frob(const Tensor& t) { return t.frobenius_norm(); }

void finish(BoundReport& r) {
  if (!r.ok(kTol)) throw TheoryCheckError(r);
}

BoundCheck make_check(std::string group, const Tensor& analytic, const Tensor& autodiff,
                      double rhs) {
  return BoundCheck{std::move(group), frob(analytic), rhs, relative_error(analytic, autodiff)};
}

}  // namespace

Tensor commutation_matrix(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw std::invalid_argument("commutation_matrix: empty dimension");
  Tensor k({n * m, n * m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) k.at(i * m + j, j * n + i) = 1.0;
  }
  return k;
}

Tensor vec_col(const Tensor& a) { return vec_row(transpose(a)); }

Tensor vec_row(const Tensor& a) { return a.reshaped({a.size(), 1}); }

Tensor softmax_jacobian(const Tensor& probs) {
  const std::size_t n = probs.rows();
  const std::size_t m = probs.cols();
  Tensor j({n * m, n * m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        const double pa = probs.at(i, a);
        j.at(i * m + a, i * m + b) = (a == b ? pa : 0.0) - pa * probs.at(i, b);
      }
    }
  }
  return j;
}

FfnInstance random_ffn_instance(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                std::size_t m, kernels::Activation act) {
  if (act.kind == ActKind::GELU) {
    throw std::invalid_argument("random_ffn_instance: activation must be ReLU or LeakyReLU");
  }
  FfnInstance inst;
  inst.act = act;
  inst.x = normal_matrix(rng, n, d);
  inst.gamma = random_gamma(rng, d);
  inst.w2 = normal_matrix(rng, m, d);
  inst.c = normal_matrix(rng, n, d);
  const Tensor xn = kernels::normalize(inst.x, inst.gamma, NormKind::LayerNorm, 0.0);
  // Resample W1 until no preactivation sits at the kink and at least one unit is active.
  for (;;) {
    inst.w1 = normal_matrix(rng, d, m);
    const Tensor pre = matmul(xn, inst.w1);
    const auto z = pre.data();
    if (std::none_of(z.begin(), z.end(), [](double v) { return std::abs(v) < 1e-8; }) &&
        std::any_of(z.begin(), z.end(), [](double v) { return v > 0.0; })) {
      break;
    }
  }
  return inst;
}

AttentionInstance random_attention_instance(std::mt19937_64& rng, std::size_t n,
                                            std::size_t d) {
  AttentionInstance inst;
  // With identical standardized rows the logits are constant per row and the QK
  // gradients vanish identically (possible at D = 2).
  for (;;) {
    inst.x = normal_matrix(rng, n, d);
    const Tensor xs = kernels::standardize(inst.x, NormKind::LayerNorm, 0.0);
    bool distinct = false;
    for (std::size_t i = 1; i < n && !distinct; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        if (std::abs(xs.at(i, k) - xs.at(0, k)) > 1e-6) distinct = true;
      }
    }
    if (distinct) break;
  }
  inst.gamma = random_gamma(rng, d);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  inst.wq = normal_matrix(rng, d, d, s);
  inst.wk = normal_matrix(rng, d, d, s);
  inst.wv = normal_matrix(rng, d, d, s);
  inst.wo = normal_matrix(rng, d, d, s);
  inst.c = normal_matrix(rng, n, d);
  return inst;
}

EmbeddingInstance random_embedding_instance(std::mt19937_64& rng, std::size_t n,
                                            std::size_t d, std::size_t vocab) {
  if (d < 3) {
    throw std::invalid_argument("random_embedding_instance: D >= 3 needed, a standardized "
                                "2-vector is locally constant");
  }
  EmbeddingInstance inst;
  std::uniform_int_distribution<std::size_t> tok(0, vocab - 1);
  inst.x = Tensor({n, vocab});
  for (std::size_t i = 0; i < n; ++i) inst.x.at(i, tok(rng)) = 1.0;
  inst.we = normal_matrix(rng, vocab, d);
  inst.gamma = random_gamma(rng, d);
  return inst;
}

double BoundReport::max_deviation() const {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.deviation);
  return m;
}

double BoundReport::min_slack() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : checks) m = std::min(m, c.slack());
  return m;
}

bool BoundReport::ok(double tol) const {
  for (const auto& c : checks) {
    if (!(c.deviation <= tol) || !(c.slack() >= 0.0)) return false;
  }
  return identity_residual <= tol;
}

std::string BoundReport::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << theorem << " psi=" << psi << " phi=" << phi << " identity_residual=" << identity_residual;
  for (const auto& c : checks) {
    os << "\n  " << c.group << ": lhs=" << c.lhs << " rhs=" << c.rhs << " slack=" << c.slack()
       << " deviation=" << c.deviation;
  }
  return os.str();
}

TheoryCheckError::TheoryCheckError(BoundReport report)
    : std::runtime_error("theory check failed: " + report.describe()),
      report_(std::move(report)) {}

// ---------------------------------------------------------------- theorem 1

FfnGrads theorem1_analytic(const FfnInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.x.cols();
  const std::size_t m = in.w1.cols();
  const Tensor xstd = kernels::standardize(in.x, NormKind::LayerNorm, 0.0);
  const Tensor xn = kernels::normalize(in.x, in.gamma, NormKind::LayerNorm, 0.0);
  const Tensor pre = matmul(xn, in.w1);
  Tensor dsigma = Tensor::zeros_like(pre);
  for (std::size_t i = 0; i < pre.size(); ++i) {
    dsigma[i] = kernels::activation_derivative(pre[i], in.act);
  }
  // sigma(z) = z sigma'(z) for (leaky) ReLU.
  const Tensor a = hadamard(pre, dsigma);
  const Tensor j_sigma = diag_of(dsigma);
  const Tensor back_w2 = kron(identity(n), transpose(in.w2));  // d vec(S) / d vec(A)

  FfnGrads g;
  g.w2 = pullback(in.c, kron(a, identity(d)), in.w2.shape());
  g.w1 = pullback(in.c, matmul(matmul(back_w2, j_sigma), kron(xn, identity(m))), in.w1.shape());
  const Tensor d_gamma = matmul(matmul(matmul(back_w2, j_sigma), kron(identity(n), transpose(in.w1))),
                                matmul(diag_of(xstd), broadcast_rows(n, d)));
  g.gamma = pullback(in.c, d_gamma, in.gamma.shape());
  return g;
}

BoundReport theorem1_check(const FfnInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.x.cols();

  Tape tape;
  const Var x = tape.constant(in.x);
  const Var w1 = tape.parameter("w1", in.w1);
  const Var w2 = tape.parameter("w2", in.w2);
  const Var gamma = tape.parameter("gamma", in.gamma);
  const Var xn = ad::normalize(x, gamma, NormKind::LayerNorm, 0.0);
  const Var y = ad::add(x, ad::matmul(ad::activation(ad::matmul(xn, w1), in.act), w2));
  const GradMap auto_g = tape.backward(ad::inner(in.c, y));

  const FfnGrads g = theorem1_analytic(in);
  const Tensor xstd = kernels::standardize(in.x, NormKind::LayerNorm, 0.0);
  const Tensor pre = matmul(kernels::normalize(in.x, in.gamma, NormKind::LayerNorm, 0.0), in.w1);
  double j_sigma_sq = 0.0;
  for (double z : pre.data()) {
    const double s = kernels::activation_derivative(z, in.act);
    j_sigma_sq += s * s;
  }

  BoundReport r;
  r.theorem = "theorem1";
  const double nd = static_cast<double>(n * d);
  r.psi = static_cast<double>(n) * std::sqrt(static_cast<double>(d)) * frob(in.c) *
          std::sqrt(j_sigma_sq) * frob(in.w1) * frob(in.w2) * frob(in.gamma);
  const double xs = frob(xstd);
  r.identity_residual = std::abs(xs * xs - nd) / nd;
  r.checks.push_back(make_check("W1", g.w1, auto_g.at("w1"), r.psi / frob(in.w1)));
  r.checks.push_back(make_check("W2", g.w2, auto_g.at("w2"), r.psi / frob(in.w2)));
  r.checks.push_back(make_check("gamma", g.gamma, auto_g.at("gamma"), r.psi / frob(in.gamma)));
  finish(r);
  return r;
}

// ---------------------------------------------------------------- theorem 2

namespace {

struct AttentionParts {
  Tensor xstd, xn, probs;
};

AttentionParts attention_parts(const AttentionInstance& in) {
  AttentionParts p;
  const double inv = 1.0 / std::sqrt(static_cast<double>(in.x.cols()));
  p.xstd = kernels::standardize(in.x, NormKind::LayerNorm, 0.0);
  p.xn = kernels::normalize(in.x, in.gamma, NormKind::LayerNorm, 0.0);
  const Tensor logits = matmul(matmul(p.xn, in.wq), matmul(p.xn, in.wk), false, true) * inv;
  p.probs = kernels::softmax_rows(logits, kernels::Masking::None);
  return p;
}

}  // namespace

AttentionGrads theorem2_analytic(const AttentionInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.x.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  const AttentionParts p = attention_parts(in);
  const Tensor& xn = p.xn;
  const Tensor& a = p.probs;
  const Tensor i_n = identity(n);
  const Tensor i_d = identity(d);
  const Tensor knn = commutation_matrix(n, n);

  // d vec(S) / d vec(A) = I_n (x) (XN WV WO)^T
  const Tensor ds_da = kron(i_n, transpose(matmul(matmul(xn, in.wv), in.wo)));
  const Tensor j_a = softmax_jacobian(a);
  const Tensor ds_dm = matmul(ds_da, j_a);

  AttentionGrads g;
  g.wq = pullback(in.c, matmul(ds_dm, kron(xn, matmul(xn, in.wk)) * inv), in.wq.shape());
  g.wk = pullback(in.c, matmul(ds_dm, matmul(knn, kron(xn, matmul(xn, in.wq))) * inv),
                  in.wk.shape());
  g.wv = pullback(in.c, kron(matmul(a, xn), transpose(in.wo)), in.wv.shape());
  g.wo = pullback(in.c, kron(matmul(matmul(a, xn), in.wv), i_d), in.wo.shape());

  const Tensor via_logits =
      matmul(ds_dm, (kron(i_n, matmul(matmul(xn, in.wk), transpose(in.wq))) +
                     matmul(knn, kron(i_n, matmul(matmul(xn, in.wq), transpose(in.wk))))) *
                        inv);
  const Tensor direct = kron(a, matmul(transpose(in.wo), transpose(in.wv)));
  const Tensor d_gamma =
      matmul(via_logits + direct, matmul(diag_of(p.xstd), broadcast_rows(n, d)));
  g.gamma = pullback(in.c, d_gamma, in.gamma.shape());
  return g;
}

BoundReport theorem2_check(const AttentionInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.x.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));

  Tape tape;
  const Var x = tape.constant(in.x);
  const Var wq = tape.parameter("wq", in.wq);
  const Var wk = tape.parameter("wk", in.wk);
  const Var wv = tape.parameter("wv", in.wv);
  const Var wo = tape.parameter("wo", in.wo);
  const Var gamma = tape.parameter("gamma", in.gamma);
  const Var xn = ad::normalize(x, gamma, NormKind::LayerNorm, 0.0);
  const Var logits = ad::scale(ad::matmul(ad::matmul(xn, wq), ad::matmul(xn, wk), false, true), inv);
  const Var probs = ad::softmax_rows(logits, kernels::Masking::None);
  const Var y = ad::add(x, ad::matmul(ad::matmul(ad::matmul(probs, xn), wv), wo));
  const GradMap auto_g = tape.backward(ad::inner(in.c, y));

  const AttentionGrads g = theorem2_analytic(in);
  const AttentionParts p = attention_parts(in);
  const double sn = static_cast<double>(n) * std::sqrt(static_cast<double>(d));
  const double gn = frob(in.gamma);

  BoundReport r;
  r.theorem = "theorem2";
  r.phi = sn * sn * sn * inv * frob(in.c) * frob(softmax_jacobian(p.probs)) * frob(in.wk) *
          frob(in.wq) * frob(in.wv) * frob(in.wo) * gn * gn * gn;
  r.psi = sn * frob(in.c) * frob(p.probs) * frob(in.wv) * frob(in.wo) * gn;
  const double xs = frob(p.xstd);
  const double nd = static_cast<double>(n * d);
  r.identity_residual = std::abs(xs * xs - nd) / nd;
  r.checks.push_back(make_check("WQ", g.wq, auto_g.at("wq"), r.phi / frob(in.wq)));
  r.checks.push_back(make_check("WK", g.wk, auto_g.at("wk"), r.phi / frob(in.wk)));
  r.checks.push_back(make_check("WV", g.wv, auto_g.at("wv"), r.psi / frob(in.wv)));
  r.checks.push_back(make_check("WO", g.wo, auto_g.at("wo"), r.psi / frob(in.wo)));
  r.checks.push_back(make_check("gamma", g.gamma, auto_g.at("gamma"), (2.0 * r.phi + r.psi) / gn));
  finish(r);
  return r;
}

// ---------------------------------------------------------------- theorem 3

namespace {

Tensor center_rows(const Tensor& m) {
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) mean += m.at(i, j);
    mean /= static_cast<double>(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) -= mean;
  }
  return out;
}

double row_norm(const Tensor& m, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) s += m.at(i, j) * m.at(i, j);
  return std::sqrt(s);
}

}  // namespace

EmbeddingJacobians theorem3_analytic(const EmbeddingInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.we.cols();
  const Tensor z = matmul(in.x, in.we);
  const Tensor zc = center_rows(z);
  const Tensor zstd = kernels::standardize(z, NormKind::LayerNorm, 0.0);

  EmbeddingJacobians j;
  j.d_gamma = matmul(diag_of(zstd), broadcast_rows(n, d));

  const Tensor center = identity(d) - ones(d, d) * (1.0 / static_cast<double>(d));
  Tensor blocks({n * d, n * d});
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = row_norm(zc, i);
    Tensor zhat({d, 1});
    for (std::size_t k = 0; k < d; ++k) zhat[k] = zc.at(i, k) / norm;
    const Tensor proj = identity(d) - matmul(zhat, zhat, false, true);
    const Tensor block = matmul(proj, center) * (std::sqrt(static_cast<double>(d)) / norm);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) blocks.at(i * d + a, i * d + b) = block.at(a, b);
    }
  }
  j.d_we = matmul(matmul(kron(identity(n), diag(in.gamma)), blocks), kron(in.x, identity(d)));
  return j;
}

EmbeddingJacobians theorem3_autodiff(const EmbeddingInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.we.cols();
  const std::size_t vocab = in.we.rows();
  Tape tape;
  const Var x = tape.constant(in.x);
  const Var we = tape.parameter("we", in.we);
  const Var gamma = tape.parameter("gamma", in.gamma);
  const Var y = ad::normalize(ad::matmul(x, we), gamma, NormKind::LayerNorm, 0.0);

  EmbeddingJacobians j;
  j.d_gamma = Tensor({n * d, d});
  j.d_we = Tensor({n * d, vocab * d});
  for (std::size_t row = 0; row < n * d; ++row) {
    Tensor e({n, d});
    e[row] = 1.0;
    const GradMap g = tape.backward(ad::inner(e, y));
    for (std::size_t k = 0; k < d; ++k) j.d_gamma.at(row, k) = g.at("gamma")[k];
    for (std::size_t k = 0; k < vocab * d; ++k) j.d_we.at(row, k) = g.at("we")[k];
  }
  return j;
}

BoundReport theorem3_check(const EmbeddingInstance& in) {
  const std::size_t n = in.x.rows();
  const std::size_t d = in.we.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < in.x.cols(); ++k) {
      const double v = in.x.at(i, k);
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("theorem3_check: X is not one-hot");
      s += v;
    }
    if (s != 1.0) throw std::invalid_argument("theorem3_check: X is not one-hot");
  }

  const EmbeddingJacobians a = theorem3_analytic(in);
  const EmbeddingJacobians ad_j = theorem3_autodiff(in);
  const Tensor wc = center_rows(in.we);
  double min_w = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < wc.rows(); ++k) min_w = std::min(min_w, row_norm(wc, k));
  if (!(min_w > 0.0)) throw std::invalid_argument("theorem3_check: a centered WE row vanishes");

  BoundReport r;
  r.theorem = "theorem3";
  const double sn = static_cast<double>(n) * std::sqrt(static_cast<double>(d));
  r.psi = sn * frob(in.gamma) / min_w;
  r.identity_residual = relative_error(center_rows(matmul(in.x, in.we)), matmul(in.x, wc));
  r.checks.push_back(make_check("gamma", a.d_gamma, ad_j.d_gamma, sn));
  r.checks.push_back(make_check("WE", a.d_we, ad_j.d_we, r.psi));
  finish(r);
  return r;
}

// ---------------------------------------------------------------- suite

TheorySummary theory_suite(std::uint64_t seed, std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("theory_suite: trials must be >= 1");
  std::seed_seq seq{seed, std::uint64_t{0x7e0}};
  std::mt19937_64 rng(seq);
  auto dim = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  TheorySummary s;
  s.trials = trials;
  auto record = [&s](BoundReport r, std::size_t which) {
    ++s.passed[which];
    s.max_deviation = std::max(s.max_deviation, r.max_deviation());
    for (const auto& c : r.checks) {
      const std::string key = r.theorem + "/" + c.group;
      auto it = std::find_if(s.worst_slack.begin(), s.worst_slack.end(),
                             [&key](const auto& p) { return p.first == key; });
      if (it == s.worst_slack.end()) {
        s.worst_slack.emplace_back(key, c.slack());
      } else {
        it->second = std::min(it->second, c.slack());
      }
    }
    s.reports.push_back(std::move(r));
  };

  for (std::size_t t = 0; t < trials; ++t) {
    const kernels::Activation act{t % 2 == 0 ? ActKind::ReLU : ActKind::LeakyReLU, 0.1};
    const std::size_t n = dim(2, 6), d = dim(2, 6), m = dim(2, 6);
    record(theorem1_check(random_ffn_instance(rng, n, d, m, act)), 0);
  }
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = dim(2, 4), d = dim(2, 4);
    record(theorem2_check(random_attention_instance(rng, n, d)), 1);
  }
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = dim(2, 4), d = dim(3, 4), vocab = dim(2, 8);
    record(theorem3_check(random_embedding_instance(rng, n, d, vocab)), 2);
  }
  return s;
}

}  // namespace sharplab::theory
