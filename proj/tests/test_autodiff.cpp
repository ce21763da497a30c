#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sharplab/autodiff.hpp"
#include "sharplab/model.hpp"

using namespace sharplab;

TEST(FiniteDiff, QuadraticIsExact) {
  const Tensor theta = Tensor::matrix(1, 3, {1.0, -2.0, 0.5});
  const Tensor g = finite_diff_grad(
      [](const Tensor& t) { return t[0] * t[0] + 3.0 * t[1] - t[2] * t[2] * t[2]; }, theta);
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], 3.0, 1e-9);
  EXPECT_NEAR(g[2], -0.75, 1e-9);
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, theta, 0.0),
               std::invalid_argument);
}

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  for (const auto& c : oracle::primitive_grad_checks(0, 50)) {
    EXPECT_LE(c.max_rel_error, 1e-6) << c.name;
    EXPECT_EQ(c.draws, 50u);
  }
}

TEST(Autodiff, TinyModelMatchesFiniteDifferences) {
  const auto c = oracle::model_grad_check(0, 3);
  EXPECT_LE(c.max_rel_error, 1e-6);
}

TEST(Autodiff, GradientAccumulatesOverReuse) {
  Tape tape;
  const Var x = tape.parameter("x", Tensor::matrix(1, 2, {2.0, -1.0}));
  const GradMap g = tape.backward(ad::sum(ad::hadamard(x, x)));
  EXPECT_DOUBLE_EQ(g.at("x")[0], 4.0);
  EXPECT_DOUBLE_EQ(g.at("x")[1], -2.0);
}

TEST(Autodiff, UnusedParameterGetsZeroGradient) {
  Tape tape;
  const Var x = tape.parameter("x", Tensor({2, 2}, 1.0));
  tape.parameter("unused", Tensor({3}, 1.0));
  const GradMap g = tape.backward(ad::sum(x));
  EXPECT_EQ(g.at("unused"), Tensor({3}));
}

TEST(Autodiff, BackwardRejectsForeignOrVectorLoss) {
  Tape a, b;
  const Var x = a.parameter("x", Tensor({2}, 1.0));
  const Var y = b.parameter("y", Tensor({1}, 1.0));
  EXPECT_THROW(a.backward(y), std::invalid_argument);
  EXPECT_THROW(a.backward(x), std::invalid_argument);
  EXPECT_THROW(a.parameter("x", Tensor({1})), std::invalid_argument);
}

TEST(Autodiff, ReplayIsBitwise) {
  const TransformerModel model = build_model(oracle::tiny_config(), 7);
  Batch batch{1, 6, {1, 2, 3, 4, 5, 6}, {2, 3, 4, 5, 6, 7}};
  LossTrace tr = model_loss(model, batch);
  EXPECT_TRUE(tr.tape->replay_matches());
}
