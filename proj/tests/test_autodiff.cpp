#include <gtest/gtest.h>

#include <cmath>

#include "polarloc/autodiff.hpp"
#include "polarloc/error.hpp"
#include "polarloc/gradcheck.hpp"
#include "polarloc/optim.hpp"
#include "test_util.hpp"

using namespace ploc;

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Tensor<double> x(Shape{3}, std::vector<double>{4, 5, 6});
  x.set_requires_grad(true);
  auto loss = ops::sum(x);
  auto grads = backward(tape, loss);
  EXPECT_EQ(grads.at(x.id()), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Tensor<double> x(Shape{3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad(true);
  auto loss = ops::sum(ops::mul(x, x));
  auto grads = backward(tape, loss);
  EXPECT_EQ(grads.at(x.id()), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, MultiConsumerAccumulates) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Tensor<double> x(Shape{2}, std::vector<double>{1, -2});
  x.set_requires_grad(true);
  // loss = sum(3x + x) = 4 sum(x)
  auto loss = ops::sum(ops::add(ops::scale(x, 3.0), x));
  auto grads = backward(tape, loss);
  EXPECT_EQ(grads.at(x.id()), (std::vector<double>{4, 4}));
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Tensor<double> x(Shape{2}, 1.0);
  x.set_requires_grad(true);
  auto y = ops::scale(x, 2.0);
  EXPECT_THROW(backward(tape, y), ContractViolation);
}

TEST(Backward, NoGradScopeRecordsNothing) {
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Tensor<double> x(Shape{2}, 1.0);
  x.set_requires_grad(true);
  {
    NoGradScope<double> ng;
    auto y = ops::sum(x);
    (void)y;
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Gradcheck, SumOfSquaresIsTight) {
  auto g = testutil::rng(1);
  auto x = testutil::random_tensor<double>({8}, g);
  const double err = gradcheck<double>([](const Tensor<double>& t) { return ops::sum(ops::mul(t, t)); }, x, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Gradcheck, ConstantHasZeroError) {
  auto g = testutil::rng(2);
  auto x = testutil::random_tensor<double>({5}, g);
  const double err = gradcheck<double>([](const Tensor<double>&) { return Tensor<double>::scalar(3.0); }, x, 1e-5);
  EXPECT_EQ(err, 0.0);
}

TEST(Gradcheck, ElementwiseOps) {
  auto g = testutil::rng(3);
  auto a = testutil::random_tensor<double>({2, 3}, g);
  auto b = testutil::random_tensor<double>({2, 3}, g);
  auto w = testutil::random_tensor<double>({2, 3}, g);
  std::function<Tensor<double>()> f = [&] {
    auto y = ops::add(ops::sigmoid(ops::sub(a, b)), ops::relu(ops::add_scalar(ops::mul(a, b), 0.1)));
    return ops::mean(ops::mul(y, w));
  };
  EXPECT_LT(gradcheck<double>(f, {a, b}, 1e-6), 1e-6);
}

TEST(Gradcheck, RowsDistancesConcat) {
  auto g = testutil::rng(4);
  auto a = testutil::random_tensor<double>({3, 4}, g);
  auto c1 = testutil::random_tensor<double>({1, 2, 2, 2}, g);
  auto c2 = testutil::random_tensor<double>({1, 1, 2, 2}, g);
  auto w = testutil::random_tensor<double>({1, 3, 2, 2}, g);
  std::function<Tensor<double>()> f = [&] {
    auto d = ops::euclidean_distance(ops::select_row(a, 0), ops::select_row(a, 2));
    auto c = ops::concat_channels(c1, c2);
    return ops::add(d, ops::sum(ops::mul(ops::reshape(c, Shape{1, 3, 2, 2}), w)));
  };
  EXPECT_LT(gradcheck<double>(f, {a, c1, c2}, 1e-6), 1e-6);
}

TEST(CheckFinite, RejectsNan) {
  std::vector<float> v{1.0f, std::nanf("")};
  EXPECT_THROW(check_finite<float>(v, "v"), NumericalError);
}

namespace {

ParameterStore<double> single(double w, double g) {
  ParameterStore<double> p;
  auto& t = p.add("w", Tensor<double>(Shape{1}, w));
  t.ensure_grad()[0] = g;
  return p;
}

}  // namespace

TEST(Adam, FirstStepMovesByLr) {
  auto p = single(1.0, 1.0);
  auto state = AdamState<double>::init(p, AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  adam_step(p, state);
  EXPECT_NEAR(p.at("w").item(), 0.999, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = single(0.7, 0.0);
  auto state = AdamState<double>::init(p);
  for (int i = 0; i < 10; ++i) adam_step(p, state);
  EXPECT_EQ(p.at("w").item(), 0.7);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  auto p = single(0.0, 0.0);
  auto state = AdamState<double>::init(p, AdamConfig{1e-2, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 5000; ++i) {
    const double w = p.at("w").item();
    p.at("w").ensure_grad()[0] = 2.0 * (w - 3.0);
    adam_step(p, state);
  }
  EXPECT_LT(std::abs(p.at("w").item() - 3.0), 1e-2);
}

TEST(Adam, MissingGradientIsContractViolation) {
  ParameterStore<double> p;
  p.add("w", Tensor<double>(Shape{1}, 1.0));
  auto state = AdamState<double>::init(p);
  EXPECT_THROW(adam_step(p, state), ContractViolation);
}

TEST(Tensor, ShapeMismatchRejected) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ContractViolation);
}
