#include <gtest/gtest.h>

#include <cmath>

#include "stereoagg/baseline.hpp"
#include "stereoagg/gradcheck.hpp"
#include "stereoagg/ops.hpp"
#include "support.hpp"

namespace stereoagg {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using T = Tensor<double>;

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  const T x = random_tensor({4, 4, 1}, rng);
  const T k = T::constant({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(max_abs_diff(conv2d(x, k), x), 0.0);
}

TEST(Conv2d, ZeroInputGivesZero) {
  Rng rng(2);
  const T x = T::zeros({4, 4, 1});
  const T k = random_tensor({3, 3, 1, 2}, rng);
  const T y = conv2d(x, k);
  EXPECT_EQ(y.shape(), (Shape{4, 4, 2}));
  EXPECT_TRUE((y.values() == 0.0).all());
}

TEST(Conv2d, StrideTwoMatchesOracle) {
  Rng rng(3);
  const T x = random_tensor({5, 5, 2}, rng);
  const T k = random_tensor({3, 3, 2, 3}, rng);
  const T y = conv2d(x, k, 2);
  EXPECT_EQ(y.shape(), (Shape{3, 3, 3}));
  EXPECT_LT(max_abs_diff(y, naive_conv_oracle(x, k, {1, 2, 2}, 2, false)), 1e-10);
}

TEST(Conv2d, RejectsEvenKernelAndChannelMismatch) {
  EXPECT_THROW(conv2d(T::zeros({4, 4, 1}), T::zeros({2, 3, 1, 1})), ContractViolation);
  EXPECT_THROW(conv2d(T::zeros({4, 4, 2}), T::zeros({3, 3, 1, 1})), ContractViolation);
}

TEST(Conv3d, IdentityKernel) {
  Rng rng(4);
  const T x = random_tensor({3, 4, 5, 1}, rng);
  EXPECT_EQ(max_abs_diff(conv3d(x, T::constant({1, 1, 1, 1, 1}, 1.0)), x), 0.0);
}

TEST(Conv3d, DepthBoxOnConstantInput) {
  const double c = 0.75;
  const T x = T::constant({5, 3, 3, 1}, c);
  const T y = conv3d(x, T::constant({3, 1, 1, 1, 1}, 1.0));
  for (Index d = 1; d < 4; ++d)
    for (Index i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y[d * 9 + i], 3 * c);
  // Border slices see one padded zero.
  EXPECT_DOUBLE_EQ(y[0], 2 * c);
}

TEST(Conv3d, RectangleKernelMatchesOracle) {
  Rng rng(5);
  const T x = random_tensor({4, 5, 5, 2}, rng);
  const T k = random_tensor({3, 1, 1, 2, 4}, rng);
  EXPECT_LT(max_abs_diff(conv3d(x, k), naive_conv_oracle(x, k, {1, 1, 1}, 3, false)), 1e-10);
}

TEST(Conv3d, RandomizedAgainstOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    const Index kd = 1 + 2 * rng.below(2), kh = 1 + 2 * rng.below(2), kw = 1 + 2 * rng.below(2);
    const Index s = 1 + rng.below(2);
    const T x = random_tensor({1 + rng.below(7), 1 + rng.below(7), 1 + rng.below(7), 1 + rng.below(3)}, rng);
    const T k = random_tensor({kd, kh, kw, x.dim(3), 1 + rng.below(3)}, rng);
    EXPECT_LT(max_abs_diff(conv3d(x, k, {s, s, s}), naive_conv_oracle(x, k, {s, s, s}, 3, false)), 1e-10)
        << "trial " << trial;
  }
}

TEST(Conv3dTranspose, AllOnesKernelSpreadsValue) {
  const T x = T::constant({1, 1, 1, 1}, 2.5);
  const T y = conv3d_transpose(x, T::constant({3, 3, 3, 1, 1}, 1.0), {2, 2, 2}, {2, 2, 2, 1});
  ASSERT_EQ(y.shape(), (Shape{2, 2, 2, 1}));
  for (Index i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 2.5);
}

TEST(Conv3dTranspose, IsTheAdjointOfStridedConv) {
  // <conv(x), y> == <x, conv^T(y)> with the kernel's channel axes swapped.
  Rng rng(7);
  const T x = random_tensor({4, 6, 4, 3}, rng);
  const T k = random_tensor({3, 3, 3, 3, 2}, rng);
  const T cx = conv3d(x, k, {2, 2, 2});
  const T y = random_tensor(cx.shape(), rng);
  ArrayX<double> swapped(k.numel());
  for (Index a = 0; a < 27; ++a)
    for (Index i = 0; i < 3; ++i)
      for (Index o = 0; o < 2; ++o) swapped[(a * 2 + o) * 3 + i] = k[(a * 3 + i) * 2 + o];
  const T kt({3, 3, 3, 2, 3}, swapped);
  const T ty = conv3d_transpose(y, kt, {2, 2, 2}, {4, 6, 4, 3});
  const double lhs = (cx.values() * y.values()).sum();
  const double rhs = (x.values() * ty.values()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));

  // The same product through the tape: d<conv(x), y>/dx is conv^T(y).
  T xv = x.detach();
  xv.set_requires_grad();
  backward(sum(mul(conv3d(xv, k, {2, 2, 2}), y)));
  EXPECT_LT((xv.grad() - ty.values()).abs().maxCoeff(), 1e-10);
}

TEST(Conv3dTranspose, MatchesScatterOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const T x = random_tensor({1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3)}, rng);
    const T k = random_tensor({3, 3, 3, x.dim(3), 1 + rng.below(3)}, rng);
    const Shape out{2 * x.dim(0), 2 * x.dim(1), 2 * x.dim(2), k.dim(4)};
    EXPECT_LT(max_abs_diff(conv3d_transpose(x, k, {2, 2, 2}, out), naive_conv_oracle(x, k, {2, 2, 2}, 3, true, out)),
              1e-10);
  }
}

TEST(Conv3dTranspose, RejectsInconsistentOutputShape) {
  EXPECT_THROW(conv3d_transpose(T::zeros({2, 2, 2, 1}), T::zeros({3, 3, 3, 1, 1}), {2, 2, 2}, {4, 4, 5, 1}),
               ContractViolation);
}

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  BatchNormState<double> state;
  T x({6, 2}, ArrayX<double>(12));
  for (Index i = 0; i < 6; ++i) {
    x.mutable_values()[2 * i] = 3.0;
    x.mutable_values()[2 * i + 1] = -1.5;
  }
  const T y = batch_norm(x, T::constant({2}, 1.0), T::zeros({2}), Mode::train, state);
  EXPECT_LT(y.values().abs().maxCoeff(), 1e-12);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(9);
  BatchNormState<double> state;
  const T x = random_tensor({5, 3}, rng);
  const T beta = T::from({3}, {0.5, -2.0, 7.0});
  const T y = batch_norm(x, T::zeros({3}), beta, Mode::train, state);
  for (Index i = 0; i < 15; ++i) EXPECT_DOUBLE_EQ(y[i], beta[i % 3]);
}

TEST(BatchNorm, OutputStatisticsFollowGammaAndBeta) {
  Rng rng(10);
  BatchNormState<double> state;
  const Index n = 4000;
  const T x = random_tensor({n, 2}, rng, 3.0);
  const T gamma = T::from({2}, {1.5, 0.5});
  const T beta = T::from({2}, {-1.0, 2.0});
  const T y = batch_norm(x, gamma, beta, Mode::train, state);
  for (Index c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (Index i = 0; i < n; ++i) m += y[i * 2 + c];
    m /= n;
    for (Index i = 0; i < n; ++i) v += (y[i * 2 + c] - m) * (y[i * 2 + c] - m);
    EXPECT_NEAR(m, beta[c], 1e-4);
    EXPECT_NEAR(std::sqrt(v / n), gamma[c], 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsAndEval) {
  BatchNormState<double> state;
  const T g = T::constant({1}, 1.0), b = T::zeros({1});
  EXPECT_THROW(batch_norm(T::zeros({3, 1}), g, b, Mode::eval, state), ConfigError);

  batch_norm(T::from({2, 1}, {0.0, 2.0}), g, b, Mode::train, state);
  EXPECT_DOUBLE_EQ(state.running_mean[0], 1.0);
  EXPECT_DOUBLE_EQ(state.running_var[0], 1.0);
  batch_norm(T::from({2, 1}, {4.0, 4.0}), g, b, Mode::train, state);
  EXPECT_NEAR(state.running_mean[0], 0.9 * 1.0 + 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(state.running_var[0], 0.9, 1e-15);

  const T y = batch_norm(T::from({1, 1}, {1.3}), g, b, Mode::eval, state);
  EXPECT_NEAR(y[0], (1.3 - 1.3) / std::sqrt(0.9 + 1e-5), 1e-12);
}

TEST(BatchNorm, RejectsChannelMismatch) {
  BatchNormState<double> state;
  EXPECT_THROW(batch_norm(T::zeros({3, 2}), T::zeros({3}), T::zeros({3}), Mode::train, state), ContractViolation);
}

TEST(Softmax, EqualLogitsAreUniform) {
  const T y = softmax(T::constant({2, 5}, 3.0), 1);
  for (Index i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], 0.2, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(11);
  const T x = random_tensor({6, 4}, rng, 5.0);
  ArrayX<double> shifted = x.values();
  for (Index r = 0; r < 6; ++r) {
    const double c = rng.uniform(-50, 50);
    for (Index g = 0; g < 4; ++g) shifted[r * 4 + g] += c;
  }
  const T a = softmax(x, 1);
  const T b = softmax(T({6, 4}, shifted), 1);
  EXPECT_LT(max_abs_diff(a, b), 1e-7);
  for (Index r = 0; r < 6; ++r) EXPECT_NEAR(a.values().segment(r * 4, 4).sum(), 1.0, 1e-6);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const T y = softmax(T::from({3}, {1000.0, 0.0, -1000.0}), 0);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(MaxReduce, LowestIndexWinsTies) {
  const auto r = max_reduce(T::from({3}, {3.0, 7.0, 7.0}), 0);
  EXPECT_DOUBLE_EQ(r.values.item(), 7.0);
  ASSERT_EQ(r.indices.size(), 1u);
  EXPECT_EQ(r.indices[0], 1);
}

TEST(MaxReduce, GradientGoesToWinnerOnly) {
  T x = T::from({2, 3}, {1.0, 5.0, 5.0, 9.0, -1.0, 2.0});
  x.set_requires_grad();
  backward(sum(max_reduce(x, 1).values));
  const ArrayX<double> g = x.grad();
  const double want[] = {0, 1, 0, 1, 0, 0};
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(g[i], want[i]);
}

TEST(Ops, AxisOutOfRangeIsAContractViolation) {
  EXPECT_THROW(softmax(T::zeros({2, 2}), 2), ContractViolation);
  EXPECT_THROW(max_reduce(T::zeros({2, 2}), -3), ContractViolation);
  // Negative axes count from the end.
  EXPECT_EQ(max_reduce(T::from({2, 2}, {1, 4, 3, 2}), -1).indices, (std::vector<Index>{1, 0}));
  EXPECT_THROW(sum(T::zeros({2}), 1), ContractViolation);
}

TEST(Broadcast, TrailingAxisAlignment) {
  EXPECT_EQ(broadcast_shape({4, 3, 2}, {2}), (Shape{4, 3, 2}));
  EXPECT_EQ(broadcast_shape({4, 1, 2}, {3, 1}), (Shape{4, 3, 2}));
  EXPECT_THROW(broadcast_shape({4, 3}, {2}), ContractViolation);
  const T y = add(T::from({2, 2}, {1, 2, 3, 4}), T::from({2}, {10, 20}));
  EXPECT_EQ(y.values()[3], 24.0);
}

TEST(Backward, WeightedSumGivesInputAsGradient) {
  Rng rng(12);
  T w = random_tensor({3, 4}, rng);
  const T x = random_tensor({3, 4}, rng);
  w.set_requires_grad();
  backward(sum(mul(w, x)));
  EXPECT_TRUE((w.grad() == x.values()).all());
  EXPECT_TRUE(Tape<double>::active().empty());
}

TEST(Backward, TwoConsumersAccumulate) {
  T x = T::from({2}, {1.5, -2.0});
  x.set_requires_grad();
  // d/dx [sum(3x) + sum(x*x)] = 3 + 2x
  backward(add(sum(scale(x, 3.0)), sum(mul(x, x))));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -1.0);
}

TEST(Backward, NonScalarLossIsRejected) {
  T x = T::from({2}, {1.0, 2.0});
  x.set_requires_grad();
  const T y = scale(x, 2.0);
  EXPECT_THROW(backward(y), ContractViolation);
  Tape<double>::active().clear();
}

TEST(Backward, NoGradGuardSuppressesRecording) {
  T x = T::from({2}, {1.0, 2.0});
  x.set_requires_grad();
  {
    NoGradGuard guard;
    relu(x);
    EXPECT_TRUE(Tape<double>::active().empty());
  }
  relu(x);
  EXPECT_FALSE(Tape<double>::active().empty());
  Tape<double>::active().clear();
}

TEST(NumericFaults, NonFiniteOutputNamesTheOp) {
  const T x = T::from({1, 1, 1}, {INFINITY});
  try {
    conv2d(x, T::constant({1, 1, 1, 1}, 0.0));
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_EQ(e.op(), "conv2d");
  }
}

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  Rng rng(13);
  const Tensor<float> x = random_tensor<float>({4, 6, 6, 3}, rng);
  const Tensor<float> k = random_tensor<float>({3, 3, 3, 3, 5}, rng);
  const Tensor<float> a = conv3d(x, k, {2, 2, 2});
  const Tensor<float> b = conv3d(x, k, {2, 2, 2});
  EXPECT_TRUE((a.values() == b.values()).all());
}

TEST(GradientSuite, TensorOpsPass) {
  for (const GradCheckResult& r : run_gradient_suite(1, "tensor-autodiff", 20)) {
    EXPECT_TRUE(r.passed()) << r.to_line();
    EXPECT_GE(r.instances, 20);
  }
}

TEST(GradientSuite, UnknownModuleIsAConfigError) {
  EXPECT_THROW(run_gradient_suite(1, "no-such-module"), ConfigError);
}

TEST(GradientSuite, DetectsAWrongGradient) {
  // x^2 computed as mul(x, detached x) has half the true gradient.
  Rng rng(14);
  const ScalarFunction f = [](const std::vector<T>& in) { return mul(in[0], in[0].detach()); };
  const GradientComparison c = compare_gradients(f, {random_tensor({5}, rng)}, rng, kOpTolerance);
  EXPECT_GT(c.max_error, 0.1);
}

}  // namespace
}  // namespace stereoagg
