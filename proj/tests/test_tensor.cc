// Copyright (c) 2026 The svae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svae/errors.h"
#include "svae/grad_check.h"
#include "svae/ops.h"
#include "svae/rng.h"
#include "svae/tensor.h"

namespace svae {
namespace {

using ops::AttentionMask;

std::vector<double> Values(const TensorD& t) {
  return {t.values().begin(), t.values().end()};
}

TEST(TensorTest, ShapeMustMatchValueCount) {
  EXPECT_THROW(TensorD::FromVector({2, 3}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(TensorD::Zeros({0, 3}), DimensionError);
  TensorD t = TensorD::Zeros({2, 3});
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_THROW(t.dim(2), DimensionError);
}

TEST(TensorTest, ItemNeedsOneElement) {
  EXPECT_THROW(TensorD::Zeros({2}).item(), ContractError);
  EXPECT_EQ(TensorD::Scalar1(4.0).item(), 4.0);
}

TEST(AffineTest, IdentityWeights) {
  auto x = TensorD::FromVector({2}, {1, 2});
  auto w = TensorD::FromVector({2, 2}, {1, 0, 0, 1});
  auto b = TensorD::FromVector({2}, {0, 0});
  EXPECT_EQ(Values(ops::Affine(x, w, b)), (std::vector<double>{1, 2}));
}

TEST(AffineTest, HandMultiply) {
  auto x = TensorD::FromVector({2}, {1, 0});
  auto w = TensorD::FromVector({2, 2}, {2, 3, 5, 7});
  auto b = TensorD::FromVector({2}, {1, 1});
  EXPECT_EQ(Values(ops::Affine(x, w, b)), (std::vector<double>{3, 4}));
}

TEST(AffineTest, BiasGradientIsOnes) {
  auto x = TensorD::FromVector({3, 2}, {1, 2, 3, 4, 5, 6});
  auto w = TensorD::FromVector({2, 2}, {1, 2, 3, 4}, true);
  auto b = TensorD::FromVector({2}, {0, 0}, true);
  ops::Sum(ops::Affine(x, w, b)).Backward();
  // One unit of gradient per row of x.
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()),
            (std::vector<double>{3, 3}));
}

TEST(AffineTest, RejectsMismatchedWeights) {
  auto x = TensorD::Zeros({4, 3});
  EXPECT_THROW(ops::Affine(x, TensorD::Zeros({2, 2}), TensorD::Zeros({2})),
               DimensionError);
  EXPECT_THROW(ops::Affine(x, TensorD::Zeros({3, 2}), TensorD::Zeros({3})),
               DimensionError);
}

TEST(Conv1dTest, IdentityKernel) {
  auto x = TensorD::FromVector({4, 1}, {1, -2, 3, 5});
  auto k = TensorD::FromVector({1, 1, 1}, {1});
  auto b = TensorD::FromVector({1}, {0});
  EXPECT_EQ(Values(ops::Conv1dSame(x, k, b)), Values(x));
}

TEST(Conv1dTest, ZeroPaddedBoxFilter) {
  auto x = TensorD::FromVector({3, 1}, {1, 2, 3});
  auto k = TensorD::FromVector({3, 1, 1}, {1, 1, 1});
  auto b = TensorD::FromVector({1}, {0});
  EXPECT_EQ(Values(ops::Conv1dSame(x, k, b)), (std::vector<double>{3, 6, 5}));
}

TEST(Conv1dTest, AgreesWithDirectSum) {
  Rng rng(3);
  const int t = 9, cin = 3, cout = 2, ks = 5;
  std::vector<double> xv(t * cin), kv(ks * cin * cout), bv(cout);
  rng.FillNormal<double>(xv);
  rng.FillNormal<double>(kv);
  rng.FillNormal<double>(bv);
  auto y = ops::Conv1dSame(TensorD::FromVector({t, cin}, xv),
                           TensorD::FromVector({ks, cin, cout}, kv),
                           TensorD::FromVector({cout}, bv));
  for (int i = 0; i < t; ++i) {
    for (int o = 0; o < cout; ++o) {
      double acc = bv[o];
      for (int j = 0; j < ks; ++j) {
        const int src = i + j - ks / 2;
        if (src < 0 || src >= t) continue;
        for (int c = 0; c < cin; ++c) {
          acc += xv[src * cin + c] * kv[(j * cin + c) * cout + o];
        }
      }
      EXPECT_NEAR(y.at(i * cout + o), acc, 1e-12);
    }
  }
}

TEST(Conv1dTest, OutputShape) {
  auto y = ops::Conv1dSame(TensorD::Zeros({16, 4}), TensorD::Zeros({3, 4, 8}),
                           TensorD::Zeros({8}));
  EXPECT_EQ(y.shape(), (Shape{16, 8}));
  auto yb = ops::Conv1dSame(TensorD::Zeros({2, 16, 4}),
                            TensorD::Zeros({3, 4, 8}), TensorD::Zeros({8}));
  EXPECT_EQ(yb.shape(), (Shape{2, 16, 8}));
}

TEST(Conv1dTest, RejectsEvenKernel) {
  EXPECT_THROW(ops::Conv1dSame(TensorD::Zeros({4, 1}), TensorD::Zeros({2, 1, 1}),
                               TensorD::Zeros({1})),
               ConfigError);
}

TEST(AvgPoolTest, PairwiseMeans) {
  auto x = TensorD::FromVector({4, 1}, {1, 3, 3, 5});
  EXPECT_EQ(Values(ops::AvgPoolTime(x)), (std::vector<double>{2, 4}));
}

TEST(AvgPoolTest, ConstantSequence) {
  auto y = ops::AvgPoolTime(TensorD::Full({6, 2}, 1.5));
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 1.5);
}

TEST(AvgPoolTest, OddLengthDropsLastFrame) {
  auto y = ops::AvgPoolTime(TensorD::FromVector({5, 1}, {1, 3, 5, 7, 100}));
  EXPECT_EQ(Values(y), (std::vector<double>{2, 6}));
}

TEST(AvgPoolTest, GradientIsHalf) {
  auto x = TensorD::FromVector({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
  ops::Sum(ops::AvgPoolTime(x)).Backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.5);
  // The same value from central differences.
  GradCheckReport r = FiniteDiffCheck(
      "avg_pool", [&] { return ops::Sum(ops::AvgPoolTime(x)); }, {x});
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(AvgPoolTest, SingleFrameRejected) {
  EXPECT_THROW(ops::AvgPoolTime(TensorD::Zeros({1, 2})), LengthError);
}

TEST(GlobalPoolTest, ColumnMeans) {
  auto y = ops::GlobalAvgPoolTime(TensorD::FromVector({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(Values(y), (std::vector<double>{2, 3}));
}

TEST(GlobalPoolTest, SingleFrameIdentity) {
  auto y = ops::GlobalAvgPoolTime(TensorD::FromVector({1, 3}, {4, 5, 6}));
  EXPECT_EQ(Values(y), (std::vector<double>{4, 5, 6}));
}

TEST(GlobalPoolTest, FramePermutationInvariant) {
  auto a = ops::GlobalAvgPoolTime(TensorD::FromVector({3, 2}, {1, 2, 3, 4, 5, 6}));
  auto b = ops::GlobalAvgPoolTime(TensorD::FromVector({3, 2}, {5, 6, 1, 2, 3, 4}));
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-15);
}

TEST(ElementwiseTest, Relu) {
  EXPECT_EQ(Values(ops::Relu(TensorD::FromVector({3}, {-1, 0, 2}))),
            (std::vector<double>{0, 0, 2}));
}

TEST(ElementwiseTest, SoftmaxSymmetric) {
  auto y = ops::SoftmaxLastDim(TensorD::FromVector({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1), 0.5);
}

TEST(ElementwiseTest, SoftmaxHandValue) {
  auto y = ops::SoftmaxLastDim(
      TensorD::FromVector({2}, {std::log(2.0), std::log(1.0)}));
  EXPECT_NEAR(y.at(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.at(1), 1.0 / 3.0, 1e-15);
}

TEST(ElementwiseTest, SoftmaxLargeInputsStayFinite) {
  auto y = ops::SoftmaxLastDim(TensorD::FromVector({3}, {1000, 1000, -1000}));
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(2), 0.0);
}

TEST(ElementwiseTest, AddBroadcastsTrailingSuffix) {
  auto a = TensorD::FromVector({2, 2}, {1, 2, 3, 4});
  auto b = TensorD::FromVector({2}, {10, 20});
  EXPECT_EQ(Values(ops::Add(a, b)), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_THROW(ops::Add(a, TensorD::Zeros({3})), DimensionError);
}

TEST(ElementwiseTest, BroadcastGradientSumsOverRows) {
  auto a = TensorD::Zeros({3, 2}, true);
  auto b = TensorD::Zeros({2}, true);
  ops::Sum(ops::Add(a, b)).Backward();
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()),
            (std::vector<double>{3, 3}));
}

TEST(ElementwiseTest, ConcatAndSlice) {
  auto a = TensorD::FromVector({2, 1}, {1, 2});
  auto b = TensorD::FromVector({2, 2}, {3, 4, 5, 6});
  auto c = ops::ConcatChannels(a, b);
  EXPECT_EQ(Values(c), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_EQ(Values(ops::SliceLastDim(c, 1, 2)), Values(b));
  EXPECT_THROW(ops::SliceLastDim(c, 2, 2), DimensionError);
}

TEST(ElementwiseTest, ScaleAndTile) {
  auto z = TensorD::FromVector({2}, {1, -1});
  EXPECT_EQ(Values(ops::Scale(z, 3.0)), (std::vector<double>{3, -3}));
  auto tiled = ops::TileTime(z, 3);
  EXPECT_EQ(tiled.shape(), (Shape{3, 2}));
  EXPECT_EQ(Values(tiled), (std::vector<double>{1, -1, 1, -1, 1, -1}));
}

TEST(LayerNormTest, NormalizesRows) {
  auto x = TensorD::FromVector({2, 4}, {1, 2, 3, 4, -3, 0, 3, 6});
  auto y = ops::LayerNorm(x, TensorD::Full({4}, 1.0), TensorD::Zeros({4}), 0.0);
  for (int r = 0; r < 2; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < 4; ++c) mean += y.at(r * 4 + c) / 4;
    for (int c = 0; c < 4; ++c) var += std::pow(y.at(r * 4 + c) - mean, 2) / 4;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-12);
  }
}

TEST(DropoutTest, InferenceIsIdentity) {
  Rng rng(1);
  auto x = TensorD::FromVector({4}, {1, 2, 3, 4});
  EXPECT_EQ(Values(ops::Dropout(x, 0.5, false, rng)), Values(x));
}

TEST(DropoutTest, ZeroRateIsIdentity) {
  Rng rng(1);
  auto x = TensorD::FromVector({4}, {1, 2, 3, 4});
  EXPECT_EQ(Values(ops::Dropout(x, 0.0, true, rng)), Values(x));
}

TEST(DropoutTest, EmpiricalDropFraction) {
  Rng rng(2024);
  auto x = TensorD::Full({100000}, 1.0);
  auto y = ops::Dropout(x, 0.2, true, rng);
  int64_t dropped = 0;
  for (double v : y.values()) {
    if (v == 0.0) {
      ++dropped;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.25);
    }
  }
  EXPECT_NEAR(static_cast<double>(dropped) / 1e5, 0.2, 0.02);
}

TEST(DropoutTest, RejectsInvalidRate) {
  Rng rng(1);
  EXPECT_THROW(ops::Dropout(TensorD::Zeros({2}), 1.0, true, rng), ConfigError);
  EXPECT_THROW(ops::Dropout(TensorD::Zeros({2}), -0.1, true, rng), ConfigError);
}

TEST(AttentionTest, DiagonalMaskPassesValuesThrough) {
  Rng rng(5);
  std::vector<double> q(12), k(12), v(12);
  rng.FillNormal<double>(q);
  rng.FillNormal<double>(k);
  rng.FillNormal<double>(v);
  auto y = ops::MultiHeadAttention(TensorD::FromVector({3, 4}, q),
                                   TensorD::FromVector({3, 4}, k),
                                   TensorD::FromVector({3, 4}, v), 2,
                                   AttentionMask::kDiagonal);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(y.at(i), v[i], 1e-15);
}

TEST(AttentionTest, ZeroQueriesAverageValues) {
  auto v = TensorD::FromVector({2, 2}, {1, 2, 3, 4});
  auto y = ops::MultiHeadAttention(TensorD::Zeros({2, 2}), TensorD::Zeros({2, 2}),
                                   v, 1);
  EXPECT_EQ(Values(y), (std::vector<double>{2, 3, 2, 3}));
}

TEST(AttentionTest, RejectsIndivisibleHeads) {
  auto x = TensorD::Zeros({2, 3});
  EXPECT_THROW(ops::MultiHeadAttention(x, x, x, 2), ConfigError);
}

TEST(BackwardTest, SumGivesOnes) {
  auto x = TensorD::FromVector({3}, {1, 2, 3}, true);
  ops::Sum(x).Backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SquareGivesTwiceInput) {
  auto x = TensorD::FromVector({2}, {1, -2}, true);
  ops::Sum(ops::Mul(x, x)).Backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{2, -4}));
}

TEST(BackwardTest, SharedSubgraphAccumulates) {
  auto x = TensorD::FromVector({1}, {3}, true);
  auto y = ops::Square(x);
  ops::Sum(ops::Add(y, y)).Backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(BackwardTest, NonScalarRejected) {
  auto x = TensorD::FromVector({2}, {1, 2}, true);
  EXPECT_THROW(ops::Square(x).Backward(), ContractError);
}

TEST(BackwardTest, NoGradGuardBuildsNoGraph) {
  auto x = TensorD::FromVector({2}, {1, 2}, true);
  TensorD y;
  {
    NoGradGuard guard;
    y = ops::Square(x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(GradMode::IsEnabled());
}

TEST(BackwardTest, GradShapeMatchesValues) {
  auto w = TensorD::FromVector({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  auto x = TensorD::FromVector({4, 3}, std::vector<double>(12, 0.5));
  ops::Sum(ops::Affine(x, w, TensorD::Zeros({2}))).Backward();
  EXPECT_EQ(static_cast<int64_t>(w.grad().size()), w.numel());
}

TEST(ForwardTest, FiniteOutputsOnFiniteInputs) {
  Rng rng(9);
  std::vector<double> v(64);
  rng.FillNormal<double>(v, 0.0, 30.0);
  auto x = TensorD::FromVector({8, 8}, v);
  for (const TensorD& y :
       {ops::SoftmaxLastDim(x), ops::Tanh(x),
        ops::LayerNorm(x, TensorD::Full({8}, 1.0), TensorD::Zeros({8})),
        ops::MultiHeadAttention(x, x, x, 2)}) {
    for (double e : y.values()) EXPECT_TRUE(std::isfinite(e));
  }
}

TEST(GradCheckTest, QuadraticIsExact) {
  auto x = TensorD::FromVector({3}, {0.3, -1.2, 2.0});
  GradCheckOptions opt;
  opt.epsilon = 1e-4;
  auto r = FiniteDiffCheck(
      "quadratic",
      [&] { return ops::Sum(ops::Scale(ops::Square(x), 1.5)); }, {x}, opt);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.probe_count, 3);
}

TEST(GradCheckTest, CorruptedGradientIsReported) {
  auto x = TensorD::FromVector({3}, {0.3, -1.2, 2.0});
  std::vector<std::vector<double>> wrong = {{0.6, -2.4, 4.0 + 0.1}};
  auto r = CompareGradients(
      "corrupted", [&] { return ops::Sum(ops::Square(x)); }, {x}, wrong);
  EXPECT_GT(r.max_relative_error, 1e-4);
}

TEST(GradCheckTest, NonScalarFunctionRejected) {
  auto x = TensorD::FromVector({2}, {1, 2});
  EXPECT_THROW(FiniteDiffCheck("vector", [&] { return ops::Square(x); }, {x}),
               ContractError);
}

struct OpCase {
  const char* name;
  std::function<TensorD(const TensorD&)> f;
};

class OpGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(OpGradientTest, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  std::vector<double> v(24);
  rng.FillNormal<double>(v);
  for (double& e : v) e += (e >= 0 ? 0.1 : -0.1);  // keep kinks away
  auto x = TensorD::FromVector({2, 6, 2}, v);
  std::vector<double> r(24);
  rng.FillNormal<double>(r);
  auto probe = TensorD::FromVector({2, 6, 2}, r);
  const std::vector<OpCase> cases = {
      {"relu", [](const TensorD& a) { return ops::Relu(a); }},
      {"tanh", [](const TensorD& a) { return ops::Tanh(a); }},
      {"exp", [](const TensorD& a) { return ops::Exp(a); }},
      {"abs", [](const TensorD& a) { return ops::Abs(a); }},
      {"softmax", [](const TensorD& a) { return ops::SoftmaxLastDim(a); }},
      {"avg_pool", [](const TensorD& a) { return ops::AvgPoolTime(a); }},
  };
  const OpCase& c = cases[GetParam()];
  auto f = [&]() -> TensorD {
    TensorD y = c.f(x);
    if (y.shape() == probe.shape()) return ops::Sum(ops::Mul(y, probe));
    return ops::Sum(y);
  };
  auto report = FiniteDiffCheck(c.name, f, {x});
  EXPECT_LT(report.max_relative_error, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(Ops, OpGradientTest, ::testing::Range(0, 6));

TEST(RngTest, StreamsAreReproducibleAndDistinct) {
  Rng a = MakeStream(7, Stream::kBatch, 3);
  Rng b = MakeStream(7, Stream::kBatch, 3);
  Rng c = MakeStream(7, Stream::kBatch, 4);
  Rng d = MakeStream(7, Stream::kDropout, 3);
  const uint64_t va = a.NextU64();
  EXPECT_EQ(va, b.NextU64());
  EXPECT_NE(va, c.NextU64());
  EXPECT_NE(va, d.NextU64());
}

TEST(RngTest, UniformIntCoversClosedRange) {
  Rng rng(4);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) ++hits[rng.UniformInt(0, 4)];
  for (int h : hits) EXPECT_GT(h, 800);
}

}  // namespace
}  // namespace svae
