/* Copyright 2026 The zsl-music Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "zsl/diff_core.hpp"
#include "zsl/gradcheck.hpp"

namespace zsl {
namespace {

NdArray<double> randn(const Shape& s, std::mt19937_64& rng) {
  NdArray<double> a(s);
  std::normal_distribution<double> g;
  for (auto& v : a.storage()) v = g(rng);
  return a;
}

/// Zero-padded cross-correlation by explicit loops.
NdArray<double> conv_oracle(const NdArray<double>& x, const NdArray<double>& w, const NdArray<double>& b,
                            std::size_t stride) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const long p = static_cast<long>(K / 2);
  const std::size_t Ho = (H + 2 * (K / 2) - K) / stride + 1, Wo = (W + 2 * (K / 2) - K) / stride + 1;
  NdArray<double> y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t u = 0; u < K; ++u) {
            for (std::size_t v = 0; v < K; ++v) {
              const long r = static_cast<long>(i * stride + u) - p;
              const long q = static_cast<long>(j * stride + v) - p;
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              s += w[((o * C + c) * K + u) * K + v] * x.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
            }
          }
        }
        y.at(o, i, j) = s;
      }
    }
  }
  return y;
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 rng(1);
  for (std::size_t k : {1u, 3u, 5u}) {
    for (std::size_t stride : {1u, 2u}) {
      const auto spec = LayerSpec::conv2d("c", 3, 4, k, stride);
      ParameterStore<double> store;
      store.add("c.weight", randn({4, 3, k, k}, rng));
      store.add("c.bias", randn({4}, rng));
      const auto x = randn({3, 7, 9}, rng);
      const auto [y, cache] = layer_forward(spec, store, x);
      const auto ref = conv_oracle(x, store.value("c.weight"), store.value("c.bias"), stride);
      ASSERT_EQ(y.shape(), ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
  }
}

TEST(Conv2d, UnitKernelIsIdentity) {
  ParameterStore<double> store;
  store.add("c.weight", NdArray<double>({1, 1, 1, 1}, {1.0}));
  store.add("c.bias", NdArray<double>({1}));
  std::mt19937_64 rng(2);
  const auto x = randn({1, 5, 6}, rng);
  const auto [y, cache] = layer_forward(LayerSpec::conv2d("c", 1, 1, 1), store, x);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, SamePaddingPreservesShapeForOddKernels) {
  for (std::size_t k = 1; k <= 9; k += 2) {
    const auto spec = LayerSpec::conv2d("c", 2, 3, k);
    for (std::size_t h : {k, k + 1, std::size_t{13}}) {
      EXPECT_EQ(spec.output_shape({2, h, h + 2}), (Shape{3, h, h + 2}));
    }
  }
}

TEST(Relu, ForwardAndBackward) {
  ParameterStore<double> store;
  const auto [y, cache] = layer_forward(LayerSpec::relu(), store, NdArray<double>({3}, {-1, 0, 2}));
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 0, 2}));
  const auto [y2, c2] = layer_forward(LayerSpec::relu(), store, NdArray<double>({2}, {-1, 2}));
  const auto g = layer_backward(LayerSpec::relu(), c2, NdArray<double>({2}, {1, 1}), store);
  EXPECT_EQ(g.storage(), (std::vector<double>{0, 1}));
}

TEST(Dense, IdentityAndTransposeGradient) {
  ParameterStore<double> store;
  NdArray<double> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  store.add("d.weight", eye);
  store.add("d.bias", NdArray<double>({3}));
  const NdArray<double> x({3}, {0.3, -1.5, 2.0});
  const auto spec = LayerSpec::dense("d", 3, 3);
  EXPECT_EQ(layer_forward(spec, store, x).first, x);

  std::mt19937_64 rng(3);
  ParameterStore<double> s2;
  s2.add("d.weight", randn({4, 3}, rng));
  s2.add("d.bias", randn({4}, rng));
  const auto spec2 = LayerSpec::dense("d", 3, 4);
  const auto [y, cache] = layer_forward(spec2, s2, x);
  const auto gin = layer_backward(spec2, cache, NdArray<double>({4}, {1, 0, 0, 0}), s2);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(gin[c], s2.value("d.weight").at(0, c));
}

TEST(MaxPool, ValuesAndFirstIndexTieBreak) {
  ParameterStore<double> store;
  const NdArray<double> x({1, 2, 4}, {1, 5, 2, 2, 3, 5, 2, 2});
  const auto spec = LayerSpec::maxpool2d(2);
  const auto [y, cache] = layer_forward(spec, store, x);
  EXPECT_EQ(y.storage(), (std::vector<double>{5, 2}));
  const auto g = layer_backward(spec, cache, NdArray<double>({1, 1, 2}, {1, 1}), store);
  // First window: 5 at (0,1) and (1,1); the first in row-major order wins.
  // Second window: all 2s; (0,2) wins.
  EXPECT_EQ(g.storage(), (std::vector<double>{0, 1, 1, 0, 0, 0, 0, 0}));
}

TEST(GlobalAvgPool, ChannelMeans) {
  ParameterStore<double> store;
  const NdArray<double> x({2, 1, 3}, {1, 2, 3, -3, 0, 6});
  const auto [y, cache] = layer_forward(LayerSpec::global_avg_pool(), store, x);
  EXPECT_EQ(y.storage(), (std::vector<double>{2, 1}));
}

TEST(L2Norm, UnitOutputAndOrthogonalBackward) {
  std::mt19937_64 rng(4);
  ParameterStore<double> store;
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = randn({9}, rng);
    const auto [y, cache] = layer_forward(LayerSpec::l2norm(), store, x);
    double n = 0.0;
    for (double v : y.storage()) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
    // A purely radial upstream gradient has no effect on the direction.
    const auto g = layer_backward(LayerSpec::l2norm(), cache, y, store);
    for (double v : g.storage()) EXPECT_NEAR(v, 0.0, 1e-9);
    const auto g2 = layer_backward(LayerSpec::l2norm(), cache, randn({9}, rng), store);
    double pg = 0.0;
    for (std::size_t i = 0; i < 9; ++i) pg += y[i] * g2[i];
    EXPECT_NEAR(pg, 0.0, 1e-9);
  }
}

TEST(Layers, ShapeMismatchNamesBothShapes) {
  ParameterStore<double> store;
  store.add("d.weight", NdArray<double>({2, 5}));
  store.add("d.bias", NdArray<double>({2}));
  try {
    layer_forward(LayerSpec::dense("d", 5, 2), store, NdArray<double>({4}));
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5"), std::string::npos) << msg;
  }
}

TEST(Layers, StaleCacheIsRejected) {
  ParameterStore<double> store;
  const auto [y, cache] = layer_forward(LayerSpec::relu(), store, NdArray<double>({2}, {1, 2}));
  EXPECT_THROW(layer_backward(LayerSpec::l2norm(), cache, y, store), UsageError);
}

TEST(Layers, ForwardIsBitwiseReproducible) {
  std::mt19937_64 rng(5);
  const auto spec = LayerSpec::conv2d("c", 2, 3, 3);
  ParameterStore<double> store;
  store.add("c.weight", randn({3, 2, 3, 3}, rng));
  store.add("c.bias", randn({3}, rng));
  const auto x = randn({2, 8, 8}, rng);
  EXPECT_EQ(layer_forward(spec, store, x).first, layer_forward(spec, store, x).first);
}

TEST(Cosine, WorkedValues) {
  const std::vector<double> e1{1, 0}, e2{0, 1};
  EXPECT_EQ(cosine_similarity<double>(e1, e1).value, 1.0);
  EXPECT_EQ(cosine_similarity<double>(e1, e2).value, 0.0);
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  // 32 / sqrt(14 * 77)
  EXPECT_NEAR(cosine_similarity<double>(a, b).value, 32.0 / std::sqrt(1078.0), 1e-15);
  EXPECT_NEAR(cosine_similarity<double>(a, b).value, 0.9746318, 1e-6);
}

TEST(Cosine, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  ParameterStore<double> store;
  store.add("a", randn({6}, rng));
  store.add("b", randn({6}, rng));
  const GradFunction f = [](ParameterStore<double>& p, bool want) {
    const auto r = cosine_similarity<double>(p.value("a").span(), p.value("b").span());
    if (want) {
      for (std::size_t i = 0; i < 6; ++i) {
        p.grad("a")[i] += r.grad_a[i];
        p.grad("b")[i] += r.grad_b[i];
      }
    }
    return r.value;
  };
  EXPECT_LT(check_gradient(f, store).max_rel_error, 1e-8);
}

TEST(CheckGradient, LinearFunctionIsExact) {
  std::mt19937_64 rng(7);
  ParameterStore<double> store;
  store.add("x", randn({10}, rng));
  const auto c = randn({10}, rng);
  const GradFunction f = [&](ParameterStore<double>& p, bool want) {
    double s = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      s += c[i] * p.value("x")[i];
      if (want) p.grad("x")[i] += c[i];
    }
    return s;
  };
  EXPECT_LE(check_gradient(f, store).max_rel_error, 1e-10);
}

TEST(CheckGradient, ConstantFunctionIsZero) {
  ParameterStore<double> store;
  store.add("x", NdArray<double>({4}, {1, 2, 3, 4}));
  const GradFunction f = [](ParameterStore<double>&, bool) { return 3.5; };
  EXPECT_EQ(check_gradient(f, store).max_rel_error, 0.0);
}

TEST(CheckGradient, DetectsAWrongGradient) {
  ParameterStore<double> store;
  store.add("x", NdArray<double>({2}, {1, 2}));
  const GradFunction f = [](ParameterStore<double>& p, bool want) {
    const double x0 = p.value("x")[0];
    if (want) p.grad("x")[0] += 3.0 * x0;  // true derivative is 2 x0
    return x0 * x0;
  };
  EXPECT_GT(check_gradient(f, store).max_rel_error, 0.1);
}

class LayerGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LayerGradient, EveryLayerKindAndCompositeBelowTolerance) {
  for (const auto& e : run_gradient_suite(GetParam(), 1, 1e-5)) {
    EXPECT_LT(e.result.max_rel_error, 1e-4) << e.name << " seed " << e.seed << " worst "
                                             << e.result.worst_parameter << "[" << e.result.worst_index << "]";
    EXPECT_GT(e.result.probes, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LayerGradient, ::testing::Range<std::uint64_t>(100, 120));

}  // namespace
}  // namespace zsl
