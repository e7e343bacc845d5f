#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "csnc/error.hpp"
#include "csnc/ops.hpp"
#include "test_util.hpp"

using namespace csnc;
using csnc::testing::max_rel_err;
using csnc::testing::random_tensor;
using csnc::testing::weighted_sum;

namespace {

void expect_values(const Tensor& t, std::initializer_list<double> want, double tol = 1e-12) {
  ASSERT_EQ(t.size(), want.size());
  std::size_t i = 0;
  for (double w : want) EXPECT_NEAR(t[i++], w, tol) << "index " << i - 1;
}

// Straight nested loops over batch, channel, filter, position and tap.
Tensor naive_conv(const Tensor& x, const Tensor& k, std::size_t stride) {
  const bool multi = x.rank() == 3;
  const std::size_t B = x.dim(0), C = multi ? x.dim(1) : 1, L = x.dim(multi ? 2 : 1);
  const std::size_t F = k.dim(0), K = k.dim(multi ? 2 : 1);
  const std::size_t out = (L - K) / stride + 1;
  Tensor y({B, F, out});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < out; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t j = 0; j < K; ++j) {
            const double xv = x[(b * C + c) * L + i * stride + j];
            const double kv = k[(f * C + c) * K + j];
            acc += xv * kv;
          }
        y.at(b, f, i) = acc;
      }
  return y;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, NonFiniteIsReported) {
  Tensor t = Tensor::from({1.0, std::nan(""), 2.0});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.require_finite("probe"), NumericError);
  EXPECT_NO_THROW(Tensor::from({1.0, 2.0}).require_finite("ok"));
}

TEST(Tensor, GradPairRequiresMatchingShapes) {
  EXPECT_THROW(GradPair(Tensor({2}), Tensor({3})), ShapeError);
  EXPECT_NO_THROW(GradPair(Tensor({2, 2}), Tensor({2, 2})));
}

TEST(Conv1d, WorkedExamples) {
  expect_values(conv1d(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({1, 2}, {1, 1}), 1), {3, 5, 7});
  expect_values(conv1d(Tensor({1, 3}, {5, -5, 5}), Tensor({1, 1}, {1}), 1), {5, -5, 5});
  expect_values(conv1d(Tensor({1, 4}, {1, 0, 0, 1}), Tensor({1, 2}, {1, -1}), 2), {1, -1});
}

TEST(Conv1d, OutputLength) {
  EXPECT_EQ(conv1d_output_length(10, 3, 1), 8u);
  EXPECT_EQ(conv1d_output_length(10, 3, 2), 4u);
  EXPECT_EQ(conv1d_output_length(5, 5, 3), 1u);
}

TEST(Conv1d, ShapeErrors) {
  EXPECT_THROW(conv1d(Tensor({1, 2}), Tensor({1, 3}), 1), ShapeError);
  EXPECT_THROW(conv1d(Tensor({1, 0}), Tensor({1, 1}), 1), Error);
  EXPECT_THROW(conv1d(Tensor({1, 4}), Tensor({1, 2}), 0), Error);
  EXPECT_THROW(conv1d(Tensor({1, 2, 8}), Tensor({3, 1, 2}), 1), ShapeError);
}

TEST(Conv1d, MatchesNaiveLoopsExactly) {
  std::mt19937_64 rng(11);
  for (std::size_t stride : {1u, 2u, 3u}) {
    for (int rep = 0; rep < 10; ++rep) {
      const Tensor x = random_tensor({4, 64}, rng);
      const Tensor k = random_tensor({8, 9}, rng);
      const Tensor got = conv1d(x, k, stride);
      const Tensor want = naive_conv(x, k, stride);
      ASSERT_EQ(got.shape(), want.shape());
      EXPECT_EQ(max_abs_diff(got, want), 0.0) << "stride " << stride;
    }
  }
  const Tensor x = random_tensor({3, 4, 40}, rng);
  const Tensor k = random_tensor({5, 4, 7}, rng);
  EXPECT_LT(max_abs_diff(conv1d(x, k, 1), naive_conv(x, k, 1)), 1e-12);
}

TEST(Conv1d, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t stride = 1 + seed % 3;
    const bool multi = seed % 2 == 1;
    const Tensor x = multi ? random_tensor({2, 3, 20}, rng) : random_tensor({2, 20}, rng);
    const Tensor k = multi ? random_tensor({4, 3, 5}, rng) : random_tensor({4, 5}, rng);
    const Tensor w = random_tensor(conv1d(x, k, stride).shape(), rng);
    const auto g = conv1d_backward(x, k, stride, w);
    const Tensor num_x = finite_diff_grad([&](const Tensor& v) { return weighted_sum(conv1d(v, k, stride), w); }, x);
    const Tensor num_k = finite_diff_grad([&](const Tensor& v) { return weighted_sum(conv1d(x, v, stride), w); }, k);
    ASSERT_LT(max_rel_err(g.input, num_x), 1e-4) << "seed " << seed;
    ASSERT_LT(max_rel_err(g.kernels, num_k), 1e-4) << "seed " << seed;
  }
}

TEST(MaxPool, KeepsFirstMaximumAndDropsRemainder) {
  const Tensor x({1, 1, 7}, {1, 3, 3, 2, 0, -1, 9});
  const auto r = max_pool1d(x, 3);
  expect_values(r.output, {3, 2});
  EXPECT_EQ(r.argmax[0], 1u);
  EXPECT_EQ(r.argmax[1], 3u);
  const Tensor g = max_pool1d_backward(x.shape(), r.argmax, Tensor({1, 1, 2}, {10, 20}));
  expect_values(g, {0, 10, 0, 20, 0, 0, 0});
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor({2, 3, 13}, rng);
    const auto r = max_pool1d(x, 3);
    const Tensor w = random_tensor(r.output.shape(), rng);
    const Tensor g = max_pool1d_backward(x.shape(), r.argmax, w);
    const Tensor num = finite_diff_grad([&](const Tensor& v) { return weighted_sum(max_pool1d(v, 3).output, w); }, x);
    ASSERT_LT(max_rel_err(g, num), 1e-4) << "seed " << seed;
  }
}

TEST(LayerNorm, WorkedExamples) {
  const Tensor ones = Tensor::from({1, 1, 1});
  expect_values(layer_norm(Tensor({1, 3}, {1, 1, 1}), ones, Tensor({3}), 1e-6), {0, 0, 0});
  expect_values(layer_norm(Tensor({1, 2}, {0, 2}), Tensor::from({1, 1}), Tensor({2}), 1e-15), {-1, 1}, 1e-9);
  expect_values(layer_norm(Tensor({1, 2}, {3, 5}), Tensor::from({2, 2}), Tensor::from({1, 1}), 1e-15),
                {-1, 3}, 1e-9);
}

TEST(LayerNorm, ZeroFeaturesIsAnError) {
  EXPECT_THROW(layer_norm(Tensor({2, 0}), Tensor({0}), Tensor({0}), 1e-6), ShapeError);
}

TEST(LayerNorm, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = seed % 2 ? random_tensor({3, 2, 5}, rng) : random_tensor({3, 7}, rng);
    const std::size_t n = x.size() / 3;
    const Tensor gain = random_tensor({n}, rng, 0.5, 1.5);
    const Tensor bias = random_tensor({n}, rng);
    const Tensor w = random_tensor(x.shape(), rng);
    const double eps = 1e-6;
    LayerNormCache cache;
    layer_norm(x, gain, bias, eps, &cache);
    const auto g = layer_norm_backward(cache, gain, w);
    auto f = [&](const Tensor& xx, const Tensor& gg, const Tensor& bb) {
      return weighted_sum(layer_norm(xx, gg, bb, eps), w);
    };
    ASSERT_LT(max_rel_err(g.x, finite_diff_grad([&](const Tensor& v) { return f(v, gain, bias); }, x)), 1e-4)
        << "seed " << seed;
    ASSERT_LT(max_rel_err(g.gain, finite_diff_grad([&](const Tensor& v) { return f(x, v, bias); }, gain)), 1e-4);
    ASSERT_LT(max_rel_err(g.bias, finite_diff_grad([&](const Tensor& v) { return f(x, gain, v); }, bias)), 1e-4);
  }
}

TEST(LeakyRelu, WorkedExamples) {
  expect_values(leaky_relu(Tensor::from({2, -2}), 0.2), {2, -0.4});
  expect_values(leaky_relu(Tensor::from({0}), 0.2), {0});
  expect_values(leaky_relu(Tensor::from({-1, -10}), 0.01), {-0.01, -0.1});
}

TEST(LeakyRelu, SubgradientAtZeroIsTheSlope) {
  const Tensor g = leaky_relu_backward(Tensor::from({0.0, 1.0, -1.0}), 0.2, Tensor::from({1, 1, 1}));
  expect_values(g, {0.2, 1.0, 0.2});
}

TEST(LeakyRelu, BackwardMatchesFiniteDifferencesAwayFromZero) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor x = random_tensor({4, 6}, rng);
    for (double& v : x.data()) {
      if (std::abs(v) < 1e-3) v = 0.5;  // keep 10h clear of the kink
    }
    const Tensor w = random_tensor(x.shape(), rng);
    const Tensor g = leaky_relu_backward(x, 0.2, w);
    const Tensor num = finite_diff_grad([&](const Tensor& v) { return weighted_sum(leaky_relu(v, 0.2), w); }, x);
    ASSERT_LT(max_rel_err(g, num), 1e-4) << "seed " << seed;
  }
}

TEST(Linear, ForwardAndBackward) {
  const Tensor y = linear(Tensor({1, 2}, {1, 2}), Tensor({2, 2}, {1, 0, 3, -1}), Tensor::from({0.5, 0}));
  expect_values(y, {1.5, 1});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = random_tensor({3, 5}, rng);
    const Tensor W = random_tensor({4, 5}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor w = random_tensor({3, 4}, rng);
    const auto g = linear_backward(x, W, w);
    ASSERT_LT(max_rel_err(g.x, finite_diff_grad([&](const Tensor& v) { return weighted_sum(linear(v, W, b), w); }, x)), 1e-4);
    ASSERT_LT(max_rel_err(g.weight, finite_diff_grad([&](const Tensor& v) { return weighted_sum(linear(x, v, b), w); }, W)), 1e-4);
    ASSERT_LT(max_rel_err(g.bias, finite_diff_grad([&](const Tensor& v) { return weighted_sum(linear(x, W, v), w); }, b)), 1e-4);
  }
}

TEST(L2Normalize, WorkedExamples) {
  expect_values(l2_normalize(Tensor::from({3, 4})), {0.6, 0.8});
  expect_values(l2_normalize(Tensor::from({1, 0, 0})), {1, 0, 0});
  expect_values(l2_normalize(Tensor::from({0, 0}), 1e-12), {0, 0});
}

TEST(L2Normalize, NormIsAtMostOne) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const double scale = std::pow(10.0, rep % 20 - 14);
    Tensor v = random_tensor({6}, rng);
    for (double& x : v.data()) x *= scale;
    const double in_norm = l2_norm(v.data());
    const double n = l2_norm(l2_normalize(v).data());
    EXPECT_GT(n, 0.0);
    EXPECT_LE(n, 1.0 + 1e-12);
    if (in_norm >= 1.0) EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(L2Normalize, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor v = random_tensor({7}, rng);
    const Tensor w = random_tensor({7}, rng);
    const Tensor g = l2_normalize_backward(v, w);
    const Tensor num = finite_diff_grad([&](const Tensor& x) { return weighted_sum(l2_normalize(x), w); }, v);
    ASSERT_LT(max_rel_err(g, num), 1e-4) << "seed " << seed;
  }
}

TEST(CosineSimilarity, WorkedExamples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(Tensor::from({1, 0}), Tensor::from({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Tensor::from({1, 0}), Tensor::from({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(Tensor::from({1, 1}), Tensor::from({-1, -1})), -1.0);
  EXPECT_THROW(cosine_similarity(Tensor::from({0, 0}), Tensor::from({1, 0})), NumericError);
}

TEST(CosineSimilarity, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 500; ++rep) {
    const Tensor a = random_tensor({9}, rng);
    const Tensor b = random_tensor({9}, rng);
    const double c = cosine_similarity(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, cosine_similarity(b, a), 1e-12);
    Tensor scaled = a;
    const double lambda = std::uniform_real_distribution<double>(1e-3, 1e3)(rng);
    for (double& x : scaled.data()) x *= lambda;
    EXPECT_NEAR(c, cosine_similarity(scaled, b), 1e-12);
  }
}

TEST(LogSumExp, StableForLargeInputs) {
  const std::vector<double> v{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0), 1e-12);
  const std::vector<double> w{-1000.0, -1000.0};
  EXPECT_NEAR(log_sum_exp(w), -1000.0 + std::log(2.0), 1e-12);
}

TEST(FiniteDiff, WorkedExamples) {
  const Tensor g = finite_diff_grad(
      [](const Tensor& x) { return x[0] * x[0] + x[1] * x[1]; }, Tensor::from({1, 2}), 1e-5);
  expect_values(g, {2, 4}, 1e-8);
  const Tensor z = finite_diff_grad([](const Tensor&) { return 3.0; }, Tensor::from({5, -1, 2}));
  expect_values(z, {0, 0, 0});
}

TEST(FiniteDiff, NonFiniteFunctionIsAnError) {
  EXPECT_THROW(finite_diff_grad([](const Tensor& x) { return std::log(x[0]); }, Tensor::from({0.0})),
               NumericError);
}
