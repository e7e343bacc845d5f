#pragma once

// Dense primitives with hand-written backward passes.
//
// Convolutions are cross-correlations (no kernel flip). Every backward
// function takes the forward inputs (or the cache the forward produced) and
// the upstream gradient, and returns gradients with the shapes of the
// corresponding forward arguments.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "csnc/tensor.hpp"

namespace csnc {

std::size_t conv1d_output_length(std::size_t in_len, std::size_t kernel_len, std::size_t stride);

/// Valid (unpadded) 1-D cross-correlation.
///
/// Accepts either a single-channel input [batch, in_len] with kernels
/// [num_filters, kernel_len], or a multi-channel input [batch, in_ch, in_len]
/// with kernels [num_filters, in_ch, kernel_len]. Output is
/// [batch, num_filters, out_len], out_len = (in_len - kernel_len) / stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride);

struct Conv1dGrads {
  Tensor input;    // empty when not requested
  Tensor kernels;
};

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                            const Tensor& grad_output, bool want_input_grad = true);

struct MaxPoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index for every output element
};

/// Non-overlapping max pool along the last axis of [batch, channels, len].
/// Trailing samples that do not fill a window are dropped. Ties take the
/// first position.
MaxPoolResult max_pool1d(const Tensor& input, std::size_t pool_len);
Tensor max_pool1d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                           const Tensor& grad_output);

struct LayerNormCache {
  Tensor normalized;            // (x - mean) / sqrt(var + eps), same shape as x
  std::vector<double> inv_std;  // per row
};

/// Row-wise normalization: the leading axis is the batch, all trailing axes
/// are flattened into the feature axis. `gain` and `bias` hold one entry per
/// feature.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache = nullptr);

struct LayerNormGrads {
  Tensor x;
  Tensor gain;
  Tensor bias;
};

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                                   const Tensor& grad_output);

/// max(x, slope * x) element-wise.
Tensor leaky_relu(const Tensor& x, double slope);
/// Derivative is 1 for x > 0 and `slope` for x <= 0.
Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_output);

/// y = x W^T + b for x [batch, in], W [out, in], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_output);

/// v / max(||v||, eps).
Tensor l2_normalize(const Tensor& v, double eps = 1e-12);
Tensor l2_normalize_backward(const Tensor& v, const Tensor& grad_output, double eps = 1e-12);

/// Normalizes every row of a rank-2 tensor. Same eps rule as l2_normalize.
Tensor l2_normalize_rows(const Tensor& m, double eps = 1e-12);

double l2_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

/// a.b / (|a||b|) clamped to [-1, 1]. Throws on a zero-norm argument.
double cosine_similarity(const Tensor& a, const Tensor& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// log(sum(exp(v))) with max subtraction.
double log_sum_exp(std::span<const double> v);

/// Central-difference estimate of the gradient of a scalar function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

}  // namespace csnc
