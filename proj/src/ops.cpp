#include "csnc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "csnc/error.hpp"

namespace csnc {

namespace {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_ch = 0;
  std::size_t in_len = 0;
  std::size_t filters = 0;
  std::size_t kernel_len = 0;
  std::size_t out_len = 0;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  ConvGeometry g;
  if (input.rank() == 2 && kernels.rank() == 2) {
    g.batch = input.dim(0);
    g.in_ch = 1;
    g.in_len = input.dim(1);
    g.filters = kernels.dim(0);
    g.kernel_len = kernels.dim(1);
  } else if (input.rank() == 3 && kernels.rank() == 3) {
    g.batch = input.dim(0);
    g.in_ch = input.dim(1);
    g.in_len = input.dim(2);
    g.filters = kernels.dim(0);
    g.kernel_len = kernels.dim(2);
    if (kernels.dim(1) != g.in_ch) {
      throw ShapeError("conv1d: kernels " + shape_string(kernels.shape()) + " expect " +
                       std::to_string(kernels.dim(1)) + " input channels, input " +
                       shape_string(input.shape()) + " has " + std::to_string(g.in_ch));
    }
  } else {
    throw ShapeError("conv1d: input " + shape_string(input.shape()) + " and kernels " +
                     shape_string(kernels.shape()) +
                     " must be rank 2/2 (single channel) or 3/3 (multi channel)");
  }
  if (input.empty()) throw ShapeError("conv1d: empty input " + shape_string(input.shape()));
  if (g.kernel_len == 0 || g.filters == 0) {
    throw ShapeError("conv1d: empty kernels " + shape_string(kernels.shape()));
  }
  g.out_len = conv1d_output_length(g.in_len, g.kernel_len, stride);
  return g;
}

// Splits x into `stride` phases so that x[i * stride + j] is
// phases[j % stride][i + j / stride], keeping the inner loops contiguous.
std::vector<std::vector<double>> deinterleave(std::span<const double> x, std::size_t stride) {
  std::vector<std::vector<double>> phases(stride);
  for (std::size_t p = 0; p < stride; ++p) {
    auto& ph = phases[p];
    ph.reserve(x.size() / stride + 1);
    for (std::size_t q = p; q < x.size(); q += stride) ph.push_back(x[q]);
  }
  return phases;
}

}  // namespace

std::size_t conv1d_output_length(std::size_t in_len, std::size_t kernel_len, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv1d: stride must be >= 1");
  if (kernel_len > in_len) {
    throw ShapeError("conv1d: kernel length " + std::to_string(kernel_len) +
                     " exceeds input length " + std::to_string(in_len));
  }
  return (in_len - kernel_len) / stride + 1;
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  const auto g = conv_geometry(input, kernels, stride);
  Tensor out({g.batch, g.filters, g.out_len});
  const double* kdata = kernels.raw();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      std::span<const double> x(input.raw() + (b * g.in_ch + c) * g.in_len, g.in_len);
      std::vector<std::vector<double>> phases;
      if (stride > 1) phases = deinterleave(x, stride);
      for (std::size_t f = 0; f < g.filters; ++f) {
        double* y = out.raw() + (b * g.filters + f) * g.out_len;
        const double* k = kdata + (f * g.in_ch + c) * g.kernel_len;
        for (std::size_t j = 0; j < g.kernel_len; ++j) {
          const double kj = k[j];
          const double* src = stride > 1 ? phases[j % stride].data() + j / stride : x.data() + j;
          for (std::size_t i = 0; i < g.out_len; ++i) y[i] += src[i] * kj;
        }
      }
    }
  }
  return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride,
                            const Tensor& grad_output, bool want_input_grad) {
  const auto g = conv_geometry(input, kernels, stride);
  const Shape expected{g.batch, g.filters, g.out_len};
  if (grad_output.shape() != expected) {
    throw ShapeError("conv1d_backward: grad_output " + shape_string(grad_output.shape()) +
                     " does not match forward output " + shape_string(expected));
  }
  Conv1dGrads grads;
  grads.kernels = Tensor(kernels.shape());
  if (want_input_grad) grads.input = Tensor(input.shape());

  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const double* x = input.raw() + (b * g.in_ch + c) * g.in_len;
      double* gx = want_input_grad ? grads.input.raw() + (b * g.in_ch + c) * g.in_len : nullptr;
      for (std::size_t f = 0; f < g.filters; ++f) {
        const double* go = grad_output.raw() + (b * g.filters + f) * g.out_len;
        const double* k = kernels.raw() + (f * g.in_ch + c) * g.kernel_len;
        double* gk = grads.kernels.raw() + (f * g.in_ch + c) * g.kernel_len;
        for (std::size_t i = 0; i < g.out_len; ++i) {
          const double gi = go[i];
          const double* xs = x + i * stride;
          for (std::size_t j = 0; j < g.kernel_len; ++j) gk[j] += gi * xs[j];
          if (gx) {
            double* gxs = gx + i * stride;
            for (std::size_t j = 0; j < g.kernel_len; ++j) gxs[j] += gi * k[j];
          }
        }
      }
    }
  }
  return grads;
}

MaxPoolResult max_pool1d(const Tensor& input, std::size_t pool_len) {
  require_rank(input, 3, "max_pool1d input");
  if (pool_len == 0) throw ShapeError("max_pool1d: pool length must be >= 1");
  const std::size_t rows = input.dim(0) * input.dim(1);
  const std::size_t len = input.dim(2);
  const std::size_t out_len = len / pool_len;
  if (out_len == 0) {
    throw ShapeError("max_pool1d: pool length " + std::to_string(pool_len) +
                     " exceeds input length " + std::to_string(len));
  }
  MaxPoolResult r{Tensor({input.dim(0), input.dim(1), out_len}), {}};
  r.argmax.resize(rows * out_len);
  for (std::size_t row = 0; row < rows; ++row) {
    const double* x = input.raw() + row * len;
    for (std::size_t o = 0; o < out_len; ++o) {
      std::size_t best = o * pool_len;
      for (std::size_t p = best + 1; p < (o + 1) * pool_len; ++p) {
        if (x[p] > x[best]) best = p;
      }
      r.output[row * out_len + o] = x[best];
      r.argmax[row * out_len + o] = static_cast<std::uint32_t>(row * len + best);
    }
  }
  return r;
}

Tensor max_pool1d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                           const Tensor& grad_output) {
  if (argmax.size() != grad_output.size()) {
    throw ShapeError("max_pool1d_backward: argmax/gradient size mismatch");
  }
  Tensor gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_output[i];
  return gx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache) {
  if (x.rank() < 2) throw ShapeError("layer_norm: input must be [batch, features...]");
  const std::size_t batch = x.dim(0);
  const std::size_t features = batch == 0 ? 0 : x.size() / batch;
  if (features == 0) throw ShapeError("layer_norm: zero features in " + shape_string(x.shape()));
  if (gain.size() != features || bias.size() != features) {
    throw ShapeError("layer_norm: gain/bias sizes " + std::to_string(gain.size()) + "/" +
                     std::to_string(bias.size()) + " must equal feature count " +
                     std::to_string(features));
  }
  Tensor y(x.shape());
  if (cache) {
    cache->normalized = Tensor(x.shape());
    cache->inv_std.assign(batch, 0.0);
  }
  const double n = static_cast<double>(features);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.raw() + b * features;
    double mean = 0.0;
    for (std::size_t i = 0; i < features; ++i) mean += xr[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < features; ++i) {
      const double d = xr[i] - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* yr = y.raw() + b * features;
    double* nr = cache ? cache->normalized.raw() + b * features : nullptr;
    for (std::size_t i = 0; i < features; ++i) {
      const double xh = (xr[i] - mean) * inv;
      if (nr) nr[i] = xh;
      yr[i] = gain[i] * xh + bias[i];
    }
    if (cache) cache->inv_std[b] = inv;
  }
  return y;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                                   const Tensor& grad_output) {
  const Tensor& xh = cache.normalized;
  if (grad_output.shape() != xh.shape()) {
    throw ShapeError("layer_norm_backward: gradient shape " + shape_string(grad_output.shape()) +
                     " differs from forward shape " + shape_string(xh.shape()));
  }
  const std::size_t batch = xh.dim(0);
  const std::size_t features = xh.size() / batch;
  LayerNormGrads g{Tensor(xh.shape()), Tensor(gain.shape()), Tensor(gain.shape())};
  const double n = static_cast<double>(features);
  std::vector<double> dxh(features);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* go = grad_output.raw() + b * features;
    const double* xr = xh.raw() + b * features;
    double sum = 0.0;
    double sum_x = 0.0;
    for (std::size_t i = 0; i < features; ++i) {
      dxh[i] = go[i] * gain[i];
      sum += dxh[i];
      sum_x += dxh[i] * xr[i];
      g.gain[i] += go[i] * xr[i];
      g.bias[i] += go[i];
    }
    const double mean = sum / n;
    const double mean_x = sum_x / n;
    const double inv = cache.inv_std[b];
    double* gx = g.x.raw() + b * features;
    for (std::size_t i = 0; i < features; ++i) gx[i] = inv * (dxh[i] - mean - xr[i] * mean_x);
  }
  return g;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_output) {
  if (x.shape() != grad_output.shape()) {
    throw ShapeError("leaky_relu_backward: shape mismatch");
  }
  Tensor gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    gx[i] = x[i] > 0.0 ? grad_output[i] : slope * grad_output[i];
  }
  return gx;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in || bias.size() != out) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + ", weight " +
                     shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()) +
                     " are inconsistent");
  }
  Tensor y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.raw() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = weight.raw() + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * xr[i];
      y.at(b, o) = acc + bias[o];
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_output) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (grad_output.shape() != Shape{batch, out}) {
    throw ShapeError("linear_backward: gradient shape " + shape_string(grad_output.shape()));
  }
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({out})};
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.raw() + b * in;
    double* gx = g.x.raw() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double go = grad_output.at(b, o);
      if (go == 0.0) continue;
      const double* w = weight.raw() + o * in;
      double* gw = g.weight.raw() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += go * xr[i];
        gx[i] += go * w[i];
      }
      g.bias[o] += go;
    }
  }
  return g;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Tensor l2_normalize(const Tensor& v, double eps) {
  if (v.empty()) throw ShapeError("l2_normalize: empty vector");
  const double d = std::max(l2_norm(v.data()), eps);
  Tensor y(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] / d;
  return y;
}

Tensor l2_normalize_backward(const Tensor& v, const Tensor& grad_output, double eps) {
  if (v.shape() != grad_output.shape()) throw ShapeError("l2_normalize_backward: shape mismatch");
  const double n = l2_norm(v.data());
  Tensor gv(v.shape());
  if (n < eps) {
    for (std::size_t i = 0; i < v.size(); ++i) gv[i] = grad_output[i] / eps;
    return gv;
  }
  double yg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) yg += v[i] * grad_output[i];
  yg /= n;
  for (std::size_t i = 0; i < v.size(); ++i) gv[i] = (grad_output[i] - (v[i] / n) * yg) / n;
  return gv;
}

Tensor l2_normalize_rows(const Tensor& m, double eps) {
  require_rank(m, 2, "l2_normalize_rows input");
  Tensor y(m.shape());
  const std::size_t cols = m.dim(1);
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    auto row = m.slice(r);
    const double d = std::max(l2_norm(row), eps);
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) = row[c] / d;
  }
  return y;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm argument");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  return cosine_similarity(a.data(), b.data());
}

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace csnc
