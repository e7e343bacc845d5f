#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csnc/ops.hpp"
#include "csnc/sinc.hpp"
#include "csnc/tensor.hpp"

namespace csnc {

struct SincLayerConfig {
  std::size_t count = 80;
  std::size_t kernel_len = 251;
  double f_min = 30.0;
  double f_max = 0.0;  // 0 means Nyquist
  std::size_t stride = 1;
  std::size_t pool_len = 3;
  bool windowed = true;

  friend bool operator==(const SincLayerConfig&, const SincLayerConfig&) = default;
};

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel_len = 0;
  std::size_t pool_len = 1;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Trunk layout: sinc -> pool -> norm -> leaky, then for each conv layer
/// conv -> pool -> norm -> leaky, flatten, then for each width in fc_layers
/// and finally embedding_dim: linear -> norm -> leaky.
struct ModelConfig {
  double sample_rate = 16000.0;
  std::size_t chunk_len = 3200;  // 200 ms
  SincLayerConfig sinc;
  std::vector<ConvLayerSpec> conv_layers{{60, 5, 3}, {60, 5, 3}};
  std::vector<std::size_t> fc_layers{2048, 2048};
  std::size_t embedding_dim = 2048;
  double leaky_slope = 0.2;
  double norm_eps = 1e-6;

  double sinc_f_max() const { return sinc.f_max > 0.0 ? sinc.f_max : sample_rate / 2.0; }

  /// (channels, length) after each pooled stage; the sinc stage comes first.
  std::vector<std::pair<std::size_t, std::size_t>> stage_shapes() const;
  std::size_t flat_dim() const;

  void validate() const;

  /// The two-filter configuration used for gradient checks.
  static ModelConfig miniature();
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

struct NormWeights {
  Tensor gain;
  Tensor bias;
};

struct ConvStageWeights {
  Tensor kernels;  // [filters, in_channels, kernel_len]
  NormWeights norm;
};

struct DenseWeights {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  NormWeights norm;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Tensor* tensor;
};

struct ModelWeights {
  ModelConfig config;
  std::size_t class_count = 0;
  SincFilterParams sinc;
  NormWeights sinc_norm;
  std::vector<ConvStageWeights> conv;
  std::vector<DenseWeights> dense;  // fc_layers followed by the embedding layer
  Tensor head;                      // [class_count, embedding_dim], rows of W
  Tensor head_bias;                 // [class_count], used only by the plain softmax head

  /// Every trainable array in canonical order with a stable name.
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

/// Gradient-group label for a tensor name: sinc, conv, norm, fc or head.
std::string weight_group(const std::string& tensor_name);

/// Same structure with every trainable array zeroed.
ModelWeights zeros_like(const ModelWeights& w);

/// Deterministic in (config, class_count, seed).
ModelWeights init_model(const ModelConfig& config, std::size_t class_count, std::uint64_t seed);

/// Scales every row to unit max-abs amplitude; all-zero rows stay zero.
void normalize_amplitude(Tensor& chunks);

struct StageCache {
  Tensor input;  // stage input; [batch, len] for sinc, [batch, ch, len] otherwise
  Shape conv_shape;
  std::vector<std::uint32_t> argmax;
  LayerNormCache norm;
  Tensor pre_activation;
};

struct DenseCache {
  Tensor input;
  LayerNormCache norm;
  Tensor pre_activation;
};

struct ForwardCache {
  std::vector<StageCache> stages;
  std::vector<DenseCache> dense;
};

/// Embeddings [batch, embedding_dim] for chunks [batch, chunk_len]. The
/// output is not L2-normalized.
Tensor embed(const ModelWeights& weights, const Tensor& chunks, ForwardCache* cache = nullptr);

/// Adds the gradient of a scalar with respect to every trunk weight into
/// `grads`, given that scalar's gradient with respect to the embeddings.
void embed_backward(const ModelWeights& weights, const ForwardCache& cache,
                    const Tensor& grad_embedding, ModelWeights& grads);

/// `embed` split across worker threads; rows are reassembled in input order.
Tensor embed_parallel(const ModelWeights& weights, const Tensor& chunks, std::size_t threads);

void add_into(ModelWeights& acc, const ModelWeights& other);

/// Throws NumericError naming the first non-finite array.
void require_finite(const ModelWeights& w, const std::string& what);

}  // namespace csnc
