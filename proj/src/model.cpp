#include "csnc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "csnc/error.hpp"
#include "csnc/parallel.hpp"

namespace csnc {

std::vector<std::pair<std::size_t, std::size_t>> ModelConfig::stage_shapes() const {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t len = conv1d_output_length(chunk_len, sinc.kernel_len, sinc.stride);
  len /= sinc.pool_len;
  shapes.emplace_back(sinc.count, len);
  std::size_t channels = sinc.count;
  for (const auto& layer : conv_layers) {
    len = conv1d_output_length(len, layer.kernel_len, 1) / layer.pool_len;
    channels = layer.filters;
    shapes.emplace_back(channels, len);
  }
  return shapes;
}

std::size_t ModelConfig::flat_dim() const {
  const auto last = stage_shapes().back();
  return last.first * last.second;
}

void ModelConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  if (sinc.count == 0) throw ConfigError("sinc filter count must be >= 1");
  if (sinc.kernel_len == 0 || sinc.kernel_len % 2 == 0) {
    throw ConfigError("sinc kernel length must be odd, got " + std::to_string(sinc.kernel_len));
  }
  if (chunk_len < sinc.kernel_len) {
    throw ConfigError("chunk_len " + std::to_string(chunk_len) +
                      " is shorter than the sinc kernel " + std::to_string(sinc.kernel_len));
  }
  if (sinc.stride == 0 || sinc.pool_len == 0) throw ConfigError("sinc stride/pool must be >= 1");
  if (!(sinc.f_min > 0.0) || !(sinc.f_min < sinc_f_max()) || sinc_f_max() > sample_rate / 2.0) {
    throw ConfigError("sinc frequency range must satisfy 0 < f_min < f_max <= sample_rate/2");
  }
  for (const auto& layer : conv_layers) {
    if (layer.filters == 0 || layer.kernel_len == 0 || layer.pool_len == 0) {
      throw ConfigError("conv layers need positive filters, kernel_len and pool_len");
    }
  }
  for (auto w : fc_layers) {
    if (w == 0) throw ConfigError("fc layer widths must be positive");
  }
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must be in (0, 1)");
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  try {
    shapes = stage_shapes();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("trunk geometry is degenerate: ") + e.what());
  }
  for (const auto& [ch, len] : shapes) {
    if (len == 0) throw ConfigError("trunk geometry pools a stage down to zero length");
  }
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.sample_rate = 16000.0;
  c.chunk_len = 64;
  c.sinc = SincLayerConfig{2, 17, 30.0, 0.0, 1, 2, true};
  c.conv_layers = {{3, 3, 2}};
  c.fc_layers = {6};
  c.embedding_dim = 4;
  return c;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.sample_rate == b.sample_rate && a.chunk_len == b.chunk_len && a.sinc == b.sinc &&
         a.conv_layers == b.conv_layers && a.fc_layers == b.fc_layers &&
         a.embedding_dim == b.embedding_dim && a.leaky_slope == b.leaky_slope &&
         a.norm_eps == b.norm_eps;
}

namespace {

template <typename Self, typename Out>
void collect_tensors(Self& w, Out& out) {
  out.push_back({"sinc.f_low", &w.sinc.f_low});
  out.push_back({"sinc.band", &w.sinc.band});
  out.push_back({"sinc.norm.gain", &w.sinc_norm.gain});
  out.push_back({"sinc.norm.bias", &w.sinc_norm.bias});
  for (std::size_t i = 0; i < w.conv.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    out.push_back({p + ".kernels", &w.conv[i].kernels});
    out.push_back({p + ".norm.gain", &w.conv[i].norm.gain});
    out.push_back({p + ".norm.bias", &w.conv[i].norm.bias});
  }
  for (std::size_t i = 0; i < w.dense.size(); ++i) {
    const std::string p = "fc" + std::to_string(i);
    out.push_back({p + ".weight", &w.dense[i].weight});
    out.push_back({p + ".bias", &w.dense[i].bias});
    out.push_back({p + ".norm.gain", &w.dense[i].norm.gain});
    out.push_back({p + ".norm.bias", &w.dense[i].norm.bias});
  }
  out.push_back({"head.weight", &w.head});
  out.push_back({"head.bias", &w.head_bias});
}

NormWeights unit_norm(std::size_t features) {
  return {Tensor({features}, 1.0), Tensor({features}, 0.0)};
}

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
}

}  // namespace

std::vector<NamedTensor> ModelWeights::tensors() {
  std::vector<NamedTensor> out;
  collect_tensors(*this, out);
  return out;
}

std::vector<ConstNamedTensor> ModelWeights::tensors() const {
  std::vector<ConstNamedTensor> out;
  collect_tensors(*this, out);
  return out;
}

std::string weight_group(const std::string& name) {
  if (name.find(".norm.") != std::string::npos) return "norm";
  if (name.rfind("sinc.", 0) == 0) return "sinc";
  if (name.rfind("conv", 0) == 0) return "conv";
  if (name.rfind("fc", 0) == 0) return "fc";
  return "head";
}

ModelWeights zeros_like(const ModelWeights& w) {
  ModelWeights z = w;
  for (auto& nt : z.tensors()) nt.tensor->fill(0.0);
  return z;
}

ModelWeights init_model(const ModelConfig& config, std::size_t class_count, std::uint64_t seed) {
  config.validate();
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  std::mt19937_64 rng(seed);
  ModelWeights w;
  w.config = config;
  w.class_count = class_count;
  w.sinc = mel_init(config.sinc.count, config.sample_rate, config.sinc.f_min, config.sinc_f_max(),
                    config.sinc.kernel_len, config.sinc.windowed);
  const auto shapes = config.stage_shapes();
  w.sinc_norm = unit_norm(shapes[0].first * shapes[0].second);
  std::size_t in_ch = config.sinc.count;
  for (std::size_t i = 0; i < config.conv_layers.size(); ++i) {
    const auto& spec = config.conv_layers[i];
    ConvStageWeights stage;
    stage.kernels = Tensor({spec.filters, in_ch, spec.kernel_len});
    fill_uniform(stage.kernels, 1.0 / std::sqrt(static_cast<double>(in_ch * spec.kernel_len)), rng);
    stage.norm = unit_norm(shapes[i + 1].first * shapes[i + 1].second);
    w.conv.push_back(std::move(stage));
    in_ch = spec.filters;
  }
  std::vector<std::size_t> widths = config.fc_layers;
  widths.push_back(config.embedding_dim);
  std::size_t in = config.flat_dim();
  for (auto out : widths) {
    DenseWeights d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    d.weight = Tensor({out, in});
    d.bias = Tensor({out});
    fill_uniform(d.weight, bound, rng);
    fill_uniform(d.bias, bound, rng);
    d.norm = unit_norm(out);
    w.dense.push_back(std::move(d));
    in = out;
  }
  w.head = Tensor({class_count, config.embedding_dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : w.head.data()) v = normal(rng);
  w.head = l2_normalize_rows(w.head);
  w.head_bias = Tensor({class_count});
  return w;
}

void normalize_amplitude(Tensor& chunks) {
  require_rank(chunks, 2, "chunks");
  for (std::size_t b = 0; b < chunks.dim(0); ++b) {
    auto row = chunks.slice(b);
    double peak = 0.0;
    for (double v : row) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) continue;
    for (double& v : row) v /= peak;
  }
}

Tensor embed(const ModelWeights& w, const Tensor& chunks, ForwardCache* cache) {
  const auto& cfg = w.config;
  require_rank(chunks, 2, "embed chunks");
  if (chunks.dim(1) != cfg.chunk_len) {
    throw ShapeError("embed: chunk length " + std::to_string(chunks.dim(1)) +
                     " does not match the model's " + std::to_string(cfg.chunk_len));
  }
  chunks.require_finite("embed input");
  Tensor x = chunks;
  normalize_amplitude(x);
  if (cache) {
    cache->stages.clear();
    cache->dense.clear();
  }

  auto stage = [&](Tensor input, const Tensor& conv_out, std::size_t pool_len,
                   const NormWeights& norm) {
    auto pooled = max_pool1d(conv_out, pool_len);
    LayerNormCache ln;
    Tensor pre = layer_norm(pooled.output, norm.gain, norm.bias, cfg.norm_eps, cache ? &ln : nullptr);
    Tensor act = leaky_relu(pre, cfg.leaky_slope);
    if (cache) {
      cache->stages.push_back(StageCache{std::move(input), conv_out.shape(),
                                         std::move(pooled.argmax), std::move(ln), std::move(pre)});
    }
    return act;
  };

  Tensor act = stage(x, sinc_forward(w.sinc, x, cfg.sinc.stride), cfg.sinc.pool_len, w.sinc_norm);
  for (std::size_t i = 0; i < w.conv.size(); ++i) {
    Tensor conv_out = conv1d(act, w.conv[i].kernels, 1);
    act = stage(std::move(act), conv_out, cfg.conv_layers[i].pool_len, w.conv[i].norm);
  }
  act = act.reshaped({act.dim(0), act.size() / act.dim(0)});
  for (const auto& d : w.dense) {
    Tensor lin = linear(act, d.weight, d.bias);
    LayerNormCache ln;
    Tensor pre = layer_norm(lin, d.norm.gain, d.norm.bias, cfg.norm_eps, cache ? &ln : nullptr);
    Tensor next = leaky_relu(pre, cfg.leaky_slope);
    if (cache) cache->dense.push_back(DenseCache{std::move(act), std::move(ln), std::move(pre)});
    act = std::move(next);
  }
  return act;
}

namespace {

void add_to(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

void embed_backward(const ModelWeights& w, const ForwardCache& cache, const Tensor& grad_embedding,
                    ModelWeights& grads) {
  const auto& cfg = w.config;
  if (cache.dense.size() != w.dense.size() || cache.stages.size() != w.conv.size() + 1) {
    throw ShapeError("embed_backward: cache does not match the model");
  }
  Tensor g = grad_embedding;
  for (std::size_t i = w.dense.size(); i-- > 0;) {
    const auto& c = cache.dense[i];
    g = leaky_relu_backward(c.pre_activation, cfg.leaky_slope, g);
    auto ln = layer_norm_backward(c.norm, w.dense[i].norm.gain, g);
    add_to(grads.dense[i].norm.gain, ln.gain);
    add_to(grads.dense[i].norm.bias, ln.bias);
    auto lin = linear_backward(c.input, w.dense[i].weight, ln.x);
    add_to(grads.dense[i].weight, lin.weight);
    add_to(grads.dense[i].bias, lin.bias);
    g = std::move(lin.x);
  }

  auto stage_back = [&](const StageCache& c, const NormWeights& norm, NormWeights& gnorm,
                        Tensor grad) {
    grad = grad.reshaped(c.pre_activation.shape());
    grad = leaky_relu_backward(c.pre_activation, cfg.leaky_slope, grad);
    auto ln = layer_norm_backward(c.norm, norm.gain, grad);
    add_to(gnorm.gain, ln.gain);
    add_to(gnorm.bias, ln.bias);
    return max_pool1d_backward(c.conv_shape, c.argmax, ln.x);
  };

  for (std::size_t i = w.conv.size(); i-- > 0;) {
    const auto& c = cache.stages[i + 1];
    Tensor gconv = stage_back(c, w.conv[i].norm, grads.conv[i].norm, std::move(g));
    auto cg = conv1d_backward(c.input, w.conv[i].kernels, 1, gconv, true);
    add_to(grads.conv[i].kernels, cg.kernels);
    g = std::move(cg.input);
  }

  const auto& c0 = cache.stages[0];
  Tensor gsinc = stage_back(c0, w.sinc_norm, grads.sinc_norm, std::move(g));
  auto sg = sinc_backward(w.sinc, c0.input, cfg.sinc.stride, gsinc);
  add_to(grads.sinc.f_low, sg.f_low);
  add_to(grads.sinc.band, sg.band);
}

Tensor embed_parallel(const ModelWeights& weights, const Tensor& chunks, std::size_t threads) {
  require_rank(chunks, 2, "embed chunks");
  Tensor out({chunks.dim(0), weights.config.embedding_dim});
  parallel_ranges(chunks.dim(0), threads, [&](std::size_t b, std::size_t e, std::size_t) {
    if (b == e) return;
    assign_rows(out, b, embed(weights, slice_rows(chunks, b, e)));
  });
  return out;
}

void add_into(ModelWeights& acc, const ModelWeights& other) {
  auto a = acc.tensors();
  auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) add_to(*a[i].tensor, *b[i].tensor);
}

void require_finite(const ModelWeights& w, const std::string& what) {
  for (const auto& nt : w.tensors()) nt.tensor->require_finite(what + " " + nt.name);
}

}  // namespace csnc
