#include "csnc/train.hpp"

#include <cmath>
#include <cstdio>

#include "csnc/error.hpp"
#include "csnc/parallel.hpp"

namespace csnc {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "rmsprop"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (rmsprop|sgd)");
}

void TrainConfig::validate() const {
  loss.validate();
  batch.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("rms_decay must be in [0, 1)");
  if (!(rms_eps > 0.0)) throw ConfigError("rms_eps must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batches_per_epoch < 1) throw ConfigError("batches_per_epoch must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

Optimizer::Optimizer(const ModelWeights& shape_like, OptimizerKind kind, double lr, double decay,
                     double eps)
    : kind_(kind), lr_(lr), decay_(decay), eps_(eps), square_avg_(zeros_like(shape_like)) {}

void Optimizer::step(ModelWeights& weights, const ModelWeights& grads) {
  auto w = weights.tensors();
  const auto g = grads.tensors();
  auto v = square_avg_.tensors();
  for (std::size_t k = 0; k < w.size(); ++k) {
    double* wp = w[k].tensor->raw();
    const double* gp = g[k].tensor->raw();
    const std::size_t n = w[k].tensor->size();
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < n; ++i) wp[i] -= lr_ * gp[i];
      continue;
    }
    double* vp = v[k].tensor->raw();
    for (std::size_t i = 0; i < n; ++i) {
      vp[i] = decay_ * vp[i] + (1.0 - decay_) * gp[i] * gp[i];
      wp[i] -= lr_ * gp[i] / (std::sqrt(vp[i]) + eps_);
    }
  }
}

StepResult compute_step(const ModelWeights& weights, const Tensor& chunks,
                        std::span<const std::size_t> labels, const LossConfig& loss,
                        const CurriculumState& state, std::size_t threads) {
  require_rank(chunks, 2, "training chunks");
  const std::size_t batch = chunks.dim(0);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch));
  StepResult out;

  if (workers == 1) {
    ForwardCache cache;
    const Tensor features = embed(weights, chunks, &cache);
    out.loss = compute_loss(loss, features, weights.head, weights.head_bias, labels, state);
    out.grads = zeros_like(weights);
    embed_backward(weights, cache, out.loss.grad_features, out.grads);
  } else {
    std::vector<ForwardCache> caches(workers);
    std::vector<Tensor> parts(workers);
    std::vector<std::pair<std::size_t, std::size_t>> ranges(workers, {0, 0});
    parallel_ranges(batch, workers, [&](std::size_t b, std::size_t e, std::size_t k) {
      ranges[k] = {b, e};
      parts[k] = embed(weights, slice_rows(chunks, b, e), &caches[k]);
    });
    Tensor features({batch, weights.config.embedding_dim});
    for (std::size_t k = 0; k < workers; ++k) {
      if (ranges[k].second > ranges[k].first) assign_rows(features, ranges[k].first, parts[k]);
    }
    out.loss = compute_loss(loss, features, weights.head, weights.head_bias, labels, state);
    std::vector<ModelWeights> partial(workers);
    parallel_ranges(batch, workers, [&](std::size_t b, std::size_t e, std::size_t k) {
      partial[k] = zeros_like(weights);
      embed_backward(weights, caches[k], slice_rows(out.loss.grad_features, b, e), partial[k]);
    });
    out.grads = zeros_like(weights);
    for (std::size_t k = 0; k < workers; ++k) {
      if (ranges[k].second > ranges[k].first) add_into(out.grads, partial[k]);
    }
  }
  out.grads.head = out.loss.grad_head;
  out.grads.head_bias = out.loss.grad_head_bias;
  return out;
}

double grad_norm(const ModelWeights& grads) {
  double s = 0.0;
  for (const auto& nt : grads.tensors()) {
    for (double v : nt.tensor->data()) s += v * v;
  }
  return std::sqrt(s);
}

std::string train_log_header() { return "batch,loss,t,r,easy_fraction,grad_norm"; }

std::string format_log_row(const TrainLogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", row.batch, row.loss, row.t,
                row.r, row.easy_fraction, row.grad_norm);
  return buf;
}

TrainResult train(const AudioSet& train_set, std::size_t class_count, const ModelConfig& model,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  model.validate();
  if (train_set.size() == 0) throw DataError("the train split is empty");
  if (config.batch.chunk_len != model.chunk_len) {
    throw ConfigError("batch chunk length " + std::to_string(config.batch.chunk_len) +
                      " differs from the model's " + std::to_string(model.chunk_len));
  }
  for (std::size_t label : train_set.labels) {
    if (label >= class_count) throw DataError("train label outside the class range");
  }

  TrainResult res;
  res.weights = init_model(model, class_count, config.seed);
  Optimizer opt(res.weights, config.optimizer, config.learning_rate, config.rms_decay, config.rms_eps);
  BatchPrefetcher batches(train_set, config.batch, 0, config.prefetch);

  const bool curricular = config.loss.kind == LossKind::curricular;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < config.batches_per_epoch; ++i) {
      const std::size_t index = res.log.size();
      const Batch b = batches.next();
      const std::string where = "batch " + std::to_string(index);
      StepResult step;
      try {
        b.chunks.require_finite(where + " input chunks");
        step = compute_step(res.weights, b.chunks, b.labels, config.loss, res.curriculum,
                            config.threads);
      } catch (const NumericError& e) {
        // Inner ops know the array, not the batch.
        const std::string msg = e.what();
        if (msg.rfind(where, 0) == 0) throw;
        throw NumericError(where + ": " + msg);
      }
      if (!std::isfinite(step.loss.loss)) throw NumericError(where + ": non-finite loss");
      require_finite(step.grads, where + " gradient");

      TrainLogRow row;
      row.batch = index;
      row.loss = step.loss.loss;
      row.r = step.loss.r;
      row.easy_fraction = step.loss.easy_fraction;
      row.grad_norm = grad_norm(step.grads);
      if (curricular) res.curriculum = step.loss.next;
      res.curriculum.batch_index = index + 1;
      row.t = res.curriculum.t;

      opt.step(res.weights, step.grads);
      require_finite(res.weights, where + " weights after update");
      res.log.push_back(row);
      if (hooks.on_batch) hooks.on_batch(row);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, res.weights, res.curriculum);
  }
  return res;
}

}  // namespace csnc
