#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csnc/checkpoint.hpp"
#include "csnc/dataset.hpp"
#include "csnc/losses.hpp"
#include "csnc/model.hpp"

namespace csnc {

enum class OptimizerKind { rmsprop, sgd };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  LossConfig loss;
  BatchSpec batch;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::rmsprop;
  double rms_decay = 0.95;
  double rms_eps = 1e-7;
  std::size_t epochs = 1;
  std::size_t batches_per_epoch = 800;
  std::uint64_t seed = 1234;          // weight init; batch sampling uses batch.seed
  std::size_t checkpoint_every = 0;   // epochs; 0 keeps only the final checkpoint
  std::size_t threads = 1;
  std::size_t prefetch = 2;

  std::size_t total_batches() const { return epochs * batches_per_epoch; }
  void validate() const;
};

/// RMSprop: v <- d v + (1 - d) g^2, w <- w - lr g / (sqrt(v) + eps).
/// SGD:     w <- w - lr g.
class Optimizer {
 public:
  Optimizer(const ModelWeights& shape_like, OptimizerKind kind, double lr, double decay, double eps);
  void step(ModelWeights& weights, const ModelWeights& grads);

 private:
  OptimizerKind kind_;
  double lr_;
  double decay_;
  double eps_;
  ModelWeights square_avg_;
};

struct StepResult {
  LossOutput loss;
  ModelWeights grads;
};

/// Loss and full gradient for one batch. With threads > 1 the batch rows are
/// split into contiguous ranges for the trunk passes; partial gradients are
/// summed in range order.
StepResult compute_step(const ModelWeights& weights, const Tensor& chunks,
                        std::span<const std::size_t> labels, const LossConfig& loss,
                        const CurriculumState& state, std::size_t threads);

double grad_norm(const ModelWeights& grads);

struct TrainLogRow {
  std::size_t batch = 0;
  double loss = 0.0;
  double t = 0.0;  // curriculum t after this batch's update
  double r = 0.0;
  double easy_fraction = 1.0;
  double grad_norm = 0.0;
};

std::string train_log_header();
std::string format_log_row(const TrainLogRow& row);

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_batch;
  std::function<void(std::size_t epoch, const ModelWeights&, const CurriculumState&)> on_epoch;
};

struct TrainResult {
  ModelWeights weights;
  CurriculumState curriculum;
  std::vector<TrainLogRow> log;
};

/// Trains from a fresh init_model(model, class_count, config.seed). Throws
/// NumericError naming the batch and array on a non-finite loss or gradient.
TrainResult train(const AudioSet& train_set, std::size_t class_count, const ModelConfig& model,
                  const TrainConfig& config, const TrainHooks& hooks = {});

}  // namespace csnc
