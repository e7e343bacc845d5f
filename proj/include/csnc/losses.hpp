#pragma once

// Classification heads over an embedding batch.
//
// softmax      : cross-entropy of W f + b
// norm_softmax : cross-entropy of s cos(theta_c)
// arcface      : target logit s cos(theta_k + m), others s cos(theta_c)
// am_softmax   : target logit s (cos(theta_k) - m), others s cos(theta_c)
// curricular   : target logit s cos(theta_k + m), others s N(t, cos(theta_c)) with
//                N = cos_c                  if cos(theta_k + m) > cos_c  (easy)
//                N = cos_c (t + cos_c)      otherwise                    (hard)
//
// All cross-entropies are batch means evaluated with max-subtracted
// log-sum-exp. The curricular t is an input to the loss and is treated as a
// constant by the gradient; the easy/hard branch chosen in the forward pass
// fixes which branch derivative is used.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csnc/tensor.hpp"

namespace csnc {

enum class LossKind { softmax, norm_softmax, arcface, am_softmax, curricular };
enum class RStatistic { mean, sum };
enum class TUpdate { direct, swapped };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
std::string to_string(RStatistic r);
RStatistic parse_r_statistic(std::string_view name);
std::string to_string(TUpdate u);
TUpdate parse_t_update(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::curricular;
  double m = 0.5;
  double s = 64.0;
  double alpha = 0.99;
  RStatistic r_statistic = RStatistic::mean;
  TUpdate t_update = TUpdate::direct;

  void validate() const;
};

struct CurriculumState {
  double t = 0.0;
  std::size_t batch_index = 0;
};

struct CosineLogits {
  Tensor cos_theta;  // [batch, classes]
  std::vector<std::size_t> labels;
};

/// Loss value and its gradient with respect to the head input (cosines or raw logits).
struct HeadResult {
  double loss = 0.0;
  Tensor grad;
  double easy_fraction = 1.0;  // share of samples with no hard negative (curricular only)
};

/// Cosines between row-normalized features [batch, dim] and row-normalized
/// weights [classes, dim]. Throws NumericError on a zero-norm row.
CosineLogits cosine_logits(const Tensor& features, const Tensor& weights,
                           std::span<const std::size_t> labels);

struct CosineGrads {
  Tensor features;
  Tensor weights;
};

CosineGrads cosine_logits_backward(const Tensor& features, const Tensor& weights,
                                   const Tensor& grad_cos);

/// Mean cross-entropy of already-formed logits; gradient is (softmax - onehot) / batch.
HeadResult cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

HeadResult softmax_loss(const Tensor& logits, std::span<const std::size_t> labels);
HeadResult norm_softmax_loss(const CosineLogits& cl, double s);
HeadResult arcface_loss(const CosineLogits& cl, double m, double s);
HeadResult am_softmax_loss(const CosineLogits& cl, double m, double s);

/// cos(acos(clamp(c)) + m).
double add_angular_margin(double cos_theta, double m);

double modulation(double t, double cos_theta_j, double cos_theta_k_plus_m);

struct CurricularResult {
  HeadResult head;
  double r = 0.0;  // batch statistic of the target cosines
  CurriculumState next;
};

/// Loss at the state's current t, then one update of t from this batch.
CurricularResult curricular_loss(const CosineLogits& cl, const CurriculumState& state,
                                 const LossConfig& config);

/// Mean (or sum) over the batch of the target cosine cos(theta_{y_i}).
double target_statistic(const CosineLogits& cl, RStatistic stat);

/// direct:  t <- alpha r + (1 - alpha) t
/// swapped: t <- (1 - alpha) r + alpha t
CurriculumState update_curriculum(const CurriculumState& state, double r, double alpha,
                                  TUpdate rule);

/// Everything one training step needs from the head.
struct LossOutput {
  double loss = 0.0;
  Tensor grad_features;
  Tensor grad_head;
  Tensor grad_head_bias;
  double r = 0.0;
  double easy_fraction = 1.0;
  CurriculumState next;
};

LossOutput compute_loss(const LossConfig& config, const Tensor& features, const Tensor& head,
                        const Tensor& head_bias, std::span<const std::size_t> labels,
                        const CurriculumState& state);

}  // namespace csnc
