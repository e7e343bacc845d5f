#include "csnc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "csnc/error.hpp"
#include "csnc/ops.hpp"

namespace csnc {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::softmax: return "softmax";
    case LossKind::norm_softmax: return "norm_softmax";
    case LossKind::arcface: return "arcface";
    case LossKind::am_softmax: return "am_softmax";
    case LossKind::curricular: return "curricular";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (auto k : {LossKind::softmax, LossKind::norm_softmax, LossKind::arcface,
                 LossKind::am_softmax, LossKind::curricular}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) +
                    "' (softmax, norm_softmax, arcface, am_softmax, curricular)");
}

std::string to_string(RStatistic r) { return r == RStatistic::mean ? "mean" : "sum"; }

RStatistic parse_r_statistic(std::string_view name) {
  if (name == "mean") return RStatistic::mean;
  if (name == "sum") return RStatistic::sum;
  throw ConfigError("r_statistic must be mean or sum, got '" + std::string(name) + "'");
}

std::string to_string(TUpdate u) { return u == TUpdate::direct ? "direct" : "swapped"; }

TUpdate parse_t_update(std::string_view name) {
  if (name == "direct") return TUpdate::direct;
  if (name == "swapped") return TUpdate::swapped;
  throw ConfigError("t_update must be direct or swapped, got '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("loss scale s must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (kind == LossKind::arcface || kind == LossKind::curricular) {
    if (!(m >= 0.0 && m < std::numbers::pi / 2.0)) {
      throw ConfigError("angular margin m must be in [0, pi/2)");
    }
  }
  if (kind == LossKind::am_softmax && !(m >= 0.0 && m < 1.0)) {
    throw ConfigError("additive cosine margin m must be in [0, 1)");
  }
}

namespace {

void check_labels(std::span<const std::size_t> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " +
                     std::to_string(batch));
  }
  for (auto y : labels) {
    if (y >= classes) {
      throw ShapeError("label " + std::to_string(y) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
}

// d cos(acos(c) + m) / dc = sin(theta + m) / sin(theta). Zero where the
// clamp is active.
double margin_slope(double c, double m) {
  if (c >= 1.0 || c <= -1.0) return 0.0;
  const double theta = std::acos(c);
  return std::sin(theta + m) / std::sin(theta);
}

// Scales the logit gradient by s and by each logit's slope w.r.t. its cosine.
HeadResult finish(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& slope) {
  HeadResult r = cross_entropy(logits, labels);
  for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] *= slope[i];
  return r;
}

}  // namespace

CosineLogits cosine_logits(const Tensor& features, const Tensor& weights,
                           std::span<const std::size_t> labels) {
  require_rank(features, 2, "features");
  require_rank(weights, 2, "head weights");
  if (features.dim(1) != weights.dim(1) || features.dim(1) == 0) {
    throw ShapeError("cosine_logits: features " + shape_string(features.shape()) +
                     " and weights " + shape_string(weights.shape()) + " disagree on dim");
  }
  const std::size_t batch = features.dim(0), classes = weights.dim(0);
  check_labels(labels, batch, classes);
  std::vector<double> fn(batch), wn(classes);
  for (std::size_t i = 0; i < batch; ++i) fn[i] = l2_norm(features.slice(i));
  for (std::size_t c = 0; c < classes; ++c) wn[c] = l2_norm(weights.slice(c));
  for (std::size_t i = 0; i < batch; ++i) {
    if (!(fn[i] > 0.0)) throw NumericError("cosine_logits: zero-norm feature row " + std::to_string(i));
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (!(wn[c] > 0.0)) throw NumericError("cosine_logits: zero-norm weight row " + std::to_string(c));
  }
  CosineLogits cl{Tensor({batch, classes}), std::vector<std::size_t>(labels.begin(), labels.end())};
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      cl.cos_theta.at(i, c) = dot(features.slice(i), weights.slice(c)) / (fn[i] * wn[c]);
    }
  }
  return cl;
}

CosineGrads cosine_logits_backward(const Tensor& features, const Tensor& weights,
                                   const Tensor& grad_cos) {
  const std::size_t batch = features.dim(0), classes = weights.dim(0), dim = features.dim(1);
  if (grad_cos.shape() != Shape{batch, classes}) {
    throw ShapeError("cosine_logits_backward: gradient shape " + shape_string(grad_cos.shape()));
  }
  const Tensor fh = l2_normalize_rows(features);
  const Tensor wh = l2_normalize_rows(weights);
  Tensor gfh({batch, dim}), gwh({classes, dim});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = grad_cos.at(i, c);
      if (g == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        gfh.at(i, d) += g * wh.at(c, d);
        gwh.at(c, d) += g * fh.at(i, d);
      }
    }
  }
  CosineGrads out{Tensor({batch, dim}), Tensor({classes, dim})};
  auto back = [dim](const Tensor& raw, const Tensor& unit, const Tensor& g, Tensor& dst,
                    std::size_t row) {
    const double n = l2_norm(raw.slice(row));
    const double proj = dot(unit.slice(row), g.slice(row));
    for (std::size_t d = 0; d < dim; ++d) {
      dst.at(row, d) = (g.at(row, d) - unit.at(row, d) * proj) / n;
    }
  };
  for (std::size_t i = 0; i < batch; ++i) back(features, fh, gfh, out.features, i);
  for (std::size_t c = 0; c < classes; ++c) back(weights, wh, gwh, out.weights, c);
  return out;
}

HeadResult cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0) throw ShapeError("cross_entropy: empty batch");
  check_labels(labels, batch, classes);
  HeadResult r;
  r.grad = Tensor(logits.shape());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    auto row = logits.slice(i);
    const std::size_t y = labels[i];
    const double top = *std::max_element(row.begin(), row.end());
    if (row[y] == top) {
      // Relative to the target: log1p keeps a nearly saturated loss accurate
      // instead of cancelling lse against the target logit.
      double rest = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        if (c != y) rest += std::exp(row[c] - row[y]);
      }
      r.loss += std::log1p(rest) * inv_batch;
      const double denom = 1.0 + rest;
      for (std::size_t c = 0; c < classes; ++c) {
        r.grad.at(i, c) = (c == y ? -rest / denom : std::exp(row[c] - row[y]) / denom) * inv_batch;
      }
      continue;
    }
    const double lse = log_sum_exp(row);
    r.loss += (lse - row[y]) * inv_batch;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - lse);
      r.grad.at(i, c) = (p - (c == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return r;
}

HeadResult softmax_loss(const Tensor& logits, std::span<const std::size_t> labels) {
  return cross_entropy(logits, labels);
}

HeadResult norm_softmax_loss(const CosineLogits& cl, double s) {
  Tensor logits = cl.cos_theta;
  for (auto& v : logits.data()) v *= s;
  return finish(logits, cl.labels, Tensor(logits.shape(), s));
}

double add_angular_margin(double cos_theta, double m) {
  return std::cos(std::acos(std::clamp(cos_theta, -1.0, 1.0)) + m);
}

HeadResult arcface_loss(const CosineLogits& cl, double m, double s) {
  Tensor logits = cl.cos_theta;
  Tensor slope(logits.shape(), s);
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const std::size_t k = cl.labels.at(i);
    const double c = cl.cos_theta.at(i, k);
    for (std::size_t j = 0; j < logits.dim(1); ++j) logits.at(i, j) *= s;
    logits.at(i, k) = s * add_angular_margin(c, m);
    slope.at(i, k) = s * margin_slope(c, m);
  }
  return finish(logits, cl.labels, slope);
}

HeadResult am_softmax_loss(const CosineLogits& cl, double m, double s) {
  Tensor logits = cl.cos_theta;
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    const std::size_t k = cl.labels.at(i);
    for (std::size_t j = 0; j < logits.dim(1); ++j) logits.at(i, j) *= s;
    logits.at(i, k) = s * (cl.cos_theta.at(i, k) - m);
  }
  return finish(logits, cl.labels, Tensor(logits.shape(), s));
}

double modulation(double t, double cos_theta_j, double cos_theta_k_plus_m) {
  if (cos_theta_k_plus_m > cos_theta_j) return cos_theta_j;
  return cos_theta_j * (t + cos_theta_j);
}

double target_statistic(const CosineLogits& cl, RStatistic stat) {
  const std::size_t batch = cl.cos_theta.dim(0);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch; ++i) sum += cl.cos_theta.at(i, cl.labels.at(i));
  return stat == RStatistic::mean ? sum / static_cast<double>(batch) : sum;
}

CurriculumState update_curriculum(const CurriculumState& state, double r, double alpha,
                                  TUpdate rule) {
  CurriculumState next = state;
  next.t = rule == TUpdate::direct ? alpha * r + (1.0 - alpha) * state.t
                                  : (1.0 - alpha) * r + alpha * state.t;
  next.batch_index = state.batch_index + 1;
  return next;
}

CurricularResult curricular_loss(const CosineLogits& cl, const CurriculumState& state,
                                 const LossConfig& config) {
  const double m = config.m, s = config.s, t = state.t;
  Tensor logits(cl.cos_theta.shape());
  Tensor slope(cl.cos_theta.shape());
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::size_t easy_samples = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t k = cl.labels.at(i);
    const double ck = cl.cos_theta.at(i, k);
    const double target = add_angular_margin(ck, m);
    bool all_easy = true;
    for (std::size_t j = 0; j < classes; ++j) {
      const double cj = cl.cos_theta.at(i, j);
      if (j == k) {
        logits.at(i, j) = s * target;
        slope.at(i, j) = s * margin_slope(ck, m);
      } else if (target > cj) {
        logits.at(i, j) = s * cj;
        slope.at(i, j) = s;
      } else {
        all_easy = false;
        logits.at(i, j) = s * modulation(t, cj, target);
        slope.at(i, j) = s * (t + 2.0 * cj);
      }
    }
    if (all_easy) ++easy_samples;
  }
  CurricularResult out;
  out.head = finish(logits, cl.labels, slope);
  out.head.easy_fraction = static_cast<double>(easy_samples) / static_cast<double>(batch);
  out.r = target_statistic(cl, config.r_statistic);
  out.next = update_curriculum(state, out.r, config.alpha, config.t_update);
  return out;
}

LossOutput compute_loss(const LossConfig& config, const Tensor& features, const Tensor& head,
                        const Tensor& head_bias, std::span<const std::size_t> labels,
                        const CurriculumState& state) {
  LossOutput out;
  out.next = state;
  const CosineLogits cl = cosine_logits(features, head, labels);
  out.r = target_statistic(cl, config.r_statistic);

  if (config.kind == LossKind::softmax) {
    const HeadResult r = softmax_loss(linear(features, head, head_bias), labels);
    auto g = linear_backward(features, head, r.grad);
    out.loss = r.loss;
    out.grad_features = std::move(g.x);
    out.grad_head = std::move(g.weight);
    out.grad_head_bias = std::move(g.bias);
    return out;
  }

  HeadResult r;
  switch (config.kind) {
    case LossKind::norm_softmax: r = norm_softmax_loss(cl, config.s); break;
    case LossKind::arcface: r = arcface_loss(cl, config.m, config.s); break;
    case LossKind::am_softmax: r = am_softmax_loss(cl, config.m, config.s); break;
    case LossKind::curricular: {
      auto cr = curricular_loss(cl, state, config);
      r = std::move(cr.head);
      out.next = cr.next;
      break;
    }
    case LossKind::softmax: break;
  }
  auto g = cosine_logits_backward(features, head, r.grad);
  out.loss = r.loss;
  out.easy_fraction = r.easy_fraction;
  out.grad_features = std::move(g.features);
  out.grad_head = std::move(g.weights);
  out.grad_head_bias = Tensor(head_bias.shape());
  return out;
}

}  // namespace csnc
