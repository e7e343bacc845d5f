#include "csnc/sinc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "csnc/error.hpp"
#include "csnc/ops.hpp"

namespace csnc {

namespace {

constexpr double kPi = std::numbers::pi;

// Right derivative of |x| at 0.
double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

double tap(double a1, double a2, std::size_t n) {
  if (n == 0) return 2.0 * (a2 - a1);
  const double dn = static_cast<double>(n);
  return (std::sin(2.0 * kPi * a2 * dn) - std::sin(2.0 * kPi * a1 * dn)) / (kPi * dn);
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double SincFilterParams::low_cutoff(std::size_t i) const {
  return std::min(std::abs(f_low[i]) + floor(), 0.5);
}

double SincFilterParams::high_cutoff(std::size_t i) const {
  return std::min(low_cutoff(i) + std::abs(band[i]), 0.5);
}

void SincFilterParams::validate() const {
  if (kernel_len == 0 || kernel_len % 2 == 0) {
    throw ConfigError("sinc kernel length must be odd, got " + std::to_string(kernel_len));
  }
  if (!(sample_rate > 0.0)) throw ConfigError("sinc sample rate must be positive");
  if (f_low.empty() || f_low.size() != band.size()) {
    throw ConfigError("sinc filter parameters need matching, non-empty f_low/band arrays");
  }
  f_low.require_finite("sinc f_low");
  band.require_finite("sinc band");
  for (std::size_t i = 0; i < count(); ++i) {
    const double a1 = low_cutoff(i), a2 = high_cutoff(i);
    if (!(a1 > 0.0 && a1 <= a2 && a2 <= 0.5)) {
      throw ConfigError("sinc filter " + std::to_string(i) + " has invalid cutoffs (" +
                        std::to_string(a1) + ", " + std::to_string(a2) + ")");
    }
  }
}

SincFilterParams SincFilterParams::from_cutoffs(std::span<const double> low,
                                                std::span<const double> high,
                                                std::size_t kernel_len, double sample_rate,
                                                bool windowed) {
  if (low.size() != high.size() || low.empty()) {
    throw ConfigError("from_cutoffs: need equally sized non-empty cutoff lists");
  }
  SincFilterParams p;
  p.kernel_len = kernel_len;
  p.sample_rate = sample_rate;
  p.windowed = windowed;
  p.f_low = Tensor({low.size()});
  p.band = Tensor({low.size()});
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (low[i] < p.floor() || high[i] < low[i] || high[i] > 0.5) {
      throw ConfigError("from_cutoffs: filter " + std::to_string(i) + " cutoffs (" +
                        std::to_string(low[i]) + ", " + std::to_string(high[i]) +
                        ") outside [floor, 0.5]");
    }
    p.f_low[i] = low[i] - p.floor();
    p.band[i] = high[i] - low[i];
  }
  p.validate();
  return p;
}

std::vector<double> mel_edges_hz(std::size_t count, double f_min, double f_max) {
  const double m0 = hz_to_mel(f_min), m1 = hz_to_mel(f_max);
  std::vector<double> edges(count + 1);
  for (std::size_t i = 0; i <= count; ++i) {
    edges[i] = mel_to_hz(m0 + (m1 - m0) * static_cast<double>(i) / static_cast<double>(count));
  }
  edges.front() = f_min;
  edges.back() = f_max;
  return edges;
}

SincFilterParams mel_init(std::size_t count, double sample_rate, double f_min, double f_max,
                          std::size_t kernel_len, bool windowed) {
  if (count == 0) throw ConfigError("mel_init: need at least one filter");
  if (!(sample_rate > 0.0) || !(f_min > 0.0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
    throw ConfigError("mel_init: require 0 < f_min < f_max <= sample_rate / 2, got f_min=" +
                      std::to_string(f_min) + " f_max=" + std::to_string(f_max) +
                      " sample_rate=" + std::to_string(sample_rate));
  }
  const auto edges = mel_edges_hz(count, f_min, f_max);
  SincFilterParams p;
  p.kernel_len = kernel_len;
  p.sample_rate = sample_rate;
  p.windowed = windowed;
  p.f_low = Tensor({count});
  p.band = Tensor({count});
  for (std::size_t i = 0; i < count; ++i) {
    const double a1 = std::max(edges[i], kSincFloorHz) / sample_rate;
    const double a2 = edges[i + 1] / sample_rate;
    p.f_low[i] = a1 - p.floor();
    p.band[i] = std::max(a2 - a1, 0.0);
  }
  p.validate();
  return p;
}

std::vector<double> hamming_window(std::size_t len) {
  std::vector<double> w(len, 1.0);
  if (len < 2) return w;
  const double denom = static_cast<double>(len - 1);
  for (std::size_t j = 0; j <= (len - 1) / 2; ++j) {
    w[j] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(j) / denom);
    w[len - 1 - j] = w[j];
  }
  return w;
}

Tensor materialize(const SincFilterParams& params) {
  params.validate();
  const std::size_t len = params.kernel_len;
  const std::size_t half = (len - 1) / 2;
  const auto window = params.windowed ? hamming_window(len) : std::vector<double>(len, 1.0);
  Tensor kernels({params.count(), len});
  for (std::size_t f = 0; f < params.count(); ++f) {
    const double a1 = params.low_cutoff(f), a2 = params.high_cutoff(f);
    for (std::size_t n = 0; n <= half; ++n) {
      const double v = window[half + n] * tap(a1, a2, n);
      kernels.at(f, half + n) = v;
      kernels.at(f, half - n) = v;
    }
  }
  return kernels;
}

SincGrads materialize_backward(const SincFilterParams& params, const Tensor& grad_kernels) {
  const std::size_t len = params.kernel_len;
  if (grad_kernels.shape() != Shape{params.count(), len}) {
    throw ShapeError("materialize_backward: gradient shape " +
                     shape_string(grad_kernels.shape()) + " does not match kernels");
  }
  const std::size_t half = (len - 1) / 2;
  const auto window = params.windowed ? hamming_window(len) : std::vector<double>(len, 1.0);
  SincGrads g{Tensor({params.count()}), Tensor({params.count()})};
  for (std::size_t f = 0; f < params.count(); ++f) {
    const double fl = params.f_low[f], bw = params.band[f];
    const double raw1 = std::abs(fl) + params.floor();
    const double a1 = std::min(raw1, 0.5);
    const double raw2 = a1 + std::abs(bw);
    const double a2 = std::min(raw2, 0.5);

    // dL/da1 and dL/da2 with dg/da = +-2 cos(2 pi a n).
    double d_a1 = 0.0, d_a2 = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double n = static_cast<double>(j) - static_cast<double>(half);
      const double gw = grad_kernels.at(f, j) * window[j];
      d_a2 += gw * 2.0 * std::cos(2.0 * kPi * a2 * n);
      d_a1 -= gw * 2.0 * std::cos(2.0 * kPi * a1 * n);
    }
    const double a1_from_fl = raw1 < 0.5 ? sign_of(fl) : 0.0;
    const double a2_from_a1 = raw2 < 0.5 ? 1.0 : 0.0;
    const double a2_from_bw = raw2 < 0.5 ? sign_of(bw) : 0.0;
    g.f_low[f] = (d_a1 + d_a2 * a2_from_a1) * a1_from_fl;
    g.band[f] = d_a2 * a2_from_bw;
  }
  return g;
}

Tensor sinc_forward(const SincFilterParams& params, const Tensor& waveform, std::size_t stride) {
  require_rank(waveform, 2, "sinc_forward waveform");
  return conv1d(waveform, materialize(params), stride);
}

SincGrads sinc_backward(const SincFilterParams& params, const Tensor& waveform, std::size_t stride,
                        const Tensor& grad_output) {
  const Tensor kernels = materialize(params);
  const auto conv = conv1d_backward(waveform, kernels, stride, grad_output, false);
  return materialize_backward(params, conv.kernels);
}

double FilterResponse::peak_frequency() const {
  const auto it = std::max_element(magnitude_db.begin(), magnitude_db.end());
  return freqs[static_cast<std::size_t>(it - magnitude_db.begin())];
}

std::pair<double, double> FilterResponse::band_edges(double db) const {
  const std::size_t peak = static_cast<std::size_t>(
      std::max_element(magnitude_db.begin(), magnitude_db.end()) - magnitude_db.begin());
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double y0 = magnitude_db[inside], y1 = magnitude_db[outside];
    if (!std::isfinite(y1)) return freqs[outside];
    const double t = (y0 - db) / (y0 - y1);
    return freqs[inside] + t * (freqs[outside] - freqs[inside]);
  };
  double lo = freqs.front(), hi = freqs.back();
  for (std::size_t i = peak; i > 0; --i) {
    if (magnitude_db[i - 1] < db) {
      lo = crossing(i, i - 1);
      break;
    }
  }
  for (std::size_t i = peak; i + 1 < freqs.size(); ++i) {
    if (magnitude_db[i + 1] < db) {
      hi = crossing(i, i + 1);
      break;
    }
  }
  return {lo, hi};
}

double FilterResponse::magnitude_at(double f) const {
  if (f <= freqs.front()) return magnitude_db.front();
  if (f >= freqs.back()) return magnitude_db.back();
  const auto it = std::upper_bound(freqs.begin(), freqs.end(), f);
  const std::size_t i = static_cast<std::size_t>(it - freqs.begin());
  const double t = (f - freqs[i - 1]) / (freqs[i] - freqs[i - 1]);
  return magnitude_db[i - 1] + t * (magnitude_db[i] - magnitude_db[i - 1]);
}

FilterResponse frequency_response(const SincFilterParams& params, std::size_t index,
                                  std::size_t n_points) {
  if (index >= params.count()) {
    throw ConfigError("frequency_response: filter index " + std::to_string(index) +
                      " out of range (count " + std::to_string(params.count()) + ")");
  }
  if (n_points < 2) throw ConfigError("frequency_response: need at least 2 points");
  const Tensor kernels = materialize(params);
  const std::size_t len = params.kernel_len;
  const double half = static_cast<double>((len - 1) / 2);
  FilterResponse r;
  r.freqs.resize(n_points);
  r.magnitude_db.resize(n_points);
  std::vector<double> mag(n_points);
  double peak = 0.0;
  for (std::size_t k = 0; k < n_points; ++k) {
    const double f = 0.5 * static_cast<double>(k) / static_cast<double>(n_points - 1);
    r.freqs[k] = f;
    // Symmetric real kernel: the DTFT about the centre tap is real.
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      acc += kernels.at(index, j) * std::cos(2.0 * kPi * f * (static_cast<double>(j) - half));
    }
    mag[k] = std::abs(acc);
    peak = std::max(peak, mag[k]);
  }
  r.all_zero = peak == 0.0;
  for (std::size_t k = 0; k < n_points; ++k) {
    r.magnitude_db[k] = r.all_zero ? -std::numeric_limits<double>::infinity()
                                   : 20.0 * std::log10(mag[k] / peak);
  }
  return r;
}

}  // namespace csnc
