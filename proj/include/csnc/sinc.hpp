#pragma once

// Learnable band-pass sinc filterbank.
//
// Filter i is parameterized by (f_low[i], band[i]) in normalized frequency
// (cycles/sample). The effective cutoffs are
//
//   a1 = min(|f_low| + f_floor, 0.5)
//   a2 = min(a1 + |band|, 0.5)
//
// with f_floor = 50 Hz / sample_rate, and the kernel tap at integer offset n is
//
//   g[n] = 2 a2 sinc(2 pi a2 n) - 2 a1 sinc(2 pi a1 n),   g[0] = 2 (a2 - a1)
//
// optionally multiplied by a Hamming window.

#include <cstddef>
#include <span>
#include <vector>

#include "csnc/tensor.hpp"

namespace csnc {

inline constexpr double kSincFloorHz = 50.0;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct SincFilterParams {
  Tensor f_low;  // [count]
  Tensor band;   // [count]
  std::size_t kernel_len = 251;
  double sample_rate = 16000.0;
  bool windowed = true;

  std::size_t count() const { return f_low.size(); }
  double floor() const { return kSincFloorHz / sample_rate; }
  double low_cutoff(std::size_t i) const;
  double high_cutoff(std::size_t i) const;

  /// Throws unless kernel_len is odd and every filter has 0 < a1 <= a2 <= 0.5.
  void validate() const;

  /// Parameters whose effective cutoffs equal (low[i], high[i]) exactly,
  /// provided low[i] >= floor().
  static SincFilterParams from_cutoffs(std::span<const double> low, std::span<const double> high,
                                       std::size_t kernel_len, double sample_rate,
                                       bool windowed = true);
};

/// `count` filters whose edges are equispaced on the mel scale between f_min
/// and f_max (Hz). Edges below the 50 Hz floor start at the floor.
SincFilterParams mel_init(std::size_t count, double sample_rate, double f_min, double f_max,
                          std::size_t kernel_len = 251, bool windowed = true);

/// The count + 1 mel-equidistant band edges in Hz.
std::vector<double> mel_edges_hz(std::size_t count, double f_min, double f_max);

/// Symmetric Hamming window; exactly mirror-symmetric.
std::vector<double> hamming_window(std::size_t len);

/// Kernels [count, kernel_len].
Tensor materialize(const SincFilterParams& params);

struct SincGrads {
  Tensor f_low;
  Tensor band;
};

/// Chains a gradient with respect to the materialized kernels back onto the
/// cutoff parameters.
SincGrads materialize_backward(const SincFilterParams& params, const Tensor& grad_kernels);

/// Sinc convolution of [batch, chunk_len] waveforms: [batch, count, out_len].
Tensor sinc_forward(const SincFilterParams& params, const Tensor& waveform, std::size_t stride);

SincGrads sinc_backward(const SincFilterParams& params, const Tensor& waveform, std::size_t stride,
                        const Tensor& grad_output);

struct FilterResponse {
  std::vector<double> freqs;         // normalized, strictly increasing in [0, 0.5]
  std::vector<double> magnitude_db;  // relative to the peak; -inf everywhere for an all-zero kernel
  bool all_zero = false;

  /// Frequency of the largest magnitude (first one on ties).
  double peak_frequency() const;
  /// Frequencies where the response first drops below `db` walking outward
  /// from the peak. An edge that never drops reports the range boundary.
  std::pair<double, double> band_edges(double db = -3.0) const;
  /// Linearly interpolated response at normalized frequency f.
  double magnitude_at(double f) const;
};

/// |DTFT| of filter `index`'s kernel sampled at n_points frequencies spanning [0, 0.5].
FilterResponse frequency_response(const SincFilterParams& params, std::size_t index,
                                  std::size_t n_points);

}  // namespace csnc
