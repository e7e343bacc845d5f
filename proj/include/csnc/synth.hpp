#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csnc/manifest.hpp"

namespace csnc {

/// A synthetic voice: a harmonic series with fixed relative amplitudes.
struct SpeakerProfile {
  double f0 = 0.0;                 // Hz
  std::vector<double> amplitudes;  // 6 harmonics, before tilt
  double tilt = 0.0;               // harmonic h is scaled by h^-tilt
};

struct SynthConfig {
  std::size_t speakers = 10;
  std::size_t utterances = 8;
  double seconds = 3.0;
  std::uint32_t sample_rate = 16000;
  std::uint64_t seed = 7;
  std::string prefix = "spk";
  double snr_db = 20.0;

  void validate() const;
};

/// Profiles for every speaker; fundamentals are at least 5 Hz apart.
std::vector<SpeakerProfile> make_profiles(const SynthConfig& config);

/// One utterance of a speaker: random harmonic phases, white noise at the
/// configured SNR, random peak gain in [0.2, 0.9].
std::vector<double> synth_utterance(const SpeakerProfile& profile, const SynthConfig& config,
                                    std::uint64_t speaker, std::uint64_t utterance);

/// Writes out/<prefix>NNN/uttNN.wav (16-bit) and out/manifest.tsv, and
/// returns the manifest.
DatasetManifest synth_corpus(const SynthConfig& config, const std::filesystem::path& out,
                             const ManifestOptions& options = {});

}  // namespace csnc
