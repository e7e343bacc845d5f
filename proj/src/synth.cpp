#include "csnc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "csnc/error.hpp"
#include "csnc/wav.hpp"

namespace csnc {

namespace {

constexpr std::size_t kHarmonics = 6;
constexpr double kMinF0Gap = 5.0;
constexpr double kF0Min = 80.0;
constexpr double kF0Max = 300.0;

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), tag};
  return std::mt19937_64(seq);
}

std::string numbered(const std::string& prefix, std::size_t n, std::size_t count) {
  int width = 2;
  for (std::size_t c = count > 0 ? count - 1 : 0; c >= 100; c /= 10) ++width;
  if (prefix != "utt") width = std::max(width, 3);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return prefix + buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (speakers < 2) throw ConfigError("synth needs at least 2 speakers (identification is 1-of-n)");
  if (utterances < 1) throw ConfigError("synth needs at least 1 utterance per speaker");
  if (!(seconds > 0.0)) throw ConfigError("synth utterance length must be positive");
  if (sample_rate < 1000) throw ConfigError("synth sample rate must be at least 1000 Hz");
  if (prefix.empty()) throw ConfigError("synth speaker prefix must not be empty");
  if (kMinF0Gap * static_cast<double>(speakers - 1) > kF0Max - kF0Min) {
    throw ConfigError("too many speakers for 5 Hz fundamental separation in 80-300 Hz");
  }
}

std::vector<SpeakerProfile> make_profiles(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng = keyed_rng(config.seed, 0, 0, 0x70726f66u);
  // Sorted uniform draws on the shrunken range, spread by the gap per rank:
  // uniform over all separated configurations and never stalls.
  const double slack = kF0Max - kF0Min - kMinF0Gap * static_cast<double>(config.speakers - 1);
  std::uniform_real_distribution<double> f0_dist(0.0, slack);
  std::vector<double> f0(config.speakers);
  for (double& f : f0) f = f0_dist(rng);
  std::sort(f0.begin(), f0.end());
  for (std::size_t i = 0; i < f0.size(); ++i) f0[i] += kF0Min + kMinF0Gap * static_cast<double>(i);
  std::shuffle(f0.begin(), f0.end(), rng);

  std::uniform_real_distribution<double> amp_dist(0.1, 1.0);
  std::uniform_real_distribution<double> tilt_dist(0.0, 1.5);
  std::vector<SpeakerProfile> out(config.speakers);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].f0 = f0[i];
    for (std::size_t h = 0; h < kHarmonics; ++h) out[i].amplitudes.push_back(amp_dist(rng));
    out[i].tilt = tilt_dist(rng);
  }
  return out;
}

std::vector<double> synth_utterance(const SpeakerProfile& profile, const SynthConfig& config,
                                    std::uint64_t speaker, std::uint64_t utterance) {
  std::mt19937_64 rng = keyed_rng(config.seed, speaker, utterance, 0x75747400u);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> gain_dist(0.2, 0.9);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double sr = config.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(config.seconds * sr));
  std::vector<double> x(n, 0.0);
  for (std::size_t h = 0; h < profile.amplitudes.size(); ++h) {
    const double phase = phase_dist(rng);
    const double freq = profile.f0 * static_cast<double>(h + 1);
    if (freq >= sr / 2.0) continue;
    const double amp = profile.amplitudes[h] * std::pow(static_cast<double>(h + 1), -profile.tilt);
    const double w = 2.0 * std::numbers::pi * freq / sr;
    for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }
  double energy = 0.0;
  for (double v : x) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(std::max<std::size_t>(n, 1)));
  const double noise_rms = std::pow(10.0, -config.snr_db / 20.0);
  for (double& v : x) v = (rms > 0.0 ? v / rms : 0.0) + noise_rms * noise(rng);

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = gain_dist(rng);
  if (peak > 0.0) {
    for (double& v : x) v *= gain / peak;
  }
  return x;
}

DatasetManifest synth_corpus(const SynthConfig& config, const std::filesystem::path& out,
                             const ManifestOptions& options) {
  const auto profiles = make_profiles(config);
  std::filesystem::create_directories(out);
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    const auto dir = out / numbered(config.prefix, s, config.speakers);
    std::filesystem::create_directories(dir);
    for (std::size_t u = 0; u < config.utterances; ++u) {
      const auto samples = synth_utterance(profiles[s], config, s, u);
      write_wav_pcm16(dir / (numbered("utt", u, config.utterances) + ".wav"), samples,
                      config.sample_rate);
    }
  }
  DatasetManifest m = build_manifest(out, options);
  write_manifest(m, out / "manifest.tsv");
  return m;
}

}  // namespace csnc
