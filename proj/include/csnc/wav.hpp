#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace csnc {

enum class WavSampleFormat { pcm16, float32 };

struct WavInfo {
  std::uint32_t sample_rate = 0;
  std::uint16_t channels = 0;
  WavSampleFormat format = WavSampleFormat::pcm16;
  std::uint64_t frames = 0;

  double duration_s() const { return static_cast<double>(frames) / sample_rate; }
};

struct WavAudio {
  std::vector<float> samples;  // mono, 16-bit PCM scaled by 1/32768
  std::uint32_t sample_rate = 0;
};

/// Reads only the header. Errors: WavMissingError, WavFormatError (not a
/// RIFF/WAVE file or malformed chunks), WavChannelError (not mono),
/// WavCodecError (anything but 16-bit PCM or 32-bit IEEE float).
WavInfo probe_wav(const std::filesystem::path& path);

WavAudio load_wav(const std::filesystem::path& path);

/// 16-bit PCM mono; samples are clipped to [-1, 1] and rounded to nearest.
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     std::uint32_t sample_rate);
void write_wav_float32(const std::filesystem::path& path, std::span<const float> samples,
                       std::uint32_t sample_rate);

}  // namespace csnc
