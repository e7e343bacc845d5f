#include "csnc/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "csnc/error.hpp"

namespace csnc {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

struct Layout {
  WavInfo info;
  std::uint64_t data_offset = 0;
};

Layout parse_header(std::ifstream& in, const std::filesystem::path& path) {
  const std::string where = path.string();
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12) || std::memcmp(riff, "RIFF", 4) != 0 ||
      std::memcmp(riff + 8, "WAVE", 4) != 0) {
    throw WavFormatError(where + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::uint64_t offset = 12;
  for (;;) {
    unsigned char hdr[8];
    if (!in.read(reinterpret_cast<char*>(hdr), 8)) {
      throw WavFormatError(where + ": no data chunk");
    }
    const std::uint32_t size = le32(hdr + 4);
    offset += 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw WavFormatError(where + ": fmt chunk too short");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size)) {
        throw WavFormatError(where + ": truncated fmt chunk");
      }
      format = le16(fmt.data());
      channels = le16(fmt.data() + 2);
      rate = le32(fmt.data() + 4);
      block_align = le16(fmt.data() + 12);
      bits = le16(fmt.data() + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw WavFormatError(where + ": truncated extensible fmt chunk");
        format = le16(fmt.data() + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw WavFormatError(where + ": data chunk before fmt chunk");
      if (channels != 1) {
        throw WavChannelError(where + ": " + std::to_string(channels) +
                              " channels, only mono is supported");
      }
      Layout l;
      if (format == kFormatPcm && bits == 16) {
        l.info.format = WavSampleFormat::pcm16;
      } else if (format == kFormatFloat && bits == 32) {
        l.info.format = WavSampleFormat::float32;
      } else {
        throw WavCodecError(where + ": unsupported codec (format tag " + std::to_string(format) +
                            ", " + std::to_string(bits) + " bits)");
      }
      if (rate == 0 || block_align != bits / 8) {
        throw WavFormatError(where + ": inconsistent fmt chunk");
      }
      l.info.sample_rate = rate;
      l.info.channels = channels;
      l.info.frames = size / block_align;
      l.data_offset = offset;
      return l;
    } else {
      in.seekg(size + (size & 1u), std::ios::cur);
    }
    offset += size + (size & 1u);
  }
}

void write_header(std::ofstream& out, std::uint16_t format, std::uint16_t bits,
                  std::uint32_t sample_rate, std::uint32_t data_bytes) {
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };
  const std::uint16_t block = bits / 8;
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(16);
  put16(format);
  put16(1);
  put32(sample_rate);
  put32(sample_rate * block);
  put16(block);
  put16(bits);
  out.write("data", 4);
  put32(data_bytes);
}

}  // namespace

WavInfo probe_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavMissingError("cannot open audio file " + path.string());
  return parse_header(in, path).info;
}

WavAudio load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavMissingError("cannot open audio file " + path.string());
  const Layout l = parse_header(in, path);
  const std::size_t frames = static_cast<std::size_t>(l.info.frames);
  const std::size_t width = l.info.format == WavSampleFormat::pcm16 ? 2 : 4;
  std::vector<unsigned char> raw(frames * width);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw WavFormatError(path.string() + ": data chunk is truncated");
  }
  WavAudio audio;
  audio.sample_rate = l.info.sample_rate;
  audio.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    if (width == 2) {
      const auto v = static_cast<std::int16_t>(le16(raw.data() + 2 * i));
      audio.samples[i] = static_cast<float>(v) / 32768.0f;
    } else {
      audio.samples[i] = std::bit_cast<float>(le32(raw.data() + 4 * i));
    }
  }
  return audio;
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     std::uint32_t sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write audio file " + path.string());
  write_header(out, kFormatPcm, 16, sample_rate, static_cast<std::uint32_t>(samples.size() * 2));
  std::vector<unsigned char> raw(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double scaled = std::round(std::clamp(samples[i], -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    const auto u = static_cast<std::uint16_t>(v);
    raw[2 * i] = static_cast<unsigned char>(u);
    raw[2 * i + 1] = static_cast<unsigned char>(u >> 8);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing audio file " + path.string());
}

void write_wav_float32(const std::filesystem::path& path, std::span<const float> samples,
                       std::uint32_t sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write audio file " + path.string());
  write_header(out, kFormatFloat, 32, sample_rate, static_cast<std::uint32_t>(samples.size() * 4));
  for (float s : samples) {
    const auto u = std::bit_cast<std::uint32_t>(s);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16),
                                static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw DataError("failed writing audio file " + path.string());
}

}  // namespace csnc
