#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "csnc/eval.hpp"
#include "csnc/manifest.hpp"
#include "csnc/model.hpp"
#include "csnc/synth.hpp"
#include "csnc/train.hpp"

namespace csnc {

enum class KeyType { string, integer, real, boolean };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

/// Flat key = value configuration. Every key is declared in `keys()`;
/// anything else is a ConfigError.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<KeySpec>& keys();
  static const KeySpec& spec(std::string_view key);

  /// Validates the key and that the value parses as the key's type.
  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;
  long long get_int(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  /// `key = value` lines; `#` starts a comment; blank lines are ignored.
  void merge_text(std::string_view text, const std::string& source);
  void merge_file(const std::filesystem::path& path);

  /// Every key, sorted, one `key = value` per line.
  std::string canonical() const;
  /// 16 hex digits of the FNV-1a hash of canonical().
  std::string fingerprint() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

std::vector<ConvLayerSpec> parse_conv_layers(std::string_view text);
std::vector<std::size_t> parse_widths(std::string_view text);

std::size_t chunk_samples(const RunConfig& c, double sample_rate);
ModelConfig model_config(const RunConfig& c, double sample_rate);
TrainConfig train_config(const RunConfig& c, std::size_t chunk_len);
LossConfig loss_config(const RunConfig& c);
EvalConfig eval_config(const RunConfig& c, double sample_rate);
SynthConfig synth_config(const RunConfig& c);
ManifestOptions manifest_options(const RunConfig& c);
StorageType checkpoint_storage(const RunConfig& c);

}  // namespace csnc
