#include "csnc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csnc/error.hpp"

namespace csnc {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

bool parse_integer(std::string_view v, long long& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parse_real(std::string_view v, double& out) {
  const std::string s(v);
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

const std::vector<KeySpec>& RunConfig::keys() {
  using K = KeyType;
  static const std::vector<KeySpec> specs = {
      {"alpha", K::real, "0.99", "curriculum momentum"},
      {"batch_size", K::integer, "128", "chunks per training batch"},
      {"batches_per_epoch", K::integer, "800", "batches per epoch"},
      {"checkpoint_dtype", K::string, "f64", "checkpoint storage: f64|f32"},
      {"checkpoint_every", K::integer, "0", "epochs between checkpoints (0: final only)"},
      {"chunk_ms", K::real, "200", "chunk and evaluation frame length in ms"},
      {"conv_layers", K::string, "60x5x3,60x5x3", "conv stages as filters x kernel x pool"},
      {"embedding_dim", K::integer, "2048", "embedding width"},
      {"enroll_chunks", K::integer, "10", "inter protocol: enrollment chunks per speaker"},
      {"epochs", K::integer, "1", "training epochs"},
      {"eval_hop_ms", K::real, "0", "evaluation frame hop in ms (0: non-overlapping)"},
      {"eval_logits", K::string, "plain", "evaluation posteriors: plain|margin"},
      {"fc_layers", K::string, "2048,2048", "hidden fully connected widths"},
      {"gradcheck_floor", K::real, "1e-6", "gradcheck: denominator floor of the relative error"},
      {"gradcheck_h", K::real, "1e-5", "gradcheck: finite-difference step"},
      {"gradcheck_tol", K::real, "1e-4", "gradcheck: relative error tolerance"},
      {"leaky_slope", K::real, "0.2", "leaky relu negative slope"},
      {"loss", K::string, "curricular", "softmax|norm_softmax|arcface|am_softmax|curricular"},
      {"lr", K::real, "0.01", "learning rate"},
      {"m", K::real, "0.5", "margin"},
      {"min_utterance_ms", K::real, "0", "manifest: shortest usable utterance in ms (0: chunk_ms)"},
      {"norm_eps", K::real, "1e-6", "layer norm epsilon"},
      {"optimizer", K::string, "rmsprop", "rmsprop|sgd"},
      {"prefetch", K::integer, "2", "batches sampled ahead of training (0: inline)"},
      {"prefix", K::string, "spk", "synth: speaker directory prefix"},
      {"r_statistic", K::string, "mean", "curriculum batch statistic: mean|sum"},
      {"rms_decay", K::real, "0.95", "RMSprop decay"},
      {"rms_eps", K::real, "1e-7", "RMSprop epsilon"},
      {"s", K::real, "64", "logit scale"},
      {"seconds", K::real, "3", "synth: seconds per utterance"},
      {"seed", K::integer, "1234", "random seed"},
      {"seeds", K::integer, "20", "gradcheck: independent draws"},
      {"sinc_f_max", K::real, "0", "highest initial cutoff in Hz (0: Nyquist)"},
      {"sinc_f_min", K::real, "30", "lowest initial cutoff in Hz"},
      {"sinc_filters", K::integer, "80", "sinc filters"},
      {"sinc_kernel", K::integer, "251", "sinc kernel length (odd)"},
      {"sinc_pool", K::integer, "3", "max pool after the sinc layer"},
      {"sinc_stride", K::integer, "1", "sinc convolution stride"},
      {"sinc_window", K::boolean, "true", "Hamming window on sinc kernels"},
      {"snr_db", K::real, "20", "synth: signal to noise ratio"},
      {"speakers", K::integer, "10", "synth: number of speakers"},
      {"split_seed", K::integer, "0", "manifest: shuffle seed"},
      {"split_shuffle", K::boolean, "false", "manifest: shuffle utterances before splitting"},
      {"synth_rate", K::integer, "16000", "synth: sample rate in Hz"},
      {"t_update", K::string, "direct", "curriculum update: direct|swapped"},
      {"test_max_s", K::real, "6", "manifest: test seconds per speaker, upper target"},
      {"test_min_s", K::real, "2", "manifest: test seconds per speaker, lower target"},
      {"threads", K::integer, "1", "worker threads (1: deterministic)"},
      {"train_max_s", K::real, "15", "manifest: train seconds per speaker, upper target"},
      {"train_min_s", K::real, "12", "manifest: train seconds per speaker, lower target"},
      {"utts", K::integer, "8", "synth: utterances per speaker"},
  };
  return specs;
}

const KeySpec& RunConfig::spec(std::string_view key) {
  for (const auto& k : keys()) {
    if (k.name == key) return k;
  }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const KeySpec& k = spec(key);
  value = trim(value);
  bool ok = true;
  switch (k.type) {
    case KeyType::boolean: {
      bool b;
      ok = parse_bool(value, b);
      break;
    }
    case KeyType::integer: {
      long long v;
      ok = parse_integer(value, v) && v >= 0;
      break;
    }
    case KeyType::real: {
      double v;
      ok = parse_real(value, v);
      break;
    }
    case KeyType::string:
      break;
  }
  if (!ok) throw ConfigError("bad value '" + std::string(value) + "' for key '" + k.name + "'");
  values_[k.name] = std::string(value);
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  return it->second;
}

long long RunConfig::get_int(std::string_view key) const {
  long long v = 0;
  parse_integer(get(key), v);
  return v;
}

std::size_t RunConfig::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_int(key));
}

double RunConfig::get_double(std::string_view key) const {
  double v = 0.0;
  parse_real(get(key), v);
  return v;
}

bool RunConfig::get_bool(std::string_view key) const {
  bool b = false;
  parse_bool(get(key), b);
  return b;
}

void RunConfig::merge_text(std::string_view text, const std::string& source) {
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << canonical();
}

std::vector<ConvLayerSpec> parse_conv_layers(std::string_view text) {
  std::vector<ConvLayerSpec> out;
  text = trim(text);
  if (text.empty() || text == "none") return out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    ConvLayerSpec s;
    char x1 = 0, x2 = 0;
    std::stringstream is(std::string(trim(item)));
    if (!(is >> s.filters >> x1 >> s.kernel_len >> x2 >> s.pool_len) || x1 != 'x' || x2 != 'x' ||
        !is.eof()) {
      throw ConfigError("bad conv layer '" + item + "' (expected FILTERSxKERNELxPOOL)");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> parse_widths(std::string_view text) {
  std::vector<std::size_t> out;
  text = trim(text);
  if (text.empty() || text == "none") return out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    long long v = 0;
    if (!parse_integer(trim(item), v) || v <= 0) throw ConfigError("bad layer width '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::size_t chunk_samples(const RunConfig& c, double sample_rate) {
  const double n = std::round(sample_rate * c.get_double("chunk_ms") / 1000.0);
  if (!(n >= 1.0)) throw ConfigError("chunk_ms is shorter than one sample");
  return static_cast<std::size_t>(n);
}

ModelConfig model_config(const RunConfig& c, double sample_rate) {
  ModelConfig m;
  m.sample_rate = sample_rate;
  m.chunk_len = chunk_samples(c, sample_rate);
  m.sinc.count = c.get_size("sinc_filters");
  m.sinc.kernel_len = c.get_size("sinc_kernel");
  m.sinc.f_min = c.get_double("sinc_f_min");
  m.sinc.f_max = c.get_double("sinc_f_max");
  m.sinc.stride = c.get_size("sinc_stride");
  m.sinc.pool_len = c.get_size("sinc_pool");
  m.sinc.windowed = c.get_bool("sinc_window");
  m.conv_layers = parse_conv_layers(c.get("conv_layers"));
  m.fc_layers = parse_widths(c.get("fc_layers"));
  m.embedding_dim = c.get_size("embedding_dim");
  m.leaky_slope = c.get_double("leaky_slope");
  m.norm_eps = c.get_double("norm_eps");
  m.validate();
  return m;
}

LossConfig loss_config(const RunConfig& c) {
  LossConfig l;
  l.kind = parse_loss_kind(c.get("loss"));
  l.m = c.get_double("m");
  l.s = c.get_double("s");
  l.alpha = c.get_double("alpha");
  l.r_statistic = parse_r_statistic(c.get("r_statistic"));
  l.t_update = parse_t_update(c.get("t_update"));
  l.validate();
  return l;
}

TrainConfig train_config(const RunConfig& c, std::size_t chunk_len) {
  TrainConfig t;
  t.loss = loss_config(c);
  t.batch.batch_size = c.get_size("batch_size");
  t.batch.chunk_len = chunk_len;
  t.batch.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  t.learning_rate = c.get_double("lr");
  t.optimizer = parse_optimizer(c.get("optimizer"));
  t.rms_decay = c.get_double("rms_decay");
  t.rms_eps = c.get_double("rms_eps");
  t.epochs = c.get_size("epochs");
  t.batches_per_epoch = c.get_size("batches_per_epoch");
  t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  t.checkpoint_every = c.get_size("checkpoint_every");
  t.threads = c.get_size("threads");
  t.prefetch = c.get_size("prefetch");
  t.validate();
  return t;
}

EvalConfig eval_config(const RunConfig& c, double sample_rate) {
  EvalConfig e;
  e.loss = loss_config(c);
  e.logits = parse_eval_logits(c.get("eval_logits"));
  e.hop = static_cast<std::size_t>(std::round(sample_rate * c.get_double("eval_hop_ms") / 1000.0));
  e.threads = std::max<std::size_t>(1, c.get_size("threads"));
  return e;
}

SynthConfig synth_config(const RunConfig& c) {
  SynthConfig s;
  s.speakers = c.get_size("speakers");
  s.utterances = c.get_size("utts");
  s.seconds = c.get_double("seconds");
  s.sample_rate = static_cast<std::uint32_t>(c.get_size("synth_rate"));
  s.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  s.prefix = c.get("prefix");
  s.snr_db = c.get_double("snr_db");
  s.validate();
  return s;
}

ManifestOptions manifest_options(const RunConfig& c) {
  ManifestOptions o;
  const double ms = c.get_double("min_utterance_ms");
  o.min_duration_s = (ms > 0.0 ? ms : c.get_double("chunk_ms")) / 1000.0;
  o.policy.train_min = c.get_double("train_min_s");
  o.policy.train_max = c.get_double("train_max_s");
  o.policy.test_min = c.get_double("test_min_s");
  o.policy.test_max = c.get_double("test_max_s");
  o.policy.shuffle = c.get_bool("split_shuffle");
  o.policy.seed = static_cast<std::uint64_t>(c.get_int("split_seed"));
  if (o.policy.train_min > o.policy.train_max || o.policy.test_min > o.policy.test_max) {
    throw ConfigError("split targets need min <= max");
  }
  return o;
}

StorageType checkpoint_storage(const RunConfig& c) {
  const auto& v = c.get("checkpoint_dtype");
  if (v == "f64") return StorageType::f64;
  if (v == "f32") return StorageType::f32;
  throw ConfigError("unknown checkpoint_dtype '" + v + "' (f64|f32)");
}

}  // namespace csnc
