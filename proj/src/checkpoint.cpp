#include "csnc/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "csnc/error.hpp"

namespace csnc {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'N', 'C'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint " + origin_ + " is truncated at byte " +
                                     std::to_string(pos_) + " (needed " + std::to_string(n) +
                                     " more)");
    }
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t size() {
    const auto v = u64();
    if (v > (std::uint64_t{1} << 40)) {
      throw CheckpointError("checkpoint " + origin_ + " has an implausible size field " +
                            std::to_string(v));
    }
    return static_cast<std::size_t>(v);
  }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.f64(c.sample_rate);
  w.u64(c.chunk_len);
  w.u64(c.sinc.count);
  w.u64(c.sinc.kernel_len);
  w.f64(c.sinc.f_min);
  w.f64(c.sinc.f_max);
  w.u64(c.sinc.stride);
  w.u64(c.sinc.pool_len);
  w.u8(c.sinc.windowed ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(c.conv_layers.size()));
  for (const auto& l : c.conv_layers) {
    w.u64(l.filters);
    w.u64(l.kernel_len);
    w.u64(l.pool_len);
  }
  w.u32(static_cast<std::uint32_t>(c.fc_layers.size()));
  for (auto width : c.fc_layers) w.u64(width);
  w.u64(c.embedding_dim);
  w.f64(c.leaky_slope);
  w.f64(c.norm_eps);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.sample_rate = r.f64();
  c.chunk_len = r.size();
  c.sinc.count = r.size();
  c.sinc.kernel_len = r.size();
  c.sinc.f_min = r.f64();
  c.sinc.f_max = r.f64();
  c.sinc.stride = r.size();
  c.sinc.pool_len = r.size();
  c.sinc.windowed = r.u8() != 0;
  const auto n_conv = r.u32();
  c.conv_layers.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvLayerSpec l;
    l.filters = r.size();
    l.kernel_len = r.size();
    l.pool_len = r.size();
    c.conv_layers.push_back(l);
  }
  const auto n_fc = r.u32();
  c.fc_layers.clear();
  for (std::uint32_t i = 0; i < n_fc; ++i) c.fc_layers.push_back(r.size());
  c.embedding_dim = r.size();
  c.leaky_slope = r.f64();
  c.norm_eps = r.f64();
  return c;
}

}  // namespace

void save_checkpoint(const ModelWeights& weights, const CurriculumState& curriculum,
                     const std::filesystem::path& path, StorageType storage) {
  require_finite(weights, "checkpoint");
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  write_config(w, weights.config);
  w.u64(weights.class_count);
  w.f64(curriculum.t);
  w.u64(curriculum.batch_index);
  const auto tensors = weights.tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    w.u32(static_cast<std::uint32_t>(nt.name.size()));
    w.bytes(nt.name.data(), nt.name.size());
    w.u8(static_cast<std::uint8_t>(storage));
    const auto& shape = nt.tensor->shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.u64(d);
    for (double v : nt.tensor->data()) {
      if (storage == StorageType::f64) {
        w.f64(v);
      } else {
        w.f32(static_cast<float>(v));
      }
    }
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    const auto& buf = w.buffer();
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::size_t> expected_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());

  if (r.string(4) != std::string(kMagic, 4)) {
    throw CheckpointMagicError(path.string() + " is not a checkpoint (bad magic bytes)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint " + path.string() + " has format version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
  }
  ModelConfig config = read_config(r);
  const std::size_t classes = r.size();
  if (expected_classes && *expected_classes != classes) {
    throw ClassCountMismatchError("checkpoint " + path.string() + " was trained for " +
                                  std::to_string(classes) + " classes, expected " +
                                  std::to_string(*expected_classes));
  }
  Checkpoint ck;
  ck.curriculum.t = r.f64();
  ck.curriculum.batch_index = r.size();
  if (!std::isfinite(ck.curriculum.t)) {
    throw NumericError("checkpoint " + path.string() + " has a non-finite curriculum t");
  }
  try {
    ck.weights = init_model(config, classes, 0);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint " + path.string() + " carries an invalid model config: " +
                          e.what());
  }

  std::map<std::string, Tensor*> slots;
  for (auto& nt : ck.weights.tensors()) slots[nt.name] = nt.tensor;
  const auto count = r.u32();
  if (count != slots.size()) {
    throw CheckpointError("checkpoint " + path.string() + " holds " + std::to_string(count) +
                          " arrays, the model needs " + std::to_string(slots.size()));
  }
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::string name = r.string(r.u32());
    const auto it = slots.find(name);
    if (it == slots.end()) {
      throw CheckpointError("checkpoint " + path.string() + " has unexpected array '" + name + "'");
    }
    const auto dtype = r.u8();
    if (dtype > 1) {
      throw CheckpointError("array '" + name + "' has unknown dtype tag " + std::to_string(dtype));
    }
    Shape shape(r.u32());
    for (auto& d : shape) d = r.size();
    Tensor& dst = *it->second;
    if (shape != dst.shape()) {
      throw CheckpointError("array '" + name + "' has shape " + shape_string(shape) +
                            ", the model expects " + shape_string(dst.shape()));
    }
    r.need(dst.size() * (dtype == 0 ? 8 : 4));
    for (auto& v : dst.data()) v = dtype == 0 ? r.f64() : static_cast<double>(r.f32());
    dst.require_finite("checkpoint array " + name);
    slots.erase(it);
  }
  if (!r.at_end()) {
    throw CheckpointError("checkpoint " + path.string() + " has trailing bytes");
  }
  ck.weights.sinc.validate();
  return ck;
}

}  // namespace csnc
