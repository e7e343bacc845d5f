#include "csnc/dataset.hpp"

#include <random>

#include "csnc/error.hpp"
#include "csnc/model.hpp"
#include "csnc/wav.hpp"

namespace csnc {

AudioSet load_split(const DatasetManifest& manifest, Split split) {
  AudioSet set;
  set.sample_rate = manifest.sample_rate;
  for (const std::size_t i : manifest.records_in(split)) {
    const auto& rec = manifest.records[i];
    WavAudio wav = load_wav(manifest.resolve(rec));
    if (static_cast<double>(wav.sample_rate) != manifest.sample_rate) {
      throw DataError(rec.path + " is " + std::to_string(wav.sample_rate) +
                      " Hz but the manifest says " + std::to_string(manifest.sample_rate));
    }
    set.audio.push_back(std::move(wav.samples));
    set.labels.push_back(manifest.class_index(rec.speaker_id));
    set.record_index.push_back(i);
  }
  return set;
}

void require_min_length(const AudioSet& set, std::size_t chunk_len, const DatasetManifest& manifest) {
  for (std::size_t u = 0; u < set.size(); ++u) {
    if (set.audio[u].size() < chunk_len) {
      throw DataError("utterance " + manifest.records[set.record_index[u]].path + " has " +
                      std::to_string(set.audio[u].size()) + " samples, fewer than one chunk (" +
                      std::to_string(chunk_len) + "); rebuild the manifest with a larger minimum duration");
    }
  }
}

void BatchSpec::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (chunk_len == 0) throw ConfigError("chunk_len must be at least 1");
}

Tensor chunk_of(const std::vector<float>& audio, std::size_t offset, std::size_t len) {
  if (offset + len > audio.size()) throw ShapeError("chunk extends past the end of the utterance");
  Tensor t({1, len});
  for (std::size_t j = 0; j < len; ++j) t[j] = audio[offset + j];
  return t;
}

Batch sample_batch(const AudioSet& set, const BatchSpec& spec, std::uint64_t batch_index) {
  spec.validate();
  if (set.size() == 0) throw DataError("cannot sample from an empty split");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(batch_index),
                    static_cast<std::uint32_t>(batch_index >> 32), 0x62617463u};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick_utt(0, set.size() - 1);

  Batch b;
  b.chunks = Tensor({spec.batch_size, spec.chunk_len});
  for (std::size_t i = 0; i < spec.batch_size; ++i) {
    const std::size_t u = pick_utt(rng);
    const auto& audio = set.audio[u];
    if (audio.size() < spec.chunk_len) {
      throw DataError("utterance shorter than a chunk reached the sampler");
    }
    std::uniform_int_distribution<std::size_t> pick_off(0, audio.size() - spec.chunk_len);
    const std::size_t off = pick_off(rng);
    auto row = b.chunks.slice(i);
    for (std::size_t j = 0; j < spec.chunk_len; ++j) row[j] = audio[off + j];
    b.labels.push_back(set.labels[u]);
    b.utterances.push_back(u);
    b.offsets.push_back(off);
  }
  normalize_amplitude(b.chunks);
  return b;
}

BatchPrefetcher::BatchPrefetcher(const AudioSet& set, BatchSpec spec, std::uint64_t first_index,
                                 std::size_t depth)
    : set_(set), spec_(spec), next_index_(first_index), depth_(depth) {
  spec_.validate();
  if (depth_ > 0) worker_ = std::thread([this] { run(); });
}

BatchPrefetcher::~BatchPrefetcher() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void BatchPrefetcher::run() {
  std::uint64_t index = next_index_;
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stop_ || ready_.size() < depth_; });
      if (stop_) return;
    }
    try {
      Batch b = sample_batch(set_, spec_, index++);
      std::lock_guard lock(mutex_);
      ready_.push_back(std::move(b));
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      stop_ = true;
    }
    cv_.notify_all();
  }
}

Batch BatchPrefetcher::next() {
  if (depth_ == 0) return sample_batch(set_, spec_, next_index_++);
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return !ready_.empty() || error_; });
  if (ready_.empty()) std::rethrow_exception(error_);
  Batch b = std::move(ready_.front());
  ready_.pop_front();
  lock.unlock();
  cv_.notify_all();
  return b;
}

}  // namespace csnc
