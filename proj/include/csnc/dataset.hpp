#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "csnc/manifest.hpp"
#include "csnc/tensor.hpp"

namespace csnc {

/// Decoded audio for one split of a manifest.
struct AudioSet {
  std::vector<std::vector<float>> audio;
  std::vector<std::size_t> labels;          // class index per utterance
  std::vector<std::size_t> record_index;    // position in the manifest
  double sample_rate = 0.0;

  std::size_t size() const { return audio.size(); }
};

/// Loads every record of `split`. Throws DataError if a file's rate differs
/// from the manifest.
AudioSet load_split(const DatasetManifest& manifest, Split split);

/// Throws DataError naming the first utterance shorter than `chunk_len`.
void require_min_length(const AudioSet& set, std::size_t chunk_len, const DatasetManifest& manifest);

struct BatchSpec {
  std::size_t batch_size = 128;
  std::size_t chunk_len = 3200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Batch {
  Tensor chunks;  // [batch, chunk_len], amplitude-normalized
  std::vector<std::size_t> labels;
  std::vector<std::size_t> utterances;  // index into the AudioSet
  std::vector<std::size_t> offsets;
};

/// Batch number `batch_index` of the stream defined by spec.seed. Each
/// chunk picks an utterance uniformly, then an offset uniformly among the
/// valid ones. The result depends only on (set, spec, batch_index).
Batch sample_batch(const AudioSet& set, const BatchSpec& spec, std::uint64_t batch_index);

/// Samples [offset, offset + len) as a [1, len] tensor, not normalized.
Tensor chunk_of(const std::vector<float>& audio, std::size_t offset, std::size_t len);

/// Produces batches first_index, first_index + 1, ... on a background
/// thread, keeping at most `depth` ready. Depth 0 samples on the caller's
/// thread. The sequence is the same for every depth.
class BatchPrefetcher {
 public:
  BatchPrefetcher(const AudioSet& set, BatchSpec spec, std::uint64_t first_index, std::size_t depth);
  ~BatchPrefetcher();

  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  Batch next();

 private:
  void run();

  const AudioSet& set_;
  BatchSpec spec_;
  std::uint64_t next_index_;
  std::size_t depth_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Batch> ready_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace csnc
