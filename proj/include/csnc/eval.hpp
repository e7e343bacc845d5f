#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csnc/dataset.hpp"
#include "csnc/losses.hpp"
#include "csnc/model.hpp"

namespace csnc {

enum class EvalLogits { plain, margin };

std::string to_string(EvalLogits e);
EvalLogits parse_eval_logits(std::string_view name);

struct EvalConfig {
  LossConfig loss;                 // which head produced the weights, and s/m
  EvalLogits logits = EvalLogits::plain;
  std::size_t hop = 0;             // frame hop in samples; 0 means one frame length
  std::size_t threads = 1;
};

/// Start offsets of the frames tiling `samples` with frames of `frame_len`
/// every `hop` samples. A trailing partial frame is dropped.
std::vector<std::size_t> frame_offsets(std::size_t samples, std::size_t frame_len, std::size_t hop);

/// Class posteriors for a batch of embeddings.
///
/// softmax head: softmax(W f + b). Cosine heads: softmax(s cos theta). With
/// EvalLogits::margin the target class (from `labels`) gets the training-time
/// margin, and for the curricular head the negatives are modulated with `t`.
Tensor posteriors(const ModelWeights& weights, const Tensor& embeddings, const EvalConfig& config,
                  std::span<const std::size_t> labels, double t);

struct UtterancePosteriors {
  std::size_t label = 0;
  Tensor frames;  // [frames, classes]
};

struct PosteriorSet {
  std::size_t class_count = 0;
  std::vector<UtterancePosteriors> utterances;

  std::size_t frame_count() const;
};

/// Frames every utterance of `set` (chunk_len of the model) and computes its
/// per-frame posteriors. Throws DataError on an empty set or an utterance
/// with no full frame.
PosteriorSet compute_posteriors(const ModelWeights& weights, const AudioSet& set,
                                const EvalConfig& config, double t);

/// Percent of frames whose argmax posterior is not the label.
double frame_error_rate(const PosteriorSet& p);
/// Percent of utterances whose argmax mean posterior is not the label.
double sentence_cer(const PosteriorSet& p);

/// CSV: utterance,frame,label,p0,...,p{C-1} with round-trip precision.
void write_posteriors_csv(const PosteriorSet& p, const std::filesystem::path& path);
PosteriorSet read_posteriors_csv(const std::filesystem::path& path);

/// Index of the largest element; the first one on ties.
std::size_t argmax(std::span<const double> v);

/// Mean of the L2-normalized rows, re-normalized.
Tensor mean_direction(const Tensor& embeddings);

struct Gallery {
  std::map<std::string, Tensor> entries;  // unit-norm vectors
  std::vector<std::string> excluded;      // speakers with too few chunks
};

struct EnrollmentSource {
  std::string speaker;
  Tensor chunks;  // [n, chunk_len]
};

/// Each speaker is enrolled from its first `chunks_per_speaker` chunks;
/// speakers with fewer are excluded and listed.
Gallery build_gallery(const ModelWeights& weights, const std::vector<EnrollmentSource>& sources,
                      std::size_t chunks_per_speaker, std::size_t threads);

struct Decision {
  std::string probe;
  std::string truth;
  std::string predicted;
  double similarity = 0.0;
  bool tie = false;
};

/// Gallery speaker with the largest cosine similarity to `direction`.
/// Similarities within 1e-12 of the best count as a tie, resolved to the
/// lexicographically smallest speaker id.
Decision identify_direction(const Gallery& gallery, const Tensor& direction);

struct Probe {
  std::string name;
  std::string speaker;
  Tensor chunks;  // [n, chunk_len]
};

struct IdentifyResult {
  std::vector<Decision> decisions;
  double cer_percent = 0.0;
};

IdentifyResult identify(const ModelWeights& weights, const Gallery& gallery,
                        const std::vector<Probe>& probes, std::size_t threads);

struct EvalReport {
  std::string protocol;  // intra | inter
  std::optional<double> fer_percent;
  double cer_percent = 0.0;
  std::size_t frames_evaluated = 0;
  std::size_t sentences_evaluated = 0;
  std::optional<std::size_t> gallery_size;
  std::optional<std::size_t> enroll_chunks_per_speaker;
  std::optional<std::size_t> excluded_speakers;
  std::size_t class_count = 0;
  std::string loss;
  std::string eval_logits;
  std::string config_fingerprint;

  std::string to_json() const;
};

/// Intra-dataset protocol on the test split of `manifest`.
EvalReport evaluate_intra(const ModelWeights& weights, const DatasetManifest& manifest,
                          const EvalConfig& config, double t, PosteriorSet* dump = nullptr);

/// Inter-dataset protocol on `manifest` (speakers unseen in training). Per
/// speaker, test-split utterances are consumed in manifest order until
/// `enroll_chunks` frames are collected; every other utterance of that
/// speaker becomes a probe.
EvalReport evaluate_inter(const ModelWeights& weights, const DatasetManifest& manifest,
                          std::size_t enroll_chunks, std::size_t threads,
                          IdentifyResult* decisions = nullptr);

}  // namespace csnc
