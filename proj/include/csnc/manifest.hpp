#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace csnc {

enum class Split { train, test, unused };

std::string to_string(Split s);
Split parse_split(std::string_view s);

struct UtteranceRecord {
  std::string speaker_id;
  std::string path;  // relative to the manifest root
  double duration_s = 0.0;
  Split split = Split::unused;
};

/// Something build_manifest left out or could not fully satisfy.
struct ManifestNote {
  std::string kind;     // excluded_speaker | excluded_utterance | flagged_speaker
  std::string subject;  // speaker id or relative path
  std::string reason;
};

struct DatasetManifest {
  std::vector<UtteranceRecord> records;
  std::vector<std::string> speakers;  // sorted; position is the class index
  double sample_rate = 0.0;
  std::vector<ManifestNote> notes;
  std::filesystem::path root;  // where relative paths resolve; not serialized

  std::size_t class_count() const { return speakers.size(); }
  /// Throws DataError for an unknown speaker.
  std::size_t class_index(const std::string& speaker) const;
  std::vector<std::size_t> records_in(Split split) const;
  std::filesystem::path resolve(const UtteranceRecord& r) const { return root / r.path; }

  /// Every record's speaker is listed, speakers are unique and sorted,
  /// durations positive.
  void validate() const;
};

/// Per-speaker duration targets, in seconds.
struct DurationPolicy {
  double train_min = 12.0;
  double train_max = 15.0;
  double test_min = 2.0;
  double test_max = 6.0;
  bool shuffle = false;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<Split> splits;  // aligned with the input durations
  double train_s = 0.0;
  double test_s = 0.0;
  bool flagged = false;  // could not reach both minimums
};

/// Greedy whole-utterance assignment for one speaker. Utterances are taken
/// in order (or in a seeded shuffled order): train first, preferring those
/// that keep the total within [train_min, train_max], then test up to
/// test_max; whatever is left is unused.
SplitResult split_by_duration(std::span<const double> durations, const DurationPolicy& policy);

struct ManifestOptions {
  double min_duration_s = 0.2;  // shorter utterances are excluded (one chunk)
  DurationPolicy policy;
};

/// Scans root/<speaker>/*.wav. Speakers and files are sorted
/// lexicographically. Throws DataError on an empty corpus or mixed sample
/// rates.
DatasetManifest build_manifest(const std::filesystem::path& root, const ManifestOptions& options);

/// Manifest text: header `#csnc-manifest v1 sample_rate=<Hz>`, `#note` lines,
/// then one tab-separated record per line.
std::string format_manifest(const DatasetManifest& m);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);

}  // namespace csnc
