#include "csnc/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "csnc/error.hpp"
#include "csnc/log.hpp"
#include "csnc/wav.hpp"

namespace csnc {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kHeaderPrefix = "#csnc-manifest v1 sample_rate=";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string format_number(double v) {
  if (v == static_cast<double>(static_cast<long long>(v))) {
    return std::to_string(static_cast<long long>(v));
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool is_wav(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::unused: return "unused";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "unused") return Split::unused;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::size_t DatasetManifest::class_index(const std::string& speaker) const {
  const auto it = std::lower_bound(speakers.begin(), speakers.end(), speaker);
  if (it == speakers.end() || *it != speaker) {
    throw DataError("speaker '" + speaker + "' is not in the manifest");
  }
  return static_cast<std::size_t>(it - speakers.begin());
}

std::vector<std::size_t> DatasetManifest::records_in(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

void DatasetManifest::validate() const {
  if (!std::is_sorted(speakers.begin(), speakers.end()) ||
      std::adjacent_find(speakers.begin(), speakers.end()) != speakers.end()) {
    throw DataError("manifest speakers must be unique and sorted");
  }
  if (!(sample_rate > 0.0)) throw DataError("manifest sample rate must be positive");
  for (const auto& r : records) {
    class_index(r.speaker_id);
    if (!(r.duration_s > 0.0)) throw DataError("record " + r.path + " has non-positive duration");
  }
}

SplitResult split_by_duration(std::span<const double> durations, const DurationPolicy& policy) {
  std::vector<std::size_t> order(durations.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (policy.shuffle) {
    std::mt19937_64 rng(policy.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  SplitResult r;
  r.splits.assign(durations.size(), Split::unused);
  auto assign = [&](std::size_t i, Split s, double& total) {
    r.splits[i] = s;
    total += durations[i];
  };

  for (auto i : order) {
    if (r.train_s < policy.train_min && r.train_s + durations[i] <= policy.train_max) {
      assign(i, Split::train, r.train_s);
    }
  }
  for (auto i : order) {
    if (r.train_s >= policy.train_min) break;
    if (r.splits[i] == Split::unused) assign(i, Split::train, r.train_s);
  }
  for (auto i : order) {
    if (r.splits[i] == Split::unused && r.test_s + durations[i] <= policy.test_max) {
      assign(i, Split::test, r.test_s);
    }
  }
  for (auto i : order) {
    if (r.test_s >= policy.test_min) break;
    if (r.splits[i] == Split::unused) assign(i, Split::test, r.test_s);
  }
  r.flagged = r.train_s < policy.train_min || r.test_s < policy.test_min;
  return r;
}

DatasetManifest build_manifest(const fs::path& root, const ManifestOptions& options) {
  if (!fs::is_directory(root)) throw DataError("corpus root " + root.string() + " is not a directory");
  std::vector<fs::path> speaker_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) speaker_dirs.push_back(e.path());
  }
  std::sort(speaker_dirs.begin(), speaker_dirs.end());

  DatasetManifest m;
  m.root = root;
  for (const auto& dir : speaker_dirs) {
    const std::string speaker = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && is_wav(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      log_warning("speaker directory '" + speaker + "' has no WAV files; excluded");
      m.notes.push_back({"excluded_speaker", speaker, "no_wav_files"});
      continue;
    }
    std::vector<UtteranceRecord> recs;
    for (const auto& f : files) {
      const WavInfo info = probe_wav(f);
      if (m.sample_rate == 0.0) {
        m.sample_rate = info.sample_rate;
      } else if (m.sample_rate != info.sample_rate) {
        throw DataError("mixed sample rates: " + f.string() + " is " +
                        std::to_string(info.sample_rate) + " Hz, corpus is " +
                        format_number(m.sample_rate) + " Hz");
      }
      const std::string rel = (fs::path(speaker) / f.filename()).generic_string();
      if (info.duration_s() < options.min_duration_s || info.frames == 0) {
        log_warning("utterance " + rel + " is shorter than one chunk; excluded");
        m.notes.push_back({"excluded_utterance", rel, "shorter_than_chunk"});
        continue;
      }
      recs.push_back({speaker, rel, info.duration_s(), Split::unused});
    }
    if (recs.empty()) {
      log_warning("speaker '" + speaker + "' has no usable utterances; excluded");
      m.notes.push_back({"excluded_speaker", speaker, "no_usable_utterances"});
      continue;
    }
    std::vector<double> durations;
    for (const auto& r : recs) durations.push_back(r.duration_s);
    DurationPolicy policy = options.policy;
    policy.seed = options.policy.seed + m.speakers.size();
    const SplitResult split = split_by_duration(durations, policy);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].split = split.splits[i];
    if (split.flagged) {
      log_warning("speaker '" + speaker + "' is insufficient for the duration split");
      m.notes.push_back({"flagged_speaker", speaker, "insufficient_for_split"});
    }
    m.speakers.push_back(speaker);
    m.records.insert(m.records.end(), recs.begin(), recs.end());
  }
  if (m.speakers.empty()) throw DataError("corpus " + root.string() + " has no usable speakers");
  m.validate();
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << kHeaderPrefix << format_number(m.sample_rate) << '\n';
  for (const auto& n : m.notes) os << "#note\t" << n.kind << '\t' << n.subject << '\t' << n.reason << '\n';
  char dur[64];
  for (const auto& r : m.records) {
    std::snprintf(dur, sizeof dur, "%.6f", r.duration_s);
    os << r.speaker_id << '\t' << r.path << '\t' << dur << '\t' << to_string(r.split) << '\n';
  }
  return os.str();
}

void write_manifest(const DatasetManifest& m, const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + file.string());
  out << format_manifest(m);
  if (!out) throw DataError("failed writing manifest " + file.string());
}

DatasetManifest read_manifest(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  std::string line;
  if (!std::getline(in, line) || line.rfind(kHeaderPrefix, 0) != 0) {
    throw DataError(file.string() + " is not a csnc manifest (missing header)");
  }
  try {
    m.sample_rate = std::stod(line.substr(kHeaderPrefix.size()));
  } catch (const std::exception&) {
    throw DataError(file.string() + ": bad sample_rate in header");
  }
  std::set<std::string> speakers;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (line[0] == '#') {
      if (fields[0] == "#note" && fields.size() == 4) m.notes.push_back({fields[1], fields[2], fields[3]});
      continue;
    }
    if (fields.size() != 4) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": expected 4 tab-separated fields");
    }
    UtteranceRecord r;
    r.speaker_id = fields[0];
    r.path = fields[1];
    try {
      r.duration_s = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": bad duration");
    }
    r.split = parse_split(fields[3]);
    speakers.insert(r.speaker_id);
    m.records.push_back(std::move(r));
  }
  m.speakers.assign(speakers.begin(), speakers.end());
  if (m.records.empty()) throw DataError("manifest " + file.string() + " has no records");
  m.validate();
  return m;
}

}  // namespace csnc
