#include "csnc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "csnc/error.hpp"
#include "csnc/log.hpp"
#include "csnc/ops.hpp"
#include "csnc/wav.hpp"

namespace csnc {

std::string to_string(EvalLogits e) { return e == EvalLogits::margin ? "margin" : "plain"; }

EvalLogits parse_eval_logits(std::string_view name) {
  if (name == "plain") return EvalLogits::plain;
  if (name == "margin") return EvalLogits::margin;
  throw ConfigError("unknown eval_logits '" + std::string(name) + "' (plain|margin)");
}

std::vector<std::size_t> frame_offsets(std::size_t samples, std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || hop == 0) throw ConfigError("frame length and hop must be positive");
  std::vector<std::size_t> out;
  for (std::size_t off = 0; off + frame_len <= samples; off += hop) out.push_back(off);
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Tensor posteriors(const ModelWeights& weights, const Tensor& embeddings, const EvalConfig& config,
                  std::span<const std::size_t> labels, double t) {
  const std::size_t batch = embeddings.dim(0);
  const std::size_t classes = weights.head.dim(0);
  Tensor logits;
  if (config.loss.kind == LossKind::softmax) {
    logits = linear(embeddings, weights.head, weights.head_bias);
  } else {
    const std::vector<std::size_t> zeros(batch, 0);
    const bool margin = config.logits == EvalLogits::margin;
    if (margin && labels.size() != batch) throw ShapeError("margin posteriors need one label per row");
    const CosineLogits cl = cosine_logits(embeddings, weights.head, margin ? labels : zeros);
    const double s = config.loss.s;
    const double m = config.loss.m;
    logits = Tensor({batch, classes});
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t k = cl.labels[i];
      const double target_m = add_angular_margin(cl.cos_theta.at(i, k), m);
      for (std::size_t c = 0; c < classes; ++c) {
        const double cos_c = cl.cos_theta.at(i, c);
        double v = cos_c;
        if (margin) {
          switch (config.loss.kind) {
            case LossKind::arcface:
              if (c == k) v = target_m;
              break;
            case LossKind::am_softmax:
              if (c == k) v = cos_c - m;
              break;
            case LossKind::curricular:
              v = c == k ? target_m : modulation(t, cos_c, target_m);
              break;
            default:
              break;
          }
        }
        logits.at(i, c) = s * v;
      }
    }
  }
  Tensor out({batch, classes});
  for (std::size_t i = 0; i < batch; ++i) {
    const auto row = logits.slice(i);
    const double lse = log_sum_exp(row);
    auto dst = out.slice(i);
    for (std::size_t c = 0; c < classes; ++c) dst[c] = std::exp(row[c] - lse);
  }
  return out;
}

std::size_t PosteriorSet::frame_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.frames.dim(0);
  return n;
}

PosteriorSet compute_posteriors(const ModelWeights& weights, const AudioSet& set,
                                const EvalConfig& config, double t) {
  if (set.size() == 0) throw DataError("the evaluation split is empty");
  const std::size_t len = weights.config.chunk_len;
  const std::size_t hop = config.hop == 0 ? len : config.hop;
  PosteriorSet out;
  out.class_count = weights.class_count;
  for (std::size_t u = 0; u < set.size(); ++u) {
    const auto offsets = frame_offsets(set.audio[u].size(), len, hop);
    if (offsets.empty()) throw DataError("an evaluation utterance is shorter than one frame");
    Tensor chunks({offsets.size(), len});
    for (std::size_t f = 0; f < offsets.size(); ++f) {
      auto row = chunks.slice(f);
      for (std::size_t j = 0; j < len; ++j) row[j] = set.audio[u][offsets[f] + j];
    }
    const Tensor emb = embed_parallel(weights, chunks, std::max<std::size_t>(1, config.threads));
    const std::vector<std::size_t> labels(offsets.size(), set.labels[u]);
    out.utterances.push_back({set.labels[u], posteriors(weights, emb, config, labels, t)});
  }
  return out;
}

double frame_error_rate(const PosteriorSet& p) {
  std::size_t wrong = 0, total = 0;
  for (const auto& u : p.utterances) {
    for (std::size_t f = 0; f < u.frames.dim(0); ++f) {
      wrong += argmax(u.frames.slice(f)) != u.label;
      ++total;
    }
  }
  if (total == 0) throw DataError("no frames to evaluate");
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(total);
}

double sentence_cer(const PosteriorSet& p) {
  if (p.utterances.empty()) throw DataError("no utterances to evaluate");
  std::size_t wrong = 0;
  for (const auto& u : p.utterances) {
    const std::size_t frames = u.frames.dim(0);
    const std::size_t classes = u.frames.dim(1);
    std::vector<double> mean(classes, 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      const auto row = u.frames.slice(f);
      for (std::size_t c = 0; c < classes; ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= static_cast<double>(frames);
    wrong += argmax(mean) != u.label;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(p.utterances.size());
}

void write_posteriors_csv(const PosteriorSet& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "utterance,frame,label";
  for (std::size_t c = 0; c < p.class_count; ++c) out << ",p" << c;
  out << '\n';
  char buf[32];
  for (std::size_t u = 0; u < p.utterances.size(); ++u) {
    const auto& up = p.utterances[u];
    for (std::size_t f = 0; f < up.frames.dim(0); ++f) {
      out << u << ',' << f << ',' << up.label;
      for (double v : up.frames.slice(f)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

PosteriorSet read_posteriors_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  PosteriorSet p;
  p.class_count = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
  std::vector<std::vector<double>> rows;
  std::size_t current = SIZE_MAX, label = 0;
  auto flush = [&] {
    if (rows.empty()) return;
    Tensor t({rows.size(), p.class_count});
    for (std::size_t f = 0; f < rows.size(); ++f) std::copy(rows[f].begin(), rows[f].end(), t.slice(f).begin());
    p.utterances.push_back({label, std::move(t)});
    rows.clear();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != p.class_count + 3) throw DataError(path.string() + ": ragged row");
    const std::size_t u = std::stoul(cells[0]);
    if (u != current) {
      flush();
      current = u;
      label = std::stoul(cells[2]);
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < p.class_count; ++c) row.push_back(std::stod(cells[3 + c]));
    rows.push_back(std::move(row));
  }
  flush();
  return p;
}

Tensor mean_direction(const Tensor& embeddings) {
  require_rank(embeddings, 2, "embeddings");
  if (embeddings.dim(0) == 0) throw ShapeError("mean direction of zero embeddings");
  const Tensor unit = l2_normalize_rows(embeddings);
  Tensor mean({embeddings.dim(1)});
  for (std::size_t i = 0; i < unit.dim(0); ++i) {
    const auto row = unit.slice(i);
    for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
  }
  for (double& v : mean.data()) v /= static_cast<double>(unit.dim(0));
  return l2_normalize(mean);
}

Gallery build_gallery(const ModelWeights& weights, const std::vector<EnrollmentSource>& sources,
                      std::size_t chunks_per_speaker, std::size_t threads) {
  if (chunks_per_speaker == 0) throw ConfigError("enrollment needs at least one chunk per speaker");
  Gallery g;
  for (const auto& src : sources) {
    if (src.chunks.rank() != 2 || src.chunks.dim(0) < chunks_per_speaker) {
      log_warning("speaker '" + src.speaker + "' has too few enrollment chunks; excluded");
      g.excluded.push_back(src.speaker);
      continue;
    }
    const Tensor emb = embed_parallel(weights, slice_rows(src.chunks, 0, chunks_per_speaker),
                                      std::max<std::size_t>(1, threads));
    g.entries[src.speaker] = mean_direction(emb);
  }
  return g;
}

Decision identify_direction(const Gallery& gallery, const Tensor& direction) {
  if (gallery.entries.empty()) throw DataError("identification against an empty gallery");
  Decision d;
  double best = -2.0;
  std::size_t near_best = 0;
  // The map iterates speaker ids in lexicographic order, so keeping the first
  // maximum resolves ties to the smallest id.
  for (const auto& [speaker, entry] : gallery.entries) {
    const double sim = cosine_similarity(direction, entry);
    if (sim > best + 1e-12) {
      best = sim;
      d.predicted = speaker;
      near_best = 1;
    } else if (std::abs(sim - best) <= 1e-12) {
      ++near_best;
    }
  }
  d.similarity = best;
  d.tie = near_best > 1;
  return d;
}

IdentifyResult identify(const ModelWeights& weights, const Gallery& gallery,
                        const std::vector<Probe>& probes, std::size_t threads) {
  if (probes.empty()) throw DataError("identification needs at least one probe");
  if (gallery.entries.empty()) throw DataError("identification against an empty gallery");
  IdentifyResult res;
  std::size_t wrong = 0;
  for (const auto& p : probes) {
    if (!gallery.entries.count(p.speaker)) {
      throw DataError("probe speaker '" + p.speaker + "' is not enrolled");
    }
    const Tensor emb = embed_parallel(weights, p.chunks, std::max<std::size_t>(1, threads));
    Decision d = identify_direction(gallery, mean_direction(emb));
    d.probe = p.name;
    d.truth = p.speaker;
    if (d.tie) log_info("probe " + p.name + ": tie resolved to '" + d.predicted + "'");
    wrong += d.predicted != d.truth;
    res.decisions.push_back(std::move(d));
  }
  res.cer_percent = 100.0 * static_cast<double>(wrong) / static_cast<double>(probes.size());
  return res;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = protocol;
  j["fer_percent"] = fer_percent ? nlohmann::ordered_json(*fer_percent) : nlohmann::ordered_json();
  j["cer_percent"] = cer_percent;
  j["frames_evaluated"] = frames_evaluated;
  j["sentences_evaluated"] = sentences_evaluated;
  j["gallery_size"] = gallery_size ? nlohmann::ordered_json(*gallery_size) : nlohmann::ordered_json();
  j["enroll_chunks_per_speaker"] =
      enroll_chunks_per_speaker ? nlohmann::ordered_json(*enroll_chunks_per_speaker) : nlohmann::ordered_json();
  j["excluded_speakers"] =
      excluded_speakers ? nlohmann::ordered_json(*excluded_speakers) : nlohmann::ordered_json();
  j["class_count"] = class_count;
  j["loss"] = loss;
  j["eval_logits"] = eval_logits;
  j["config_fingerprint"] = config_fingerprint;
  return j.dump(2) + "\n";
}

EvalReport evaluate_intra(const ModelWeights& weights, const DatasetManifest& manifest,
                          const EvalConfig& config, double t, PosteriorSet* dump) {
  if (manifest.class_count() != weights.class_count) {
    throw ClassCountMismatchError("checkpoint has " + std::to_string(weights.class_count) +
                                  " classes but the manifest has " +
                                  std::to_string(manifest.class_count()));
  }
  const AudioSet test = load_split(manifest, Split::test);
  if (test.size() == 0) throw DataError("the manifest has no test-split utterances");
  PosteriorSet p = compute_posteriors(weights, test, config, t);
  EvalReport r;
  r.protocol = "intra";
  r.fer_percent = frame_error_rate(p);
  r.cer_percent = sentence_cer(p);
  r.frames_evaluated = p.frame_count();
  r.sentences_evaluated = p.utterances.size();
  r.class_count = weights.class_count;
  r.loss = to_string(config.loss.kind);
  r.eval_logits = to_string(config.logits);
  if (dump) *dump = std::move(p);
  return r;
}

EvalReport evaluate_inter(const ModelWeights& weights, const DatasetManifest& manifest,
                          std::size_t enroll_chunks, std::size_t threads, IdentifyResult* decisions) {
  const std::size_t len = weights.config.chunk_len;
  if (manifest.sample_rate != weights.config.sample_rate) {
    throw DataError("probe corpus sample rate differs from the model's");
  }
  auto frames_of = [&](const UtteranceRecord& rec) {
    const WavAudio wav = load_wav(manifest.resolve(rec));
    const auto offsets = frame_offsets(wav.samples.size(), len, len);
    Tensor chunks({offsets.size(), len});
    for (std::size_t f = 0; f < offsets.size(); ++f) {
      auto row = chunks.slice(f);
      for (std::size_t j = 0; j < len; ++j) row[j] = wav.samples[offsets[f] + j];
    }
    return chunks;
  };

  std::vector<EnrollmentSource> sources;
  std::vector<Probe> probes;
  for (const auto& speaker : manifest.speakers) {
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].speaker_id == speaker) mine.push_back(i);
    }
    std::vector<bool> enrolled(manifest.records.size(), false);
    std::vector<Tensor> parts;
    std::size_t collected = 0;
    for (std::size_t i : mine) {
      if (collected >= enroll_chunks) break;
      if (manifest.records[i].split != Split::test) continue;
      Tensor c = frames_of(manifest.records[i]);
      enrolled[i] = true;
      const std::size_t take = std::min(c.dim(0), enroll_chunks - collected);
      if (take > 0) parts.push_back(slice_rows(c, 0, take));
      collected += take;
    }
    Tensor chunks({collected, len});
    std::size_t row = 0;
    for (const auto& part : parts) {
      assign_rows(chunks, row, part);
      row += part.dim(0);
    }
    sources.push_back({speaker, std::move(chunks)});
    if (collected < enroll_chunks) continue;
    for (std::size_t i : mine) {
      if (enrolled[i]) continue;
      Tensor c = frames_of(manifest.records[i]);
      if (c.dim(0) == 0) continue;
      probes.push_back({manifest.records[i].path, speaker, std::move(c)});
    }
  }
  if (probes.empty()) {
    throw DataError("no speaker has " + std::to_string(enroll_chunks) +
                    " test-split frames to enroll plus another utterance to probe");
  }
  const Gallery gallery = build_gallery(weights, sources, enroll_chunks, threads);
  IdentifyResult res = identify(weights, gallery, probes, threads);

  EvalReport r;
  r.protocol = "inter";
  r.cer_percent = res.cer_percent;
  for (const auto& p : probes) r.frames_evaluated += p.chunks.dim(0);
  r.sentences_evaluated = probes.size();
  r.gallery_size = gallery.entries.size();
  r.enroll_chunks_per_speaker = enroll_chunks;
  r.excluded_speakers = gallery.excluded.size();
  r.class_count = weights.class_count;
  r.loss = "";
  r.eval_logits = "cosine";
  if (decisions) *decisions = std::move(res);
  return r;
}

}  // namespace csnc
