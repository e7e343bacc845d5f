// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance --list     print criterion names
//   acceptance --only X   run criterion X

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "csnc/config.hpp"
#include "csnc/eval.hpp"
#include "csnc/gradcheck.hpp"
#include "csnc/losses.hpp"
#include "csnc/sinc.hpp"
#include "csnc/synth.hpp"
#include "csnc/train.hpp"

namespace fs = std::filesystem;
using namespace csnc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

fs::path workdir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "csnc_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig toy_config() {
  RunConfig c;
  c.merge_file(fs::path(CSNC_SOURCE_DIR) / "configs" / "toy.cfg");
  c.set("threads", "1");
  return c;
}

DatasetManifest synth(const fs::path& dir, std::size_t speakers, std::uint64_t seed, const std::string& prefix) {
  SynthConfig sc;
  sc.speakers = speakers;
  sc.utterances = 8;
  sc.seconds = 3.0;
  sc.seed = seed;
  sc.prefix = prefix;
  return synth_corpus(sc, dir);
}

TrainResult train_on(const DatasetManifest& m, RunConfig c, const std::string& loss) {
  c.set("loss", loss);
  const ModelConfig mc = model_config(c, m.sample_rate);
  return train(load_split(m, Split::train), m.class_count(), mc, train_config(c, mc.chunk_len));
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opt;
  opt.seeds = 20;
  const GradcheckReport rep = run_gradcheck(opt);
  const double secs = seconds_since(t0);

  std::set<std::string> heads, groups;
  double worst = 0.0;
  for (const auto& r : rep.rows) {
    heads.insert(to_string(r.head));
    groups.insert(r.group);
    worst = std::max(worst, r.max_rel_err);
  }
  const std::set<std::string> want_groups{"sinc", "conv", "norm", "fc", "head"};
  Outcome o;
  o.pass = rep.pass && worst < 1e-4 && heads.size() == 5 && groups == want_groups && secs < 120.0;
  o.detail = "worst rel err " + fmt(worst, 3) + " over " + std::to_string(heads.size()) + " heads x " +
             std::to_string(groups.size()) + " groups, 20 seeds, " + fmt(secs, 3) + " s";
  for (const auto& f : rep.failures()) o.detail += "; failed " + f;
  return o;
}

Outcome loss_reduction_chain() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  auto rows = [&](std::size_t r, std::size_t d) {
    Tensor t({r, d});
    for (double& v : t.data()) v = n(rng);
    return t;
  };
  double worst = 0.0;
  std::size_t easy_batches = 0;
  auto diff = [&](const HeadResult& a, const HeadResult& b) {
    worst = std::max({worst, std::abs(a.loss - b.loss), max_abs_diff(a.grad, b.grad)});
  };
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t batch = 8, classes = 2 + rep % 9;
    std::vector<std::size_t> y(batch);
    for (auto& v : y) v = rng() % classes;
    const CosineLogits cl = cosine_logits(rows(batch, 16), rows(classes, 16), y);
    const double s = 64.0, m = 0.5;

    // Push every sample into the easy regime: shrink negatives, then set the
    // target so cos(theta_y + m) clears them all.
    CosineLogits easy = cl;
    for (std::size_t i = 0; i < batch; ++i) {
      double top = -1.0;
      for (std::size_t j = 0; j < classes; ++j) {
        if (j == y[i]) continue;
        easy.cos_theta.at(i, j) *= 0.5;
        top = std::max(top, easy.cos_theta.at(i, j));
      }
      easy.cos_theta.at(i, y[i]) = std::min(0.999, std::cos(std::acos(top) - m) + 1e-3);
    }
    LossConfig cfg;
    cfg.m = m;
    cfg.s = s;
    const CurricularResult cur = curricular_loss(easy, CurriculumState{0.1 * (rep % 8), 0}, cfg);
    easy_batches += cur.head.easy_fraction == 1.0;
    diff(cur.head, arcface_loss(easy, m, s));

    const HeadResult ns = norm_softmax_loss(cl, s);
    diff(arcface_loss(cl, 0.0, s), ns);
    diff(am_softmax_loss(cl, 0.0, s), ns);
  }
  Outcome o;
  o.pass = worst <= 1e-9 && easy_batches == 100;
  o.detail = "max |loss or grad difference| " + fmt(worst, 3) + " over 100 batches (" +
             std::to_string(easy_batches) + " fully easy)";
  return o;
}

Outcome curriculum_dynamics() {
  const double alpha = 0.99, r = 0.5;
  double worst = 0.0;
  CurriculumState p, q;
  for (int k = 1; k <= 1000; ++k) {
    p = update_curriculum(p, r, alpha, TUpdate::direct);
    q = update_curriculum(q, r, alpha, TUpdate::swapped);
    worst = std::max(worst, std::abs(p.t - r * (1.0 - std::pow(1.0 - alpha, k))));
    worst = std::max(worst, std::abs(q.t - r * (1.0 - std::pow(alpha, k))));
  }
  return {worst <= 1e-12, "max deviation from closed forms " + fmt(worst, 3) + " over 1000 updates, both rules"};
}

Outcome scalar_oracles() {
  using Hp = boost::multiprecision::cpp_dec_float_50;
  auto ce2 = [](Hp target, Hp other) { return log(1 + exp(other - target)); };
  struct Case {
    std::string name;
    double got;
    Hp want;
  };
  std::vector<Case> cases;

  {
    const auto r = arcface_loss(CosineLogits{Tensor({1, 2}, {std::cos(0.3), 0.5}), {0}}, 0.5, 64.0);
    cases.push_back({"arcface", r.loss, ce2(64 * cos(Hp("0.8")), Hp(32))});
  }
  {
    LossConfig cfg;
    const auto r = curricular_loss(CosineLogits{Tensor({1, 2}, {std::cos(0.2), 0.9}), {0}}, CurriculumState{}, cfg);
    const Hp neg = Hp("0.9") * (0 + Hp("0.9"));
    cases.push_back({"curricular", r.head.loss, ce2(64 * cos(Hp("0.7")), 64 * neg)});
  }
  cases.push_back({"modulation t=0", modulation(0.0, 0.9, 0.5), Hp("0.9") * (0 + Hp("0.9"))});
  cases.push_back({"modulation t=0.5", modulation(0.5, 0.9, 0.5), Hp("0.9") * (Hp("0.5") + Hp("0.9"))});

  Outcome o{true, ""};
  for (const auto& c : cases) {
    const double want = c.want.convert_to<double>();
    const double rel = std::abs(c.got - want) / std::abs(want);
    o.pass = o.pass && rel < 5e-7;
    o.detail += (o.detail.empty() ? "" : "; ") + c.name + " " + fmt(c.got, 10) + " vs " + fmt(want, 10);
  }
  return o;
}

Outcome dsp_correctness() {
  const double sr = 16000.0;
  const ModelConfig mc = model_config(RunConfig{}, sr);
  const SincFilterParams p =
      mel_init(mc.sinc.count, sr, mc.sinc.f_min, mc.sinc_f_max(), 251, mc.sinc.windowed);
  std::vector<std::string> peak_bad, edge_bad, stop_bad;
  for (std::size_t f = 0; f < p.count(); ++f) {
    const double a1 = p.low_cutoff(f), a2 = p.high_cutoff(f);
    const FilterResponse r = frequency_response(p, f, 8193);
    const double peak = r.peak_frequency();
    if (r.all_zero || peak < a1 || peak > a2) peak_bad.push_back(std::to_string(f));
    const auto [lo, hi] = r.band_edges(-3.0);
    if (std::abs(lo - a1) > 0.01 || std::abs(hi - a2) > 0.01) edge_bad.push_back(std::to_string(f));
    if (1.5 * a2 < 0.5 && r.magnitude_at(1.5 * a2) > -20.0) stop_bad.push_back(std::to_string(f));
  }
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return v.empty() ? std::string("none") : s;
  };
  Outcome o;
  o.pass = peak_bad.empty() && edge_bad.empty() && stop_bad.empty();
  o.detail = std::to_string(p.count()) + " filters; peak outside band: " + list(peak_bad) +
             "; -3 dB edges off by > 0.01: " + list(edge_bad) + "; < 20 dB at 1.5 a2: " + list(stop_bad);
  return o;
}

Outcome toy_training() {
  const fs::path dir = workdir("toy_training");
  const DatasetManifest m = synth(dir / "corpus", 20, 1, "spk");
  const RunConfig c = toy_config();
  Outcome o{true, ""};
  for (const std::string loss : {"curricular", "softmax"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train_on(m, c, loss);
    const double secs = seconds_since(t0);
    RunConfig ec = c;
    ec.set("loss", loss);
    const EvalReport rep = evaluate_intra(res.weights, m, eval_config(ec, m.sample_rate), res.curriculum.t);
    const double fer = rep.fer_percent.value_or(100.0);
    if (loss == "curricular") {
      o.pass = o.pass && rep.cer_percent <= 5.0 && fer <= 25.0 && secs < 900.0;
    } else {
      o.pass = o.pass && rep.cer_percent <= 10.0;
    }
    o.detail += (o.detail.empty() ? "" : "; ") + loss + " CER " + fmt(rep.cer_percent, 4) + "% FER " +
                fmt(fer, 4) + "% after " + std::to_string(res.log.size()) + " batches in " + fmt(secs, 4) + " s";
  }
  return o;
}

Outcome inter_dataset() {
  const fs::path dir = workdir("inter_dataset");
  const DatasetManifest a = synth(dir / "a", 20, 1, "a");
  const DatasetManifest b = synth(dir / "b", 10, 2, "b");
  for (const auto& s : b.speakers) {
    if (std::find(a.speakers.begin(), a.speakers.end(), s) != a.speakers.end()) {
      return {false, "speaker " + s + " appears in both corpora"};
    }
  }
  const RunConfig c = toy_config();
  const TrainResult res = train_on(a, c, "curricular");
  const EvalReport rep = evaluate_inter(res.weights, b, c.get_size("enroll_chunks"), 1);
  Outcome o;
  o.pass = rep.cer_percent <= 30.0 && rep.gallery_size.value_or(0) == 10;
  o.detail = "CER " + fmt(rep.cer_percent, 4) + "% on " + std::to_string(rep.sentences_evaluated) +
             " probes against a gallery of " + std::to_string(rep.gallery_size.value_or(0)) + " (chance 90%)";
  return o;
}

Outcome metric_oracles() {
  const fs::path dir = workdir("metric_oracles");
  // 25 speakers x 8 x 3 s leaves two held-out utterances per speaker.
  const DatasetManifest m = synth(dir / "corpus", 25, 3, "spk");
  RunConfig c = toy_config();
  const ModelConfig mc = model_config(c, m.sample_rate);
  const ModelWeights w = init_model(mc, m.class_count(), 5);
  PosteriorSet dump;
  const EvalReport rep = evaluate_intra(w, m, eval_config(c, m.sample_rate), 0.0, &dump);
  write_posteriors_csv(dump, dir / "posteriors.csv");

  // Brute force straight from the CSV text.
  std::ifstream in(dir / "posteriors.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::size_t, std::pair<std::size_t, std::vector<double>>> utts;  // id -> label, summed posteriors
  std::size_t frames = 0, frame_errors = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    const auto u = static_cast<std::size_t>(v[0]);
    const auto label = static_cast<std::size_t>(v[2]);
    std::size_t best = 3;
    for (std::size_t k = 3; k < v.size(); ++k) best = v[k] > v[best] ? k : best;
    ++frames;
    frame_errors += best - 3 != label;
    auto& acc = utts[u];
    acc.first = label;
    acc.second.resize(v.size() - 3, 0.0);
    for (std::size_t k = 3; k < v.size(); ++k) acc.second[k - 3] += v[k];
  }
  std::size_t sentence_errors = 0;
  for (const auto& [u, acc] : utts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < acc.second.size(); ++k) best = acc.second[k] > acc.second[best] ? k : best;
    sentence_errors += best != acc.first;
  }
  const double fer = 100.0 * static_cast<double>(frame_errors) / static_cast<double>(frames);
  const double cer = 100.0 * static_cast<double>(sentence_errors) / static_cast<double>(utts.size());
  const bool exact = utts.size() == 50 && rep.fer_percent == fer && rep.cer_percent == cer &&
                     frame_error_rate(read_posteriors_csv(dir / "posteriors.csv")) == fer;

  // Random classifier.
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> e(1.0);
  const std::size_t classes = 10, n = 100000;
  PosteriorSet rnd;
  rnd.class_count = classes;
  Tensor t({n, classes});
  for (double& v : t.data()) v = e(rng);
  rnd.utterances.push_back({0, t});
  const double q = 1.0 - 1.0 / classes;
  const double sigma = 100.0 * std::sqrt(q * (1.0 - q) / n);
  const double rfer = frame_error_rate(rnd);
  const bool chance = std::abs(rfer - 100.0 * q) <= 3.0 * sigma;

  Outcome o;
  o.pass = exact && chance;
  o.detail = std::to_string(utts.size()) + " utterances: FER " + fmt(*rep.fer_percent, 17) + " vs " + fmt(fer, 17) +
             ", CER " + fmt(rep.cer_percent, 17) + " vs " + fmt(cer, 17) + "; random FER " + fmt(rfer, 5) +
             "% vs " + fmt(100.0 * q, 5) + "% +- " + fmt(3.0 * sigma, 3);
  return o;
}

int sh(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

Outcome determinism() {
  const fs::path dir = workdir("determinism");
  const std::string cli = CSNC_CLI_PATH;
  if (sh(cli + " synth --speakers 5 --seed 4 --out " + (dir / "corpus").string()) != 0) return {false, "synth failed"};
  const std::string manifest = (dir / "corpus" / "manifest.tsv").string();
  for (const std::string run : {"r1", "r2"}) {
    const fs::path out = dir / run;
    const std::string train = cli + " train --threads 1 --config " + CSNC_SOURCE_DIR +
                              "/configs/toy.cfg --epochs 2 --batches_per_epoch 25 --checkpoint_every 1 --manifest " +
                              manifest + " --out " + out.string();
    if (sh(train) != 0) return {false, "train failed in " + run};
    const std::string eval = cli + " eval --threads 1 --protocol intra --ckpt " + (out / "final.ckpt").string() +
                             " --manifest " + manifest + " --dump " + (out / "post.csv").string();
    if (sh(eval) != 0) return {false, "eval failed in " + run};
  }
  std::vector<std::string> differ;
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "r1")) {
    const fs::path other = dir / "r2" / e.path().filename();
    ++compared;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) differ.push_back(e.path().filename().string());
  }
  Outcome o;
  o.pass = differ.empty() && compared >= 6;
  o.detail = std::to_string(compared) + " files compared";
  for (const auto& d : differ) o.detail += "; differs: " + d;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient_fidelity", gradient_fidelity},
      {"loss_reduction_chain", loss_reduction_chain},
      {"curriculum_dynamics", curriculum_dynamics},
      {"scalar_oracles", scalar_oracles},
      {"dsp_correctness", dsp_correctness},
      {"toy_training", toy_training},
      {"inter_dataset", inter_dataset},
      {"metric_oracles", metric_oracles},
      {"determinism", determinism},
  };
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--list") {
      for (const auto& [name, fn] : criteria) std::cout << name << "\n";
      return 0;
    }
    if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--list] [--only NAME]\n";
      return 1;
    }
  }
  bool all = true, ran = false;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name != only) continue;
    ran = true;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    all = all && o.pass;
  }
  if (!ran) {
    std::cerr << "unknown criterion " << only << "\n";
    return 1;
  }
  return all ? 0 : 1;
}
