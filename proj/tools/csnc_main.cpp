// csnc: synth, manifest, train, eval, gradcheck and filters subcommands.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (non-finite values, failed gradient check).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "csnc/checkpoint.hpp"
#include "csnc/config.hpp"
#include "csnc/dataset.hpp"
#include "csnc/error.hpp"
#include "csnc/eval.hpp"
#include "csnc/gradcheck.hpp"
#include "csnc/log.hpp"
#include "csnc/manifest.hpp"
#include "csnc/sinc.hpp"
#include "csnc/synth.hpp"
#include "csnc/train.hpp"

namespace fs = std::filesystem;
using namespace csnc;

namespace {

/// Config file and per-key flags shared by every subcommand.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value configuration file");
    cmd->add_option("--set", sets, "KEY=VALUE override (repeatable)");
    for (const auto& k : RunConfig::keys()) {
      options[k.name] = cmd->add_option("--" + k.name, values[k.name], k.help);
    }
  }

  /// base (optional file) -> --config -> --set -> --key flags.
  RunConfig resolve(const std::optional<fs::path>& base = std::nullopt) const {
    RunConfig c;
    if (base && fs::exists(*base)) c.merge_file(*base);
    if (!config_file.empty()) c.merge_file(config_file);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [name, opt] : options) {
      if (opt->count() > 0) c.set(name, values.at(name));
    }
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

int cmd_synth(const RunConfig& c, const fs::path& out) {
  const SynthConfig sc = synth_config(c);
  const DatasetManifest m = synth_corpus(sc, out, manifest_options(c));
  c.write(out / "config.txt");
  std::cout << "wrote " << m.records.size() << " utterances of " << m.class_count()
            << " speakers to " << out.string() << "\n";
  return 0;
}

int cmd_manifest(const RunConfig& c, const fs::path& root, fs::path out) {
  if (out.empty()) out = root / "manifest.tsv";
  const DatasetManifest m = build_manifest(root, manifest_options(c));
  write_manifest(m, out);
  c.write(fs::path(out.string() + ".config.txt"));
  std::size_t flagged = 0;
  for (const auto& n : m.notes) flagged += n.kind == "flagged_speaker";
  std::cout << "wrote " << out.string() << ": " << m.records.size() << " utterances, "
            << m.class_count() << " speakers, " << flagged << " flagged\n";
  return 0;
}

int cmd_train(const RunConfig& c, const fs::path& manifest_path, const fs::path& out) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const ModelConfig model = model_config(c, manifest.sample_rate);
  const TrainConfig tc = train_config(c, model.chunk_len);
  const StorageType storage = checkpoint_storage(c);
  const AudioSet train_set = load_split(manifest, Split::train);
  if (train_set.size() == 0) throw DataError("manifest " + manifest_path.string() + " has no train utterances");
  require_min_length(train_set, model.chunk_len, manifest);

  fs::create_directories(out);
  c.write(out / "config.txt");
  const fs::path log_tmp = out / "train_log.csv.tmp";
  std::ofstream log(log_tmp, std::ios::binary | std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_tmp.string());
  log << train_log_header() << '\n';

  TrainHooks hooks;
  const std::size_t report_every = std::max<std::size_t>(1, tc.total_batches() / 20);
  hooks.on_batch = [&](const TrainLogRow& row) {
    log << format_log_row(row) << '\n';
    if ((row.batch + 1) % report_every == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "batch %zu/%zu loss %.4f t %.4f r %.4f", row.batch + 1,
                    tc.total_batches(), row.loss, row.t, row.r);
      log_info(buf);
    }
  };
  hooks.on_epoch = [&](std::size_t epoch, const ModelWeights& w, const CurriculumState& cs) {
    if (tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0 && epoch != tc.epochs) {
      save_checkpoint(w, cs, out / ("epoch_" + std::to_string(epoch) + ".ckpt"), storage);
    }
  };
  const TrainResult res = train(train_set, manifest.class_count(), model, tc, hooks);
  log.close();
  if (!log) throw DataError("failed writing " + log_tmp.string());
  fs::rename(log_tmp, out / "train_log.csv");
  save_checkpoint(res.weights, res.curriculum, out / "final.ckpt", storage);
  std::cout << "trained " << res.log.size() << " batches, final loss " << res.log.back().loss
            << "; wrote " << (out / "final.ckpt").string() << "\n";
  return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& protocol, const fs::path& ckpt,
             const fs::path& manifest_path, fs::path out, const std::string& dump) {
  const RunConfig c = flags.resolve(ckpt.parent_path() / "config.txt");
  const DatasetManifest manifest = read_manifest(manifest_path);
  EvalReport report;
  if (protocol == "intra") {
    const Checkpoint cp = load_checkpoint(ckpt, manifest.class_count());
    const EvalConfig ec = eval_config(c, cp.weights.config.sample_rate);
    PosteriorSet posteriors;
    report = evaluate_intra(cp.weights, manifest, ec, cp.curriculum.t, &posteriors);
    if (!dump.empty()) write_posteriors_csv(posteriors, dump);
  } else if (protocol == "inter") {
    const Checkpoint cp = load_checkpoint(ckpt);
    IdentifyResult decisions;
    report = evaluate_inter(cp.weights, manifest, c.get_size("enroll_chunks"),
                            std::max<std::size_t>(1, c.get_size("threads")), &decisions);
    report.loss = c.get("loss");
    if (!dump.empty()) {
      std::string csv = "probe,truth,predicted,similarity,tie\n";
      char buf[64];
      for (const auto& d : decisions.decisions) {
        std::snprintf(buf, sizeof buf, "%.17g", d.similarity);
        csv += d.probe + "," + d.truth + "," + d.predicted + "," + buf + "," + (d.tie ? "1" : "0") + "\n";
      }
      write_text(dump, csv);
    }
  } else {
    throw ConfigError("--protocol must be intra or inter");
  }
  report.config_fingerprint = c.fingerprint();
  if (out.empty()) out = ckpt.parent_path();
  fs::create_directories(out);
  c.write(out / ("eval_" + protocol + "_config.txt"));
  const std::string json = report.to_json();
  write_text(out / ("eval_" + protocol + ".json"), json);
  std::cout << json;
  return 0;
}

int cmd_gradcheck(const RunConfig& c, const std::string& fault, const fs::path& out) {
  GradcheckOptions opt;
  opt.seeds = c.get_size("seeds");
  opt.h = c.get_double("gradcheck_h");
  opt.tol = c.get_double("gradcheck_tol");
  opt.floor = c.get_double("gradcheck_floor");
  opt.m = c.get_double("m");
  opt.s = c.get_double("s");
  opt.base_seed = static_cast<std::uint64_t>(c.get_int("seed"));
  opt.fault = parse_grad_fault(fault);
  const GradcheckReport report = run_gradcheck(opt);
  const std::string table = report.table();
  std::cout << table;
  if (!out.empty()) {
    fs::create_directories(out);
    c.write(out / "config.txt");
    write_text(out / "gradcheck.txt", table);
  }
  if (!report.pass) {
    std::string names;
    for (const auto& f : report.failures()) names += (names.empty() ? "" : ", ") + f;
    std::cerr << "error: gradient check failed for " << names << "\n";
    return 3;
  }
  std::cout << "all groups within tolerance " << opt.tol << " over " << opt.seeds << " seeds\n";
  return 0;
}

int cmd_filters(const RunConfig& c, const fs::path& ckpt, double sample_rate, long filter,
                std::size_t points, const fs::path& out) {
  SincFilterParams params;
  if (!ckpt.empty()) {
    params = load_checkpoint(ckpt).weights.sinc;
  } else {
    const ModelConfig m = model_config(c, sample_rate);
    params = mel_init(m.sinc.count, m.sample_rate, m.sinc.f_min, m.sinc_f_max(), m.sinc.kernel_len,
                      m.sinc.windowed);
  }
  std::vector<std::size_t> which;
  if (filter >= 0) {
    if (static_cast<std::size_t>(filter) >= params.count()) {
      throw ConfigError("--filter " + std::to_string(filter) + " is out of range (" +
                        std::to_string(params.count()) + " filters)");
    }
    which.push_back(static_cast<std::size_t>(filter));
  } else {
    for (std::size_t i = 0; i < params.count(); ++i) which.push_back(i);
  }
  std::string csv = "filter,low_cutoff,high_cutoff,freq_normalized,magnitude_db\n";
  char buf[128];
  for (std::size_t f : which) {
    const FilterResponse r = frequency_response(params, f, points);
    if (r.all_zero) log_warning("filter " + std::to_string(f) + " has an all-zero kernel");
    for (std::size_t i = 0; i < r.freqs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", f, params.low_cutoff(f),
                    params.high_cutoff(f), r.freqs[i], r.magnitude_db[i]);
      csv += buf;
    }
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
    c.write(fs::path(out.string() + ".config.txt"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Raw-waveform speaker recognition with learnable sinc filters and margin losses"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "suppress warnings");
  app.add_flag("-v,--verbose", verbose, "progress messages");

  std::string out, manifest, ckpt, protocol, fault, dump, root;
  double filter_rate = 16000.0;
  long filter_index = -1;
  std::size_t points = 1024;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus and its manifest");
  synth->add_option("--out", out, "corpus directory")->required();
  ConfigFlags synth_flags;
  synth_flags.attach(synth);

  auto* man = app.add_subcommand("manifest", "scan <root>/<speaker>/*.wav into a manifest");
  man->add_option("--root", root, "corpus directory")->required();
  man->add_option("--out", out, "manifest file (default <root>/manifest.tsv)");
  ConfigFlags man_flags;
  man_flags.attach(man);

  auto* tr = app.add_subcommand("train", "train a model on a manifest's train split");
  tr->add_option("--manifest", manifest, "manifest file")->required();
  tr->add_option("--out", out, "run directory")->required();
  ConfigFlags tr_flags;
  tr_flags.attach(tr);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--protocol", protocol, "intra | inter")->required()->check(CLI::IsMember({"intra", "inter"}));
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--manifest", manifest, "manifest of the evaluation corpus")->required();
  ev->add_option("--out", out, "report directory (default: the checkpoint's)");
  ev->add_option("--dump", dump, "CSV of per-frame posteriors (intra) or decisions (inter)");
  ConfigFlags ev_flags;
  ev_flags.attach(ev);

  auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  gc->add_option("--inject-fault", fault, "deliberate defect: sinc-sign");
  gc->add_option("--out", out, "report directory");
  ConfigFlags gc_flags;
  gc_flags.attach(gc);

  auto* fl = app.add_subcommand("filters", "frequency responses of the sinc layer as CSV");
  fl->add_option("--ckpt", ckpt, "checkpoint (default: fresh mel initialization)");
  fl->add_option("--filter", filter_index, "single filter index");
  fl->add_option("--points", points, "frequencies per response")->check(CLI::PositiveNumber);
  fl->add_option("--sample-rate", filter_rate, "sample rate for a fresh initialization");
  fl->add_option("--out", out, "CSV file (default stdout)");
  ConfigFlags fl_flags;
  fl_flags.attach(fl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::info : LogLevel::warning);

  try {
    if (*synth) return cmd_synth(synth_flags.resolve(), out);
    if (*man) return cmd_manifest(man_flags.resolve(), root, out);
    if (*tr) return cmd_train(tr_flags.resolve(), manifest, out);
    if (*ev) return cmd_eval(ev_flags, protocol, ckpt, manifest, out, dump);
    if (*gc) return cmd_gradcheck(gc_flags.resolve(), fault, out);
    if (*fl) return cmd_filters(fl_flags.resolve(), ckpt, filter_rate, filter_index, points, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
