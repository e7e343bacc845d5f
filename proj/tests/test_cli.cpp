#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using csnc::testing::scratch_dir;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  static int counter = 0;
  const fs::path dir = scratch_dir("cli_io");
  const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = dir / ("err" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(CSNC_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

std::vector<double> loss_column(const fs::path& log) {
  std::istringstream in(slurp(log));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("batch,loss,", 0), 0u);
  std::vector<double> losses;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    losses.push_back(std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1)));
  }
  return losses;
}

// 10 speakers x 8 x 3 s, shared by the tests below.
const fs::path& toy_corpus() {
  static const fs::path dir = [] {
    const fs::path d = scratch_dir("cli_corpus") / "toy";
    const auto r = run("synth --speakers 10 --utts 8 --seconds 3 --seed 7 --out " + d.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

const std::string kSmallTrain =
    " --config " + std::string(CSNC_SOURCE_DIR) + "/configs/toy.cfg --epochs 1 --batches_per_epoch 6 --batch_size 8";

}  // namespace

TEST(CliSynth, WritesCorpusAndManifestDeterministically) {
  const fs::path& d = toy_corpus();
  std::size_t wavs = 0;
  std::set<std::string> speakers;
  for (const auto& e : fs::recursive_directory_iterator(d)) {
    if (e.path().extension() == ".wav") {
      ++wavs;
      speakers.insert(e.path().parent_path().filename().string());
    }
  }
  EXPECT_EQ(wavs, 80u);
  EXPECT_EQ(speakers.size(), 10u);
  EXPECT_TRUE(fs::exists(d / "manifest.tsv"));
  EXPECT_TRUE(fs::exists(d / "config.txt"));

  const fs::path again = scratch_dir("cli_corpus_again") / "toy";
  ASSERT_EQ(run("synth --speakers 10 --utts 8 --seconds 3 --seed 7 --out " + again.string()).code, 0);
  EXPECT_TRUE(tree(d) == tree(again));
}

TEST(CliSynth, RejectsSingleSpeaker) {
  const fs::path d = scratch_dir("cli_one") / "c";
  const auto r = run("synth --speakers 1 --out " + d.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("speakers"), std::string::npos) << r.err;
}

TEST(CliUsage, UnknownKeysAndSubcommandsAreUsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("gradcheck --set bogus=1").code, 1);
  EXPECT_EQ(run("gradcheck --seeds lots").code, 1);
}

TEST(CliTrain, MissingManifestLeavesNoCheckpoint) {
  const fs::path out = scratch_dir("cli_nomanifest") / "run";
  const auto r = run("train --manifest /nonexistent/manifest.tsv --out " + out.string() + kSmallTrain);
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_FALSE(fs::exists(out / "final.ckpt"));
}

TEST(CliTrain, ProducesCheckpointLogAndConfigWithoutTouchingInputs) {
  const fs::path& d = toy_corpus();
  const auto before = tree(d);
  const fs::path out = scratch_dir("cli_train") / "run";
  const auto r = run("train --loss curricular --manifest " + (d / "manifest.tsv").string() + " --out " + out.string() +
                     kSmallTrain);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "final.ckpt"));
  EXPECT_TRUE(fs::exists(out / "config.txt"));
  EXPECT_EQ(loss_column(out / "train_log.csv").size(), 6u);
  EXPECT_TRUE(tree(d) == before);

  // The echoed config reproduces the run.
  const fs::path again = scratch_dir("cli_train_again") / "run";
  ASSERT_EQ(run("train --manifest " + (d / "manifest.tsv").string() + " --out " + again.string() + " --config " +
                (out / "config.txt").string())
                .code,
            0);
  EXPECT_EQ(slurp(out / "train_log.csv"), slurp(again / "train_log.csv"));
  EXPECT_EQ(slurp(out / "final.ckpt"), slurp(again / "final.ckpt"));
}

TEST(CliTrain, ZeroMarginArcfaceTracksNormSoftmax) {
  const fs::path& d = toy_corpus();
  const fs::path base = scratch_dir("cli_m0");
  const std::string common = " --manifest " + (d / "manifest.tsv").string() + kSmallTrain;
  ASSERT_EQ(run("train --loss arcface --m 0 --out " + (base / "arc").string() + common).code, 0);
  ASSERT_EQ(run("train --loss norm_softmax --out " + (base / "ns").string() + common).code, 0);
  const auto a = loss_column(base / "arc" / "train_log.csv");
  const auto b = loss_column(base / "ns" / "train_log.csv");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9) << "batch " << i;
}

TEST(CliEval, IntraAndInterReports) {
  const fs::path& d = toy_corpus();
  const fs::path base = scratch_dir("cli_eval");
  ASSERT_EQ(run("train --manifest " + (d / "manifest.tsv").string() + " --out " + (base / "run").string() + kSmallTrain)
                .code,
            0);
  const std::string ckpt = (base / "run" / "final.ckpt").string();

  const auto intra = run("eval --protocol intra --ckpt " + ckpt + " --manifest " + (d / "manifest.tsv").string() +
                         " --dump " + (base / "post.csv").string());
  ASSERT_EQ(intra.code, 0) << intra.err;
  const auto j = nlohmann::json::parse(slurp(base / "run" / "eval_intra.json"));
  EXPECT_TRUE(j.at("fer_percent").is_number());
  EXPECT_TRUE(j.at("cer_percent").is_number());
  EXPECT_TRUE(fs::exists(base / "post.csv"));

  const fs::path other = scratch_dir("cli_eval_b") / "b";
  ASSERT_EQ(run("synth --speakers 4 --utts 8 --seconds 3 --seed 9 --prefix b --out " + other.string()).code, 0);
  const auto inter = run("eval --protocol inter --enroll_chunks 5 --ckpt " + ckpt + " --manifest " +
                         (other / "manifest.tsv").string() + " --out " + (base / "inter").string());
  ASSERT_EQ(inter.code, 0) << inter.err;
  const auto k = nlohmann::json::parse(slurp(base / "inter" / "eval_inter.json"));
  EXPECT_EQ(k.at("gallery_size").get<int>(), 4);
  EXPECT_TRUE(k.at("cer_percent").is_number());
  EXPECT_TRUE(k.at("fer_percent").is_null());

  const fs::path tiny = scratch_dir("cli_eval_c") / "c";
  ASSERT_EQ(run("synth --speakers 2 --utts 4 --seconds 3 --seed 9 --out " + tiny.string()).code, 0);
  const auto none = run("eval --protocol inter --ckpt " + ckpt + " --manifest " + (tiny / "manifest.tsv").string() +
                        " --out " + (base / "none").string());
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.err.find("enroll"), std::string::npos) << none.err;

  // A 10-class checkpoint cannot score a 4-speaker intra manifest.
  const auto mismatch = run("eval --protocol intra --ckpt " + ckpt + " --manifest " + (other / "manifest.tsv").string() +
                            " --out " + (base / "bad").string());
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("class"), std::string::npos) << mismatch.err;
}

TEST(CliGradcheck, PassesAndDetectsInjectedFault) {
  const auto ok = run("gradcheck --seeds 2");
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_NE(ok.out.find("over 2 seeds"), std::string::npos);
  EXPECT_NE(ok.out.find("sinc"), std::string::npos);
  EXPECT_NE(ok.out.find("curricular"), std::string::npos);

  const auto bad = run("gradcheck --seeds 2 --inject-fault sinc-sign");
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("sinc"), std::string::npos) << bad.err;
  EXPECT_EQ(bad.err.find("conv"), std::string::npos) << bad.err;
  EXPECT_EQ(run("gradcheck --inject-fault nonsense").code, 1);
}

TEST(CliGradcheck, SeedsFlagControlsDrawCount) {
  const auto r = run("gradcheck --seeds 50");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("over 50 seeds"), std::string::npos);
}

TEST(CliFilters, FreshModelAndSingleFilter) {
  const auto all = run("filters --points 64");
  ASSERT_EQ(all.code, 0) << all.err;
  std::istringstream in(all.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "filter,low_cutoff,high_cutoff,freq_normalized,magnitude_db");
  std::map<int, std::size_t> rows;
  while (std::getline(in, line)) ++rows[std::stoi(line.substr(0, line.find(',')))];
  EXPECT_EQ(rows.size(), 80u);
  for (const auto& [f, n] : rows) EXPECT_EQ(n, 64u) << "filter " << f;

  const auto one = run("filters --filter 3 --points 32");
  ASSERT_EQ(one.code, 0);
  std::istringstream in1(one.out);
  std::getline(in1, line);
  std::size_t n = 0;
  while (std::getline(in1, line)) {
    EXPECT_EQ(line.rfind("3,", 0), 0u);
    ++n;
  }
  EXPECT_EQ(n, 32u);
  EXPECT_EQ(run("filters --filter 80").code, 1);
}
