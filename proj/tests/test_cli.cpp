#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sys/wait.h>

#include "grhd/cli/checkpoint.hpp"
#include "grhd/dataset/corpus.hpp"
#include "grhd/model/train.hpp"
#include "grhd/metrics/metrics.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using grhd::testing::TempDir;
using grhd::testing::read_text;

namespace {

struct Outcome {
  int status = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string command = std::string(GRHD_CLI_PATH) + " " + args + " 2>&1";
  Outcome r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// A corpus and model small enough to train in well under a second.
constexpr const char* kTinyConfig =
    "machines=ToyCar:150:4\n"
    "sections=2\n"
    "groups_per_section=2\n"
    "source_count=8\n"
    "target_count=2\n"
    "test_normal_count=3\n"
    "test_anomaly_count=3\n"
    "duration_s=0.1\n"
    "frame_size=256\n"
    "hop=128\n"
    "num_mels=16\n"
    "backbone_channels=4,8,8\n"
    "head_channels=8\n"
    "grc_hidden=8\n"
    "batch_size=8\n";

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    config = dir / "tiny.cfg";
    corpus = dir / "corpus";
    write_file(config, kTinyConfig);
    const auto s = run("synth --config " + q(config) + " --seed 3 --out " + q(corpus));
    ASSERT_EQ(s.status, 0) << s.output;
  }

  Outcome train(const std::string& extra, const fs::path& out) {
    return run("train --config " + q(config) + " --data " + q(corpus) + " --machine ToyCar --out " + q(out) + " " + extra);
  }

  TempDir dir{"cli"};
  fs::path config, corpus;
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') {
      out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

double csv_value(const std::string& csv, const std::string& prefix) {
  for (const auto& l : lines(csv)) {
    if (l.rfind(prefix, 0) == 0) return std::stod(l.substr(prefix.size()));
  }
  ADD_FAILURE() << "no row " << prefix;
  return 0.0;
}

}  // namespace

TEST(Cli, DefaultsEcho) {
  TempDir dir("echo");
  const auto r = run("train --data " + q(dir / "none") + " --machine ToyCar --out " + q(dir / "m.ckpt") + " --seed 1");
  EXPECT_NE(r.status, 0);
  for (const char* kv : {"config frame_size=1024\n", "config hop=512\n", "config num_mels=128\n", "config lr=0.001\n",
                         "config epochs=150\n", "config alpha=1\n", "config beta=1\n", "config gamma=1\n",
                         "config batch_size=64\n", "config focal_gamma=2\n", "config lambda_gain=10\n",
                         "config p=0.1\n", "config scorer=nls\n", "config precision=f32\n"}) {
    EXPECT_NE(r.output.find(kv), std::string::npos) << kv << " missing from\n" << r.output;
  }
}

TEST(Cli, TrainNeedsSeed) {
  TempDir dir("seed");
  const auto r = run("train --data " + q(dir / "data") + " --machine ToyCar --out " + q(dir / "m.ckpt"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("seed"), std::string::npos);
}

TEST(Cli, UnknownKeysAndFlagsAreFatal) {
  TempDir dir("unknown");
  write_file(dir / "bad.cfg", "num_melz=64\n");
  const auto key = run("synth --config " + q(dir / "bad.cfg") + " --seed 1 --out " + q(dir / "c"));
  EXPECT_NE(key.status, 0);
  EXPECT_NE(key.output.find("num_melz"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "c" / "manifest.csv"));
  EXPECT_NE(run("synth --seed 1 --out " + q(dir / "c") + " --bogus 3").status, 0);
  EXPECT_NE(run("eval --checkpoint x --data y --out z --scorer mahalanobis").status, 0);
  EXPECT_NE(run("train --data y --machine M --out z --seed 1 --precision f16").status, 0);
  EXPECT_NE(run("").status, 0);
}

TEST(Cli, SynthChecksumStable) {
  TempDir dir("synth");
  write_file(dir / "tiny.cfg", kTinyConfig);
  const auto a = run("synth --config " + q(dir / "tiny.cfg") + " --seed 9 --out " + q(dir / "a"));
  const auto b = run("synth --config " + q(dir / "tiny.cfg") + " --seed 9 --out " + q(dir / "b"));
  const auto c = run("synth --config " + q(dir / "tiny.cfg") + " --seed 10 --out " + q(dir / "c"));
  ASSERT_EQ(a.status, 0) << a.output;
  const std::regex sum("manifest fnv1a64 ([0-9a-f]{16})");
  std::smatch ma, mb, mc;
  ASSERT_TRUE(std::regex_search(a.output, ma, sum));
  ASSERT_TRUE(std::regex_search(b.output, mb, sum));
  ASSERT_TRUE(std::regex_search(c.output, mc, sum));
  EXPECT_EQ(ma[1], mb[1]);
  // Labels do not depend on the seed, the audio does.
  EXPECT_EQ(ma[1], mc[1]);
  fs::path clip;
  for (const auto& e : fs::directory_iterator(dir / "a" / "ToyCar" / "train")) {
    const auto rel = fs::relative(e.path(), dir / "a");
    if (clip.empty() || rel < clip) clip = rel;
  }
  ASSERT_FALSE(clip.empty());
  EXPECT_EQ(grhd::testing::read_bytes(dir / "a" / clip), grhd::testing::read_bytes(dir / "b" / clip));
  EXPECT_NE(grhd::testing::read_bytes(dir / "a" / clip), grhd::testing::read_bytes(dir / "c" / clip));
  // 2 sections x (8 + 2 train, 2 domains x (3 + 3) test).
  EXPECT_NE(a.output.find("wrote 44 clips"), std::string::npos) << a.output;
}

TEST(Cli, SynthUnwritableOutput) {
  TempDir dir("blocked");
  write_file(dir / "blocker", "x");
  const auto r = run("synth --seed 1 --out " + q(dir / "blocker" / "corpus"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("blocker"), std::string::npos) << r.output;
}

TEST_F(Pipeline, TrainWritesLogAndCheckpoint) {
  const auto r = train("--epochs 5 --seed 7", dir / "m.ckpt");
  ASSERT_EQ(r.status, 0) << r.output;
  const auto log = lines(read_text(dir / "m.ckpt.loss.csv"));
  ASSERT_EQ(log.size(), 6u);
  EXPECT_EQ(log[0], "epoch,lr,lambda,l_rev,l_sec,l_att,l_total");
  EXPECT_EQ(log[5].rfind("5,", 0), 0u);
  EXPECT_NE(r.output.find("config epochs=5\n"), std::string::npos);
  EXPECT_NE(r.output.find("config seed=7\n"), std::string::npos);
  EXPECT_NE(r.output.find("final epoch=5 "), std::string::npos);
  const auto ckpt = grhd::cli::load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(ckpt.meta_value("machine"), "ToyCar");
  EXPECT_EQ(ckpt.groups.num_sections(), 2u);
}

TEST_F(Pipeline, ZeroLossWeightsRejected) {
  const auto r = train("--epochs 1 --seed 7 --alpha 0 --beta 0 --gamma 0", dir / "m.ckpt");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("alpha, beta and gamma cannot all be zero"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "m.ckpt"));
}

TEST_F(Pipeline, UnknownMachineHasNoTrainingData) {
  const auto r = run("train --data " + q(corpus) + " --machine Valve --out " + q(dir / "v.ckpt") + " --seed 1");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("Valve"), std::string::npos);
}

TEST_F(Pipeline, EvalReportAndFullRangePauc) {
  ASSERT_EQ(train("--epochs 2 --seed 1", dir / "m.ckpt").status, 0);
  const auto r = run("eval --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "r.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("totals AUC-s="), std::string::npos);
  const auto csv = read_text(dir / "r.csv");
  EXPECT_EQ(csv.rfind("machine,section,domain,metric,value\n", 0), 0u);
  EXPECT_EQ(csv.find("nan"), std::string::npos) << csv;
  for (const char* cell : {"ToyCar,0,source,AUC,", "ToyCar,0,target,AUC,", "ToyCar,1,source,AUC,",
                           "ToyCar,1,target,AUC,", "ToyCar,0,all,pAUC,", "ToyCar,1,all,pAUC,", "ALL,ALL,all,HAUC,"}) {
    EXPECT_NE(csv.find(std::string("\n") + cell), std::string::npos) << cell;
  }

  // With p = 1 the pAUC cell is the AUC of both domains pooled, recomputed
  // here from NLS scores of the same checkpoint.
  const auto full = run("eval --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " +
                        q(dir / "p1.csv") + " --p 1.0");
  ASSERT_EQ(full.status, 0) << full.output;
  const auto p1 = read_text(dir / "p1.csv");
  const auto ckpt = grhd::cli::load_checkpoint(dir / "m.ckpt");
  std::vector<grhd::dataset::AudioClip> test;
  for (auto& c : grhd::dataset::load_machine_corpus(corpus, "ToyCar")) {
    if (c.metadata.split == grhd::dataset::Split::Test) test.push_back(std::move(c));
  }
  const auto features = grhd::model::prepare_features(test, grhd::cli::spectrogram_config_from(ckpt.spectrogram),
                                                      ckpt.stats);
  auto net = grhd::cli::restore_model<float>(ckpt);
  const auto scores =
      grhd::metrics::score_nls(grhd::model::infer(net, features).logits_sec, features.metadata, ckpt.groups);
  for (const int sec : {0, 1}) {
    std::vector<double> normal, anomaly;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (features.metadata[i].section_id != sec) continue;
      (features.metadata[i].condition == grhd::dataset::Condition::Anomaly ? anomaly : normal).push_back(scores[i]);
    }
    const double pooled = grhd::metrics::auc(normal, anomaly);
    EXPECT_NEAR(csv_value(p1, "ToyCar," + std::to_string(sec) + ",all,pAUC,"), 100.0 * pooled, 0.005 + 1e-9);
  }
  EXPECT_NE(run("eval --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "x.csv") +
                " --p 0").status,
            0);
  EXPECT_NE(run("eval --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "x.csv") +
                " --p 1.5").status,
            0);

  const auto knn = run("eval --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " +
                       q(dir / "k.csv") + " --scorer knn");
  ASSERT_EQ(knn.status, 0) << knn.output;
  EXPECT_NE(read_text(dir / "k.csv"), csv);
}

TEST_F(Pipeline, CorruptedCheckpointFails) {
  ASSERT_EQ(train("--epochs 1 --seed 1", dir / "m.ckpt").status, 0);
  auto bytes = grhd::testing::read_bytes(dir / "m.ckpt");
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(dir / "bad.ckpt", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  const auto r = run("eval --checkpoint " + q(dir / "bad.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "r.csv"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("checksum"), std::string::npos) << r.output;
  EXPECT_NE(run("embed --checkpoint " + q(dir / "bad.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "e.csv")).status,
            0);
}

TEST_F(Pipeline, EmbedRowsAndDeterminism) {
  ASSERT_EQ(train("--epochs 1 --seed 1", dir / "m.ckpt").status, 0);
  const auto a = run("embed --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "a.csv"));
  const auto b = run("embed --checkpoint " + q(dir / "m.ckpt") + " --data " + q(corpus) + " --out " + q(dir / "b.csv"));
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0);
  const auto text = read_text(dir / "a.csv");
  EXPECT_EQ(text, read_text(dir / "b.csv"));
  const auto rows = lines(text);
  ASSERT_EQ(rows.size(), 45u);  // header + 44 clips
  EXPECT_EQ(rows[0].rfind("clip_id,machine,section,domain,split,condition,z_rev_0,", 0), 0u);
  EXPECT_NE(rows[0].find(",z_rev_7,z_sec_0,"), std::string::npos);
  EXPECT_NE(rows[0].find(",z_sec_7,z_att_0,"), std::string::npos);
  EXPECT_EQ(rows[0].substr(rows[0].size() - 8), ",z_att_7");
  const auto columns = std::count(rows[0].begin(), rows[0].end(), ',');
  for (const auto& row : rows) EXPECT_EQ(std::count(row.begin(), row.end(), ','), columns);
}

TEST_F(Pipeline, TrainingIsRepeatable) {
  ASSERT_EQ(train("--epochs 3 --seed 4", dir / "a.ckpt").status, 0);
  ASSERT_EQ(train("--epochs 3 --seed 4", dir / "b.ckpt").status, 0);
  ASSERT_EQ(train("--epochs 3 --seed 5", dir / "c.ckpt").status, 0);
  EXPECT_EQ(grhd::testing::read_bytes(dir / "a.ckpt"), grhd::testing::read_bytes(dir / "b.ckpt"));
  EXPECT_EQ(read_text(dir / "a.ckpt.loss.csv"), read_text(dir / "b.ckpt.loss.csv"));
  EXPECT_NE(read_text(dir / "a.ckpt.loss.csv"), read_text(dir / "c.ckpt.loss.csv"));
}

TEST(Cli, GradcheckExitCodes) {
  const auto good = run("gradcheck --seed 0");
  EXPECT_EQ(good.status, 0) << good.output;
  EXPECT_EQ(good.output.rfind("check,block,probes,skipped,max_rel_err,status\n", 0), 0u);
  EXPECT_NE(good.output.find("\nsummary PASS failed=0 total="), std::string::npos);
  EXPECT_NE(good.output.find("\ngrad_reverse,"), std::string::npos);

  const auto bad = run("gradcheck --seed 0 --inject-grl-fault");
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.output.find("\nsummary FAIL failed="), std::string::npos);
}
