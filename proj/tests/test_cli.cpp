/* Copyright 2026 The zsl-music Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zsl/cli.hpp"

namespace zsl {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "zsl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("zsl_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small corpus and encoder so the pipeline runs in seconds.
const std::vector<std::string> kSmallToy = {"--set", "toy.tracks_per_class=4", "--set", "toy.duration=1.5"};
const std::vector<std::string> kSmallModel = {"--set", "encoder.channels=4,6", "--set", "encoder.blocks=2",
                                              "--set", "encoder.joint_dim=8",  "--set", "train.epochs=2",
                                              "--set", "train.batch_size=8"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(RunConfig, UnknownKeyIsUsageError) {
  RunConfig c;
  EXPECT_THROW(c.set("train.learning_rat", "1"), UsageError);
  EXPECT_THROW(c.set_assignment("no equals sign"), UsageError);
  std::istringstream in("# comment\n\ntrain.epochs = 3\nbogus.key = 1\n");
  try {
    c.load(in, "cfg.txt");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:4"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, ValuesAreValidatedOnResolve) {
  RunConfig c;
  EXPECT_NO_THROW(c.resolve());
  c.set("train.margin", "2.5");
  EXPECT_THROW(c.resolve(), UsageError);
  c = RunConfig{};
  c.set("encoder.blocks", "3");
  EXPECT_THROW(c.resolve(), UsageError);
  c = RunConfig{};
  c.set("train.epochs", "three");
  EXPECT_THROW(c.resolve(), UsageError);
  c = RunConfig{};
  c.set("split.train", "0.9");
  EXPECT_THROW(c.resolve(), UsageError);
  c = RunConfig{};
  c.set("word.policy", "fuzzy");
  EXPECT_THROW(c.resolve(), UsageError);
}

TEST(RunConfig, DefaultsMatchModuleDefaults) {
  const auto r = RunConfig{}.resolve();
  EXPECT_EQ(r.dsp, DspConfig{});
  EXPECT_EQ(r.encoder, EncoderConfig{});
  EXPECT_EQ(r.train.margin, 0.4);
  EXPECT_EQ(r.train.negatives, 4u);
  EXPECT_EQ(r.train.epochs, 30u);
  EXPECT_EQ(r.toy.n_classes, 12u);
  EXPECT_EQ(r.split.train, 0.75);
  EXPECT_EQ(r.policy, ResolutionPolicy::strict);
  EXPECT_EQ(r.averaging, AucAveraging::macro);
}

TEST(RunConfig, DumpLoadRoundTrip) {
  RunConfig a;
  a.set("toy.amplitudes", "1,0.3");
  a.set("train.learning_rate", "0.0005");
  RunConfig b;
  std::istringstream in(a.dump());
  b.load(in);
  EXPECT_EQ(a.values(), b.values());
}

TEST(Cli, UnknownSubcommandPrintsUsageAndExits1) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("unknown subcommand 'frobnicate'"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("gradcheck"), std::string::npos);
  EXPECT_EQ(run({}).code, kExitUsage);
}

TEST(Cli, MissingRequiredFlagExits1) {
  const auto r = run({"train", "--manifest", "m.tsv"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--word-vectors"), std::string::npos) << r.err;
}

TEST(Cli, ThresholdOutsideCosineRangeExits1) {
  const auto r = run({"annotate", "--checkpoint", "x.ckpt", "--word-vectors", "w.txt", "--threshold", "1.5", "a.wav"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("cosine range"), std::string::npos) << r.err;
}

TEST(Cli, MissingFilesExit2) {
  const auto r = run({"train", "--manifest", "/nonexistent/m.tsv", "--word-vectors", "w.txt", "--checkpoint", "c"});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("manifest"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigValueExits1BeforeAnyWork) {
  const auto dir = scratch("badcfg");
  const auto r = run({"synth", "--out", (dir / "out").string(), "--set", "toy.jitter=2"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(fs::exists(dir / "out"));
  std::ofstream(dir / "cfg.txt") << "train.epochs = 1\nnot.a.key = 2\n";
  const auto r2 = run({"synth", "--out", (dir / "out").string(), "--config", (dir / "cfg.txt").string()});
  EXPECT_EQ(r2.code, kExitUsage);
  EXPECT_NE(r2.err.find("not.a.key"), std::string::npos) << r2.err;
}

TEST(Cli, GradcheckSeed7Passes) {
  const auto r = run({"gradcheck", "--seed", "7"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("encoder+projection+hinge"), std::string::npos);
}

TEST(Cli, GradcheckAboveToleranceExits3) {
  const auto r = run({"gradcheck", "--seeds", "1", "--tolerance", "1e-300"});
  EXPECT_EQ(r.code, kExitNumerical);
}

TEST(Cli, HelpOnEverySubcommandListsFlagsWithDefaults) {
  const std::map<std::string, std::vector<std::string>> expect = {
      {"synth", {"--out", "--wav", "--seed", "--config", "--set", "--deterministic", "--threads"}},
      {"train", {"--manifest", "--word-vectors", "--tags", "--checkpoint", "--split", "train"}},
      {"annotate", {"--checkpoint", "--threshold", "0.6", "--topk", "10", "--tags"}},
      {"retrieve", {"--query", "--topk", "10", "--manifest"}},
      {"evaluate", {"--protocol", "auc", "--split", "test", "--out", "--averaging"}},
      {"transfer", {"--protocol", "--tags", "--manifest"}},
      {"gradcheck", {"--seeds", "20", "--epsilon", "1e-05", "--tolerance", "0.0001"}},
  };
  for (const auto& [sub, needles] : expect) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, kExitOk) << sub;
    for (const auto& n : needles) EXPECT_NE(r.out.find(n), std::string::npos) << sub << " help lacks " << n;
  }
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  const auto dir = scratch("synth");
  for (const char* d : {"a", "b"}) {
    const auto r = run(cat({"synth", "--out", (dir / d).string(), "--seed", "5"}, kSmallToy));
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  for (const char* f : {"manifest.tsv", "words.txt", "seen_tags.txt", "unseen_tags.txt", "all_tags.txt", "config.txt"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_FALSE(slurp(dir / "a" / f).empty()) << f;
  }
  // The manifest header carries the effective config.
  EXPECT_NE(slurp(dir / "a" / "manifest.tsv").find("# toy.seed = 5"), std::string::npos);
  const auto other = run(cat({"synth", "--out", (dir / "c").string(), "--seed", "6"}, kSmallToy));
  ASSERT_EQ(other.code, kExitOk);
  EXPECT_NE(slurp(dir / "a" / "manifest.tsv"), slurp(dir / "c" / "manifest.tsv"));
}

TEST(Cli, SynthWavExportsAudioFiles) {
  const auto dir = scratch("wav");
  const auto r = run({"synth", "--out", dir.string(), "--wav", "--set", "toy.tracks_per_class=1", "--set",
                      "toy.duration=0.5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::ifstream in(dir / "manifest.tsv");
  const auto records = load_manifest(in);
  ASSERT_EQ(records.size(), 12u);
  for (const auto& rec : records) {
    ASSERT_FALSE(rec.synth);
    const auto sig = load_track_audio(rec, dir.string());
    EXPECT_EQ(sig.sample_rate, 22050);
    EXPECT_EQ(sig.samples.size(), 11025u);
  }
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("pipeline");
    const auto s = run(cat({"synth", "--out", dir_.string()}, kSmallToy));
    ASSERT_EQ(s.code, kExitOk) << s.err;
    for (const char* name : {"a.ckpt", "b.ckpt"}) {
      const auto t = run(cat({"train", "--manifest", path("manifest.tsv"), "--word-vectors", path("words.txt"),
                              "--tags", path("seen_tags.txt"), "--checkpoint", path(name), "--seed", "3",
                              "--threads", name[0] == 'a' ? "1" : "2"},
                             kSmallModel));
      ASSERT_EQ(t.code, kExitOk) << t.err;
      train_out_ = t.out;
    }
  }
  static std::string path(const std::string& f) { return (dir_ / f).string(); }
  static fs::path dir_;
  static std::string train_out_;
};
fs::path Pipeline::dir_;
std::string Pipeline::train_out_;

TEST_F(Pipeline, TrainPrintsEpochLossesAndIsDeterministic) {
  EXPECT_NE(train_out_.find("epoch 1/2 loss "), std::string::npos) << train_out_;
  EXPECT_NE(train_out_.find("epoch 2/2 loss "), std::string::npos);
  const auto a = slurp(dir_ / "a.ckpt");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b.ckpt"));
  const auto ckpt = load_checkpoint_file(path("a.ckpt"));
  EXPECT_EQ(ckpt.seed, 3u);
  EXPECT_EQ(ckpt.epochs_completed, 2u);
  EXPECT_EQ(ckpt.tag_vocab.size(), 10u);
  EXPECT_NE(ckpt.effective_config.find("train.seed = 3"), std::string::npos);
  EXPECT_NE(ckpt.effective_config.find("encoder.channels = 4,6"), std::string::npos);
}

TEST_F(Pipeline, AnnotateManifestTracks) {
  const auto r = run({"annotate", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--tags",
                      path("all_tags.txt"), "--manifest", path("manifest.tsv"), "--split", "test", "--topk", "3",
                      "--threshold", "-1", "--out", path("ann.txt")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# track\tselected\tranking");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    // Threshold -1 selects every candidate; three ranked labels follow.
    const auto tab1 = line.find('\t'), tab2 = line.rfind('\t');
    EXPECT_EQ(std::count(line.begin() + tab1, line.begin() + tab2, ','), 11) << line;
    EXPECT_EQ(std::count(line.begin() + tab2, line.end(), ':'), 3) << line;
  }
  EXPECT_GT(rows, 0u);
  const auto file = slurp(dir_ / "ann.txt");
  EXPECT_NE(file.find("# checkpoint "), std::string::npos);
  EXPECT_NE(file.find(r.out), std::string::npos);
}

TEST_F(Pipeline, AnnotateWavFile) {
  write_wav_file(path("tone.wav"), render_synth(parse_synth_spec("synth:f0=260;dur=1;sr=22050")), WavEncoding::pcm16);
  const auto r = run({"annotate", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"),
                      path("tone.wav")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find(path("tone.wav") + "\t"), std::string::npos);
}

TEST_F(Pipeline, RetrieveRanksTracks) {
  const auto r = run({"retrieve", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--manifest",
                      path("manifest.tsv"), "--query", "class_10", "--split", "test"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# rank\ttrack\tscore");
  std::size_t rank = 0;
  double prev = 2.0;
  while (std::getline(in, line)) {
    std::istringstream f(line);
    std::size_t k;
    std::string id;
    double score;
    f >> k >> id >> score;
    EXPECT_EQ(k, ++rank);
    EXPECT_LE(score, prev);
    prev = score;
  }
  EXPECT_EQ(rank, 10u);
  const auto bad = run({"retrieve", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"),
                        "--manifest", path("manifest.tsv"), "--query", "qzxv"});
  EXPECT_EQ(bad.code, kExitData);
}

TEST_F(Pipeline, EvaluateWritesJsonLinesWithProvenance) {
  const auto r = run({"evaluate", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--manifest",
                      path("manifest.tsv"), "--tags", path("seen_tags.txt"), "--out", path("eval.jsonl")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("tag_retrieval_auc (macro"), std::string::npos) << r.out;
  std::ifstream in(dir_ / "eval.jsonl");
  std::string line, last;
  std::size_t tags = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["record"] == "tag") ++tags;
    last = line;
  }
  EXPECT_EQ(tags, 10u);
  const auto agg = nlohmann::json::parse(last);
  EXPECT_EQ(agg["record"], "aggregate");
  EXPECT_FALSE(agg["zero_target_supervision"].get<bool>());
  EXPECT_FALSE(agg["evaluated_on_training_tracks"].get<bool>());
  const auto cfg = agg["effective_config"].get<std::string>();
  EXPECT_NE(cfg.find("[training]"), std::string::npos);
  EXPECT_NE(cfg.find("[evaluation]"), std::string::npos);

  const auto g = run({"evaluate", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--manifest",
                      path("manifest.tsv"), "--tags", path("seen_tags.txt"), "--averaging", "global"});
  ASSERT_EQ(g.code, kExitOk) << g.err;
  EXPECT_NE(g.out.find("(global"), std::string::npos);
}

TEST_F(Pipeline, EvaluateOnTrainingSplitIsFlagged) {
  const auto r = run({"evaluate", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--manifest",
                      path("manifest.tsv"), "--split", "train"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("used to train"), std::string::npos) << r.err;
}

TEST_F(Pipeline, TransferAccuracyOnUnseenClasses) {
  std::ofstream(dir_ / "unseen_manifest.tsv") << [&] {
    std::ifstream in(dir_ / "manifest.tsv");
    auto recs = load_manifest(in);
    std::vector<TrackRecord> keep;
    for (const auto& rec : recs) {
      if (rec.tags[0] == "class_10" || rec.tags[0] == "class_11") keep.push_back(rec);
    }
    std::ostringstream out;
    write_manifest(out, keep);
    return out.str();
  }();
  const auto r = run({"transfer", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"), "--manifest",
                      path("unseen_manifest.tsv"), "--tags", path("unseen_tags.txt"), "--protocol", "accuracy",
                      "--out", path("transfer.jsonl")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("genre_accuracy"), std::string::npos);
  const auto text = slurp(dir_ / "transfer.jsonl");
  EXPECT_NE(text.find("\"zero_target_supervision\":true"), std::string::npos) << text;
  const auto missing_tags = run({"transfer", "--checkpoint", path("a.ckpt"), "--word-vectors", path("words.txt"),
                                 "--manifest", path("unseen_manifest.tsv")});
  EXPECT_EQ(missing_tags.code, kExitUsage);
}

TEST_F(Pipeline, CorruptCheckpointExits2) {
  auto bytes = slurp(dir_ / "a.ckpt");
  std::ofstream(dir_ / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto r = run({"annotate", "--checkpoint", path("cut.ckpt"), "--word-vectors", path("words.txt"),
                      path("tone.wav")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("corrupt or truncated"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace zsl
