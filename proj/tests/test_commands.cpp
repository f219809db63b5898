#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "oaxe/commands.hpp"

using namespace oaxe;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
[run]
seed = 3

[synth]
vocab_size = 12
len_min = 3
len_max = 6
train_size = 300
valid_size = 40
test_size = 40
num_modes = 2

[model]
embed_dim = 16
ffn_dim = 32
enc_layers = 1
dec_layers = 1
max_len = 8

[train]
pretrain_steps = 40
batch_tokens = 256
lr_peak = 0.003
warmup_steps = 10
finetune_epochs = 1
finetune_lr_peak = 0.001
finetune_warmup_steps = 5

[bench]
steps = 4
warm_in = 1
)";

class CommandsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("oaxe_cmd_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "tiny.ini";
    std::ofstream(config_) << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(root_); }

  // Runs the CLI and returns its exit status; output goes to root_/last.log.
  int cli(const std::string& args) const {
    const std::string cmd = std::string(OAXE_CLI_PATH) + " " + args + " > " + (root_ / "last.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string last_log() const { return read_file(root_ / "last.log"); }
  std::string cfg() const { return "--config " + config_.string(); }

  fs::path root_, config_;
};

}  // namespace

TEST_F(CommandsTest, GenerateWritesSplitsAndIsDeterministic) {
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "a").string() + " generate"), 0) << last_log();
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "b").string() + " generate"), 0) << last_log();
  for (const char* f : {kTrainFile, kValidFile, kTestFile, kMetaFile}) {
    EXPECT_EQ(read_file(root_ / "a" / f), read_file(root_ / "b" / f)) << f;
  }
  EXPECT_EQ(dataset_checksum(root_ / "a"), dataset_checksum(root_ / "b"));
  const auto ds = load_dataset(root_ / "a");
  EXPECT_EQ(ds.train.size(), 300u);
  EXPECT_EQ(ds.valid.size(), 40u);
  EXPECT_EQ(ds.test.size(), 40u);
  EXPECT_EQ(ds.synth.num_modes, 2);
  EXPECT_FALSE(fs::exists(root_ / "a" / ".oaxe.lock"));

  ASSERT_EQ(cli(cfg() + " --seed 4 --out " + (root_ / "c").string() + " generate"), 0);
  EXPECT_NE(dataset_checksum(root_ / "a"), dataset_checksum(root_ / "c"));
}

TEST_F(CommandsTest, ConfigErrorsExitWithTwoAndWriteNothing) {
  std::ofstream(root_ / "bad.ini") << "[synth]\nnum_modes = 2\nmode_probs = 0.6, 0.6\n";
  EXPECT_EQ(cli("--config " + (root_ / "bad.ini").string() + " --out " + (root_ / "d").string() + " generate"), 2);
  EXPECT_NE(last_log().find("sum"), std::string::npos) << last_log();
  EXPECT_FALSE(fs::exists(root_ / "d"));

  std::ofstream(root_ / "unknown.ini") << "[train]\nlearning_rate = 1\n";
  EXPECT_EQ(cli("--config " + (root_ / "unknown.ini").string() + " --out " + (root_ / "d").string() + " generate"), 2);
  EXPECT_EQ(cli("generate --bogus"), 2);
  EXPECT_EQ(cli(""), 2);
}

TEST_F(CommandsTest, OaxeWithoutPretrainExitsWithTwo) {
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "data").string() + " generate"), 0);
  EXPECT_EQ(cli(cfg() + " --out " + (root_ / "run").string() + " train --data " + (root_ / "data").string() +
                " --loss oaxe"),
            2);
  EXPECT_NE(last_log().find("pre-trained"), std::string::npos) << last_log();
  EXPECT_FALSE(fs::exists(root_ / "run" / kCheckpointFile));
}

TEST_F(CommandsTest, PretrainThenFineTunePipeline) {
  const std::string data = (root_ / "data").string();
  ASSERT_EQ(cli(cfg() + " --out " + data + " generate"), 0);
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "pre").string() + " train --data " + data), 0) << last_log();
  const fs::path pre_ckpt = root_ / "pre" / kCheckpointFile;
  ASSERT_TRUE(fs::exists(pre_ckpt));
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "ft").string() + " train --data " + data + " --loss oaxe --init " +
                pre_ckpt.string()),
            0)
      << last_log();

  const auto manifest = nlohmann::json::parse(read_file(root_ / "ft" / kManifestFile));
  EXPECT_EQ(manifest["loss_kind"], "oaxe");
  EXPECT_EQ(manifest["init_checkpoint_hash"], git_blob_hash(read_file(pre_ckpt)));
  EXPECT_EQ(manifest["checkpoint_hash"], git_blob_hash(read_file(root_ / "ft" / kCheckpointFile)));
  EXPECT_EQ(manifest["dataset_checksum"], dataset_checksum(data));
  EXPECT_EQ(parse_config(manifest["config"].get<std::string>()).train.loss_kind, LossKind::Oaxe);

  const std::string metrics = read_file(root_ / "ft" / kMetricsFile);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), kMetricCsvHeader);
  for (const auto& entry : fs::directory_iterator(root_ / "ft"))
    EXPECT_NE(entry.path().extension(), ".tmp") << entry.path();
}

TEST_F(CommandsTest, TrainAndEvalAreReproducible) {
  const std::string data = (root_ / "data").string();
  ASSERT_EQ(cli(cfg() + " --out " + data + " generate"), 0);
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "r1").string() + " train --data " + data), 0);
  ASSERT_EQ(cli(cfg() + " --out " + (root_ / "r2").string() + " train --data " + data), 0);
  EXPECT_EQ(read_file(root_ / "r1" / kCheckpointFile), read_file(root_ / "r2" / kCheckpointFile));
  EXPECT_EQ(read_file(root_ / "r1" / kMetricsFile), read_file(root_ / "r2" / kMetricsFile));

  const std::string csv = (root_ / "eval.csv").string();
  for (const char* run : {"r1", "r1", "r2"}) {
    ASSERT_EQ(cli("--out " + csv + " eval --checkpoint " + (root_ / run / kCheckpointFile).string() + " --data " + data),
              0)
        << last_log();
  }
  std::ifstream in(csv);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], kEvalCsvHeader);
  EXPECT_EQ(lines[1], lines[2]);
  EXPECT_EQ(lines[1], lines[3]);
  EXPECT_EQ(lines[1].substr(0, lines[1].find(',')), "xe-seed3");
}

TEST_F(CommandsTest, EvalDedupOnRepeatingModel) {
  const std::string data = (root_ / "data").string();
  ASSERT_EQ(cli(cfg() + " --out " + data + " generate"), 0);
  ModelConfig mc;
  mc.vocab_size = 12;
  mc.embed_dim = 8;
  mc.ffn_dim = 8;
  Checkpoint ck;
  ck.params = init_parameters<float>(mc);
  ck.params.out_w.setZero();
  ck.params.out_b.setZero();
  ck.params.out_b(0, 5) = 4.0f;
  ck.optimizer = fresh_optimizer_state(ck.params);
  const fs::path path = root_ / "repeat.bin";
  save_checkpoint(path, ck);

  const EvalReport raw = cmd_eval(path, data, std::nullopt, {false, "raw", "const"});
  EXPECT_GT(raw.repetition_rate, 0.5);
  EXPECT_EQ(raw.exact_match, 0.0);
  ASSERT_EQ(cli("eval --dedup --checkpoint " + path.string() + " --data " + data + " --run-id dd"), 0) << last_log();
  EXPECT_NE(last_log().find("dd,2,unknown,0.000000,0.000000,"), std::string::npos) << last_log();
  const EvalReport dedup = cmd_eval(path, data, std::nullopt, {true, "dedup", "const"});
  EXPECT_EQ(dedup.repetition_rate, 0.0);
  // A position-independent model has the same per-token cost at any length.
  EXPECT_NEAR(dedup.ncm, raw.ncm, 1e-9);
}

TEST_F(CommandsTest, CopyOracleScoresPerfectlyUnderEveryModeCount) {
  for (int k = 1; k <= kNumOrderingModes; ++k) {
    SynthConfig s;
    s.train_size = s.valid_size = s.test_size = 50;
    s.num_modes = k;
    s.mode_probs = default_mode_probs(k);
    const auto ds = generate_dataset(s);
    std::vector<Sequence> sources, outputs;
    for (const auto& ex : ds.test) {
      sources.push_back(ex.source);
      outputs.push_back(render_mode(ex.source, OrderingMode::Direct));
    }
    EXPECT_EQ(exact_match(outputs, sources, s), 1.0) << k;
  }
}

TEST_F(CommandsTest, EvalRejectsVocabularyMismatch) {
  const std::string data = (root_ / "data").string();
  ASSERT_EQ(cli(cfg() + " --out " + data + " generate"), 0);
  ModelConfig mc;
  mc.vocab_size = 20;
  mc.embed_dim = 8;
  mc.ffn_dim = 8;
  Checkpoint ck{init_parameters<float>(mc), {}};
  ck.optimizer = fresh_optimizer_state(ck.params);
  save_checkpoint(root_ / "wide.bin", ck);
  EXPECT_EQ(cli("eval --checkpoint " + (root_ / "wide.bin").string() + " --data " + data), 2);
  EXPECT_EQ(cli("eval --checkpoint " + (root_ / "missing.bin").string() + " --data " + data), 1);
}

TEST_F(CommandsTest, LockedOutputDirectoryIsRefused) {
  fs::create_directories(root_ / "busy");
  std::ofstream(root_ / "busy" / ".oaxe.lock") << "";
  EXPECT_NE(cli(cfg() + " --out " + (root_ / "busy").string() + " generate"), 0);
  EXPECT_NE(last_log().find("locked"), std::string::npos);
  EXPECT_FALSE(fs::exists(root_ / "busy" / kTrainFile));
}

TEST_F(CommandsTest, BenchPrintsRatio) {
  const std::string data = (root_ / "data").string();
  ASSERT_EQ(cli(cfg() + " --out " + data + " generate"), 0);
  ASSERT_EQ(cli(cfg() + " bench --data " + data), 0) << last_log();
  EXPECT_NE(last_log().find("steps,xe_mean_ms,oaxe_mean_ms,ratio\n4,"), std::string::npos) << last_log();
}
