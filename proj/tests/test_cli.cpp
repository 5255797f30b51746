// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <json.hpp>
#include <sstream>

#include "aqtc/checkpoint.hpp"
#include "aqtc/cli.hpp"
#include "tempdir.hpp"

namespace aqtc {
namespace {

using nlohmann::json;
using test::TempDir;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::string> tiny_train(const std::filesystem::path& data, const std::filesystem::path& out,
                                    std::map<std::string, std::string> flags = {}) {
  const std::map<std::string, std::string> defaults{
      {"--d-h", "8"}, {"--heads", "2"}, {"--epochs", "2"}, {"--batch-size", "4"}, {"--lr", "0.05"}, {"--seed", "3"}};
  flags.insert(defaults.begin(), defaults.end());
  std::vector<std::string> args{"train", "--data", data.string(), "--out", out.string()};
  for (const auto& [k, v] : flags) args.insert(args.end(), {k, v});
  return args;
}

class CliData : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto r = cli({"synth", "--out", data().string(), "--n-samples", "12", "--d", "8", "--frames", "4",
                        "--sentences", "3", "--steps", "2", "--max-buttons", "24", "--seed", "5"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  std::filesystem::path data() const { return dir / "data"; }
  TempDir dir;
};

TEST_F(CliData, SynthWritesManifestReportAndResolvedConfig) {
  EXPECT_TRUE(std::filesystem::exists(data() / "manifest.json"));
  const auto report = read_json(data() / "generation_report.json");
  EXPECT_EQ(report.at("samples").get<int>(), 12);
  EXPECT_TRUE(report.at("oracle").contains("overall"));
  const auto resolved = read_json(data() / "resolved_config.json");
  EXPECT_EQ(resolved.at("synth").at("n_samples").get<int>(), 12);
  EXPECT_EQ(resolved.at("synth").at("seed").get<int>(), 5);
}

TEST_F(CliData, SynthIsByteDeterministic) {
  const auto again = dir / "again";
  const auto r = cli({"synth", "--out", again.string(), "--n-samples", "12", "--d", "8", "--frames", "4",
                      "--sentences", "3", "--steps", "2", "--max-buttons", "24", "--seed", "5"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_TRUE(test::same_tree(data(), again));
}

TEST_F(CliData, TrainIsByteDeterministicApartFromTiming) {
  const auto a = dir / "a", b = dir / "b", c = dir / "c";
  ASSERT_EQ(cli(tiny_train(data(), a)).code, kExitOk);
  ASSERT_EQ(cli(tiny_train(data(), b)).code, kExitOk);
  ASSERT_EQ(cli(tiny_train(data(), c, {{"--workers", "3"}})).code, kExitOk);
  for (const auto& p : {a, b, c}) {
    EXPECT_TRUE(std::filesystem::exists(p / "timing.jsonl"));
    std::filesystem::remove(p / "timing.jsonl");
  }
  EXPECT_TRUE(test::same_tree(a, b));
  // The worker count is echoed in the configs; everything it computes is not affected.
  EXPECT_TRUE(test::same_tree(a / "checkpoint" / "params", c / "checkpoint" / "params"));
  for (const char* f : {"train_log.jsonl", "validation_report.txt", "validation_report.json"})
    EXPECT_EQ(test::read_bytes(a / f), test::read_bytes(c / f)) << f;
}

TEST_F(CliData, TrainOutputs) {
  const auto out = dir / "run";
  const auto r = cli(tiny_train(data(), out));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"checkpoint/checkpoint.json", "train_log.jsonl", "timing.jsonl", "validation_report.txt",
                        "validation_report.json", "resolved_config.json"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  std::ifstream log(out / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    const auto rec = json::parse(line);
    EXPECT_EQ(rec.at("epoch").get<int>(), ++lines);
    EXPECT_FALSE(rec.contains("wall_seconds"));
  }
  EXPECT_EQ(lines, 2);
  const auto report = read_json(out / "validation_report.json");
  const auto& split = report.at("split");
  EXPECT_EQ(split.at("train").size() + split.at("validation").size(), 12u);
  EXPECT_NE(r.out.find("all samples"), std::string::npos);
}

TEST_F(CliData, ZeroLearningRateCheckpointIsTheSeededInit) {
  const auto out = dir / "run";
  ASSERT_EQ(cli(tiny_train(data(), out, {{"--lr", "0"}})).code, kExitOk);
  const auto info = read_checkpoint_info(out / "checkpoint");
  EXPECT_EQ(info.dtype, "f32");
  const auto loaded = load_model<float>(out / "checkpoint");
  const Model<float> fresh(info.model, 3);
  ASSERT_EQ(loaded->params().size(), fresh.params().size());
  for (std::size_t i = 0; i < fresh.params().size(); ++i)
    EXPECT_TRUE(loaded->params()[i].value == fresh.params()[i].value) << fresh.params()[i].name;
}

TEST_F(CliData, PrecisionSelectsCheckpointDtype) {
  const auto out = dir / "run";
  ASSERT_EQ(cli(tiny_train(data(), out, {{"--precision", "f64"}, {"--epochs", "1"}})).code, kExitOk);
  EXPECT_EQ(read_checkpoint_info(out / "checkpoint").dtype, "f64");
}

TEST_F(CliData, ConfigLayeringPrecedence) {
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"epochs": 5, "batch_size": 2, "heads": 4})";
  const auto out = dir / "run";
  auto args = tiny_train(data(), out);
  args.insert(args.end(), {"--config", cfg.string(), "--set", "epochs=4", "--set", "batch_size=3"});
  // Named flags in tiny_train (--epochs 2, --batch-size 4, --heads 2) win over both.
  ASSERT_EQ(cli(args).code, kExitOk);
  const auto resolved = read_json(out / "resolved_config.json").at("train");
  EXPECT_EQ(resolved.at("epochs").get<int>(), 2);
  EXPECT_EQ(resolved.at("batch_size").get<int>(), 4);
  EXPECT_EQ(resolved.at("heads").get<int>(), 2);

  const auto out2 = dir / "run2";
  std::ofstream(cfg) << R"({"epochs": 1, "d_s": 6})";
  const auto r = cli({"train", "--data", data().string(), "--out", out2.string(), "--config", cfg.string(), "--set",
                      "d_h=8", "--set", "heads=2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto resolved2 = read_json(out2 / "resolved_config.json").at("train");
  EXPECT_EQ(resolved2.at("epochs").get<int>(), 1);
  EXPECT_EQ(resolved2.at("d_s").get<int>(), 6);
  EXPECT_EQ(resolved2.at("d_h").get<int>(), 8);
  EXPECT_EQ(resolved2.at("learning_rate").get<double>(), 0.002);
}

TEST_F(CliData, EvalMatchesAcrossWorkerCounts) {
  const auto run = dir / "run";
  ASSERT_EQ(cli(tiny_train(data(), run)).code, kExitOk);
  const auto e1 = dir / "e1", e3 = dir / "e3";
  ASSERT_EQ(cli({"eval", "--checkpoint", (run / "checkpoint").string(), "--data", data().string(), "--out",
                 e1.string()})
                .code,
            kExitOk);
  const auto r = cli({"eval", "--checkpoint", (run / "checkpoint").string(), "--data", data().string(), "--out",
                      e3.string(), "--workers", "3"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(test::read_bytes(e1 / "report.json"), test::read_bytes(e3 / "report.json"));
  EXPECT_EQ(test::read_bytes(e1 / "report.txt"), test::read_bytes(e3 / "report.txt"));
  EXPECT_EQ(read_json(e1 / "report.json").at("overall").at("count").get<int>(), 24);
  EXPECT_NE(r.out.find("# of buttons"), std::string::npos);
}

TEST_F(CliData, EvalRejectsWidthMismatch) {
  const auto other = dir / "other";
  ASSERT_EQ(cli({"synth", "--out", other.string(), "--n-samples", "4", "--d", "6"}).code, kExitOk);
  const auto run = dir / "run";
  ASSERT_EQ(cli(tiny_train(data(), run)).code, kExitOk);
  auto r = cli({"eval", "--checkpoint", (run / "checkpoint").string(), "--data", other.string(), "--out",
                      (dir / "e").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("d_v=6"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "e"));
}

TEST_F(CliData, AblateComparesBothVariants) {
  const auto out = dir / "ablate";
  auto args = tiny_train(data(), out);
  args[0] = "ablate";
  const auto r = cli(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto bytes = test::read_bytes(out / "ablation.txt");
  const std::string table(bytes.begin(), bytes.end());
  EXPECT_NE(table.find("GRU"), std::string::npos);
  EXPECT_NE(table.find("MLP"), std::string::npos);
  EXPECT_EQ(read_checkpoint_info(out / "gru" / "checkpoint").model.step_variant, StepVariant::kGru);
  EXPECT_EQ(read_checkpoint_info(out / "mlp" / "checkpoint").model.step_variant, StepVariant::kMlp);
}

TEST(Cli, InvalidConfigWritesNothing) {
  TempDir dir;
  const auto out = dir / "never";
  auto r = cli({"synth", "--out", out.string(), "--set", "bucket_mix=[0.5,0.6,0.1]"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("bucket_mix"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(out));

  r = cli({"synth", "--out", out.string(), "--set", "colour=red"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("colour"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(out));

  r = cli({"synth", "--out", out.string(), "--set", "novalue"});
  EXPECT_EQ(r.code, kExitConfig);

  std::ofstream(dir / "broken.json") << "{ not json";
  r = cli({"synth", "--out", out.string(), "--config", (dir / "broken.json").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, TrainValidatesBeforeLoading) {
  TempDir dir;
  const auto out = dir / "never";
  auto r = cli({"train", "--data", (dir / "missing").string(), "--out", out.string(), "--heads", "5"});
  EXPECT_EQ(r.code, kExitConfig) << r.err;
  r = cli({"train", "--data", (dir / "missing").string(), "--out", out.string()});
  EXPECT_EQ(r.code, kExitData) << r.err;
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"fly"}).code, kExitConfig);
  EXPECT_EQ(cli({"synth"}).code, kExitConfig);  // --out is required
  EXPECT_EQ(cli({"synth", "--out", "x", "--n-samples"}).code, kExitConfig);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, GradcheckExitStatusFollowsTolerance) {
  TempDir dir;
  auto r = cli({"gradcheck", "--out", (dir / "a").string(), "--d-h", "8", "--set", "d_in=6", "--set",
                "coords_per_tensor=3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = read_json(dir / "a" / "gradcheck_report.json");
  EXPECT_TRUE(report.at("passed").get<bool>());
  EXPECT_LT(report.at("max_rel_error").get<double>(), 1e-4);
  EXPECT_NE(r.out.find("step_gru"), std::string::npos);

  r = cli({"gradcheck", "--out", (dir / "b").string(), "--d-h", "8", "--set", "d_in=6", "--set",
           "coords_per_tensor=3", "--tolerance", "1e-300"});
  EXPECT_EQ(r.code, kExitCheckFailed);

  r = cli({"gradcheck", "--out", (dir / "c").string(), "--heads", "3"});
  EXPECT_EQ(r.code, kExitConfig);
}

}  // namespace
}  // namespace aqtc
