#include <gtest/gtest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "cli_app.hpp"
#include "featfuse/binary_io.hpp"
#include "featfuse/feature_io.hpp"
#include "featfuse/scene_io.hpp"
#include "test_util.hpp"

using namespace featfuse;
using namespace featfuse::cli;
namespace fs = std::filesystem;

namespace {

nlohmann::json ReadJson(const fs::path& p) { return nlohmann::json::parse(io::ReadText(p)); }

std::vector<std::string> SmallSynth(const fs::path& out) {
  return {"synth", "--out", out.string(), "--seed", "4", "--views", "4", "--objects", "3",
          "--width", "32", "--height", "24", "--focal", "28", "--dim", "16", "--catalog", "8"};
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(RunCli(std::vector<std::string>{}), kExitUsage);
  EXPECT_EQ(RunCli(std::vector<std::string>{"bogus"}), kExitUsage);
  EXPECT_EQ(RunCli(std::vector<std::string>{"fuse", "--mode", "point"}), kExitUsage);  // --scene missing
  EXPECT_EQ(RunCli(std::vector<std::string>{"synth", "--out", "/tmp/x", "--objects", "many"}), kExitUsage);
  EXPECT_EQ(RunCli(std::vector<std::string>{"--help"}), kExitOk);
}

TEST(Cli, IoAndValidationErrors) {
  featfuse::testing::TempDir dir("cli_err");
  EXPECT_EQ(RunCli(std::vector<std::string>{"fuse", "--scene", "/nonexistent/scene", "--out", dir.path().string()}),
            kExitIo);
  auto args = SmallSynth(dir.path() / "bad");
  args.push_back("--corruption");
  args.push_back("1.5");
  EXPECT_EQ(RunCli(args), kExitValidation);
  EXPECT_EQ(RunCli(std::vector<std::string>{"synth", "--out", (dir.path() / "c").string(), "--config",
                                            "/nonexistent/config.json"}),
            kExitIo);
}

TEST(Cli, SynthFuseGroundWritesArtifactsAndManifests) {
  featfuse::testing::TempDir dir("cli_flow");
  const fs::path scene = dir.path() / "scene";
  ASSERT_EQ(RunCli(SmallSynth(scene)), kExitOk);
  const nlohmann::json m = ReadJson(scene / kManifestName);
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["artifact_version"], kArtifactVersion);
  EXPECT_EQ(m["seed"], 4);
  EXPECT_TRUE(m.contains("wall_clock_seconds"));

  const fs::path fused = dir.path() / "fused";
  ASSERT_EQ(RunCli(std::vector<std::string>{"fuse", "--scene", scene.string(), "--out", fused.string()}), kExitOk);
  const FeatureCloud cloud = io::ReadFeatureCloud(fused / "fused.bin");
  EXPECT_EQ(io::ReadLabels(fused / "gt_labels.u16").size(), cloud.size());
  EXPECT_TRUE(fs::exists(fused / kManifestName));

  const int instance = io::LoadScene(scene).object_instance_ids.front();
  const fs::path ground = dir.path() / "ground";
  ASSERT_EQ(RunCli(std::vector<std::string>{"ground", "--cloud", (fused / "fused.bin").string(), "--scene",
                                            scene.string(), "--instance", std::to_string(instance), "--out",
                                            ground.string()}),
            kExitOk);
  EXPECT_EQ(io::ReadLabels(ground / "labels.u16").size(), cloud.size());
  EXPECT_TRUE(fs::exists(ground / "heatmap.ply"));
  const nlohmann::json report = ReadJson(ground / "ground_report.json");
  EXPECT_DOUBLE_EQ(report["threshold"].get<double>(), 0.95);

  const auto rho = io::ReadRawArray<float>(ground / "scores.f32", cloud.size());
  const fs::path ground_cos = dir.path() / "ground_cos";
  ASSERT_EQ(RunCli(std::vector<std::string>{"ground", "--cloud", (fused / "fused.bin").string(), "--scene",
                                            scene.string(), "--instance", std::to_string(instance),
                                            "--heatmap-score", "cosine", "--out", ground_cos.string()}),
            kExitOk);
  const auto cos = io::ReadRawArray<float>(ground_cos / "scores.f32", cloud.size());
  // Same decisions, different scores; cosines can be negative.
  EXPECT_EQ(io::ReadLabels(ground_cos / "labels.u16"), io::ReadLabels(ground / "labels.u16"));
  EXPECT_NE(rho, cos);
  EXPECT_EQ(RunCli(std::vector<std::string>{"ground", "--cloud", (fused / "fused.bin").string(), "--scene",
                                            scene.string(), "--instance", std::to_string(instance),
                                            "--heatmap-score", "logit", "--out", ground_cos.string()}),
            kExitValidation);

  // Unknown catalog instance is a validation failure.
  EXPECT_EQ(RunCli(std::vector<std::string>{"ground", "--cloud", (fused / "fused.bin").string(), "--scene",
                                            scene.string(), "--instance", "999", "--out", ground.string()}),
            kExitValidation);
}

TEST(Cli, PrecedenceCommandLineOverEnvironmentOverConfig) {
  featfuse::testing::TempDir dir("cli_prec");
  const fs::path cfg = dir.path() / "config.json";
  io::WriteText(cfg, R"({"synth": {"objects": 2, "views": 3}})");
  auto base = std::vector<std::string>{"synth", "--config", cfg.string(), "--width", "32", "--height", "24",
                                       "--focal", "28", "--dim", "16", "--catalog", "8"};
  auto run = [&](const std::string& tag, std::vector<std::string> extra) {
    auto args = base;
    args.push_back("--out");
    args.push_back((dir.path() / tag).string());
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(RunCli(args), kExitOk);
    return io::LoadScene(dir.path() / tag);
  };
  Scene s = run("file", {});
  EXPECT_EQ(s.num_objects, 2);
  EXPECT_EQ(s.views.size(), 3u);
  {
    ScopedEnv env("FEATFUSE_OBJECTS", "4");
    s = run("env", {});
    EXPECT_EQ(s.num_objects, 4);
    EXPECT_EQ(s.views.size(), 3u);  // untouched keys still come from the file
    s = run("cli", {"--objects", "5"});
    EXPECT_EQ(s.num_objects, 5);
  }
  const nlohmann::json m = ReadJson(dir.path() / "cli" / kManifestName);
  EXPECT_EQ(m["config"]["objects"], "5");
}

TEST(Cli, ClusterAndEval) {
  featfuse::testing::TempDir dir("cli_eval");
  const fs::path scene = dir.path() / "scene";
  ASSERT_EQ(RunCli(SmallSynth(scene)), kExitOk);
  const fs::path fused = dir.path() / "fused";
  ASSERT_EQ(RunCli(std::vector<std::string>{"fuse", "--scene", scene.string(), "--out", fused.string()}), kExitOk);
  const fs::path cl = dir.path() / "cluster";
  ASSERT_EQ(RunCli(std::vector<std::string>{"cluster", "--cloud", (fused / "fused.bin").string(), "--remove-table",
                                            "--out", cl.string()}),
            kExitOk);
  EXPECT_TRUE(fs::exists(cl / "instances.u16"));
  const fs::path ev = dir.path() / "eval";
  ASSERT_EQ(RunCli(std::vector<std::string>{"eval", "--task", "referring", "--pred", fused.string(), "--scene",
                                            scene.string(), "--out", ev.string()}),
            kExitOk);
  const nlohmann::json r = ReadJson(ev / "report.json");
  EXPECT_EQ(r["records"].size(), 3u);
  EXPECT_TRUE(fs::exists(ev / "summary.csv"));
}
