#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "quadfield/error.hpp"
#include "quadfield/pipeline.hpp"

using namespace quadfield;
namespace fs = std::filesystem;

namespace {

const std::string kData = QUADFIELD_DATA_DIR;
const std::string kCli = QUADFIELD_CLI;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("quadfield_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

PipelineConfig half_disc(const fs::path& out) {
  PipelineConfig c;
  c.domain = kData + "/half_disc.json";
  c.target_h = 0.5;
  c.output = out.string();
  c.formats = {};
  return c;
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
  try {
    config_from_json(nlohmann::json{{"order", 3}, {"oder", 4}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("oder"), std::string::npos);
  }
}

TEST(Config, WrongTypeRejected) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"order", "three"}}), Error);
}

TEST(Config, RoundTripAndDefaults) {
  PipelineConfig c;
  c.domain = "x.json";
  c.kappa = 7.5;
  c.split_blocks = {"0:2:3:1.5"};
  const PipelineConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.order, 3);
  EXPECT_DOUBLE_EQ(back.penalty, 10.0);
  EXPECT_DOUBLE_EQ(back.kappa, 7.5);
}

TEST(Config, Validation) {
  PipelineConfig c;
  c.domain = "x.json";
  EXPECT_NO_THROW(validate_config(c));
  auto bad = [&](auto mutate) {
    PipelineConfig b = c;
    mutate(b);
    EXPECT_THROW(validate_config(b), Error);
  };
  bad([](PipelineConfig& b) { b.scheme = "fem"; });
  bad([](PipelineConfig& b) { b.merge = "eager"; });
  bad([](PipelineConfig& b) { b.order = 0; });
  bad([](PipelineConfig& b) { b.split = 0; });
  bad([](PipelineConfig& b) { b.formats = {"png"}; });
  bad([](PipelineConfig& b) { b.split_blocks = {"1:2"}; });
  bad([](PipelineConfig& b) { b.split_blocks = {"1:2:x"}; });
  bad([](PipelineConfig& b) { b.domain.clear(); });
}

TEST(Manifest, Fnv1aVectors) {
  EXPECT_EQ(fnv1a64(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a64("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a64("foobar"), "85944171f73967e8");
}

TEST(Pipeline, FullRunWritesSixArtifacts) {
  const fs::path out = scratch("full");
  PipelineConfig c = half_disc(out);
  c.split = 4;
  const PipelineResult r = run_pipeline(c, Stage::Mesh, Stage::Split);
  ASSERT_EQ(r.exit_code, 0) << r.message;
  ASSERT_EQ(r.artifacts.size(), 6u);
  for (const auto& a : r.artifacts) EXPECT_EQ(fnv1a64(slurp(out / a.file)), a.fnv1a64);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["artifacts"].size(), 6u);
  EXPECT_EQ(manifest["status"]["exit_code"], 0);
}

TEST(Pipeline, StagedRunMatchesSingleShot) {
  const fs::path a = scratch("single"), b = scratch("staged");
  ASSERT_EQ(run_pipeline(half_disc(a), Stage::Mesh, Stage::Split).exit_code, 0);
  ASSERT_EQ(run_pipeline(half_disc(b), Stage::Mesh, Stage::Mesh).exit_code, 0);
  for (int s = 1; s <= 5; ++s) {
    const Stage stage = static_cast<Stage>(s);
    ASSERT_EQ(run_pipeline(half_disc(b), stage, stage).exit_code, 0) << to_string(stage);
  }
  for (const char* f : {"mesh.json", "field.json", "topology.json", "separatrices.json", "blocks.json", "quads.msh"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_EQ(nlohmann::json::parse(slurp(b / "manifest.json"))["artifacts"].size(), 6u);
}

TEST(Pipeline, ThreadsDoNotChangeArtifacts) {
  const fs::path a = scratch("t1"), b = scratch("t4");
  PipelineConfig ca = half_disc(a), cb = half_disc(b);
  ca.threads = 1;
  cb.threads = 4;
  ASSERT_EQ(run_pipeline(ca, Stage::Mesh, Stage::Split).exit_code, 0);
  ASSERT_EQ(run_pipeline(cb, Stage::Mesh, Stage::Split).exit_code, 0);
  for (const char* f : {"field.json", "topology.json", "blocks.json", "quads.msh"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Pipeline, MissingUpstreamArtifact) {
  const PipelineResult r = run_pipeline(half_disc(scratch("empty")), Stage::Solve, Stage::Solve);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.message.find("mesh.json"), std::string::npos);
}

TEST(Pipeline, ForcedCgOnDiscontinuousCornersIsRefused) {
  PipelineConfig c = half_disc(scratch("cg"));
  c.domain = kData + "/polygon_III.json";
  c.scheme = "cg";
  const PipelineResult r = run_pipeline(c, Stage::Mesh, Stage::Split);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.message.find("CG requires continuous BCs"), std::string::npos);
  EXPECT_TRUE(r.artifacts.empty());
}

TEST(Pipeline, StageErrorsCarryTheirExitCode) {
  PipelineConfig c = half_disc(scratch("cap"));
  c.max_steps = 2;
  const PipelineResult r = run_pipeline(c, Stage::Mesh, Stage::Split);
  EXPECT_EQ(r.exit_code, 5);
  EXPECT_EQ(r.failed_stage, "trace");
  const auto manifest = nlohmann::json::parse(slurp(fs::path(c.output) / "manifest.json"));
  EXPECT_EQ(manifest["status"]["exit_code"], 5);
  EXPECT_EQ(manifest["status"]["stage"], "trace");
}

TEST(Pipeline, AggressiveMergeOnNautilus) {
  std::map<std::string, std::size_t> count;
  for (const char* mode : {"normal", "aggressive"}) {
    PipelineConfig c = half_disc(scratch(std::string("nautilus_") + mode));
    c.domain = kData + "/nautilus.json";
    c.merge = mode;
    c.kappa = 5.0;
    ASSERT_EQ(run_pipeline(c, Stage::Mesh, Stage::Trace).exit_code, 0) << mode;
    count[mode] = nlohmann::json::parse(slurp(fs::path(c.output) / "separatrices.json"))["separatrices"].size();
  }
  EXPECT_LT(count["aggressive"], count["normal"]);
}

TEST(Cli, RunAndStages) {
  const fs::path out = scratch("cli");
  const std::string dom = kData + "/half_disc.json";
  EXPECT_EQ(shell(kCli + " run " + dom + " --order 3 --split 4 --output " + out.string()), 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(out / "manifest.json"))["artifacts"].size(), 6u);
  const std::string full = slurp(out / "field.json");
  EXPECT_EQ(shell(kCli + " solve " + dom + " --resume --output " + out.string()), 0);
  EXPECT_EQ(slurp(out / "field.json"), full);
  EXPECT_EQ(shell(kCli + " solve " + dom + " --resume --output " + scratch("cli_missing").string()), 2);
}

TEST(Cli, ConfigErrors) {
  const std::string dom = kData + "/polygon_III.json";
  EXPECT_EQ(shell(kCli + " run " + dom + " --scheme cg --output " + scratch("cli_cg").string()), 2);
  const fs::path cfg = scratch("cli_cfg");
  fs::create_directories(cfg);
  std::ofstream(cfg / "c.json") << R"({"order": 3, "tolerance": 1})";
  EXPECT_EQ(shell(kCli + " run " + dom + " --config " + (cfg / "c.json").string()), 2);
}

TEST(Cli, ConfigFileAndFlagOverride) {
  const fs::path dir = scratch("cli_override");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << nlohmann::json{{"domain", kData + "/half_disc.json"},
                                                  {"target_h", 0.5},
                                                  {"split", 2},
                                                  {"output", (dir / "out").string()}}
                                        .dump();
  EXPECT_EQ(shell(kCli + " run --config " + (dir / "c.json").string() + " --split 3 --formats msh"), 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["split"], 3);
  EXPECT_EQ(manifest["config"]["target_h"], 0.5);
}
