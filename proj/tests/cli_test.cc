#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "faemb/config.h"
#include "faemb/descriptor_io.h"

namespace faemb {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("faemb_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static RunResult Run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(FAEMB_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = Slurp(out);
    r.err = Slurp(err);
    return r;
  }

  // Small corpus settings shared by the pipeline tests.
  static std::string Small(double sigma) {
    std::ostringstream s;
    s << "--set synth.clusters=6 --set synth.per_cluster=4 --set synth.descriptors=40"
      << " --set synth.dim=6 --set synth.learning_images=24 --set synth.sigma=" << sigma
      << " --set coding.train_samples=600 --set whitening.samples=800 --n 4";
    return s.str();
  }

  // synth -> train-coding -> fit-agg -> aggregate -> index -> eval, in `sub`.
  static RunResult Pipeline(const std::string& sub, double sigma) {
    const fs::path d = dir_ / sub;
    const std::string common = Small(sigma) + " --set paths.model_dir=" + (d / "models").string();
    for (const std::string& step :
         {"synth --out-dir " + d.string(),
          "train-coding --train " + (d / "learning.faeb").string(),
          "fit-agg --train " + (d / "learning.faeb").string(),
          "aggregate --in " + (d / "database.faeb").string() + " --out " + (d / "sigs.famb").string(),
          "index --in " + (d / "sigs.famb").string() + " --out " + (d / "index.famb").string()}) {
      const auto r = Run(common + " " + step);
      if (r.status != 0) return r;
    }
    return Run(common + " eval --index " + (d / "index.famb").string() + " --queries " +
               (d / "sigs.famb").string() + " --gt " + (d / "ground_truth.txt").string());
  }

  static inline fs::path dir_;
};

TEST_F(CliTest, DumpDefaultsParsesBackToDefaults) {
  const auto r = Run("config --dump-defaults");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, PipelineConfig().Dump());
  EXPECT_EQ(ParseConfig(r.out).Dump(), r.out);
}

TEST_F(CliTest, ConfigReflectsFlagsAndFile) {
  const fs::path cfg = dir_ / "c.conf";
  WriteFileBytes(cfg.string(), "[coding]\nmu = 0.5\n[itq]\nbits = 64\n");
  const auto r = Run("--config " + cfg.string() + " --bits 128 --variant faemb --seed 9 config");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto parsed = ParseConfig(r.out);
  EXPECT_EQ(parsed.coding.mu, 0.5);
  EXPECT_EQ(parsed.itq.bits, 128);
  EXPECT_EQ(parsed.coding.variant, "faemb");
  EXPECT_EQ(parsed.coding.seed, 9u);
  EXPECT_EQ(parsed.synth.seed, 9u);
}

TEST_F(CliTest, HelpListsEveryFlagAndSubcommand) {
  const auto r = Run("--help");
  ASSERT_EQ(r.status, 0);
  for (const char* flag : {"--config", "--set", "--n", "--mu", "--variant", "--alpha", "--drop",
                           "--keep", "--bits", "--threads", "--seed"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
  for (const char* cmd : {"train-coding", "embed", "fit-agg", "aggregate", "fit-rn", "fit-itq",
                          "encode", "index", "search", "eval", "synth", "bench", "config"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, UnknownFlagAborts) {
  const auto r = Run("--frobnicate 3 config");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("\"status\":\"error\""), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(Run("").status, 0);
}

TEST_F(CliTest, ConfigErrorsAreListedTogether) {
  const auto r = Run("--n 1 --alpha 3 --set coding.bogus=1 --variant nope config");
  EXPECT_EQ(r.status, 2);
  for (const char* piece : {"coding.n", "aggregation.alpha", "coding.bogus", "coding.variant"}) {
    EXPECT_NE(r.err.find(piece), std::string::npos) << piece << " in " << r.err;
  }
  EXPECT_NE(r.err.find("4 problems"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalWithMissingGroundTruthNamesThePath) {
  const auto r = Run("eval --index " + (dir_ / "none.famb").string() + " --queries x --gt " +
                     (dir_ / "missing_gt.txt").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find((dir_ / "missing_gt.txt").string()), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("\"kind\":\"io\""), std::string::npos) << r.err;
}

double ParseMap(const std::string& out) {
  const auto pos = out.find("\nmAP\t");
  if (pos == std::string::npos) return -1;
  return std::stod(out.substr(pos + 5));
}

TEST_F(CliTest, ZeroNoisePipelineIsPerfect) {
  const auto r = Pipeline("sigma0", 0.0);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(ParseMap(r.out), 1.0) << r.out;
  // Logs go to stderr with a timestamp; tables go to stdout.
  const auto synth = Run(Small(0.0) + " synth --out-dir " + (dir_ / "sigma0_again").string());
  ASSERT_EQ(synth.status, 0);
  EXPECT_NE(synth.err.find(" [faemb] synthesizing"), std::string::npos) << synth.err;
  EXPECT_EQ(synth.err.find_first_of("0123456789"), 0u);
  EXPECT_EQ(synth.out.find("[faemb]"), std::string::npos);
  EXPECT_NE(synth.out.find("file\timages"), std::string::npos);
}

TEST_F(CliTest, OutputsAreByteIdenticalAcrossRuns) {
  ASSERT_EQ(Pipeline("run_a", 0.05).status, 0);
  ASSERT_EQ(Pipeline("run_b", 0.05).status, 0);
  for (const char* file : {"database.faeb", "learning.faeb", "ground_truth.txt", "models/coding.famb",
                           "models/aggregation.famb", "sigs.famb", "index.famb"}) {
    const auto a = Slurp(dir_ / "run_a" / file), b = Slurp(dir_ / "run_b" / file);
    EXPECT_FALSE(a.empty()) << file;
    EXPECT_EQ(a, b) << file;
  }
}

TEST_F(CliTest, BinaryBranchAndSearch) {
  ASSERT_EQ(Pipeline("binary", 0.05).status, 0);
  const fs::path d = dir_ / "binary";
  const std::string common = Small(0.05) + " --set paths.model_dir=" + (d / "models").string();
  const auto sigs = (d / "sigs.famb").string();
  ASSERT_EQ(Run(common + " aggregate --in " + (d / "learning.faeb").string() + " --out " +
                (d / "learn_sigs.famb").string())
                .status,
            0);
  for (const std::string& step :
       {"fit-itq --bits 16 --sigs " + (d / "learn_sigs.famb").string(),
        "encode --sigs " + sigs + " --out " + (d / "codes.famb").string(),
        "index --in " + (d / "codes.famb").string() + " --out " + (d / "bindex.famb").string(),
        "fit-rn --keep 8 --sigs " + (d / "learn_sigs.famb").string(),
        "embed --in " + (d / "database.faeb").string() + " --out " + (d / "emb.famb").string()}) {
    const auto r = Run(common + " " + step);
    ASSERT_EQ(r.status, 0) << step << ": " << r.err;
  }
  const auto eval = Run(common + " eval --index " + (d / "bindex.famb").string() + " --queries " +
                        (d / "codes.famb").string() + " --gt " + (d / "ground_truth.txt").string());
  ASSERT_EQ(eval.status, 0) << eval.err;
  EXPECT_GT(ParseMap(eval.out), 0.0);
  const auto search = Run("search --k 3 --index " + (d / "index.famb").string() + " --queries " + sigs);
  ASSERT_EQ(search.status, 0) << search.err;
  EXPECT_NE(search.out.find("c000_i00\t1\tc000_i00\t0"), std::string::npos) << search.out;
  const auto rn = Run(common + " aggregate --rn " + (d / "models" / "rn.famb").string() + " --in " +
                      (d / "database.faeb").string() + " --out " + (d / "rn_sigs.famb").string());
  EXPECT_EQ(rn.status, 0) << rn.err;
}

TEST_F(CliTest, BenchPrintsBothVariantsAndRatio) {
  const auto r = Run("--n 4 bench --dim 6 --count 200");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("\nfaemb\t"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\nffaemb\t"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("\nratio\t"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace faemb
