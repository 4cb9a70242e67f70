#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../tools/commands.hpp"
#include "../tools/svg_plot.hpp"
#include "diffmatte/checkpoint.hpp"
#include "diffmatte/image_io.hpp"

using namespace diffmatte;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "diffmatte");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    unsetenv("DIFFMATTE_SEED");
    root_ = fs::temp_directory_path() / "diffmatte_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run_cli({"gen-data", "--count", "3", "--size", "32", "--out", (root_ / "data").string(), "--seed", "4"})
                  .code,
              0);
    write(root_ / "train.cfg",
          "# tiny model\nepochs = 2\nbatch_size = 2\ncrop = 16\ndecoder.nd = 4\ndecoder.nf = 4\nseed = 3\n");
    ASSERT_EQ(run_cli({"train", "--config", (root_ / "train.cfg").string(), "--data", (root_ / "data").string(),
                       "--out", (root_ / "run")
                                    .string()})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST(CliHelpers, ResolveSeedPrecedence) {
  unsetenv("DIFFMATTE_SEED");
  EXPECT_EQ(cli::resolve_seed("", 7), 7u);
  setenv("DIFFMATTE_SEED", "12", 1);
  EXPECT_EQ(cli::resolve_seed("", 7), 12u);
  EXPECT_EQ(cli::resolve_seed("5", 7), 5u);
  setenv("DIFFMATTE_SEED", "x", 1);
  EXPECT_THROW(cli::resolve_seed("", 7), DomainError);
  unsetenv("DIFFMATTE_SEED");
  EXPECT_THROW(cli::resolve_seed("-1", 7), DomainError);
}

TEST(CliHelpers, ItemRngsDifferPerIndex) {
  auto a = cli::item_rng(1, 0), b = cli::item_rng(1, 1), c = cli::item_rng(1, 0);
  const auto va = a();
  EXPECT_NE(va, b());
  EXPECT_EQ(va, c());
}

TEST(CliHelpers, SweepKinds) {
  for (auto k : {cli::SweepKind::Schedule, cli::SweepKind::InputScale, cli::SweepKind::Nd, cli::SweepKind::Steps}) {
    EXPECT_EQ(cli::parse_sweep_kind(cli::to_string(k)), k);
    EXPECT_FALSE(cli::default_sweep_values(k).empty());
  }
  EXPECT_EQ(cli::default_sweep_values(cli::SweepKind::Steps), (std::vector<std::string>{"1", "2", "5", "10"}));
  EXPECT_THROW(cli::parse_sweep_kind("lr"), DomainError);
}

TEST(CliHelpers, CsvFormats) {
  cli::ConsistencyCurves c{{0.5, 0.25}, {0.4, 0.125}};
  EXPECT_EQ(cli::consistency_csv(c), "step,sad_self,sad_consistent\n1,0.500000,0.400000\n2,0.250000,0.125000\n");
  std::vector<cli::SweepRow> rows{{"1", true, "", {1, 2, 3, 4}}, {"2", false, "boom", {}}};
  const auto csv = cli::sweep_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "setting,sad,mse,grad,conn,status");
  EXPECT_NE(csv.find("1,1.000000,2.000000,3.000000,4.000000,ok"), std::string::npos);
}

TEST(CliHelpers, SvgIsDeterministicAndSkipsNaN) {
  const std::vector<cli::Series> s{{"a", {1.0, std::nan(""), 3.0}}, {"b<c", {2.0, 2.0, 2.0}}};
  const auto svg = cli::line_plot("t", "x", "y", {"1", "2", "3"}, s);
  EXPECT_EQ(svg, cli::line_plot("t", "x", "y", {"1", "2", "3"}, s));
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("b&lt;c"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(CliUsage, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"bogus"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"gen-data", "--out", "/tmp/x"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"--version"}).code, cli::kOk);
  EXPECT_EQ(run_cli({"train", "--config", "/nonexistent.cfg"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"infer", "--ckpt", "/nonexistent.dmck", "--image", "a.ppm", "--trimap", "b.pgm", "--out", "c.pgm"})
                .code,
            cli::kIo);
  EXPECT_EQ(run_cli({"gen-data", "--count", "1", "--size", "40", "--out", "/tmp/diffmatte_bad_size"}).code,
            cli::kValidation);
  fs::remove_all("/tmp/diffmatte_bad_size");
}

TEST(CliUsage, BinaryReportsMissingTrimap) {
  const std::string cmd = std::string(DIFFMATTE_BINARY) + " infer --ckpt x.dmck --image a.ppm --out o.pgm >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), cli::kUsage);
}

TEST_F(Cli, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(root_ / "run" / "final.dmck"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "latest.dmck"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "manifest.txt"));
  const auto log = slurp(root_ / "run" / "train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  const auto manifest = slurp(root_ / "run" / "manifest.txt");
  EXPECT_NE(manifest.find("seed = 3"), std::string::npos);
  EXPECT_EQ(manifest.find("finished = running"), std::string::npos);
}

TEST_F(Cli, ConfigErrors) {
  write(root_ / "typo.cfg", "epochz = 2\n");
  EXPECT_EQ(run_cli({"train", "--config", (root_ / "typo.cfg").string(), "--data", (root_ / "data").string(), "--out",
                     (root_ / "typo")
                         .string()})
                .code,
            cli::kValidation);
  write(root_ / "bad.cfg", "crop = 40\n");
  EXPECT_EQ(run_cli({"train", "--config", (root_ / "bad.cfg").string(), "--data", (root_ / "data").string(), "--out",
                     (root_ / "bad")
                         .string()})
                .code,
            cli::kValidation);
  EXPECT_EQ(run_cli({"train", "--config", (root_ / "train.cfg").string(), "--data", (root_ / "nodata").string(),
                     "--out", (root_ / "x")
                                  .string()})
                .code,
            cli::kIo);
}

TEST_F(Cli, InferWithOneAndTenSteps) {
  const auto ckpt = (root_ / "run" / "final.dmck").string();
  const auto img = (root_ / "data" / "image_0000.ppm").string();
  const auto tri = (root_ / "data" / "trimap_0000.pgm").string();
  for (const char* steps : {"1", "10"}) {
    const auto out = root_ / (std::string("single_") + steps + ".pgm16");
    const auto r = run_cli({"infer", "--ckpt", ckpt, "--image", img, "--trimap", tri, "--out", out.string(), "--steps",
                            steps, "--trace-dir", (root_ / (std::string("trace_") + steps)).string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto alpha = read_pgm(out);
    EXPECT_EQ(alpha.shape(), (Shape{1, 1, 32, 32}));
    std::size_t traced = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(root_ / (std::string("trace_") + steps))) ++traced;
    EXPECT_EQ(traced, static_cast<std::size_t>(std::stoi(steps)));
  }
  EXPECT_EQ(run_cli({"infer", "--ckpt", ckpt, "--image", img, "--trimap", tri, "--out", "x.pgm", "--steps", "0"}).code,
            cli::kValidation);
  EXPECT_EQ(run_cli({"infer", "--ckpt", ckpt, "--image", img, "--trimap", tri, "--out", "x.pgm", "--mode", "ddpm"})
                .code,
            cli::kValidation);
}

TEST_F(Cli, EvalOfGroundTruthAgainstItselfIsZero) {
  const auto data = (root_ / "data").string();
  const auto csv_path = root_ / "eval_self" / "report.csv";
  fs::create_directories(csv_path.parent_path());
  const auto r = run_cli({"eval", "--pred", data, "--gt", data, "--trimap", data, "--out", csv_path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(csv_path);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "name,sad,mse,grad,conn");
  EXPECT_NE(csv.find("0000,0.000000,0.000000,0.000000,0.000000"), std::string::npos);
  EXPECT_NE(csv.find("mean,0.000000,0.000000,0.000000,0.000000"), std::string::npos);
}

TEST_F(Cli, RepeatedCommandsAreByteIdentical) {
  const auto data = (root_ / "data").string();
  const auto ckpt = (root_ / "run" / "final.dmck").string();
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = root_ / ("rep" + std::to_string(rep));
    ASSERT_EQ(run_cli({"gen-data", "--count", "2", "--size", "32", "--out", (dir / "data").string(), "--seed", "9",
                       "--jobs", rep == 0 ? "1" : "2"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"train", "--config", (root_ / "train.cfg").string(), "--data", data, "--out",
                       (dir / "run").string()})
                  .code,
              0);
    ASSERT_EQ(run_cli({"infer", "--ckpt", ckpt, "--data", data, "--out-dir", (dir / "pred").string(), "--steps", "3",
                       "--seed", "2"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"eval", "--pred", (dir / "pred").string(), "--gt", data, "--trimap", data, "--out",
                       (dir / "eval.csv").string(), "--jobs", rep == 0 ? "1" : "3"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"sweep", "--kind", "steps", "--values", "1,2", "--ckpt", ckpt, "--data", data, "--out",
                       (dir / "sweep").string()})
                  .code,
              0);
    ASSERT_EQ(run_cli({"diagnose-consistent", "--ckpt", ckpt, "--data", data, "--steps", "3", "--out",
                       (dir / "diag").string()})
                  .code,
              0);
  }
  const auto a = root_ / "rep0", b = root_ / "rep1";
  for (const char* f : {"data/image_0001.ppm", "data/alpha_0001.pgm16", "data/trimap_0001.pgm", "run/final.dmck",
                        "run/latest.dmck", "run/train_log.csv", "pred/alpha_0002.pgm16", "eval.csv", "sweep/sweep.csv",
                        "sweep/sweep.svg", "diag/consistent.csv", "diag/consistent.svg"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "run/final.dmck"), slurp(root_ / "run/final.dmck"));
}

TEST_F(Cli, TrainingSweepMarksFailedRows) {
  const auto data = (root_ / "data").string();
  const auto r = run_cli({"sweep", "--kind", "nd", "--values", "2,0", "--config", (root_ / "train.cfg").string(),
                          "--epochs", "1", "--data", data, "--out", (root_ / "nd").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(root_ / "nd" / "sweep.csv");
  EXPECT_NE(csv.find("\n2,"), std::string::npos);
  EXPECT_NE(csv.find("\n0,"), std::string::npos);
  EXPECT_NE(csv.find("\n0,,,,,failed: "), std::string::npos);
}
