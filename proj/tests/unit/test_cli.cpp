#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nemo/cli.hpp"
#include "nemo/dataset.hpp"
#include "nemo/optimizer.hpp"

namespace nemo {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nemo");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nemo_cli_" + std::string(::testing::UnitTest::GetInstance()
                                          ->current_test_info()
                                          ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
    return path(name);
  }

  // Tiny config so a full run finishes in well under a second.
  std::string small_config(int T) const {
    return write("config.json", nlohmann::json{{"K", 8},
                                               {"M", 4},
                                               {"T", T},
                                               {"hidden", {8}},
                                               {"pretrain_epochs", 5},
                                               {"seed", 3}}
                                    .dump());
  }

  fs::path dir_;
};

TEST_F(CliTest, GenIsByteIdenticalAcrossInvocations) {
  const auto a = cli({"gen", "--task", "sin1d", "--n", "20", "--seed", "4"});
  const auto b = cli({"gen", "--task", "sin1d", "--n", "20", "--seed", "4"});
  const auto c = cli({"gen", "--task", "sin1d", "--n", "20", "--seed", "5"});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
  EXPECT_EQ(dataset_from_csv(a.out).size(), 20u);
}

TEST_F(CliTest, RunWithZeroIterationsReportsTheInitialBatch) {
  ASSERT_EQ(cli({"gen", "--task", "sin1d", "--n", "30", "--seed", "1", "--out",
                 path("d.csv"), "--task-out", path("task.json")})
                .code,
            kExitOk);
  const auto r = cli({"run", "--algo", "nemo", "--data", path("d.csv"),
                      "--config", small_config(0), "--task", path("task.json"),
                      "--out", path("r.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("r.json")));

  // Noise-free sine: truth at a data row equals its y, and best-init picks
  // the top-M rows.
  std::vector<double> y = load_dataset(path("d.csv")).y;
  std::sort(y.begin(), y.end(), std::greater<>());
  const std::vector<double> top(y.begin(), y.begin() + 4);
  const auto& pct = j["final_scores"]["truth_percentiles"];
  EXPECT_NEAR(pct["p100"].get<double>(), top[0], 1e-12);
  EXPECT_NEAR(pct["p50"].get<double>(), percentile(top, 50), 1e-12);
  EXPECT_EQ(j["model_updates"].get<int>(), 0);
  EXPECT_EQ(j["schema_version"].get<int>(), kSchemaVersion);
}

TEST_F(CliTest, RunIsByteIdenticalAcrossInvocations) {
  ASSERT_EQ(cli({"gen", "--task", "sin1d", "--n", "16", "--out", path("d.csv")})
                .code,
            kExitOk);
  const std::string cfg = small_config(3);
  for (const char* name : {"a", "b"}) {
    const auto r = cli({"run", "--algo", "nemo", "--data", path("d.csv"),
                        "--config", cfg, "--out", path(std::string(name) + ".json"),
                        "--trajectory", path(std::string(name) + ".csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(CliTest, UsageErrorsExitTwoWithJsonOnStderr) {
  const auto missing_arg = cli({"run", "--algo", "nemo"});
  EXPECT_EQ(missing_arg.code, kExitUsage);
  EXPECT_EQ(nlohmann::json::parse(missing_arg.err)["error"]["kind"], "usage");

  const auto missing_file =
      cli({"run", "--algo", "nemo", "--data", path("nope.csv")});
  EXPECT_EQ(missing_file.code, kExitUsage);
  EXPECT_EQ(nlohmann::json::parse(missing_file.err)["error"]["kind"], "usage");

  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"gen", "--task", "cube"}).code, kExitUsage);

  write("d.csv", "x0,y\n0,1\n1,2\n");
  const auto bad_config =
      cli({"run", "--algo", "nemo", "--data", path("d.csv"), "--config",
           write("bad.json", R"({"K": 8, "learning_rate": 1})")});
  EXPECT_EQ(bad_config.code, kExitUsage);
  EXPECT_EQ(nlohmann::json::parse(bad_config.err)["error"]["kind"], "config");
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  write("d.csv", "x0,y\n0,1\n1,oops\n");
  const auto r = cli({"run", "--algo", "forward", "--data", path("d.csv")});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["kind"], "parse");
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("oracle-check"), std::string::npos);
}

TEST_F(CliTest, OracleCheckReproducesGoldenFixture) {
  const fs::path fixtures = NEMO_FIXTURE_DIR;
  const auto r = cli({"oracle-check", "--data",
                      (fixtures / "cli" / "oracle_data.csv").string(),
                      "--config",
                      (fixtures / "cli" / "oracle_config.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  const auto golden =
      nlohmann::json::parse(slurp(fixtures / "golden_oracle.json"));
  const auto& expected = golden["instances"][0]["likelihood"]["queries"];
  const auto& got = report["queries"];
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got[i]["gamma"].get<double>(),
                expected[i]["gamma"].get<double>(), 1e-6);
    const auto p = got[i]["pmf"]["probs"].get<std::vector<double>>();
    const auto q = expected[i]["pmf"].get<std::vector<double>>();
    ASSERT_EQ(p.size(), q.size());
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-6);
    const double gamma = got[i]["gamma"].get<double>();
    EXPECT_NEAR(got[i]["regret"]["bound"].get<double>(),
                2.0 * std::sqrt(std::max(gamma, 0.0) / 2.0), 1e-12);
  }
  EXPECT_TRUE(report["summary"]["bound_holds"].get<bool>());
  EXPECT_TRUE(report["summary"]["converged"].get<bool>());
}

}  // namespace
}  // namespace nemo
