#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "nemo/dataset.hpp"
#include "nemo/errors.hpp"
#include "nemo/profile.hpp"
#include "nemo/tasks.hpp"
#include "support.hpp"

namespace nemo {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("nemo_test_" + name);
}

TEST(GenSin1d, NoiseFreeOutputsAreExactSine) {
  const auto g = gen_sin1d(100, 0.0, {-3.0, 3.0}, 7);
  ASSERT_EQ(g.data.size(), 100u);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const double x = g.data.row(i)[0];
    EXPECT_EQ(g.data.y[i], std::sin(x));
    EXPECT_TRUE(g.task.support.contains(x));
  }
  const std::vector<double> peak{std::numbers::pi / 2};
  EXPECT_EQ(g.task.evaluate(peak), 1.0);
  EXPECT_EQ(g.task.probe.lo, -6.0);
  EXPECT_EQ(g.task.probe.hi, 6.0);
}

TEST(GenSin1d, SeededGenerationIsReproducible) {
  EXPECT_EQ(gen_sin1d(40, 0.1, {-3, 3}, 3).data, gen_sin1d(40, 0.1, {-3, 3}, 3).data);
  EXPECT_FALSE(gen_sin1d(40, 0.1, {-3, 3}, 3).data ==
               gen_sin1d(40, 0.1, {-3, 3}, 4).data);
}

TEST(GenSin1d, RejectsEmptyInterval) {
  EXPECT_THROW(gen_sin1d(10, 0.0, {1.0, 1.0}, 0), ConfigError);
  EXPECT_THROW(gen_sin1d(0, 0.0, {-1.0, 1.0}, 0), ConfigError);
}

TEST(GenNarrowSupport, OptimumIsOffTheDataSlice) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = gen_narrow_support(4, 64, seed);
    EXPECT_EQ(g.task.evaluate(g.task.optimum), 0.0);
    for (double y : g.data.y) EXPECT_LT(y, 0.0);
    const double gap = g.task.metadata.at("gap_to_global_max").get<double>();
    EXPECT_GT(gap, 0.0);
    const double best = *std::max_element(g.data.y.begin(), g.data.y.end());
    EXPECT_EQ(g.task.metadata.at("best_data_y").get<double>(), best);
    // The slice keeps a fixed distance from x*, so no data point is closer.
    EXPECT_LE(best, -1.5 * 1.5 / 4 + 1e-12);
  }
  EXPECT_THROW(gen_narrow_support(1, 10, 0), ConfigError);
}

TEST(TaskMetadata, RebuildsEvaluators) {
  const auto n = gen_narrow_support(3, 10, 2);
  const auto rebuilt = task_from_metadata(n.task.metadata);
  for (std::size_t i = 0; i < n.data.size(); ++i) {
    EXPECT_EQ(rebuilt.evaluate(n.data.row(i)), n.data.y[i]);
  }
  const auto s = gen_sin1d(5, 0.0, {-2, 2}, 1);
  EXPECT_EQ(task_from_metadata(s.task.metadata).probe.hi, 4.0);
  EXPECT_THROW(task_from_metadata({{"task", "hopper"}}), ConfigError);
}

TEST(DatasetCsv, SaveLoadRoundTripIsExact) {
  const auto g = gen_narrow_support(3, 25, 9);
  const auto path = temp_path("roundtrip.csv");
  save_dataset(g.data, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(back, g.data);
  EXPECT_EQ(back.name, "nemo_test_roundtrip");
  fs::remove(path);
}

TEST(DatasetCsv, HandWrittenFixture) {
  const auto d = dataset_from_csv("x0,x1,y\n1.5,-2,0.25\n0,3e-3,1\n-7.125,4,-2.5\n");
  const OfflineDataset expect(2, {1.5, -2.0, 0.0, 0.003, -7.125, 4.0},
                              {0.25, 1.0, -2.5});
  EXPECT_EQ(d, expect);
}

TEST(DatasetCsv, HeaderOnlyIsEmptyDatasetError) {
  EXPECT_THROW(dataset_from_csv("x0,y\n"), DataError);
}

TEST(DatasetCsv, ParseErrorsCarryLineNumbers) {
  try {
    dataset_from_csv("x0,y\n1,2\n3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  try {
    dataset_from_csv("x0,y\n1,2\n3,4\nfoo,5\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(dataset_from_csv("x0,x1\n1,2\n"), ParseError);
  EXPECT_THROW(dataset_from_csv("x0,y\n1,nan\n"), ParseError);
}

TEST(DatasetCsv, MissingFileIsReported) {
  EXPECT_THROW(load_dataset(temp_path("does_not_exist.csv")), Error);
}

TEST(Dataset, ValidateAndOrdering) {
  OfflineDataset d(1, {0, 1, 2}, {3.0, 1.0, 3.0});
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.order_by_score_desc(), (std::vector<std::size_t>{0, 2, 1}));
  d.y.push_back(1.0);
  EXPECT_THROW(d.validate(), DataError);
  EXPECT_THROW(OfflineDataset{}.validate(), DataError);
}

TEST(WriteFileAtomic, ReplacesContentsWithoutLeftovers) {
  const auto path = temp_path("atomic.txt");
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  std::ifstream in(path);
  std::string s;
  std::getline(in, s);
  EXPECT_EQ(s, "second");
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
  fs::remove(path);
}

TEST(Profile, UniformAndPointMassEntropies) {
  const auto scheme = make_scheme(8, 0.0, 1.0);
  const auto grid = grid_1d(-1.0, 1.0, 5);
  const auto uniform = uncertainty_profile(
      [](std::span<const double>) { return std::vector<double>(8, 0.125); },
      grid, scheme);
  for (const auto& r : uniform) EXPECT_NEAR(r.entropy, std::log(8.0), 1e-14);
  const auto point = uncertainty_profile(
      [](std::span<const double>) {
        std::vector<double> p(8, 0.0);
        p[7] = 1.0;
        return p;
      },
      grid, scheme);
  for (const auto& r : point) {
    EXPECT_EQ(r.entropy, 0.0);
    EXPECT_EQ(r.y_mean, 1.0);
  }
  const auto csv = profile_to_csv(point);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "x0,entropy,y_mean,p0,p1,p2,p3,p4,p5,p6,p7");
}

TEST(Profile, GridParsingAndSplit) {
  const auto g = parse_grid("-6:6:5");
  ASSERT_EQ(g.size(), 5u);
  EXPECT_EQ(g.front()[0], -6.0);
  EXPECT_EQ(g[2][0], 0.0);
  EXPECT_EQ(g.back()[0], 6.0);
  EXPECT_THROW(parse_grid("1:2"), ConfigError);
  EXPECT_THROW(parse_grid("a:2:3"), ConfigError);
  std::vector<ProfileRow> rows(3);
  rows[0].x = {-5.0};
  rows[0].entropy = 2.0;
  rows[1].x = {0.0};
  rows[1].entropy = 0.5;
  rows[2].x = {5.0};
  rows[2].entropy = 3.0;
  const auto split = entropy_split(rows, -3.0, 3.0);
  EXPECT_EQ(split.inside, 0.5);
  EXPECT_EQ(split.outside, 2.5);
  EXPECT_EQ(split.gap(), 2.0);
}

}  // namespace
}  // namespace nemo
