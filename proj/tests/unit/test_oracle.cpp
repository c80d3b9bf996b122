#include <gtest/gtest.h>

#include <cmath>

#include "nemo/cnml.hpp"
#include "nemo/errors.hpp"
#include "support.hpp"

namespace nemo {
namespace {

// Fixed-pmf class: one categorical distribution, independent of x.
ModelConfig fixed_pmf_class() {
  ModelConfig c;
  c.hidden = {};
  c.head = Head::kCategorical;
  c.input_dependent = false;
  return c;
}

ModelConfig linear_logistic(int K) {
  ModelConfig c;
  c.hidden = {};
  c.head_scale = K;
  return c;
}

OracleOptions fast_options(FitObjective objective, OracleSolver solver) {
  OracleOptions o;
  o.restarts = 2;
  o.max_iterations = 20000;
  o.objective = objective;
  o.solver = solver;
  return o;
}

OfflineDataset dataset_1d(const std::vector<double>& x,
                          const std::vector<double>& y) {
  OfflineDataset d;
  d.dim = 1;
  for (std::size_t i = 0; i < x.size(); ++i) d.push_back(std::span(&x[i], 1), y[i]);
  return d;
}

TEST(Oracle, EmptyDataWithFixedPmfClassIsUniform) {
  const int K = 4;
  const auto scheme = make_scheme(K, 0.0, 1.0);
  const std::vector<double> x{0.5};
  const auto r = exact_cnml_oracle(
      OfflineDataset{}, x, scheme, fixed_pmf_class(),
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient));
  for (double p : r.pmf.probs) EXPECT_NEAR(p, 0.25, 1e-3);
  EXPECT_EQ(r.pmf.provenance, PmfProvenance::kExactOracle);
  // Each augmented fit can put (nearly) all mass on its own label.
  EXPECT_NEAR(individual_regret(r), std::log(K), 1e-3);
}

// The fixed-pmf MLE on D + (x, k) is the empirical frequency, so
// p_k = (n_k + 1) / (N + K) and Gamma = log((N + K) / (N + 1)).
TEST(Oracle, FixedPmfClassMatchesClosedForm) {
  const int K = 4;
  const std::vector<double> y{0.0, 0.1, 0.1, 0.4, 0.6, 0.9, 1.0, 1.0, 0.3, 0.8};
  const std::vector<double> xs(y.size(), 0.0);
  const auto d = dataset_1d(xs, y);
  const auto scheme = build_scheme(d.y, K);
  const auto bins = bin_all(d.y, scheme);
  std::vector<int> counts(K, 0);
  for (int b : bins) ++counts[b];
  const std::vector<double> x{0.0};
  const auto r = exact_cnml_oracle(
      d, x, scheme, fixed_pmf_class(),
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient));
  const double N = static_cast<double>(d.size());
  for (int k = 0; k < K; ++k) {
    EXPECT_NEAR(r.pmf.probs[k], (counts[k] + 1) / (N + K), 1e-4);
  }
  EXPECT_NEAR(individual_regret(r), std::log((N + K) / (N + 1)), 1e-4);
}

TEST(Oracle, FixedPmfClassWithLargeDataHasNearZeroRegret) {
  const int K = 3;
  std::vector<double> y, xs;
  for (int i = 0; i < 600; ++i) {
    y.push_back(i % 3);
    xs.push_back(0.0);
  }
  const auto d = dataset_1d(xs, y);
  const std::vector<double> x{0.0};
  const auto r = exact_cnml_oracle(
      d, x, build_scheme(d.y, K), fixed_pmf_class(),
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient));
  EXPECT_NEAR(individual_regret(r), std::log(603.0 / 601.0), 1e-4);
  EXPECT_LT(individual_regret(r), 0.005);
}

TEST(Oracle, MirroredDataGivesMirroredPmf) {
  const int K = 4;
  const std::vector<double> x{-1.0, -0.2, 0.5, 1.3}, y{0.1, 0.4, 0.7, 0.2};
  std::vector<double> mx;
  for (double v : x) mx.push_back(-v);
  const auto d = dataset_1d(x, y), m = dataset_1d(mx, y);
  const auto scheme = build_scheme(d.y, K);
  const auto opts =
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient);
  for (double q : {0.0, 0.7, 2.0}) {
    const std::vector<double> xq{q}, xm{-q};
    const auto a = exact_cnml_oracle(d, xq, scheme, linear_logistic(K), opts);
    const auto b = exact_cnml_oracle(m, xm, scheme, linear_logistic(K), opts);
    EXPECT_LE(total_variation(a.pmf.probs, b.pmf.probs), 1e-4) << "q=" << q;
  }
}

TEST(Oracle, SolversAgreeOnLinearInstance) {
  const int K = 4;
  // Non-monotone labels: no augmented label set is separable by a linear mu,
  // so every per-bin MLE is finite.
  const auto d = dataset_1d({-1.0, -0.3, 0.4, 1.0}, {0.0, 0.7, 0.4, 1.0});
  const auto scheme = build_scheme(d.y, K);
  for (FitObjective obj : {FitObjective::kTrainingLoss, FitObjective::kLikelihood}) {
    const std::vector<double> x{0.5};
    const auto a = exact_cnml_oracle(d, x, scheme, linear_logistic(K),
                                     fast_options(obj, OracleSolver::kGradient));
    const auto b = exact_cnml_oracle(
        d, x, scheme, linear_logistic(K),
        fast_options(obj, OracleSolver::kCoordinateSearch));
    EXPECT_TRUE(a.converged());
    EXPECT_TRUE(b.converged());
    EXPECT_LE(total_variation(a.pmf.probs, b.pmf.probs), 0.01);
  }
}

TEST(Oracle, FunctionalRegretExamples) {
  const int K = 4;
  // Non-monotone labels: no augmented label set is separable by a linear mu,
  // so every per-bin MLE is finite.
  const auto d = dataset_1d({-1.0, -0.3, 0.4, 1.0}, {0.0, 0.7, 0.4, 1.0});
  const auto scheme = build_scheme(d.y, K);
  const std::vector<double> x{0.5};
  const auto r = exact_cnml_oracle(
      d, x, scheme, linear_logistic(K),
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient));
  const auto g = g_table(scheme);
  for (int k = 0; k < K; ++k) {
    EXPECT_EQ(functional_regret(r, k, r.fits[k].pmf, g), 0.0);
    const std::vector<double> flat(K, 0.7);
    EXPECT_NEAR(functional_regret(r, k, r.pmf.probs, flat), 0.0, 1e-15);
  }
  EXPECT_THROW(functional_regret(r, K, r.pmf.probs, g), IndexError);
}

TEST(Oracle, RegretBoundHoldsOnSmallInstances) {
  const int K = 4;
  Rng rng(77);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int inst = 0; inst < 3; ++inst) {
    std::vector<double> x, y;
    for (int i = 0; i < 5; ++i) {
      x.push_back(u(rng));
      y.push_back(std::sin(2 * x.back()) + 0.1 * u(rng));
    }
    const auto d = dataset_1d(x, y);
    const auto scheme = build_scheme(d.y, K);
    const auto g = g_table(scheme);
    for (double q : {-3.0, 0.0, 2.0}) {
      const std::vector<double> xq{q};
      const auto r = exact_cnml_oracle(
          d, xq, scheme, linear_logistic(K),
          fast_options(FitObjective::kLikelihood, OracleSolver::kGradient));
      const auto report = regret_report(r, g);
      EXPECT_GE(report.gamma, -1e-9);
      EXPECT_TRUE(report.bound_holds(1e-3))
          << report.max_functional_regret << " > " << report.bound;
    }
  }
}

TEST(Oracle, RegretGrowsAwayFromData) {
  const int K = 4;
  const auto d = dataset_1d({-1.0, -0.5, 0.0, 0.5, 1.0}, {-0.8, -0.5, 0.0, 0.5, 0.8});
  const auto scheme = build_scheme(d.y, K);
  const auto opts =
      fast_options(FitObjective::kLikelihood, OracleSolver::kGradient);
  const std::vector<double> in{0.1}, out{6.0};
  ModelConfig c = linear_logistic(K);
  c.hidden = {3};
  EXPECT_GT(individual_regret(d, out, scheme, c, opts),
            individual_regret(d, in, scheme, c, opts));
}

TEST(Oracle, OptionsJsonRoundTripAndValidation) {
  OracleOptions o;
  o.restarts = 5;
  o.solver = OracleSolver::kCoordinateSearch;
  o.objective = FitObjective::kLikelihood;
  const auto back = oracle_options_from_json(nlohmann::json::parse(to_json(o).dump()));
  EXPECT_EQ(back.restarts, 5);
  EXPECT_EQ(back.solver, OracleSolver::kCoordinateSearch);
  EXPECT_EQ(back.objective, FitObjective::kLikelihood);
  EXPECT_THROW(oracle_options_from_json({{"restarts", 0}}), ConfigError);
  EXPECT_THROW(oracle_options_from_json({{"solver", "newton"}}), ConfigError);
}

}  // namespace
}  // namespace nemo
