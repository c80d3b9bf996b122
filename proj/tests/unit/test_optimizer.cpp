#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nemo/errors.hpp"
#include "nemo/optimizer.hpp"
#include "nemo/tasks.hpp"
#include "support.hpp"

namespace nemo {
namespace {

OfflineDataset three_rows() {
  return OfflineDataset(1, {10.0, 20.0, 30.0}, {1.0, 5.0, 2.0});
}

// Small, fast configuration for behavioral tests.
NemoConfig tiny_config() {
  NemoConfig c;
  c.K = 8;
  c.M = 4;
  c.T = 20;
  c.hidden = {8};
  c.pretrain_epochs = 20;
  c.minibatch_size = 8;
  c.n_members = 3;
  c.seed = 5;
  return c;
}

GeneratedTask small_sin() { return gen_sin1d(30, 0.0, {-3.0, 3.0}, 4); }

Evaluator truth_of(const GeneratedTask& g) {
  return [&g](std::span<const double> x) { return g.task.evaluate(x); };
}

TEST(InitCandidates, BestWorstAndReplacement) {
  const auto d = three_rows();
  Rng rng(0);
  auto best = init_candidates(d, 1, InitStrategy::kBest, {}, rng);
  EXPECT_EQ(best.x[0], std::vector<double>{20.0});
  auto worst = init_candidates(d, 1, InitStrategy::kWorst, {}, rng);
  EXPECT_EQ(worst.x[0], std::vector<double>{10.0});
  auto many = init_candidates(d, 5, InitStrategy::kBest, {}, rng);
  ASSERT_EQ(many.size(), 5u);
  for (const auto& x : many.x) {
    EXPECT_TRUE(x[0] == 10.0 || x[0] == 20.0 || x[0] == 30.0);
  }
  EXPECT_EQ(many.optimizers.size(), 5u);
  EXPECT_THROW(init_candidates(OfflineDataset{}, 1, InitStrategy::kBest, {}, rng),
               DataError);
}

TEST(InitCandidates, TiesKeepDatasetOrder) {
  const OfflineDataset d(1, {0.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 2.0, 1.0});
  Rng rng(0);
  const auto best = init_candidates(d, 2, InitStrategy::kBest, {}, rng);
  EXPECT_EQ(best.x[0][0], 1.0);
  EXPECT_EQ(best.x[1][0], 2.0);
  const auto worst = init_candidates(d, 2, InitStrategy::kWorst, {}, rng);
  EXPECT_EQ(worst.x[0][0], 0.0);
  EXPECT_EQ(worst.x[1][0], 3.0);
  const auto rnd = init_candidates(d, 4, InitStrategy::kRandom, {}, rng);
  std::vector<double> xs;
  for (const auto& x : rnd.x) xs.push_back(x[0]);
  std::sort(xs.begin(), xs.end());
  EXPECT_EQ(xs, (std::vector<double>{0.0, 1.0, 2.0, 3.0}));
}

TEST(Percentile, NearestRankExamples) {
  const std::vector<double> s{4.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(percentile(s, 100), 4.0);
  EXPECT_EQ(percentile(s, 50), 2.0);
  const std::vector<double> c(7, 2.5);
  for (double p : {1.0, 50.0, 90.0, 100.0}) EXPECT_EQ(percentile(c, p), 2.5);
  EXPECT_THROW(percentile(std::vector<double>{}, 50), DataError);
  EXPECT_THROW(percentile(s, 0.0), ConfigError);
}

TEST(Percentile, MatchesSortReference) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = test::random_vector(1 + trial % 128, rng, 10.0);
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(percentile(s, 100), sorted.back());
    const auto n = sorted.size();
    EXPECT_EQ(percentile(s, 50), sorted[(n + 1) / 2 - 1]);
  }
}

TEST(ScoreBatch, UsesEvaluator) {
  CandidateBatch b;
  b.dim = 1;
  b.x = {{1.0}, {2.0}, {3.0}, {4.0}};
  const std::vector<double> ps{100, 50};
  const auto out = score_batch(
      b, [](std::span<const double> x) { return x[0] * x[0]; }, ps);
  EXPECT_EQ(out, (std::vector<double>{16.0, 4.0}));
  EXPECT_THROW(score_batch(CandidateBatch{}, {}, ps), DataError);
}

TEST(NemoConfig, ValidationAndJson) {
  NemoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(nemo_config_from_json({{"K", 1}}), ConfigError);
  EXPECT_THROW(nemo_config_from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(nemo_config_from_json({{"M", "many"}}), ConfigError);
  const auto d = nemo_config_from_json(nlohmann::json::object());
  EXPECT_EQ(d.K, 32);
  EXPECT_EQ(d.M, 16);
  EXPECT_EQ(d.T, 500);
  EXPECT_EQ(d.lr_model, 0.005);
  EXPECT_EQ(d.lr_input, 0.01);
  EXPECT_EQ(d.tau, 0.05);
  EXPECT_EQ(d.inner_steps, 1);
  EXPECT_EQ(d.hidden, (std::vector<int>{64, 64}));
  const auto j = to_json(d, 50);
  EXPECT_EQ(j.at("query_weight").get<double>(), 1.0 / 50);
  EXPECT_EQ(j.at("head_scale").get<double>(), 32.0);
  // The materialized config reproduces itself.
  EXPECT_EQ(to_json(nemo_config_from_json(j), 50), j);
}

TEST(RunNemo, ZeroIterationsKeepsInitialization) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.T = 0;
  const auto r = run_nemo(c, g.data, truth_of(g));
  ASSERT_EQ(r.trajectory.size(), 1u);
  const auto order = g.data.order_by_score_desc();
  for (int m = 0; m < c.M; ++m) {
    EXPECT_EQ(r.final_batch.x[m][0], g.data.row(order[m])[0]);
    EXPECT_EQ(r.final_truth[m], g.data.y[order[m]]);
  }
  EXPECT_EQ(r.model_updates, 0);
}

TEST(RunNemo, TrajectoryLengthAndDeterminism) {
  const auto g = small_sin();
  const auto c = tiny_config();
  const auto a = run_nemo(c, g.data, truth_of(g));
  const auto b = run_nemo(c, g.data, truth_of(g));
  EXPECT_EQ(a.trajectory.size(), static_cast<std::size_t>(c.T + 1));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(trajectory_to_csv(a), trajectory_to_csv(b));
}

TEST(RunNemo, ModelUpdateCountHonorsInnerSteps) {
  const auto g = small_sin();
  for (int steps : {1, 3}) {
    auto c = tiny_config();
    c.T = 5;
    c.inner_steps = steps;
    EXPECT_EQ(run_nemo(c, g.data).model_updates,
              static_cast<std::int64_t>(c.T) * steps * c.K);
  }
}

TEST(RunNemo, ZeroInputRateFreezesBatchButModelsMove) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.lr_input = 0.0;
  NemoState st = nemo_setup(c, g.data);
  const auto x0 = st.batch.x;
  const auto m0 = st.ensemble.models;
  std::vector<RunEvent> events;
  for (int t = 0; t < 5; ++t) nemo_iteration(st, g.data, c, events);
  EXPECT_EQ(st.batch.x, x0);
  EXPECT_FALSE(st.ensemble.models[0].mlp() == m0[0].mlp());
}

TEST(RunNemo, ZeroModelRateEqualsSkippingModelUpdates) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.lr_model = 0.0;
  const auto r = run_nemo(c, g.data);
  // Same pretrained ensemble, no inner steps at all.
  NemoState st = nemo_setup(c, g.data);
  std::vector<RunEvent> events;
  for (int t = 0; t < c.T; ++t) {
    target_update(st.ensemble, c.tau);
    for (std::size_t m = 0; m < st.batch.size(); ++m) {
      std::vector<double> grad(1);
      nemo_objective(st.ensemble, st.batch.x[m], grad);
      grad[0] = -grad[0];
      adam_step(st.batch.optimizers[m], st.batch.x[m], grad);
    }
  }
  EXPECT_EQ(r.final_batch.x, st.batch.x);
}

TEST(RunNemo, ObjectiveRisesOnSin) {
  const auto g = gen_sin1d(50, 0.0, {-3.0, 3.0}, 1);
  auto c = tiny_config();
  c.K = 16;
  c.M = 8;
  c.T = 50;
  c.hidden = {16, 16};
  c.pretrain_epochs = 100;
  c.init = InitStrategy::kWorst;
  // Frozen models: plain ascent on a fixed smooth objective, so every step
  // may lose at most a little to Adam overshoot.
  auto frozen = c;
  frozen.lr_model = 0.0;
  const auto f = run_nemo(frozen, g.data);
  for (int t = 1; t <= c.T; ++t) {
    EXPECT_GE(f.trajectory[t].objective, f.trajectory[t - 1].objective - 1e-3)
        << "iteration " << t;
  }
  // With NML training the objective itself moves between steps; only the
  // overall trend is asserted.
  const auto r = run_nemo(c, g.data);
  EXPECT_GT(r.trajectory.back().objective, r.trajectory.front().objective);
}

TEST(RunNemo, CategoricalHeadRuns) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.head = Head::kCategorical;
  const auto r = run_nemo(c, g.data, truth_of(g));
  EXPECT_EQ(r.final_batch.size(), static_cast<std::size_t>(c.M));
  for (const auto& x : r.final_batch.x) EXPECT_TRUE(std::isfinite(x[0]));
}

TEST(RunNemo, AllCandidatesVariantRuns) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.all_candidates = true;
  const auto r = run_nemo(c, g.data);
  EXPECT_EQ(r.model_updates, static_cast<std::int64_t>(c.T) * c.K);
}

TEST(ForwardBaseline, ZeroInputRateKeepsBatch) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.lr_input = 0.0;
  const auto r = run_forward_baseline(c, g.data, truth_of(g));
  const auto order = g.data.order_by_score_desc();
  for (int m = 0; m < c.M; ++m) {
    EXPECT_EQ(r.final_batch.x[m][0], g.data.row(order[m])[0]);
  }
}

TEST(ForwardBaseline, LinearModelMovesAlongWeightVector) {
  // Linear ground truth with a linear model: every input step is parallel to
  // the model's weight vector, so the net displacement is too.
  const std::vector<double> w_true{0.6, -0.3, 0.2};
  OfflineDataset d;
  d.dim = 3;
  Rng rng(9);
  for (int i = 0; i < 400; ++i) {
    const auto x = test::random_vector(3, rng, 1.0);
    d.push_back(x, dot(w_true, x));
  }
  auto c = tiny_config();
  c.hidden = {};
  c.K = 16;
  c.T = 30;
  c.M = 3;
  c.pretrain_epochs = 60;
  c.minibatch_size = 32;
  const auto r = run_forward_baseline(c, d);
  // The fitted weight vector.
  const QuantizationScheme scheme = build_scheme(d.y, c.K);
  Rng model_rng = derive_rng(c.seed, 1);
  Model model = Model::create(c.model_config(), 3, c.K, model_rng);
  Rng pre_rng = derive_rng(c.seed, 2);
  fit_supervised(model, d, bin_all(d.y, scheme),
                 {c.pretrain_epochs, c.minibatch_size, c.pretrain_lr}, pre_rng);
  const auto w = model.mlp().weights(0);
  EXPECT_GT(dot(w, w_true) / (norm2(w) * norm2(w_true)), 0.99);
  Rng init_rng = derive_rng(c.seed, 0);
  const auto init = init_candidates(d, c.M, c.init, {}, init_rng);
  for (int m = 0; m < c.M; ++m) {
    std::vector<double> step(3);
    for (int i = 0; i < 3; ++i) step[i] = r.final_batch.x[m][i] - init.x[m][i];
    // Adam rescales coordinates, so compare signs and the dominant direction.
    EXPECT_GT(dot(step, w) / (norm2(step) * norm2(w)), 0.5);
  }
}

TEST(EnsembleBaseline, ReproducibleAndSingleMemberRuns) {
  const auto g = small_sin();
  const auto c = tiny_config();
  const auto a = run_ensemble_baseline(c, g.data, 3, truth_of(g));
  const auto b = run_ensemble_baseline(c, g.data, 3, truth_of(g));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(bootstrap_indices(30, 7, 2), bootstrap_indices(30, 7, 2));
  EXPECT_NE(bootstrap_indices(30, 7, 2), bootstrap_indices(30, 7, 3));
  const auto one = run_ensemble_baseline(c, g.data, 1, truth_of(g));
  EXPECT_EQ(one.trajectory.size(), a.trajectory.size());
}

TEST(RunResult, JsonCarriesMaterializedConfigAndScheme) {
  const auto g = small_sin();
  auto c = tiny_config();
  c.T = 2;
  const auto r = run_nemo(c, g.data, truth_of(g));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
  EXPECT_EQ(j.at("config").at("query_weight").get<double>(), 1.0 / 30);
  EXPECT_EQ(j.at("scheme").at("K"), c.K);
  EXPECT_EQ(j.at("trajectory").size(), 3u);
  EXPECT_TRUE(j.at("final_scores").contains("truth_percentiles"));
  const auto csv = trajectory_to_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

}  // namespace
}  // namespace nemo
