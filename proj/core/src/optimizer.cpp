#include "nemo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nemo/errors.hpp"
#include "nemo/parallel.hpp"

namespace nemo {

namespace {

// Independent RNG streams of one run.
enum Stream : std::uint64_t {
  kInitStream = 0,
  kModelStream = 1,
  kPretrainStream = 2,
  kLoopStream = 3,
  kMemberStream = 1000,
};

std::vector<double> scores_of(const CandidateBatch& batch,
                              const Evaluator& f) {
  std::vector<double> s(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) s[i] = f(batch.x[i]);
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double a) { return std::isfinite(a); });
}

// One Adam ascent step per candidate on `objective`. A candidate that would
// become non-finite keeps its previous value and optimizer state.
template <class Objective>
double ascent_step(CandidateBatch& batch, const Objective& objective,
                   std::vector<RunEvent>& events) {
  const std::size_t M = batch.size();
  std::vector<double> values(M);
  std::vector<std::string> failures(M);
  parallel_for(M, [&](std::size_t m) {
    std::vector<double>& x = batch.x[m];
    std::vector<double> grad(x.size(), 0.0);
    values[m] = objective(x, grad);
    for (double& g : grad) g = -g;
    const std::vector<double> prev_x = x;
    const AdamState prev_state = batch.optimizers[m];
    try {
      adam_step(batch.optimizers[m], x, grad);
    } catch (const NumericalError& e) {
      failures[m] = e.what();
    }
    if (failures[m].empty() && !all_finite(x)) {
      failures[m] = "non-finite candidate after input step";
    }
    if (!failures[m].empty()) {
      x = prev_x;
      batch.optimizers[m] = prev_state;
    }
  });
  ++batch.iteration;
  for (std::size_t m = 0; m < M; ++m) {
    if (!failures[m].empty()) {
      events.push_back({batch.iteration, static_cast<int>(m),
                        "reset: " + failures[m]});
    }
  }
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(M);
}

IterationRecord make_record(int iteration, double objective,
                            std::span<const double> proxy,
                            const CandidateBatch& batch,
                            const Evaluator& truth) {
  IterationRecord r;
  r.iteration = iteration;
  r.objective = objective;
  r.proxy = summarize(proxy);
  if (truth) {
    const auto t = scores_of(batch, truth);
    r.truth = summarize(t);
  }
  return r;
}

void finish(RunResult& result, const CandidateBatch& batch,
            std::vector<double> proxy, const Evaluator& truth) {
  result.final_batch = batch;
  result.final_proxy = std::move(proxy);
  if (truth) result.final_truth = scores_of(batch, truth);
}

double pmf_expected_score(std::span<const double> pmf,
                          const QuantizationScheme& scheme) {
  double e = 0.0;
  for (int k = 0; k < scheme.K; ++k) e += pmf[k] * g_eval(k, scheme);
  return score_to_output(e, scheme);
}

std::vector<double> nemo_proxy(const NmlEnsemble& ensemble,
                               const CandidateBatch& batch) {
  std::vector<double> out(batch.size());
  const auto g = g_table(ensemble.scheme);
  parallel_for(batch.size(), [&](std::size_t m) {
    const CnmlPmf p = cnml_estimate(ensemble, batch.x[m]);
    out[m] = score_to_output(p.expectation(g), ensemble.scheme);
  });
  return out;
}

std::vector<double> members_proxy(std::span<const Model> members,
                                  const CandidateBatch& batch,
                                  const QuantizationScheme& scheme) {
  std::vector<double> out(batch.size());
  parallel_for(batch.size(), [&](std::size_t m) {
    double s = 0.0;
    for (const Model& model : members) {
      s += pmf_expected_score(model.pmf(batch.x[m]), scheme);
    }
    out[m] = s / static_cast<double>(members.size());
  });
  return out;
}

double members_objective(std::span<const Model> members,
                         std::span<const double> x, std::span<double> grad) {
  std::vector<double> g(grad.size());
  std::fill(grad.begin(), grad.end(), 0.0);
  double v = 0.0;
  for (const Model& model : members) {
    v += model.expected_score(x, g);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& a : grad) a *= inv;
  return v * inv;
}

double members_objective_value(std::span<const Model> members,
                               const CandidateBatch& batch) {
  std::vector<double> grad(batch.dim);
  double s = 0.0;
  for (const auto& x : batch.x) s += members_objective(members, x, grad);
  return s / static_cast<double>(batch.size());
}

TrainOptions pretrain_options(const NemoConfig& c) {
  return {.epochs = c.pretrain_epochs,
          .minibatch_size = c.minibatch_size,
          .lr = c.pretrain_lr};
}

// Shared driver for the forward and bootstrap baselines: the batch ascends the
// mean expected score of `members`.
RunResult run_members(const std::string& name, const NemoConfig& config,
                      const OfflineDataset& data,
                      const std::vector<Model>& members,
                      const QuantizationScheme& scheme,
                      const Evaluator& truth) {
  RunResult result;
  result.algorithm = name;
  result.config = config;
  result.dataset_size = data.size();
  result.scheme = scheme;
  Rng init_rng = derive_rng(config.seed, kInitStream);
  CandidateBatch batch = init_candidates(data, config.M, config.init,
                                         {.lr = config.lr_input}, init_rng);
  result.trajectory.push_back(
      make_record(0, members_objective_value(members, batch),
                  members_proxy(members, batch, scheme), batch, truth));
  const auto objective = [&](std::span<const double> x,
                             std::span<double> grad) {
    return members_objective(members, x, grad);
  };
  for (int t = 1; t <= config.T; ++t) {
    ascent_step(batch, objective, result.events);
    result.trajectory.push_back(
        make_record(t, members_objective_value(members, batch),
                    members_proxy(members, batch, scheme), batch, truth));
  }
  finish(result, batch, members_proxy(members, batch, scheme), truth);
  return result;
}

}  // namespace

std::string to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::kBest: return "best";
    case InitStrategy::kWorst: return "worst";
    case InitStrategy::kRandom: return "random";
  }
  return "best";
}

InitStrategy init_strategy_from_string(const std::string& s) {
  if (s == "best") return InitStrategy::kBest;
  if (s == "worst") return InitStrategy::kWorst;
  if (s == "random") return InitStrategy::kRandom;
  throw ConfigError("unknown init strategy '" + s + "'");
}

void NemoConfig::validate() const {
  if (K < 2) throw ConfigError("K must be >= 2");
  if (M < 1) throw ConfigError("M must be >= 1");
  if (T < 0) throw ConfigError("T must be >= 0");
  if (!(lr_model >= 0.0) || !(lr_input >= 0.0)) {
    throw ConfigError("learning rates must be >= 0");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
  if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (query_weight && !(*query_weight >= 0.0)) {
    throw ConfigError("query_weight must be >= 0");
  }
  if (head_scale && !(*head_scale > 0.0)) {
    throw ConfigError("head_scale must be > 0");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
  if (pretrain_epochs < 0) throw ConfigError("pretrain_epochs must be >= 0");
  if (!(pretrain_lr >= 0.0)) throw ConfigError("pretrain_lr must be >= 0");
  if (n_members < 1) throw ConfigError("n_members must be >= 1");
}

ModelConfig NemoConfig::model_config() const {
  ModelConfig m;
  m.hidden = hidden;
  m.head = head;
  m.head_scale = head_scale.value_or(static_cast<double>(K));
  return m;
}

CandidateBatch init_candidates(const OfflineDataset& data, int M,
                               InitStrategy strategy, AdamConfig adam,
                               Rng& rng) {
  if (data.empty()) throw DataError("init_candidates: empty dataset");
  if (M < 1) throw ConfigError("init_candidates: M must be >= 1");
  const std::size_t n = data.size();
  std::vector<std::size_t> pick;
  if (static_cast<std::size_t>(M) > n) {
    std::uniform_int_distribution<std::size_t> u(0, n - 1);
    for (int i = 0; i < M; ++i) pick.push_back(u(rng));
  } else if (strategy == InitStrategy::kRandom) {
    pick = sample_minibatch(n, M, rng);
  } else {
    auto order = data.order_by_score_desc();
    if (strategy == InitStrategy::kWorst) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return data.y[a] < data.y[b];
                       });
    }
    pick.assign(order.begin(), order.begin() + M);
  }
  CandidateBatch batch;
  batch.dim = data.dim;
  for (std::size_t i : pick) {
    const auto r = data.row(i);
    batch.x.emplace_back(r.begin(), r.end());
    batch.optimizers.emplace_back(data.dim, adam);
  }
  return batch;
}

double percentile(std::span<const double> scores, double p) {
  if (scores.empty()) throw DataError("percentile: empty batch");
  if (!(p > 0.0 && p <= 100.0)) {
    throw ConfigError("percentile: p must be in (0, 100]");
  }
  std::vector<double> s(scores.begin(), scores.end());
  const auto n = static_cast<double>(s.size());
  const auto rank = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(p / 100.0 * n)));
  std::nth_element(s.begin(), s.begin() + (rank - 1), s.end());
  return s[rank - 1];
}

std::vector<double> score_batch(const CandidateBatch& batch,
                                const Evaluator& evaluator,
                                std::span<const double> percentiles) {
  if (batch.x.empty()) throw DataError("score_batch: empty batch");
  const auto s = scores_of(batch, evaluator);
  std::vector<double> out;
  for (double p : percentiles) out.push_back(percentile(s, p));
  return out;
}

ScoreSummary summarize(std::span<const double> scores) {
  ScoreSummary s;
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
           static_cast<double>(scores.size());
  s.p50 = percentile(scores, 50.0);
  s.p100 = percentile(scores, 100.0);
  return s;
}

double nemo_objective(const NmlEnsemble& ensemble, std::span<const double> x,
                      std::span<double> grad) {
  std::vector<double> g(grad.size());
  std::fill(grad.begin(), grad.end(), 0.0);
  double v = 0.0;
  for (const Model& target : ensemble.targets) {
    v += target.internal_value(x, g);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(ensemble.targets.size());
  for (double& a : grad) a *= inv;
  return v * inv;
}

NemoState nemo_setup(const NemoConfig& config, const OfflineDataset& data) {
  config.validate();
  data.validate();
  const QuantizationScheme scheme = build_scheme(data.y, config.K);
  std::vector<int> bins = bin_all(data.y, scheme);
  Rng model_rng = derive_rng(config.seed, kModelStream);
  const Model prototype =
      Model::create(config.model_config(), data.dim, config.K, model_rng);
  NmlEnsemble ensemble =
      make_ensemble(prototype, scheme, config.effective_query_weight(data.size()),
                    {.lr = config.lr_model});
  Rng pre_rng = derive_rng(config.seed, kPretrainStream);
  pretrain(ensemble, data, bins, pretrain_options(config), pre_rng);
  Rng init_rng = derive_rng(config.seed, kInitStream);
  CandidateBatch batch = init_candidates(data, config.M, config.init,
                                         {.lr = config.lr_input}, init_rng);
  return {std::move(ensemble), std::move(batch), std::move(bins),
          derive_rng(config.seed, kLoopStream)};
}

void nemo_iteration(NemoState& state, const OfflineDataset& data,
                    const NemoConfig& config, std::vector<RunEvent>& events) {
  CandidateBatch& batch = state.batch;
  for (int s = 0; s < config.inner_steps; ++s) {
    const auto minibatch =
        sample_minibatch(data.size(), config.minibatch_size, state.rng);
    if (config.all_candidates) {
      nml_inner_step(state.ensemble, data, state.bins, batch.x, minibatch);
    } else {
      // Each bin draws its own query from the batch.
      std::uniform_int_distribution<std::size_t> pick(0, batch.size() - 1);
      std::vector<std::vector<double>> queries(config.K);
      for (auto& q : queries) q = batch.x[pick(state.rng)];
      nml_inner_step_per_bin(state.ensemble, data, state.bins, queries,
                             minibatch);
    }
  }
  target_update(state.ensemble, config.tau);
  ascent_step(
      batch,
      [&](std::span<const double> x, std::span<double> grad) {
        return nemo_objective(state.ensemble, x, grad);
      },
      events);
}

RunResult run_nemo(const NemoConfig& config, const OfflineDataset& data,
                   const Evaluator& ground_truth) {
  NemoState state = nemo_setup(config, data);
  RunResult result;
  result.algorithm = "nemo";
  result.config = config;
  result.dataset_size = data.size();
  result.scheme = state.ensemble.scheme;
  const auto objective_value = [&] {
    std::vector<double> grad(data.dim);
    double s = 0.0;
    for (const auto& x : state.batch.x) {
      s += nemo_objective(state.ensemble, x, grad);
    }
    return s / static_cast<double>(state.batch.size());
  };
  result.trajectory.push_back(make_record(0, objective_value(),
                                          nemo_proxy(state.ensemble, state.batch),
                                          state.batch, ground_truth));
  for (int t = 1; t <= config.T; ++t) {
    nemo_iteration(state, data, config, result.events);
    result.trajectory.push_back(
        make_record(t, objective_value(), nemo_proxy(state.ensemble, state.batch),
                    state.batch, ground_truth));
  }
  finish(result, state.batch, nemo_proxy(state.ensemble, state.batch),
         ground_truth);
  result.model_updates = state.ensemble.model_updates;
  return result;
}

RunResult run_forward_baseline(const NemoConfig& config,
                               const OfflineDataset& data,
                               const Evaluator& ground_truth) {
  config.validate();
  data.validate();
  const QuantizationScheme scheme = build_scheme(data.y, config.K);
  const std::vector<int> bins = bin_all(data.y, scheme);
  Rng model_rng = derive_rng(config.seed, kModelStream);
  Model model =
      Model::create(config.model_config(), data.dim, config.K, model_rng);
  Rng pre_rng = derive_rng(config.seed, kPretrainStream);
  if (config.pretrain_epochs > 0) {
    fit_supervised(model, data, bins, pretrain_options(config), pre_rng);
  }
  return run_members("forward", config, data, {model}, scheme, ground_truth);
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed,
                                           int member) {
  Rng rng = derive_rng(seed, kMemberStream + 2 * member);
  std::uniform_int_distribution<std::size_t> u(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = u(rng);
  return idx;
}

std::vector<Model> train_bootstrap_ensemble(const NemoConfig& config,
                                            const OfflineDataset& data,
                                            const QuantizationScheme& scheme,
                                            int n_members) {
  if (n_members < 1) throw ConfigError("n_members must be >= 1");
  const std::vector<int> bins = bin_all(data.y, scheme);
  std::vector<std::optional<Model>> slots(n_members);
  parallel_for(n_members, [&](std::size_t i) {
    const int member = static_cast<int>(i);
    OfflineDataset resampled;
    resampled.dim = data.dim;
    std::vector<int> rbins;
    for (std::size_t j : bootstrap_indices(data.size(), config.seed, member)) {
      resampled.push_back(data.row(j), data.y[j]);
      rbins.push_back(bins[j]);
    }
    Rng rng = derive_rng(config.seed, kMemberStream + 2 * member + 1);
    Model model = Model::create(config.model_config(), data.dim, config.K, rng);
    if (config.pretrain_epochs > 0) {
      fit_supervised(model, resampled, rbins, pretrain_options(config), rng);
    }
    slots[i] = std::move(model);
  });
  std::vector<Model> members;
  for (auto& s : slots) members.push_back(std::move(*s));
  return members;
}

RunResult run_ensemble_baseline(const NemoConfig& config,
                                const OfflineDataset& data, int n_members,
                                const Evaluator& ground_truth) {
  config.validate();
  data.validate();
  const QuantizationScheme scheme = build_scheme(data.y, config.K);
  const auto members =
      train_bootstrap_ensemble(config, data, scheme, n_members);
  RunResult r =
      run_members("ensemble", config, data, members, scheme, ground_truth);
  r.config.n_members = n_members;
  return r;
}

}  // namespace nemo
