#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nemo/cnml.hpp"
#include "nemo/dataset.hpp"
#include "nemo/models.hpp"
#include "nemo/numerics.hpp"
#include "nemo/quantization.hpp"

namespace nemo {

inline constexpr int kSchemaVersion = 1;

enum class InitStrategy { kBest, kWorst, kRandom };
std::string to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& s);

struct NemoConfig {
  int K = 32;
  int M = 16;
  int T = 500;
  double lr_model = 0.005;
  double lr_input = 0.01;
  double tau = 0.05;
  int inner_steps = 1;
  /// Query weight relative to the whole dataset; unset means 1/N.
  std::optional<double> query_weight;
  InitStrategy init = InitStrategy::kBest;
  std::vector<int> hidden{64, 64};
  Head head = Head::kLogistic;
  /// Survival-head sharpness; unset means K.
  std::optional<double> head_scale;
  int minibatch_size = 32;
  int pretrain_epochs = 200;
  double pretrain_lr = 0.005;
  /// Use every candidate as an augmentation query in each inner step instead
  /// of one sampled candidate.
  bool all_candidates = false;
  int n_members = 32;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  ModelConfig model_config() const;
  double effective_query_weight(std::size_t n) const {
    return query_weight.value_or(1.0 / static_cast<double>(n));
  }
};

/// Missing fields take the defaults above; unknown fields are rejected.
NemoConfig nemo_config_from_json(const nlohmann::json& j);
/// Every field materialized, including resolved optional values for a
/// dataset of size n.
nlohmann::json to_json(const NemoConfig& config, std::size_t n);

struct CandidateBatch {
  int dim = 0;
  std::vector<std::vector<double>> x;
  std::vector<AdamState> optimizers;
  int iteration = 0;

  std::size_t size() const { return x.size(); }
};

/// best: top-M by y, worst: bottom-M (ties in dataset order); random: uniform
/// without replacement. With M > N every strategy samples rows uniformly with
/// replacement.
CandidateBatch init_candidates(const OfflineDataset& data, int M,
                               InitStrategy strategy, AdamConfig adam,
                               Rng& rng);

using Evaluator = std::function<double(std::span<const double>)>;

/// Nearest-rank percentile: the value at rank max(1, ceil(p/100 * n)) of the
/// ascending order. p = 100 is the maximum, p = 50 the lower median.
double percentile(std::span<const double> scores, double p);
std::vector<double> score_batch(const CandidateBatch& batch,
                                const Evaluator& evaluator,
                                std::span<const double> percentiles);

struct ScoreSummary {
  double mean = 0.0;
  double p50 = 0.0;
  double p100 = 0.0;
};
ScoreSummary summarize(std::span<const double> scores);

struct IterationRecord {
  int iteration = 0;
  /// Mean ascent objective over the batch.
  double objective = 0.0;
  ScoreSummary proxy;
  std::optional<ScoreSummary> truth;
};

struct RunEvent {
  int iteration = 0;
  int candidate = -1;
  std::string message;
};

struct RunResult {
  std::string algorithm;
  NemoConfig config;
  std::size_t dataset_size = 0;
  QuantizationScheme scheme;
  std::vector<IterationRecord> trajectory;
  CandidateBatch final_batch;
  std::vector<double> final_proxy;
  std::vector<double> final_truth;
  std::vector<RunEvent> events;
  std::int64_t model_updates = 0;
};

nlohmann::json to_json(const RunResult& result);
/// iteration, objective, proxy mean/p50/p100, truth mean/p50/p100 (empty
/// without a ground truth).
std::string trajectory_to_csv(const RunResult& result);

/// State of a NEMO run between iterations.
struct NemoState {
  NmlEnsemble ensemble;
  CandidateBatch batch;
  std::vector<int> bins;
  Rng rng;
};

/// Pretrained ensemble and initial batch, as run_nemo builds them.
NemoState nemo_setup(const NemoConfig& config, const OfflineDataset& data);

/// inner_steps augmented model updates, one target update, then one Adam
/// ascent step per candidate on (1/K) sum_k internal value of target k.
void nemo_iteration(NemoState& state, const OfflineDataset& data,
                    const NemoConfig& config, std::vector<RunEvent>& events);

/// Mean over targets of the internal value at x, and its input gradient.
double nemo_objective(const NmlEnsemble& ensemble, std::span<const double> x,
                      std::span<double> grad);

RunResult run_nemo(const NemoConfig& config, const OfflineDataset& data,
                   const Evaluator& ground_truth = {});
RunResult run_forward_baseline(const NemoConfig& config,
                               const OfflineDataset& data,
                               const Evaluator& ground_truth = {});
RunResult run_ensemble_baseline(const NemoConfig& config,
                                const OfflineDataset& data, int n_members,
                                const Evaluator& ground_truth = {});

/// Bootstrap members: each trained on a resample of D from its own random
/// initialization.
std::vector<Model> train_bootstrap_ensemble(const NemoConfig& config,
                                            const OfflineDataset& data,
                                            const QuantizationScheme& scheme,
                                            int n_members);
/// Indices of the bootstrap resample for member i.
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed,
                                           int member);

}  // namespace nemo
