#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nemo/dataset.hpp"
#include "nemo/models.hpp"
#include "nemo/numerics.hpp"
#include "nemo/quantization.hpp"

namespace nemo {

/// One model per output bin plus Polyak-averaged target copies. Model k is
/// repeatedly updated on the data augmented with (query, bin k), so its
/// likelihood of bin k at the query approximates the k-th CNML numerator.
struct NmlEnsemble {
  QuantizationScheme scheme;
  std::vector<Model> models;
  std::vector<Model> targets;
  std::vector<AdamState> optimizers;
  /// Full-batch weight of the query point relative to the whole dataset;
  /// 1/N makes the query count as one extra data point.
  double query_weight = 0.0;
  /// Number of per-bin model updates performed so far.
  std::int64_t model_updates = 0;

  int K() const { return scheme.K; }
  /// Throws ConfigError unless there are exactly K models, K targets and K
  /// optimizer states sharing one architecture.
  void validate() const;
};

NmlEnsemble make_ensemble(const Model& prototype,
                          const QuantizationScheme& scheme,
                          double query_weight, AdamConfig adam);

struct TrainOptions {
  int epochs = 300;
  /// <= 0 or >= N means full batch.
  int minibatch_size = 32;
  double lr = 0.005;
};

/// Minibatch indices. Full batch (0..n-1 in order) when size <= 0 or >= n,
/// otherwise a uniform sample without replacement.
std::vector<std::size_t> sample_minibatch(std::size_t n, int size, Rng& rng);

/// Plain supervised training with Adam on the head's own loss. Returns the
/// mean training loss after the last epoch.
double fit_supervised(Model& model, const OfflineDataset& data,
                      std::span<const int> bins, const TrainOptions& options,
                      Rng& rng);

/// Mean training loss of `model` over the dataset.
double mean_loss(const Model& model, const OfflineDataset& data,
                 std::span<const int> bins);

/// Fits models[0] on the data, clones the fit into every bin, resets the
/// per-bin optimizer states and syncs targets. With zero epochs only the
/// targets are synced.
void pretrain(NmlEnsemble& ensemble, const OfflineDataset& data,
              std::span<const int> bins, const TrainOptions& options, Rng& rng);

/// One Adam step per bin k on the minibatch augmented with every query point
/// labelled k. The queries share a relative weight of query_weight * m (m =
/// minibatch size) against unit-weight minibatch rows. Gradients for all K
/// bins are computed before any update; a non-finite loss throws
/// NumericalError carrying the bin index and leaves the ensemble untouched.
void nml_inner_step(NmlEnsemble& ensemble, const OfflineDataset& data,
                    std::span<const int> bins,
                    std::span<const std::vector<double>> queries,
                    std::span<const std::size_t> minibatch);
void nml_inner_step(NmlEnsemble& ensemble, const OfflineDataset& data,
                    std::span<const int> bins, std::span<const double> query,
                    std::span<const std::size_t> minibatch);
/// As above, but bin k is augmented with its own query point
/// query_of_bin[k], at the full query weight.
void nml_inner_step_per_bin(NmlEnsemble& ensemble, const OfflineDataset& data,
                            std::span<const int> bins,
                            std::span<const std::vector<double>> query_of_bin,
                            std::span<const std::size_t> minibatch);

/// target <- tau * model + (1 - tau) * target, elementwise for every bin.
void target_update(NmlEnsemble& ensemble, double tau);

enum class PmfProvenance { kAmortized, kExactOracle };

struct CnmlPmf {
  std::vector<double> probs;
  PmfProvenance provenance = PmfProvenance::kAmortized;
  /// Sum of the unnormalized per-bin likelihoods.
  double normalizer = 0.0;
  /// Set when every numerator was zero and the uniform pmf was substituted.
  bool degenerate = false;

  double expectation(std::span<const double> g) const;
};

nlohmann::json to_json(const CnmlPmf& pmf);

/// p(k | x) proportional to the likelihood of bin k under model k.
CnmlPmf cnml_estimate(const NmlEnsemble& ensemble, std::span<const double> x,
                      bool use_targets = false);

/// Normalizes per-bin likelihoods into a CNML pmf.
CnmlPmf normalize_likelihoods(std::vector<double> numerators,
                              PmfProvenance provenance);

// ---------------------------------------------------------------------------
// Exact (brute-force) CNML for desk-scale instances.

/// What the per-bin fit maximizes: the head's own training loss (BCE for the
/// survival head, which is what the amortized updates follow), or the exact
/// log-likelihood of the pmf the CNML normalizes.
enum class FitObjective { kTrainingLoss, kLikelihood };
enum class OracleSolver { kGradient, kCoordinateSearch };

std::string to_string(FitObjective objective);
std::string to_string(OracleSolver solver);
FitObjective fit_objective_from_string(const std::string& s);
OracleSolver oracle_solver_from_string(const std::string& s);

struct OracleOptions {
  int restarts = 3;
  int max_iterations = 50000;
  /// Converged when the objective drops by less than `tolerance` over
  /// `window` iterations (gradient) or every coordinate step shrinks below
  /// `step_tolerance` (coordinate search).
  double tolerance = 1e-8;
  int window = 100;
  double step_tolerance = 1e-9;
  std::uint64_t seed = 0;
  OracleSolver solver = OracleSolver::kGradient;
  FitObjective objective = FitObjective::kTrainingLoss;
};

nlohmann::json to_json(const OracleOptions& options);
OracleOptions oracle_options_from_json(const nlohmann::json& j,
                                       const OracleOptions& defaults = {});

/// Best fit on D plus (x, bin) across restarts.
struct BinFit {
  int bin = 0;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  int best_restart = 0;
  /// pmf at the query under the fitted parameters.
  std::vector<double> pmf;
  std::vector<double> params;
};

struct OracleResult {
  CnmlPmf pmf;
  std::vector<BinFit> fits;

  bool converged() const;
  double normalizer() const { return pmf.normalizer; }
};

OracleResult exact_cnml_oracle(const OfflineDataset& data,
                               std::span<const double> x,
                               const QuantizationScheme& scheme,
                               const ModelConfig& model_config,
                               const OracleOptions& options);

/// Minimizes the augmented objective for one bin. Exposed for diagnostics and
/// for certifying the two solvers against each other.
BinFit fit_augmented(const OfflineDataset& data, std::span<const int> bins,
                     std::span<const double> x, int bin, int K,
                     const ModelConfig& model_config,
                     const OracleOptions& options);

/// Gamma(D, x) = log sum_k p(k | x, theta_hat(D + (x, k))).
double individual_regret(const OracleResult& oracle);
double individual_regret(const OfflineDataset& data, std::span<const double> x,
                         const QuantizationScheme& scheme,
                         const ModelConfig& model_config,
                         const OracleOptions& options);

/// |E_q[g] - E_{p(.|x, theta_hat(D + (x, y*)))}[g]|.
double functional_regret(const OracleResult& oracle, int y_star_bin,
                         std::span<const double> q, std::span<const double> g);

struct RegretReport {
  double gamma = 0.0;
  std::vector<double> functional_regrets;
  double max_functional_regret = 0.0;
  double g_max = 1.0;
  /// 2 * g_max * sqrt(max(gamma, 0) / 2).
  double bound = 0.0;

  bool bound_holds(double slack) const {
    return max_functional_regret <= bound + slack;
  }
};

/// Functional regret of the oracle CNML pmf for every adversarial label.
RegretReport regret_report(const OracleResult& oracle,
                           std::span<const double> g);
nlohmann::json to_json(const RegretReport& report);

struct PinskerReport {
  double expectation_gap = 0.0;  // |E_p[g] - E_q[g]|
  double total_variation = 0.0;
  double kl = 0.0;               // KL(p || q), +inf when unsupported
  double g_max = 0.0;
  double tv_bound = 0.0;         // 2 * g_max * TV
  double pinsker_bound = 0.0;    // sqrt(KL / 2)
  bool kl_infinite = false;
  bool expectation_ok = false;
  bool pinsker_ok = false;
};

/// Checks |E_p[g] - E_q[g]| <= 2 g_max TV(p, q) and TV(p, q) <= sqrt(KL/2).
/// g_max is max |g|.
PinskerReport pinsker_chain_check(std::span<const double> p,
                                  std::span<const double> q,
                                  std::span<const double> g);
nlohmann::json to_json(const PinskerReport& report);

double total_variation(std::span<const double> p, std::span<const double> q);
double kl_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace nemo
