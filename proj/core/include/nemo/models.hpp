#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "nemo/numerics.hpp"

namespace nemo {

enum class Head { kLogistic, kCategorical };

std::string to_string(Head head);
Head head_from_string(const std::string& s);

/// Architecture of a predictive model over K output bins.
struct ModelConfig {
  std::vector<int> hidden{64, 64};
  Head head = Head::kLogistic;
  /// Sharpness of the survival head: o[k] = sigmoid(s * (mu - (k+1)/K)).
  /// s = 1 is the plain unit-scale logistic; s = K spaces adjacent
  /// thresholds one logit apart.
  double head_scale = 1.0;
  /// When false the network sees no input, so the model is one fixed pmf.
  bool input_dependent = true;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j,
                                   const ModelConfig& defaults = {});

/// Clamp for log(o) and log(1 - o) in the binary cross entropy.
inline constexpr double kLogClampEps = 1e-12;

/// Survival vector to pmf: p(0) = 1 - o[1], p(k) = o[k] - o[k+1],
/// p(K-1) = o[K-1]. Mass below bin 0 is merged into bin 0.
std::vector<double> survival_to_pmf(std::span<const double> survival);

/// Scalar network mu(x) expanded into a length-K survival vector by offset
/// sigmoids, o[k] = sigmoid(s * (mu(x) - (k+1)/K)), trained with per-element
/// binary cross entropy against the cumulative label encoding.
class DiscretizedLogisticModel {
 public:
  DiscretizedLogisticModel(Mlp mlp, int K, double scale = 1.0);
  static DiscretizedLogisticModel random(int input_dim,
                                         const std::vector<int>& hidden, int K,
                                         double scale, Rng& rng);

  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }
  int K() const { return K_; }
  double scale() const { return scale_; }

  double mu(std::span<const double> x) const;
  std::vector<double> survival_from_mu(double mu) const;
  std::vector<double> survival(std::span<const double> x) const;
  std::vector<double> pmf(std::span<const double> x) const;
  /// (1/K) * sum_k o[k].
  double y_mean(std::span<const double> x) const;
  double y_mean_from_mu(double mu) const;
  /// d y_mean / d mu, strictly positive.
  double y_mean_slope(double mu) const;

  /// Mean BCE over the K elements. Adds weight * d loss / d theta into `grad`
  /// (skipped when `grad` is empty) and returns the unweighted loss.
  double loss_and_grad(std::span<const double> x, int bin,
                       std::span<double> grad, double weight = 1.0) const;
  double loss(std::span<const double> x, int bin) const;
  /// -log pmf(bin) and its parameter gradient, for exact likelihood fits.
  double nll_and_grad(std::span<const double> x, int bin,
                      std::span<double> grad, double weight = 1.0) const;

  /// The quantity inputs are optimized against: mu(x). Writes d mu / dx.
  double internal_value(std::span<const double> x,
                        std::span<double> input_grad) const;
  /// y_mean(x) and d y_mean / dx.
  double expected_score(std::span<const double> x,
                        std::span<double> input_grad) const;

 private:
  std::span<const double> feed(std::span<const double> x) const;
  double offset(int k) const { return static_cast<double>(k + 1) / K_; }
  void backprop_mu(std::span<const double> x, double upstream,
                   std::span<double> param_grad,
                   std::span<double> input_grad) const;

  Mlp mlp_;
  int K_;
  double scale_;
};

/// Network with K linear outputs and a softmax over bins, trained with
/// softmax cross entropy.
class CategoricalModel {
 public:
  CategoricalModel(Mlp mlp, int K);
  static CategoricalModel random(int input_dim, const std::vector<int>& hidden,
                                 int K, Rng& rng);

  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }
  int K() const { return K_; }

  std::vector<double> logits(std::span<const double> x) const;
  std::vector<double> pmf(std::span<const double> x) const;
  double loss_and_grad(std::span<const double> x, int bin,
                       std::span<double> grad, double weight = 1.0) const;
  double loss(std::span<const double> x, int bin) const;
  double nll_and_grad(std::span<const double> x, int bin,
                      std::span<double> grad, double weight = 1.0) const {
    return loss_and_grad(x, bin, grad, weight);
  }
  /// E_pmf[g] with g(k) = (k+1)/K; the categorical head has no scalar mu, so
  /// inputs are optimized against the expected score directly.
  double internal_value(std::span<const double> x,
                        std::span<double> input_grad) const {
    return expected_score(x, input_grad);
  }
  double expected_score(std::span<const double> x,
                        std::span<double> input_grad) const;

 private:
  std::span<const double> feed(std::span<const double> x) const;

  Mlp mlp_;
  int K_;
};

std::vector<double> softmax(std::span<const double> logits);

/// Either head behind one value type.
class Model {
 public:
  Model(DiscretizedLogisticModel m) : impl_(std::move(m)) {}
  Model(CategoricalModel m) : impl_(std::move(m)) {}

  static Model create(const ModelConfig& config, int input_dim, int K,
                      Rng& rng);

  Head head() const;
  int K() const;
  const Mlp& mlp() const;
  Mlp& mlp();
  std::span<double> params() { return mlp().params(); }
  std::span<const double> params() const { return mlp().params(); }
  std::size_t num_params() const { return mlp().num_params(); }

  std::vector<double> pmf(std::span<const double> x) const;
  double expected_score(std::span<const double> x) const;
  double expected_score(std::span<const double> x,
                        std::span<double> input_grad) const;
  double internal_value(std::span<const double> x,
                        std::span<double> input_grad) const;
  double loss_and_grad(std::span<const double> x, int bin,
                       std::span<double> grad, double weight = 1.0) const;
  double loss(std::span<const double> x, int bin) const;
  double nll_and_grad(std::span<const double> x, int bin,
                      std::span<double> grad, double weight = 1.0) const;

  const DiscretizedLogisticModel* as_logistic() const {
    return std::get_if<DiscretizedLogisticModel>(&impl_);
  }
  const CategoricalModel* as_categorical() const {
    return std::get_if<CategoricalModel>(&impl_);
  }

 private:
  std::variant<DiscretizedLogisticModel, CategoricalModel> impl_;
};

// Operation-level entry points.

std::vector<double> predict_survival(const DiscretizedLogisticModel& model,
                                     std::span<const double> x);
double y_mean(const DiscretizedLogisticModel& model, std::span<const double> x);
std::vector<double> induced_pmf(const DiscretizedLogisticModel& model,
                                std::span<const double> x);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossAndGrad bce_loss_and_grad(const DiscretizedLogisticModel& model,
                              std::span<const double> x, int bin);

struct CategoricalEvaluation {
  double loss = 0.0;
  std::vector<double> pmf;
  std::vector<double> grad;
};
CategoricalEvaluation categorical_loss_and_pmf(const CategoricalModel& model,
                                               std::span<const double> x,
                                               int bin);

/// Shannon entropy in nats.
double entropy(std::span<const double> pmf);

}  // namespace nemo
