#include "nemo/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nemo/errors.hpp"

namespace nemo {

namespace {

void check_bin(int bin, int K) {
  if (bin < 0 || bin >= K) {
    throw IndexError("model: bin " + std::to_string(bin) + " outside [0, " +
                     std::to_string(K) + ")");
  }
}

// -log(max(sigmoid(z), eps)) and its derivative in z.
// The value is capped at -log(eps) but the slope stays the exact logit-space
// derivative: a zero slope past the cap would freeze a saturated model.
inline double clamped_neg_log_sigmoid(double z, double* dz) {
  static const double cap = -std::log(kLogClampEps);
  *dz = -sigmoid(-z);
  return std::min(softplus(-z), cap);
}

inline double log_sigmoid(double z) { return -softplus(-z); }

}  // namespace

std::string to_string(Head head) {
  return head == Head::kLogistic ? "logistic" : "categorical";
}

Head head_from_string(const std::string& s) {
  if (s == "logistic") return Head::kLogistic;
  if (s == "categorical") return Head::kCategorical;
  throw ConfigError("unknown head '" + s + "' (expected logistic|categorical)");
}

nlohmann::json to_json(const ModelConfig& config) {
  return {{"hidden", config.hidden},
          {"head", to_string(config.head)},
          {"head_scale", config.head_scale},
          {"input_dependent", config.input_dependent}};
}

ModelConfig model_config_from_json(const nlohmann::json& j,
                                   const ModelConfig& defaults) {
  ModelConfig c = defaults;
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("head")) c.head = head_from_string(j.at("head").get<std::string>());
  if (j.contains("head_scale")) c.head_scale = j.at("head_scale").get<double>();
  if (j.contains("input_dependent")) {
    c.input_dependent = j.at("input_dependent").get<bool>();
  }
  if (!(c.head_scale > 0.0)) throw ConfigError("head_scale must be positive");
  return c;
}

std::vector<double> survival_to_pmf(std::span<const double> o) {
  const std::size_t K = o.size();
  if (K == 0) throw ShapeError("survival_to_pmf: empty survival vector");
  if (K == 1) return {1.0};
  std::vector<double> p(K);
  p[0] = 1.0 - o[1];
  for (std::size_t k = 1; k + 1 < K; ++k) p[k] = o[k] - o[k + 1];
  p[K - 1] = o[K - 1];
  return p;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

double entropy(std::span<const double> pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// ---------------------------------------------------------------------------
// DiscretizedLogisticModel

DiscretizedLogisticModel::DiscretizedLogisticModel(Mlp mlp, int K, double scale)
    : mlp_(std::move(mlp)), K_(K), scale_(scale) {
  if (K_ < 1) throw ConfigError("logistic model: K must be >= 1");
  if (mlp_.shape().output_dim != 1) {
    throw ShapeError("logistic model: network must have a scalar output");
  }
  if (!(scale_ > 0.0)) throw ConfigError("logistic model: scale must be > 0");
}

DiscretizedLogisticModel DiscretizedLogisticModel::random(
    int input_dim, const std::vector<int>& hidden, int K, double scale,
    Rng& rng) {
  return {Mlp::random({input_dim, hidden, 1}, rng), K, scale};
}

std::span<const double> DiscretizedLogisticModel::feed(
    std::span<const double> x) const {
  return mlp_.shape().input_dim == 0 ? std::span<const double>{} : x;
}

double DiscretizedLogisticModel::mu(std::span<const double> x) const {
  return mlp_forward(mlp_, feed(x));
}

std::vector<double> DiscretizedLogisticModel::survival_from_mu(double mu) const {
  std::vector<double> o(K_);
  for (int k = 0; k < K_; ++k) o[k] = sigmoid(scale_ * (mu - offset(k)));
  return o;
}

std::vector<double> DiscretizedLogisticModel::survival(
    std::span<const double> x) const {
  return survival_from_mu(mu(x));
}

std::vector<double> DiscretizedLogisticModel::pmf(
    std::span<const double> x) const {
  return survival_to_pmf(survival(x));
}

double DiscretizedLogisticModel::y_mean_from_mu(double mu) const {
  double s = 0.0;
  for (int k = 0; k < K_; ++k) s += sigmoid(scale_ * (mu - offset(k)));
  return s / K_;
}

double DiscretizedLogisticModel::y_mean(std::span<const double> x) const {
  return y_mean_from_mu(mu(x));
}

double DiscretizedLogisticModel::y_mean_slope(double mu) const {
  double s = 0.0;
  for (int k = 0; k < K_; ++k) {
    const double o = sigmoid(scale_ * (mu - offset(k)));
    s += o * (1.0 - o);
  }
  return scale_ * s / K_;
}

void DiscretizedLogisticModel::backprop_mu(std::span<const double> x,
                                           double upstream,
                                           std::span<double> param_grad,
                                           std::span<double> input_grad) const {
  Mlp::Tape tape;
  mlp_.forward(feed(x), tape);
  const double up[1] = {upstream};
  if (mlp_.shape().input_dim == 0) {
    std::fill(input_grad.begin(), input_grad.end(), 0.0);
    mlp_.backward(tape, up, param_grad, {});
  } else {
    mlp_.backward(tape, up, param_grad, input_grad);
  }
}

double DiscretizedLogisticModel::loss_and_grad(std::span<const double> x,
                                               int bin, std::span<double> grad,
                                               double weight) const {
  check_bin(bin, K_);
  Mlp::Tape tape;
  mlp_.forward(feed(x), tape);
  const double m = tape.output()[0];
  double loss = 0.0;
  double dmu = 0.0;
  for (int k = 0; k < K_; ++k) {
    const double z = scale_ * (m - offset(k));
    double dz = 0.0;
    if (k <= bin) {
      loss += clamped_neg_log_sigmoid(z, &dz);
    } else {
      // -log(1 - sigmoid(z)) = -log sigmoid(-z)
      loss += clamped_neg_log_sigmoid(-z, &dz);
      dz = -dz;
    }
    dmu += dz;
  }
  loss /= K_;
  if (!grad.empty()) {
    const double up[1] = {weight * scale_ * dmu / K_};
    mlp_.backward(tape, up, grad, {});
  }
  return loss;
}

double DiscretizedLogisticModel::loss(std::span<const double> x, int bin) const {
  return loss_and_grad(x, bin, {}, 0.0);
}

double DiscretizedLogisticModel::nll_and_grad(std::span<const double> x,
                                              int bin, std::span<double> grad,
                                              double weight) const {
  check_bin(bin, K_);
  if (K_ == 1) return 0.0;
  Mlp::Tape tape;
  mlp_.forward(feed(x), tape);
  const double m = tape.output()[0];
  // With a = z_bin and b = z_{bin+1}: sigmoid(a) - sigmoid(b) =
  // sigmoid(a) * sigmoid(-b) * (1 - exp(-(a - b))), and a - b = s / K.
  double log_p = 0.0;
  double dlog_p = 0.0;  // d log p / d mu
  if (bin == 0) {
    const double b = scale_ * (m - offset(1));
    log_p = log_sigmoid(-b);
    dlog_p = -scale_ * sigmoid(b);
  } else if (bin == K_ - 1) {
    const double a = scale_ * (m - offset(K_ - 1));
    log_p = log_sigmoid(a);
    dlog_p = scale_ * sigmoid(-a);
  } else {
    const double a = scale_ * (m - offset(bin));
    const double b = scale_ * (m - offset(bin + 1));
    log_p = log_sigmoid(a) + log_sigmoid(-b) + std::log(-std::expm1(b - a));
    dlog_p = scale_ * (sigmoid(-a) - sigmoid(b));
  }
  if (!grad.empty()) {
    const double up[1] = {-weight * dlog_p};
    mlp_.backward(tape, up, grad, {});
  }
  return -log_p;
}

double DiscretizedLogisticModel::internal_value(
    std::span<const double> x, std::span<double> input_grad) const {
  const double m = mu(x);
  if (!input_grad.empty()) backprop_mu(x, 1.0, {}, input_grad);
  return m;
}

double DiscretizedLogisticModel::expected_score(
    std::span<const double> x, std::span<double> input_grad) const {
  const double m = mu(x);
  if (!input_grad.empty()) backprop_mu(x, y_mean_slope(m), {}, input_grad);
  return y_mean_from_mu(m);
}

// ---------------------------------------------------------------------------
// CategoricalModel

CategoricalModel::CategoricalModel(Mlp mlp, int K)
    : mlp_(std::move(mlp)), K_(K) {
  if (K_ < 1) throw ConfigError("categorical model: K must be >= 1");
  if (mlp_.shape().output_dim != K_) {
    throw ShapeError("categorical model: network output width must equal K");
  }
}

CategoricalModel CategoricalModel::random(int input_dim,
                                          const std::vector<int>& hidden, int K,
                                          Rng& rng) {
  return {Mlp::random({input_dim, hidden, K}, rng), K};
}

std::span<const double> CategoricalModel::feed(std::span<const double> x) const {
  return mlp_.shape().input_dim == 0 ? std::span<const double>{} : x;
}

std::vector<double> CategoricalModel::logits(std::span<const double> x) const {
  return mlp_.forward(feed(x));
}

std::vector<double> CategoricalModel::pmf(std::span<const double> x) const {
  return softmax(logits(x));
}

double CategoricalModel::loss_and_grad(std::span<const double> x, int bin,
                                       std::span<double> grad,
                                       double weight) const {
  check_bin(bin, K_);
  Mlp::Tape tape;
  mlp_.forward(feed(x), tape);
  const auto z = tape.output();
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  const double loss = lse - z[bin];
  if (!grad.empty()) {
    std::vector<double> up(K_);
    for (int k = 0; k < K_; ++k) {
      up[k] = weight * (std::exp(z[k] - lse) - (k == bin ? 1.0 : 0.0));
    }
    mlp_.backward(tape, up, grad, {});
  }
  return loss;
}

double CategoricalModel::loss(std::span<const double> x, int bin) const {
  return loss_and_grad(x, bin, {}, 0.0);
}

double CategoricalModel::expected_score(std::span<const double> x,
                                        std::span<double> input_grad) const {
  Mlp::Tape tape;
  mlp_.forward(feed(x), tape);
  const auto p = softmax(tape.output());
  double e = 0.0;
  for (int k = 0; k < K_; ++k) e += p[k] * (k + 1.0) / K_;
  if (!input_grad.empty()) {
    if (mlp_.shape().input_dim == 0) {
      std::fill(input_grad.begin(), input_grad.end(), 0.0);
    } else {
      std::vector<double> up(K_);
      for (int k = 0; k < K_; ++k) up[k] = p[k] * ((k + 1.0) / K_ - e);
      mlp_.backward(tape, up, {}, input_grad);
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Model

Model Model::create(const ModelConfig& config, int input_dim, int K, Rng& rng) {
  const int in = config.input_dependent ? input_dim : 0;
  if (config.head == Head::kLogistic) {
    return DiscretizedLogisticModel::random(in, config.hidden, K,
                                            config.head_scale, rng);
  }
  return CategoricalModel::random(in, config.hidden, K, rng);
}

Head Model::head() const {
  return std::holds_alternative<DiscretizedLogisticModel>(impl_)
             ? Head::kLogistic
             : Head::kCategorical;
}

int Model::K() const {
  return std::visit([](const auto& m) { return m.K(); }, impl_);
}

const Mlp& Model::mlp() const {
  return std::visit([](const auto& m) -> const Mlp& { return m.mlp(); }, impl_);
}

Mlp& Model::mlp() {
  return std::visit([](auto& m) -> Mlp& { return m.mlp(); }, impl_);
}

std::vector<double> Model::pmf(std::span<const double> x) const {
  return std::visit([&](const auto& m) { return m.pmf(x); }, impl_);
}

double Model::expected_score(std::span<const double> x) const {
  return expected_score(x, {});
}

double Model::expected_score(std::span<const double> x,
                             std::span<double> input_grad) const {
  return std::visit(
      [&](const auto& m) { return m.expected_score(x, input_grad); }, impl_);
}

double Model::internal_value(std::span<const double> x,
                             std::span<double> input_grad) const {
  return std::visit(
      [&](const auto& m) { return m.internal_value(x, input_grad); }, impl_);
}

double Model::loss_and_grad(std::span<const double> x, int bin,
                            std::span<double> grad, double weight) const {
  return std::visit(
      [&](const auto& m) { return m.loss_and_grad(x, bin, grad, weight); },
      impl_);
}

double Model::loss(std::span<const double> x, int bin) const {
  return std::visit([&](const auto& m) { return m.loss(x, bin); }, impl_);
}

double Model::nll_and_grad(std::span<const double> x, int bin,
                           std::span<double> grad, double weight) const {
  return std::visit(
      [&](const auto& m) { return m.nll_and_grad(x, bin, grad, weight); },
      impl_);
}

// ---------------------------------------------------------------------------

std::vector<double> predict_survival(const DiscretizedLogisticModel& model,
                                     std::span<const double> x) {
  return model.survival(x);
}

double y_mean(const DiscretizedLogisticModel& model, std::span<const double> x) {
  return model.y_mean(x);
}

std::vector<double> induced_pmf(const DiscretizedLogisticModel& model,
                                std::span<const double> x) {
  return model.pmf(x);
}

LossAndGrad bce_loss_and_grad(const DiscretizedLogisticModel& model,
                              std::span<const double> x, int bin) {
  LossAndGrad out{0.0, std::vector<double>(model.mlp().num_params(), 0.0)};
  out.loss = model.loss_and_grad(x, bin, out.grad);
  return out;
}

CategoricalEvaluation categorical_loss_and_pmf(const CategoricalModel& model,
                                               std::span<const double> x,
                                               int bin) {
  CategoricalEvaluation out;
  out.grad.assign(model.mlp().num_params(), 0.0);
  out.loss = model.loss_and_grad(x, bin, out.grad);
  out.pmf = model.pmf(x);
  return out;
}

}  // namespace nemo
