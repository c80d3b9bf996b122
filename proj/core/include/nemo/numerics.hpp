#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace nemo {

/// All randomness flows through an explicitly owned engine of this type.
using Rng = std::mt19937_64;

/// Derives an independent engine for a sub-task (bin, restart, member, ...)
/// from a base seed, so results do not depend on evaluation order.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Layer widths of a fully connected network. Hidden layers use softplus;
/// the output layer is affine.
struct MlpShape {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int layer) const;
  int layer_out(int layer) const;
  std::size_t num_params() const;
  bool operator==(const MlpShape&) const = default;
};

/// Feedforward network with hand-derived backpropagation. Parameters live in
/// one flat vector, layer by layer: row-major weights (out x in) then bias.
class Mlp {
 public:
  /// Per-layer pre-activations and activations of one forward pass.
  struct Tape {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;  // act[0] is the input
    std::span<const double> output() const { return act.back(); }
  };

  Mlp() = default;
  /// Zero-initialized parameters.
  explicit Mlp(MlpShape shape);
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static Mlp random(MlpShape shape, Rng& rng);

  const MlpShape& shape() const { return shape_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<double> weights(int layer);
  std::span<double> bias(int layer);
  std::span<const double> weights(int layer) const;
  std::span<const double> bias(int layer) const;

  void forward(std::span<const double> x, Tape& tape) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Backpropagates `upstream` (d loss / d output). Parameter gradients are
  /// accumulated into `param_grad`; the input gradient overwrites
  /// `input_grad`. Either span may be empty to skip that part.
  void backward(const Tape& tape, std::span<const double> upstream,
                std::span<double> param_grad,
                std::span<double> input_grad) const;

  bool operator==(const Mlp&) const = default;

 private:
  std::size_t layer_offset(int layer) const;

  MlpShape shape_;
  std::vector<double> params_;
};

/// Scalar output of a network whose output width is 1.
double mlp_forward(const Mlp& mlp, std::span<const double> x);

struct MlpGradients {
  std::vector<double> params;
  std::vector<double> input;
};

/// d(upstream * mu)/d(theta) and d(upstream * mu)/dx for a scalar network.
MlpGradients mlp_gradients(const Mlp& mlp, std::span<const double> x,
                           double upstream);

nlohmann::json mlp_to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& j);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg)
      : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) +
/// eps). Throws NumericalError naming the first non-finite gradient entry;
/// nothing is modified in that case.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grad);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h);

}  // namespace nemo
