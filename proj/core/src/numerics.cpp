#include "nemo/numerics.hpp"

#include <algorithm>
#include <string>

#include "nemo/errors.hpp"

namespace nemo {

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x4e454d4fu};
  return Rng(seq);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

int MlpShape::layer_in(int layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

int MlpShape::layer_out(int layer) const {
  return layer == num_layers() - 1 ? output_dim : hidden[layer];
}

std::size_t MlpShape::num_params() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    n += static_cast<std::size_t>(layer_out(l)) * (layer_in(l) + 1);
  }
  return n;
}

namespace {

void validate(const MlpShape& shape) {
  if (shape.input_dim < 0 || shape.output_dim < 1) {
    throw ShapeError("mlp: input width must be >= 0 and output width >= 1");
  }
  for (int w : shape.hidden) {
    if (w < 1) throw ShapeError("mlp: hidden widths must be positive");
  }
}

}  // namespace

Mlp::Mlp(MlpShape shape) : shape_(std::move(shape)) {
  validate(shape_);
  params_.assign(shape_.num_params(), 0.0);
}

Mlp Mlp::random(MlpShape shape, Rng& rng) {
  Mlp mlp(std::move(shape));
  for (int l = 0; l < mlp.shape_.num_layers(); ++l) {
    const int fan_in = std::max(mlp.shape_.layer_in(l), 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : mlp.weights(l)) w = dist(rng);
    for (double& b : mlp.bias(l)) b = dist(rng);
  }
  return mlp;
}

std::size_t Mlp::layer_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) {
    off += static_cast<std::size_t>(shape_.layer_out(l)) *
           (shape_.layer_in(l) + 1);
  }
  return off;
}

std::span<double> Mlp::weights(int layer) {
  return std::span<double>(params_).subspan(
      layer_offset(layer),
      static_cast<std::size_t>(shape_.layer_out(layer)) *
          shape_.layer_in(layer));
}

std::span<double> Mlp::bias(int layer) {
  const std::size_t n_w = static_cast<std::size_t>(shape_.layer_out(layer)) *
                          shape_.layer_in(layer);
  return std::span<double>(params_).subspan(layer_offset(layer) + n_w,
                                            shape_.layer_out(layer));
}

std::span<const double> Mlp::weights(int layer) const {
  return const_cast<Mlp*>(this)->weights(layer);
}

std::span<const double> Mlp::bias(int layer) const {
  return const_cast<Mlp*>(this)->bias(layer);
}

void Mlp::forward(std::span<const double> x, Tape& tape) const {
  if (static_cast<int>(x.size()) != shape_.input_dim) {
    throw ShapeError("mlp: input has " + std::to_string(x.size()) +
                     " entries, network expects " +
                     std::to_string(shape_.input_dim));
  }
  const int n_layers = shape_.num_layers();
  tape.pre.resize(n_layers);
  tape.act.resize(n_layers + 1);
  tape.act[0].assign(x.begin(), x.end());

  const double* p = params_.data();
  for (int l = 0; l < n_layers; ++l) {
    const int in = shape_.layer_in(l);
    const int out = shape_.layer_out(l);
    const double* w = p;
    const double* b = p + static_cast<std::size_t>(out) * in;
    const std::vector<double>& a = tape.act[l];
    std::vector<double>& z = tape.pre[l];
    z.resize(out);
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double s = b[o];
      for (int i = 0; i < in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    std::vector<double>& next = tape.act[l + 1];
    next.resize(out);
    if (l + 1 < n_layers) {
      for (int o = 0; o < out; ++o) next[o] = softplus(z[o]);
    } else {
      std::copy(z.begin(), z.end(), next.begin());
    }
    p = b + out;
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Tape tape;
  forward(x, tape);
  return tape.act.back();
}

void Mlp::backward(const Tape& tape, std::span<const double> upstream,
                   std::span<double> param_grad,
                   std::span<double> input_grad) const {
  if (static_cast<int>(upstream.size()) != shape_.output_dim) {
    throw ShapeError("mlp: upstream gradient width mismatch");
  }
  if (!param_grad.empty() && param_grad.size() != params_.size()) {
    throw ShapeError("mlp: parameter gradient length mismatch");
  }
  if (!input_grad.empty() &&
      static_cast<int>(input_grad.size()) != shape_.input_dim) {
    throw ShapeError("mlp: input gradient length mismatch");
  }
  const int n_layers = shape_.num_layers();
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> prev;
  for (int l = n_layers - 1; l >= 0; --l) {
    const int in = shape_.layer_in(l);
    const int out = shape_.layer_out(l);
    const std::size_t off = layer_offset(l);
    const double* w = params_.data() + off;
    const std::vector<double>& a = tape.act[l];
    if (!param_grad.empty()) {
      double* gw = param_grad.data() + off;
      double* gb = gw + static_cast<std::size_t>(out) * in;
      for (int o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* grow = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) grow[i] += d * a[i];
        gb[o] += d;
      }
    }
    if (l == 0 && input_grad.empty()) break;
    prev.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    if (l == 0) {
      std::copy(prev.begin(), prev.end(), input_grad.begin());
      break;
    }
    // softplus'(z) = sigmoid(z)
    const std::vector<double>& z = tape.pre[l - 1];
    for (int i = 0; i < in; ++i) prev[i] *= sigmoid(z[i]);
    delta.swap(prev);
  }
}

double mlp_forward(const Mlp& mlp, std::span<const double> x) {
  if (mlp.shape().output_dim != 1) {
    throw ShapeError("mlp_forward: network output width must be 1");
  }
  return mlp.forward(x)[0];
}

MlpGradients mlp_gradients(const Mlp& mlp, std::span<const double> x,
                           double upstream) {
  if (mlp.shape().output_dim != 1) {
    throw ShapeError("mlp_gradients: network output width must be 1");
  }
  Mlp::Tape tape;
  mlp.forward(x, tape);
  MlpGradients g{std::vector<double>(mlp.num_params(), 0.0),
                 std::vector<double>(x.size(), 0.0)};
  const double up[1] = {upstream};
  mlp.backward(tape, up, g.params, g.input);
  return g;
}

nlohmann::json mlp_to_json(const Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < mlp.shape().num_layers(); ++l) {
    const auto w = mlp.weights(l);
    const auto b = mlp.bias(l);
    layers.push_back({{"rows", mlp.shape().layer_out(l)},
                      {"cols", mlp.shape().layer_in(l)},
                      {"weights", std::vector<double>(w.begin(), w.end())},
                      {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"schema_version", 1},
          {"format", "nemo-mlp"},
          {"activation", "softplus"},
          {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1 || j.value("format", "") != "nemo-mlp") {
    throw ShapeError("checkpoint: unsupported format or schema version");
  }
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) {
    throw ShapeError("checkpoint: no layers");
  }
  MlpShape shape;
  shape.input_dim = layers.front().at("cols").get<int>();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const int rows = layers[l].at("rows").get<int>();
    const int cols = layers[l].at("cols").get<int>();
    const int expected_cols = l == 0 ? shape.input_dim : shape.hidden.back();
    if (cols != expected_cols) {
      throw ShapeError("checkpoint: layer " + std::to_string(l) +
                       " does not conform to the previous layer");
    }
    if (l + 1 < layers.size()) {
      shape.hidden.push_back(rows);
    } else {
      shape.output_dim = rows;
    }
  }
  Mlp mlp(shape);
  for (int l = 0; l < shape.num_layers(); ++l) {
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    auto dw = mlp.weights(l);
    auto db = mlp.bias(l);
    if (w.size() != dw.size() || b.size() != db.size()) {
      throw ShapeError("checkpoint: layer " + std::to_string(l) +
                       " array length does not match its shape");
    }
    std::copy(w.begin(), w.end(), dw.begin());
    std::copy(b.begin(), b.end(), db.begin());
  }
  return mlp;
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grad) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ShapeError("adam_step: parameter, gradient and state lengths differ");
  }
  if (!(state.config.lr >= 0.0)) {
    throw ConfigError("adam_step: learning rate must be >= 0");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam_step: non-finite gradient", i);
    }
  }
  const AdamConfig& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_grad: non-finite evaluation", i);
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace nemo
