#include <algorithm>
#include <cmath>
#include <limits>

#include "nemo/cnml.hpp"
#include "nemo/errors.hpp"
#include "nemo/parallel.hpp"

namespace nemo {

std::string to_string(FitObjective objective) {
  return objective == FitObjective::kTrainingLoss ? "training-loss"
                                                  : "likelihood";
}

std::string to_string(OracleSolver solver) {
  return solver == OracleSolver::kGradient ? "gradient" : "coordinate-search";
}

FitObjective fit_objective_from_string(const std::string& s) {
  if (s == "training-loss") return FitObjective::kTrainingLoss;
  if (s == "likelihood") return FitObjective::kLikelihood;
  throw ConfigError("unknown fit objective '" + s + "'");
}

OracleSolver oracle_solver_from_string(const std::string& s) {
  if (s == "gradient") return OracleSolver::kGradient;
  if (s == "coordinate-search") return OracleSolver::kCoordinateSearch;
  throw ConfigError("unknown oracle solver '" + s + "'");
}

nlohmann::json to_json(const OracleOptions& o) {
  return {{"restarts", o.restarts},
          {"max_iterations", o.max_iterations},
          {"tolerance", o.tolerance},
          {"window", o.window},
          {"step_tolerance", o.step_tolerance},
          {"seed", o.seed},
          {"solver", to_string(o.solver)},
          {"objective", to_string(o.objective)}};
}

OracleOptions oracle_options_from_json(const nlohmann::json& j,
                                       const OracleOptions& defaults) {
  OracleOptions o = defaults;
  o.restarts = j.value("restarts", o.restarts);
  o.max_iterations = j.value("max_iterations", o.max_iterations);
  o.tolerance = j.value("tolerance", o.tolerance);
  o.window = j.value("window", o.window);
  o.step_tolerance = j.value("step_tolerance", o.step_tolerance);
  o.seed = j.value("seed", o.seed);
  if (j.contains("solver")) {
    o.solver = oracle_solver_from_string(j.at("solver").get<std::string>());
  }
  if (j.contains("objective")) {
    o.objective = fit_objective_from_string(j.at("objective").get<std::string>());
  }
  if (o.restarts < 1 || o.max_iterations < 1 || o.window < 1) {
    throw ConfigError("oracle: restarts, max_iterations and window must be >= 1");
  }
  return o;
}

namespace {

// Mean objective over D plus (x, bin); writes its gradient when `grad` is
// non-empty.
class AugmentedObjective {
 public:
  AugmentedObjective(const OfflineDataset& data, std::span<const int> bins,
                     std::span<const double> x, int bin, FitObjective kind)
      : data_(data), bins_(bins), x_(x), bin_(bin), kind_(kind) {}

  double operator()(const Model& model, std::span<double> grad) const {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    const double w = 1.0 / static_cast<double>(data_.size() + 1);
    double f = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      f += term(model, data_.row(i), bins_[i], grad, w);
    }
    f += term(model, x_, bin_, grad, w);
    return f * w;
  }

 private:
  double term(const Model& model, std::span<const double> x, int bin,
              std::span<double> grad, double w) const {
    return kind_ == FitObjective::kTrainingLoss
               ? model.loss_and_grad(x, bin, grad, w)
               : model.nll_and_grad(x, bin, grad, w);
  }

  const OfflineDataset& data_;
  std::span<const int> bins_;
  std::span<const double> x_;
  int bin_;
  FitObjective kind_;
};

struct SolveResult {
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Gradient descent with Armijo backtracking and step growth after every
// accepted step.
SolveResult solve_gradient(Model& model, const AugmentedObjective& f,
                           const OracleOptions& opt) {
  const std::size_t n = model.num_params();
  std::vector<double> theta(model.params().begin(), model.params().end());
  std::vector<double> grad(n), trial(n), trial_grad(n);
  auto eval = [&](std::span<const double> p, std::span<double> g) {
    std::copy(p.begin(), p.end(), model.params().begin());
    return f(model, g);
  };
  SolveResult res;
  double fx = eval(theta, grad);
  double step = 1.0;
  std::vector<double> history{fx};
  for (int it = 1; it <= opt.max_iterations; ++it) {
    res.iterations = it;
    const double gg = dot(grad, grad);
    if (!std::isfinite(fx) || !std::isfinite(gg)) {
      throw NumericalError("oracle: non-finite objective during fit");
    }
    if (gg < 1e-28) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    double ft = fx;
    while (step > 1e-18) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = theta[i] - step * grad[i];
      ft = eval(trial, trial_grad);
      if (std::isfinite(ft) && ft <= fx - 1e-4 * step * gg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable descent step remains.
      res.converged = true;
      break;
    }
    theta.swap(trial);
    grad.swap(trial_grad);
    fx = ft;
    step = std::min(step * 2.0, 1e6);
    history.push_back(fx);
    if (it >= opt.window && history[it - opt.window] - fx < opt.tolerance) {
      res.converged = true;
      break;
    }
  }
  std::copy(theta.begin(), theta.end(), model.params().begin());
  res.objective = fx;
  return res;
}

// Derivative-free compass search with one adaptive step per coordinate.
SolveResult solve_coordinate(Model& model, const AugmentedObjective& f,
                             const OracleOptions& opt) {
  auto params = model.params();
  std::vector<double> step(params.size(), 0.25);
  SolveResult res;
  double fx = f(model, {});
  for (int sweep = 1; sweep <= opt.max_iterations; ++sweep) {
    res.iterations = sweep;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double old = params[i];
      params[i] = old + step[i];
      double ft = f(model, {});
      if (ft < fx) {
        fx = ft;
        step[i] *= 2.0;
        continue;
      }
      params[i] = old - step[i];
      ft = f(model, {});
      if (ft < fx) {
        fx = ft;
        step[i] *= -2.0;  // keep moving in the direction that worked
        continue;
      }
      params[i] = old;
      step[i] *= 0.5;
    }
    double largest = 0.0;
    for (double s : step) largest = std::max(largest, std::abs(s));
    if (largest < opt.step_tolerance) {
      res.converged = true;
      break;
    }
  }
  res.objective = fx;
  return res;
}

}  // namespace

BinFit fit_augmented(const OfflineDataset& data, std::span<const int> bins,
                     std::span<const double> x, int bin, int K,
                     const ModelConfig& model_config,
                     const OracleOptions& options) {
  if (bin < 0 || bin >= K) throw IndexError("fit_augmented: bin out of range");
  if (!data.empty() && static_cast<int>(x.size()) != data.dim) {
    throw ShapeError("fit_augmented: query dimension differs from the data");
  }
  const AugmentedObjective objective(data, bins, x, bin, options.objective);
  BinFit best;
  best.bin = bin;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    Rng rng = derive_rng(options.seed, static_cast<std::uint64_t>(r));
    Model model =
        Model::create(model_config, static_cast<int>(x.size()), K, rng);
    const SolveResult s = options.solver == OracleSolver::kGradient
                              ? solve_gradient(model, objective, options)
                              : solve_coordinate(model, objective, options);
    if (s.objective < best.objective) {
      best.objective = s.objective;
      best.converged = s.converged;
      best.iterations = s.iterations;
      best.best_restart = r;
      best.pmf = model.pmf(x);
      best.params.assign(model.params().begin(), model.params().end());
    }
  }
  return best;
}

bool OracleResult::converged() const {
  return std::all_of(fits.begin(), fits.end(),
                     [](const BinFit& f) { return f.converged; });
}

OracleResult exact_cnml_oracle(const OfflineDataset& data,
                               std::span<const double> x,
                               const QuantizationScheme& scheme,
                               const ModelConfig& model_config,
                               const OracleOptions& options) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericalError("oracle: non-finite query", i);
  }
  const std::vector<int> bins = bin_all(data.y, scheme);
  OracleResult out;
  out.fits.resize(scheme.K);
  parallel_for(static_cast<std::size_t>(scheme.K), [&](std::size_t k) {
    out.fits[k] = fit_augmented(data, bins, x, static_cast<int>(k), scheme.K,
                                model_config, options);
  });
  std::vector<double> num(scheme.K);
  for (int k = 0; k < scheme.K; ++k) num[k] = std::max(0.0, out.fits[k].pmf[k]);
  out.pmf = normalize_likelihoods(std::move(num), PmfProvenance::kExactOracle);
  return out;
}

double individual_regret(const OracleResult& oracle) {
  return std::log(oracle.normalizer());
}

double individual_regret(const OfflineDataset& data, std::span<const double> x,
                         const QuantizationScheme& scheme,
                         const ModelConfig& model_config,
                         const OracleOptions& options) {
  return individual_regret(
      exact_cnml_oracle(data, x, scheme, model_config, options));
}

double functional_regret(const OracleResult& oracle, int y_star_bin,
                         std::span<const double> q, std::span<const double> g) {
  if (y_star_bin < 0 || y_star_bin >= static_cast<int>(oracle.fits.size())) {
    throw IndexError("functional_regret: label bin out of range");
  }
  return std::abs(dot(q, g) - dot(oracle.fits[y_star_bin].pmf, g));
}

RegretReport regret_report(const OracleResult& oracle,
                           std::span<const double> g) {
  RegretReport r;
  r.gamma = individual_regret(oracle);
  r.g_max = 0.0;
  for (double v : g) r.g_max = std::max(r.g_max, std::abs(v));
  for (int k = 0; k < static_cast<int>(oracle.fits.size()); ++k) {
    const double f = functional_regret(oracle, k, oracle.pmf.probs, g);
    r.functional_regrets.push_back(f);
    r.max_functional_regret = std::max(r.max_functional_regret, f);
  }
  r.bound = 2.0 * r.g_max * std::sqrt(std::max(r.gamma, 0.0) / 2.0);
  return r;
}

nlohmann::json to_json(const RegretReport& r) {
  return {{"gamma", r.gamma},
          {"functional_regrets", r.functional_regrets},
          {"max_functional_regret", r.max_functional_regret},
          {"g_max", r.g_max},
          {"bound", r.bound}};
}

}  // namespace nemo
