#include "nemo/cnml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nemo/errors.hpp"
#include "nemo/parallel.hpp"

namespace nemo {

void NmlEnsemble::validate() const {
  const auto k = static_cast<std::size_t>(scheme.K);
  if (models.size() != k || targets.size() != k || optimizers.size() != k) {
    throw ConfigError("ensemble: expected exactly K models, targets and "
                      "optimizer states");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (models[i].K() != scheme.K || targets[i].K() != scheme.K ||
        models[i].head() != models[0].head() ||
        !(models[i].mlp().shape() == models[0].mlp().shape()) ||
        !(targets[i].mlp().shape() == models[0].mlp().shape())) {
      throw ConfigError("ensemble: models do not share one architecture");
    }
  }
}

NmlEnsemble make_ensemble(const Model& prototype,
                          const QuantizationScheme& scheme, double query_weight,
                          AdamConfig adam) {
  if (prototype.K() != scheme.K) {
    throw ConfigError("ensemble: prototype K differs from the scheme's K");
  }
  if (!(query_weight >= 0.0)) {
    throw ConfigError("ensemble: query weight must be >= 0");
  }
  NmlEnsemble e;
  e.scheme = scheme;
  e.models.assign(scheme.K, prototype);
  e.targets.assign(scheme.K, prototype);
  e.optimizers.assign(scheme.K, AdamState(prototype.num_params(), adam));
  e.query_weight = query_weight;
  return e;
}

std::vector<std::size_t> sample_minibatch(std::size_t n, int size, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= 0 || static_cast<std::size_t>(size) >= n) return idx;
  // Partial Fisher-Yates.
  for (int i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(size);
  return idx;
}

double mean_loss(const Model& model, const OfflineDataset& data,
                 std::span<const int> bins) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += model.loss(data.row(i), bins[i]);
  }
  return data.empty() ? 0.0 : s / data.size();
}

double fit_supervised(Model& model, const OfflineDataset& data,
                      std::span<const int> bins, const TrainOptions& options,
                      Rng& rng) {
  if (data.empty()) throw DataError("fit_supervised: empty dataset");
  if (bins.size() != data.size()) {
    throw ShapeError("fit_supervised: one bin label per row required");
  }
  if (options.epochs < 0) throw ConfigError("epochs must be >= 0");
  const std::size_t n = data.size();
  const std::size_t m = options.minibatch_size <= 0
                            ? n
                            : std::min<std::size_t>(options.minibatch_size, n);
  AdamState adam(model.num_params(), {.lr = options.lr});
  std::vector<double> grad(model.num_params());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += m) {
      const std::size_t end = std::min(n, start + m);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        model.loss_and_grad(data.row(i), bins[i], grad, w);
      }
      adam_step(adam, model.params(), grad);
    }
  }
  return mean_loss(model, data, bins);
}

void pretrain(NmlEnsemble& ensemble, const OfflineDataset& data,
              std::span<const int> bins, const TrainOptions& options,
              Rng& rng) {
  ensemble.validate();
  if (data.empty()) throw DataError("pretrain: empty dataset");
  if (options.epochs > 0) {
    Model fit = ensemble.models.front();
    fit_supervised(fit, data, bins, options, rng);
    for (auto& m : ensemble.models) m = fit;
    for (auto& opt : ensemble.optimizers) {
      opt = AdamState(fit.num_params(), opt.config);
    }
  }
  ensemble.targets = ensemble.models;
}

namespace {

// Shared body of the inner-step variants. `queries_of(k)` lists the query
// points that carry label k; every bin must see the same number of them.
template <class QueriesOf>
void inner_step(NmlEnsemble& ensemble, const OfflineDataset& data,
                std::span<const int> bins, std::size_t per_bin,
                const QueriesOf& queries_of,
                std::span<const std::size_t> minibatch) {
  const int K = ensemble.K();
  if (per_bin == 0) throw ConfigError("nml_inner_step: no query point");
  for (int k = 0; k < K; ++k) {
    for (const auto& q : queries_of(k)) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (!std::isfinite(q[i])) {
          throw NumericalError("nml_inner_step: non-finite query", i);
        }
      }
    }
  }
  const double m = static_cast<double>(minibatch.size());
  const double r = ensemble.query_weight * std::max(m, 1.0);
  const double total = m + r;
  if (!(total > 0.0)) {
    throw ConfigError("nml_inner_step: empty minibatch and zero query weight");
  }
  const double w_row = 1.0 / total;
  const double w_query = r / total / static_cast<double>(per_bin);

  std::vector<std::vector<double>> grads(K);
  std::vector<double> losses(K, 0.0);
  parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
    const Model& model = ensemble.models[k];
    std::vector<double>& g = grads[k];
    g.assign(model.num_params(), 0.0);
    double loss = 0.0;
    for (std::size_t i : minibatch) {
      loss += w_row * model.loss_and_grad(data.row(i), bins[i], g, w_row);
    }
    if (w_query > 0.0) {
      for (const auto& q : queries_of(static_cast<int>(k))) {
        loss += w_query * model.loss_and_grad(q, static_cast<int>(k), g, w_query);
      }
    }
    losses[k] = loss;
  });
  for (int k = 0; k < K; ++k) {
    if (!std::isfinite(losses[k])) {
      throw NumericalError("nml_inner_step: non-finite loss for bin", k);
    }
    for (double v : grads[k]) {
      if (!std::isfinite(v)) {
        throw NumericalError("nml_inner_step: non-finite gradient for bin", k);
      }
    }
  }
  for (int k = 0; k < K; ++k) {
    adam_step(ensemble.optimizers[k], ensemble.models[k].params(), grads[k]);
  }
  ensemble.model_updates += K;
}

}  // namespace

void nml_inner_step(NmlEnsemble& ensemble, const OfflineDataset& data,
                    std::span<const int> bins,
                    std::span<const std::vector<double>> queries,
                    std::span<const std::size_t> minibatch) {
  inner_step(ensemble, data, bins, queries.size(),
             [&](int) { return queries; }, minibatch);
}

void nml_inner_step_per_bin(NmlEnsemble& ensemble, const OfflineDataset& data,
                            std::span<const int> bins,
                            std::span<const std::vector<double>> query_of_bin,
                            std::span<const std::size_t> minibatch) {
  if (query_of_bin.size() != static_cast<std::size_t>(ensemble.K())) {
    throw ShapeError("nml_inner_step_per_bin: one query per bin required");
  }
  inner_step(ensemble, data, bins, 1,
             [&](int k) { return query_of_bin.subspan(k, 1); }, minibatch);
}

void nml_inner_step(NmlEnsemble& ensemble, const OfflineDataset& data,
                    std::span<const int> bins, std::span<const double> query,
                    std::span<const std::size_t> minibatch) {
  const std::vector<double> q(query.begin(), query.end());
  nml_inner_step(ensemble, data, bins, std::span(&q, 1), minibatch);
}

void target_update(NmlEnsemble& ensemble, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ConfigError("target_update: tau must lie in [0, 1]");
  }
  for (int k = 0; k < ensemble.K(); ++k) {
    auto src = ensemble.models[k].params();
    auto dst = ensemble.targets[k].params();
    if (tau == 1.0) {
      std::copy(src.begin(), src.end(), dst.begin());
    } else if (tau > 0.0) {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = tau * src[i] + (1.0 - tau) * dst[i];
      }
    }
  }
}

double CnmlPmf::expectation(std::span<const double> g) const {
  return dot(probs, g);
}

nlohmann::json to_json(const CnmlPmf& pmf) {
  return {{"probs", pmf.probs},
          {"provenance", pmf.provenance == PmfProvenance::kAmortized
                             ? "amortized"
                             : "exact-oracle"},
          {"normalizer", pmf.normalizer},
          {"degenerate", pmf.degenerate}};
}

CnmlPmf normalize_likelihoods(std::vector<double> numerators,
                              PmfProvenance provenance) {
  CnmlPmf out;
  out.provenance = provenance;
  double z = 0.0;
  for (double v : numerators) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw NumericalError("cnml: invalid per-bin likelihood");
    }
    z += v;
  }
  out.normalizer = z;
  if (z <= 0.0) {
    out.degenerate = true;
    out.probs.assign(numerators.size(), 1.0 / numerators.size());
    return out;
  }
  for (double& v : numerators) v /= z;
  out.probs = std::move(numerators);
  return out;
}

CnmlPmf cnml_estimate(const NmlEnsemble& ensemble, std::span<const double> x,
                      bool use_targets) {
  const auto& models = use_targets ? ensemble.targets : ensemble.models;
  if (models.size() != static_cast<std::size_t>(ensemble.K())) {
    throw ConfigError("cnml_estimate: ensemble does not hold K models");
  }
  std::vector<double> num(ensemble.K());
  for (int k = 0; k < ensemble.K(); ++k) {
    num[k] = std::max(0.0, models[k].pmf(x)[k]);
  }
  return normalize_likelihoods(std::move(num), PmfProvenance::kAmortized);
}

// ---------------------------------------------------------------------------

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(s, 0.0);
}

PinskerReport pinsker_chain_check(std::span<const double> p,
                                  std::span<const double> q,
                                  std::span<const double> g) {
  if (p.size() != q.size() || p.size() != g.size()) {
    throw ShapeError("pinsker_chain_check: p, q and g must share a support");
  }
  constexpr double kSlack = 1e-12;
  PinskerReport r;
  double gap = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    gap += (p[i] - q[i]) * g[i];
    r.g_max = std::max(r.g_max, std::abs(g[i]));
  }
  r.expectation_gap = std::abs(gap);
  r.total_variation = total_variation(p, q);
  r.kl = kl_divergence(p, q);
  r.kl_infinite = std::isinf(r.kl);
  r.tv_bound = 2.0 * r.g_max * r.total_variation;
  r.pinsker_bound = std::sqrt(r.kl / 2.0);
  r.expectation_ok = r.expectation_gap <= r.tv_bound + kSlack;
  r.pinsker_ok = r.total_variation <= r.pinsker_bound + kSlack;
  return r;
}

nlohmann::json to_json(const PinskerReport& r) {
  return {{"expectation_gap", r.expectation_gap},
          {"total_variation", r.total_variation},
          {"kl", r.kl_infinite ? nlohmann::json("inf") : nlohmann::json(r.kl)},
          {"g_max", r.g_max},
          {"tv_bound", r.tv_bound},
          {"pinsker_bound",
           r.kl_infinite ? nlohmann::json("inf") : nlohmann::json(r.pinsker_bound)},
          {"expectation_ok", r.expectation_ok},
          {"pinsker_ok", r.pinsker_ok}};
}

}  // namespace nemo
