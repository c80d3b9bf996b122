#include "nemo/tasks.hpp"

#include <cmath>
#include <random>

#include "nemo/errors.hpp"
#include "nemo/numerics.hpp"

namespace nemo {

namespace {

SyntheticTask make_sin_task(Interval support) {
  SyntheticTask t;
  t.name = "sin1d";
  t.dim = 1;
  t.ground_truth = [](std::span<const double> x) { return std::sin(x[0]); };
  t.support = support;
  const double pad = 0.5 * support.width();
  t.probe = {support.lo - pad, support.hi + pad};
  t.optimum_value = 1.0;
  t.metadata = {{"task", "sin1d"},
                {"support", {support.lo, support.hi}},
                {"probe", {t.probe.lo, t.probe.hi}}};
  return t;
}

SyntheticTask make_narrow_task(std::vector<double> x_star) {
  SyntheticTask t;
  t.name = "narrow";
  t.dim = static_cast<int>(x_star.size());
  const int d = t.dim;
  t.optimum = x_star;
  t.optimum_value = 0.0;
  t.ground_truth = [x_star = std::move(x_star), d](std::span<const double> x) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += (x[i] - x_star[i]) * (x[i] - x_star[i]);
    return -s / d;
  };
  return t;
}

}  // namespace

GeneratedTask gen_sin1d(int n, double noise_sd, Interval support,
                        std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen_sin1d: n must be >= 1");
  if (!(support.hi > support.lo)) {
    throw ConfigError("gen_sin1d: support interval is empty");
  }
  if (!(noise_sd >= 0.0)) throw ConfigError("gen_sin1d: noise_sd must be >= 0");
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(support.lo, support.hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  GeneratedTask out{OfflineDataset{}, make_sin_task(support)};
  out.data.dim = 1;
  out.data.name = "sin1d";
  for (int i = 0; i < n; ++i) {
    const double x = ux(rng);
    double y = std::sin(x);
    if (noise_sd > 0.0) y += noise_sd * noise(rng);
    out.data.push_back(std::span(&x, 1), y);
  }
  out.task.metadata["noise_sd"] = noise_sd;
  out.task.metadata["seed"] = seed;
  out.task.metadata["note"] =
      "synthetic stand-in for learned benchmark evaluators";
  out.data.metadata = out.task.metadata;
  return out;
}

GeneratedTask gen_narrow_support(int dim, int n, std::uint64_t seed) {
  if (dim < 2) throw ConfigError("gen_narrow_support: d must be >= 2");
  if (n < 1) throw ConfigError("gen_narrow_support: n must be >= 1");
  constexpr double kOffset = 1.5;     // distance from x* to the slice
  constexpr double kHalfLength = 2.0;  // slice parameter range [-L, L]
  Rng rng(seed);
  std::uniform_real_distribution<double> u11(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> x_star(dim), dir(dim), perp(dim);
  for (double& v : x_star) v = u11(rng);
  for (double& v : dir) v = gauss(rng);
  const double dn = norm2(dir);
  for (double& v : dir) v /= dn;
  for (double& v : perp) v = gauss(rng);
  const double proj = dot(perp, dir);
  for (int i = 0; i < dim; ++i) perp[i] -= proj * dir[i];
  const double pn = norm2(perp);
  for (double& v : perp) v /= pn;

  std::vector<double> anchor(dim);
  for (int i = 0; i < dim; ++i) anchor[i] = x_star[i] + kOffset * perp[i];

  GeneratedTask out{OfflineDataset{}, make_narrow_task(x_star)};
  out.data.dim = dim;
  out.data.name = "narrow";
  std::uniform_real_distribution<double> ut(-kHalfLength, kHalfLength);
  std::vector<double> x(dim);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double t = ut(rng);
    for (int j = 0; j < dim; ++j) x[j] = anchor[j] + t * dir[j];
    const double y = out.task.evaluate(x);
    best = std::max(best, y);
    out.data.push_back(x, y);
  }
  out.task.support = {-kHalfLength, kHalfLength};
  out.task.probe = {-2 * kHalfLength, 2 * kHalfLength};
  out.task.metadata = {
      {"task", "narrow"},
      {"construction", "narrow-support quadratic (synthetic, not from a "
                       "published benchmark)"},
      {"seed", seed},
      {"x_star", x_star},
      {"anchor", anchor},
      {"direction", dir},
      {"offset", kOffset},
      {"global_max", 0.0},
      {"best_data_y", best},
      {"gap_to_global_max", 0.0 - best}};
  out.data.metadata = out.task.metadata;
  return out;
}

SyntheticTask task_from_metadata(const nlohmann::json& m) {
  const std::string task = m.at("task").get<std::string>();
  if (task == "sin1d") {
    const auto s = m.at("support").get<std::vector<double>>();
    return make_sin_task({s.at(0), s.at(1)});
  }
  if (task == "narrow") {
    SyntheticTask t = make_narrow_task(m.at("x_star").get<std::vector<double>>());
    t.metadata = m;
    return t;
  }
  throw ConfigError("unknown task '" + task + "'");
}

}  // namespace nemo
