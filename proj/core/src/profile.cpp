#include "nemo/profile.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "nemo/errors.hpp"
#include "nemo/parallel.hpp"

namespace nemo {

std::vector<ProfileRow> uncertainty_profile(
    const PmfEstimator& estimator, std::span<const std::vector<double>> grid,
    const QuantizationScheme& scheme) {
  const auto g = g_table(scheme);
  std::vector<ProfileRow> rows(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    ProfileRow& r = rows[i];
    r.x = grid[i];
    r.pmf = estimator(grid[i]);
    if (r.pmf.size() != g.size()) {
      throw ShapeError("uncertainty_profile: estimator returned wrong K");
    }
    r.entropy = entropy(r.pmf);
    for (std::size_t k = 0; k < g.size(); ++k) r.y_mean += g[k] * r.pmf[k];
  });
  return rows;
}

std::string profile_to_csv(std::span<const ProfileRow> rows) {
  std::ostringstream out;
  if (rows.empty()) return "";
  const std::size_t d = rows.front().x.size();
  const std::size_t K = rows.front().pmf.size();
  for (std::size_t i = 0; i < d; ++i) out << 'x' << i << ',';
  out << "entropy,y_mean";
  for (std::size_t k = 0; k < K; ++k) out << ",p" << k;
  out << '\n';
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const ProfileRow& r : rows) {
    for (double v : r.x) {
      put(v);
      out << ',';
    }
    put(r.entropy);
    out << ',';
    put(r.y_mean);
    for (double p : r.pmf) {
      out << ',';
      put(p);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::vector<double>> grid_1d(double lo, double hi, int steps) {
  if (steps < 1) throw ConfigError("grid: steps must be >= 1");
  if (!(hi >= lo)) throw ConfigError("grid: hi must be >= lo");
  std::vector<std::vector<double>> grid;
  for (int i = 0; i < steps; ++i) {
    const double t = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    grid.push_back({lo + t * (hi - lo)});
  }
  return grid;
}

std::vector<std::vector<double>> parse_grid(const std::string& spec) {
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string::npos ? c1 : spec.find(':', c1 + 1);
  if (c2 == std::string::npos) {
    throw ConfigError("grid must look like lo:hi:steps, got '" + spec + "'");
  }
  double lo = 0.0, hi = 0.0;
  int steps = 0;
  const auto parse = [&](std::size_t a, std::size_t b, auto& v) {
    const char* first = spec.data() + a;
    const char* last = spec.data() + b;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) {
      throw ConfigError("grid: cannot parse '" + spec + "'");
    }
  };
  parse(0, c1, lo);
  parse(c1 + 1, c2, hi);
  parse(c2 + 1, spec.size(), steps);
  return grid_1d(lo, hi, steps);
}

PmfEstimator cnml_estimator(const NmlEnsemble& pretrained,
                            const OfflineDataset& data, std::vector<int> bins,
                            const CnmlProfileOptions& options) {
  if (options.inner_steps < 0) throw ConfigError("inner_steps must be >= 0");
  return [pretrained, &data, bins = std::move(bins),
          options](std::span<const double> x) {
    NmlEnsemble e = pretrained;
    if (options.lr) {
      for (auto& opt : e.optimizers) opt.config.lr = *options.lr;
    }
    // The stream depends only on the seed, so every grid point sees the same
    // minibatch sequence.
    Rng rng = derive_rng(options.seed, 17);
    for (int s = 0; s < options.inner_steps; ++s) {
      const auto mb = sample_minibatch(data.size(), options.minibatch_size, rng);
      nml_inner_step(e, data, bins, x, mb);
    }
    return cnml_estimate(e, x).probs;
  };
}

PmfEstimator mixture_estimator(std::vector<Model> members) {
  if (members.empty()) throw ConfigError("mixture: no members");
  return [members = std::move(members)](std::span<const double> x) {
    std::vector<double> p(members.front().K(), 0.0);
    for (const Model& m : members) {
      const auto q = m.pmf(x);
      for (std::size_t k = 0; k < p.size(); ++k) p[k] += q[k];
    }
    for (double& v : p) v /= static_cast<double>(members.size());
    return p;
  };
}

EntropySplit entropy_split(std::span<const ProfileRow> rows, double lo,
                           double hi) {
  double in = 0.0, out = 0.0;
  int n_in = 0, n_out = 0;
  for (const ProfileRow& r : rows) {
    if (r.x.at(0) >= lo && r.x.at(0) <= hi) {
      in += r.entropy;
      ++n_in;
    } else {
      out += r.entropy;
      ++n_out;
    }
  }
  return {n_in ? in / n_in : 0.0, n_out ? out / n_out : 0.0};
}

}  // namespace nemo
