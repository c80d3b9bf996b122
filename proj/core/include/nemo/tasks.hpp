#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nemo/dataset.hpp"

namespace nemo {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  double width() const { return hi - lo; }
};

/// Synthetic problem with a known, deterministic ground truth.
struct SyntheticTask {
  std::string name;
  int dim = 1;
  std::function<double(std::span<const double>)> ground_truth;
  /// Per-coordinate box the data was drawn from (1-D tasks) and the wider box
  /// used to probe out-of-support behavior.
  Interval support;
  Interval probe;
  std::vector<double> optimum;
  double optimum_value = 0.0;
  nlohmann::json metadata = nlohmann::json::object();

  double evaluate(std::span<const double> x) const { return ground_truth(x); }
};

struct GeneratedTask {
  OfflineDataset data;
  SyntheticTask task;
};

/// y = sin(x) + N(0, noise_sd^2) with x uniform in `support`. The probe
/// interval extends the support by half its width on each side.
GeneratedTask gen_sin1d(int n, double noise_sd, Interval support,
                        std::uint64_t seed);

/// f(x) = -||x - x*||^2 / d, observed only on a one-dimensional affine slice
/// that misses x*. Naive proxies extrapolate freely off the slice.
GeneratedTask gen_narrow_support(int dim, int n, std::uint64_t seed);

/// Rebuilds a task from its name and metadata (as stored by the generators).
SyntheticTask task_from_metadata(const nlohmann::json& metadata);

}  // namespace nemo
