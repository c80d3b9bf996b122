#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nemo/cnml.hpp"
#include "nemo/dataset.hpp"
#include "nemo/models.hpp"
#include "nemo/quantization.hpp"

namespace nemo {

/// Predictive pmf over the K bins at a design.
using PmfEstimator = std::function<std::vector<double>(std::span<const double>)>;

struct ProfileRow {
  std::vector<double> x;
  std::vector<double> pmf;
  double entropy = 0.0;
  /// Expected normalized score sum_k g(k) p(k).
  double y_mean = 0.0;
};

std::vector<ProfileRow> uncertainty_profile(
    const PmfEstimator& estimator, std::span<const std::vector<double>> grid,
    const QuantizationScheme& scheme);

/// Columns x0..x{d-1}, entropy, y_mean, p0..p{K-1}.
std::string profile_to_csv(std::span<const ProfileRow> rows);

/// `steps` evenly spaced points from lo to hi inclusive.
std::vector<std::vector<double>> grid_1d(double lo, double hi, int steps);
/// Parses "lo:hi:steps".
std::vector<std::vector<double>> parse_grid(const std::string& spec);

struct CnmlProfileOptions {
  /// Augmented updates run at each query before the estimate is read.
  int inner_steps = 200;
  int minibatch_size = 32;
  /// Overrides the ensemble's model learning rate when set.
  std::optional<double> lr;
  std::uint64_t seed = 0;
};

/// `data` must outlive the estimator.
/// CNML at x from a copy of the pretrained ensemble after `inner_steps`
/// augmented updates with x as the only query. The copy is discarded, so
/// grid points do not influence each other.
PmfEstimator cnml_estimator(const NmlEnsemble& pretrained,
                            const OfflineDataset& data,
                            std::vector<int> bins,
                            const CnmlProfileOptions& options);

/// Mixture of the members' pmfs with equal weights.
PmfEstimator mixture_estimator(std::vector<Model> members);

/// Mean entropy of the rows whose first coordinate lies inside / outside
/// [lo, hi].
struct EntropySplit {
  double inside = 0.0;
  double outside = 0.0;
  double gap() const { return outside - inside; }
};
EntropySplit entropy_split(std::span<const ProfileRow> rows, double lo,
                           double hi);

}  // namespace nemo
