#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace nemo {

/// K uniform bins of width `bin_width` covering [y_min, y_max].
struct QuantizationScheme {
  int K = 2;
  double y_min = 0.0;
  double y_max = 1.0;
  double bin_width = 0.5;

  /// Left edge of bin k, y_min + k * bin_width.
  double representative(int k) const;
  /// Midpoint of bin k.
  double center(int k) const { return representative(k) + 0.5 * bin_width; }
  bool operator==(const QuantizationScheme&) const = default;
};

/// Validates and builds a scheme from explicit endpoints.
QuantizationScheme make_scheme(int K, double y_min, double y_max);

/// Bins the observed output range. Throws DataError if every y is equal and
/// ConfigError if K < 2.
QuantizationScheme build_scheme(std::span<const double> y, int K);

/// floor((y - y_min) / B), clamped into [0, K-1].
int bin_of(double y, const QuantizationScheme& scheme);
std::vector<int> bin_all(std::span<const double> y,
                         const QuantizationScheme& scheme);

/// Survival encoding: element k is 1 iff k <= bin.
std::vector<double> cumulative_encode(int bin, int K);

/// Normalized score of a bin, (bin + 1) / K. The top bin scores exactly 1.
double g_eval(int bin, const QuantizationScheme& scheme);
std::vector<double> g_table(const QuantizationScheme& scheme);

/// Maps an expected normalized score E[g] back to output units, using bin
/// centers: E[g] = (E[bin] + 1) / K.
double score_to_output(double expected_g, const QuantizationScheme& scheme);

nlohmann::json to_json(const QuantizationScheme& scheme);
QuantizationScheme scheme_from_json(const nlohmann::json& j);

}  // namespace nemo
