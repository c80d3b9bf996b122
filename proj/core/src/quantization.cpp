#include "nemo/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nemo/errors.hpp"

namespace nemo {

double QuantizationScheme::representative(int k) const {
  return y_min + k * bin_width;
}

QuantizationScheme make_scheme(int K, double y_min, double y_max) {
  if (K < 2) throw ConfigError("quantization: K must be >= 2");
  if (!std::isfinite(y_min) || !std::isfinite(y_max)) {
    throw NumericalError("quantization: non-finite output range");
  }
  if (!(y_max > y_min)) {
    throw DataError("quantization: degenerate output range (y_max <= y_min)");
  }
  return {K, y_min, y_max, (y_max - y_min) / K};
}

QuantizationScheme build_scheme(std::span<const double> y, int K) {
  if (K < 2) throw ConfigError("quantization: K must be >= 2");
  if (y.empty()) throw DataError("quantization: no output values");
  for (double v : y) {
    if (!std::isfinite(v)) throw NumericalError("quantization: non-finite y");
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) {
    throw DataError("quantization: all outputs equal, output range is empty");
  }
  return make_scheme(K, *lo, *hi);
}

int bin_of(double y, const QuantizationScheme& scheme) {
  if (!std::isfinite(y)) throw NumericalError("bin_of: non-finite y");
  const double b = std::floor((y - scheme.y_min) / scheme.bin_width);
  if (b < 0.0) return 0;
  if (b >= scheme.K - 1) return scheme.K - 1;
  return static_cast<int>(b);
}

std::vector<int> bin_all(std::span<const double> y,
                         const QuantizationScheme& scheme) {
  std::vector<int> bins(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) bins[i] = bin_of(y[i], scheme);
  return bins;
}

std::vector<double> cumulative_encode(int bin, int K) {
  if (bin < 0 || bin >= K) {
    throw IndexError("cumulative_encode: bin " + std::to_string(bin) +
                     " outside [0, " + std::to_string(K) + ")");
  }
  std::vector<double> t(K, 0.0);
  std::fill(t.begin(), t.begin() + bin + 1, 1.0);
  return t;
}

double g_eval(int bin, const QuantizationScheme& scheme) {
  if (bin < 0 || bin >= scheme.K) {
    throw IndexError("g_eval: bin " + std::to_string(bin) + " out of range");
  }
  return static_cast<double>(bin + 1) / scheme.K;
}

std::vector<double> g_table(const QuantizationScheme& scheme) {
  std::vector<double> g(scheme.K);
  for (int k = 0; k < scheme.K; ++k) g[k] = g_eval(k, scheme);
  return g;
}

double score_to_output(double expected_g, const QuantizationScheme& scheme) {
  const double expected_bin = expected_g * scheme.K - 1.0;
  return scheme.y_min + (expected_bin + 0.5) * scheme.bin_width;
}

nlohmann::json to_json(const QuantizationScheme& scheme) {
  return {{"K", scheme.K},
          {"y_min", scheme.y_min},
          {"y_max", scheme.y_max},
          {"B", scheme.bin_width}};
}

QuantizationScheme scheme_from_json(const nlohmann::json& j) {
  return make_scheme(j.at("K").get<int>(), j.at("y_min").get<double>(),
                     j.at("y_max").get<double>());
}

}  // namespace nemo
