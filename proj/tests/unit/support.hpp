#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "nemo/numerics.hpp"

namespace nemo::test {

inline std::vector<double> random_vector(std::size_t n, Rng& rng,
                                         double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (double& a : v) a = u(rng);
  return v;
}

/// ||a - b|| / max(||a||, ||b||, 1e-8).
inline double relative_error(std::span<const double> a,
                             std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

inline void expect_gradient_close(std::span<const double> analytic,
                                  std::span<const double> numeric,
                                  double tol) {
  ASSERT_EQ(analytic.size(), numeric.size());
  EXPECT_LE(relative_error(analytic, numeric), tol);
}

inline std::vector<double> random_pmf(int K, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(K);
  double s = 0.0;
  for (double& v : p) s += (v = e(rng));
  for (double& v : p) v /= s;
  return p;
}

}  // namespace nemo::test
