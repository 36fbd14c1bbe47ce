#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>

#include "galflow/sym_tensor.hpp"

namespace galflow::detail {

template <int K>
struct SearchPoint {
  Eigen::Matrix<real_t, K, 1> arg = Eigen::Matrix<real_t, K, 1>::Zero();
  real_t value = -std::numeric_limits<real_t>::infinity();
};

/// Maximize a continuous function over the closed Euclidean ball |y| <= radius
/// in R^K by a coarse tensor-product grid followed by nested zooming around the
/// running best point. Candidates outside the ball are projected onto it.
/// Suited to the concave/unimodal objectives this library feeds it; the coarse
/// stage keeps it robust on merely continuous ones.
template <int K, class F>
SearchPoint<K> nested_grid_max(F&& f, real_t radius, int points_per_axis = 9,
                               real_t shrink = real_t(0.4),
                               std::optional<Eigen::Matrix<real_t, K, 1>> warm_start = {}) {
  using Vec = Eigen::Matrix<real_t, K, 1>;
  SearchPoint<K> best;

  const auto consider = [&](Vec y) {
    const real_t norm = y.norm();
    if (norm > radius) y *= radius / norm;
    const real_t v = f(y);
    if (v > best.value) {
      best.value = v;
      best.arg = y;
    }
  };

  consider(Vec::Zero());
  if (warm_start) consider(*warm_start);

  const int p = points_per_axis;
  long total = 1;
  for (int a = 0; a < K; ++a) total *= p;

  const auto sweep = [&](const Vec& center, real_t halfwidth) {
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      Vec y;
      for (int a = 0; a < K; ++a) {
        const int j = static_cast<int>(rem % p);
        rem /= p;
        y[a] = center[a] - halfwidth + (2 * halfwidth * j) / (p - 1);
      }
      consider(y);
    }
  };

  sweep(Vec::Zero(), radius);
  real_t w = radius * shrink;
  const real_t floor = 1e-10 * std::max(real_t(1), radius);
  for (int level = 0; level < 200 && w > floor; ++level) {
    sweep(best.arg, w);
    w *= shrink;
  }
  return best;
}

/// Minimize by negation; no ball constraint beyond the search cube.
template <int K, class F>
SearchPoint<K> nested_grid_min(F&& f, real_t radius, int points_per_axis = 9,
                               real_t shrink = real_t(0.4)) {
  auto neg = [&](const Eigen::Matrix<real_t, K, 1>& y) { return -f(y); };
  SearchPoint<K> r = nested_grid_max<K>(neg, radius, points_per_axis, shrink);
  r.value = -r.value;
  return r;
}

}  // namespace galflow::detail
