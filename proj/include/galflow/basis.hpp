#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "galflow/grid.hpp"
#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Smooth vector-valued modes on the unit box, vanishing on the boundary and
/// orthonormal in L^2: tensor products of sines scaled to unit norm.
///
/// Dim == 1: w_i(x) = sqrt(2) sin(i pi x), i = 1..n.
/// Dim == 2: scalar factors phi_{k,l}(x,y) = 2 sin(k pi x) sin(l pi y) paired
/// with the coordinate directions; modes are ordered by increasing frequency
/// (k^2 + l^2, then k, then l, then component).
template <int Dim>
class SineBasis {
 public:
  using Vec = Eigen::Matrix<real_t, Dim, 1>;
  using Mat = Eigen::Matrix<real_t, Dim, Dim>;

  struct Mode {
    std::array<int, Dim> freq{};
    int component = 0;
  };

  explicit SineBasis(int mode_count) {
    if (mode_count < 1) throw std::invalid_argument("basis: need at least one mode");
    if constexpr (Dim == 1) {
      for (int k = 1; k <= mode_count; ++k) modes_.push_back({{k}, 0});
    } else {
      struct Key {
        int k, l;
      };
      std::vector<Key> keys;
      // Enough scalar factors to cover mode_count vector modes (2 per factor).
      const int kmax = static_cast<int>(std::ceil(std::sqrt(real_t(mode_count)))) + 2;
      for (int k = 1; k <= kmax; ++k)
        for (int l = 1; l <= kmax; ++l) keys.push_back({k, l});
      std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        const int fa = a.k * a.k + a.l * a.l, fb = b.k * b.k + b.l * b.l;
        if (fa != fb) return fa < fb;
        if (a.k != b.k) return a.k < b.k;
        return a.l < b.l;
      });
      for (const auto& key : keys) {
        for (int c = 0; c < 2 && static_cast<int>(modes_.size()) < mode_count; ++c)
          modes_.push_back({{key.k, key.l}, c});
        if (static_cast<int>(modes_.size()) == mode_count) break;
      }
    }
  }

  int size() const { return static_cast<int>(modes_.size()); }
  const Mode& mode(int i) const { return modes_.at(i); }

  /// Largest sine frequency used along any axis.
  int max_frequency() const {
    int m = 0;
    for (const auto& md : modes_)
      for (int a = 0; a < Dim; ++a) m = std::max(m, md.freq[a]);
    return m;
  }

  Vec value(int i, const Vec& x) const {
    const Mode& m = modes_[i];
    Vec v = Vec::Zero();
    v[m.component] = scalar_value(m, x);
    return v;
  }

  /// Gradient matrix G with G(r, c) = d w_r / d x_c.
  Mat gradient(int i, const Vec& x) const {
    const Mode& m = modes_[i];
    Mat g = Mat::Zero();
    for (int axis = 0; axis < Dim; ++axis) g(m.component, axis) = scalar_derivative(m, x, axis);
    return g;
  }

  real_t divergence(int i, const Vec& x) const {
    const Mode& m = modes_[i];
    return scalar_derivative(m, x, m.component);
  }

 private:
  static constexpr real_t pi = std::numbers::pi_v<real_t>;

  real_t scalar_value(const Mode& m, const Vec& x) const {
    real_t v = normalization();
    for (int a = 0; a < Dim; ++a) v *= std::sin(m.freq[a] * pi * x[a]);
    return v;
  }

  real_t scalar_derivative(const Mode& m, const Vec& x, int axis) const {
    real_t v = normalization();
    for (int a = 0; a < Dim; ++a) {
      const real_t arg = m.freq[a] * pi * x[a];
      v *= (a == axis) ? m.freq[a] * pi * std::cos(arg) : std::sin(arg);
    }
    return v;
  }

  static real_t normalization() {
    if constexpr (Dim == 1)
      return std::numbers::sqrt2_v<real_t>;
    else
      return real_t(2);
  }

  std::vector<Mode> modes_;
};

/// Velocity value at a point from mode coefficients.
template <int Dim>
inline typename SineBasis<Dim>::Vec velocity_value(const SineBasis<Dim>& basis,
                                                   const Eigen::VectorXd& coeffs,
                                                   const typename SineBasis<Dim>::Vec& x) {
  typename SineBasis<Dim>::Vec v = SineBasis<Dim>::Vec::Zero();
  for (int i = 0; i < basis.size(); ++i) v += coeffs[i] * basis.value(i, x);
  return v;
}

/// Velocity gradient at a point from mode coefficients.
template <int Dim>
inline typename SineBasis<Dim>::Mat velocity_gradient(const SineBasis<Dim>& basis,
                                                      const Eigen::VectorXd& coeffs,
                                                      const typename SineBasis<Dim>::Vec& x) {
  typename SineBasis<Dim>::Mat g = SineBasis<Dim>::Mat::Zero();
  for (int i = 0; i < basis.size(); ++i) g += coeffs[i] * basis.gradient(i, x);
  return g;
}

/// Symmetric velocity gradient at a point.
template <int Dim>
inline SymTensor<Dim> sym_gradient(const SineBasis<Dim>& basis, const Eigen::VectorXd& coeffs,
                                   const typename SineBasis<Dim>::Vec& x) {
  return SymTensor<Dim>::FromFull(velocity_gradient(basis, coeffs, x));
}

/// Per-grid tables of mode values/gradients/divergences at cell centers.
/// Built once per (basis, grid) pair; the hot loops read these tables.
template <int Dim>
class SampledBasis {
 public:
  using Vec = typename SineBasis<Dim>::Vec;
  using Mat = typename SineBasis<Dim>::Mat;

  SampledBasis(const SineBasis<Dim>& basis, const Grid<Dim>& grid) : basis_(basis), grid_(grid) {
    const int n = basis.size(), cells = grid.cells();
    values_.resize(n);
    gradients_.resize(n);
    divergences_.resize(n);
    for (int i = 0; i < n; ++i) {
      values_[i].resize(cells, Dim);
      gradients_[i].resize(cells, Dim * Dim);
      divergences_[i].resize(cells);
      for (int c = 0; c < cells; ++c) {
        const Vec x = grid.center(c);
        const Vec v = basis.value(i, x);
        const Mat g = basis.gradient(i, x);
        for (int r = 0; r < Dim; ++r) values_[i](c, r) = v[r];
        for (int r = 0; r < Dim; ++r)
          for (int a = 0; a < Dim; ++a) gradients_[i](c, r * Dim + a) = g(r, a);
        divergences_[i][c] = basis.divergence(i, x);
      }
    }
  }

  const SineBasis<Dim>& basis() const { return basis_; }
  const Grid<Dim>& grid() const { return grid_; }

  Vec mode_value(int i, int cell) const {
    Vec v;
    for (int r = 0; r < Dim; ++r) v[r] = values_[i](cell, r);
    return v;
  }

  Mat mode_gradient(int i, int cell) const {
    Mat g;
    for (int r = 0; r < Dim; ++r)
      for (int a = 0; a < Dim; ++a) g(r, a) = gradients_[i](cell, r * Dim + a);
    return g;
  }

  real_t mode_divergence(int i, int cell) const { return divergences_[i][cell]; }

  Vec velocity(const Eigen::VectorXd& coeffs, int cell) const {
    Vec v = Vec::Zero();
    for (int i = 0; i < basis_.size(); ++i) v += coeffs[i] * mode_value(i, cell);
    return v;
  }

  Mat velocity_gradient(const Eigen::VectorXd& coeffs, int cell) const {
    Mat g = Mat::Zero();
    for (int i = 0; i < basis_.size(); ++i) g += coeffs[i] * mode_gradient(i, cell);
    return g;
  }

 private:
  SineBasis<Dim> basis_;
  Grid<Dim> grid_;
  std::vector<Eigen::Matrix<real_t, Eigen::Dynamic, Dim>> values_;
  std::vector<Eigen::Matrix<real_t, Eigen::Dynamic, Eigen::Dynamic>> gradients_;
  std::vector<Eigen::VectorXd> divergences_;
};

/// Discrete L^2 Gram matrix of the modes under the grid's midpoint rule.
/// Exactly the identity (to roundoff) whenever all pairwise frequency sums
/// stay below twice the cell count per axis.
template <int Dim>
inline Eigen::MatrixXd gram_matrix(const SineBasis<Dim>& basis, const Grid<Dim>& grid) {
  const int n = basis.size();
  Eigen::MatrixXd g(n, n);
  const real_t vol = grid.cell_volume();
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      real_t acc = 0;
      for (int c = 0; c < grid.cells(); ++c) {
        const auto x = grid.center(c);
        acc += basis.value(i, x).dot(basis.value(j, x));
      }
      g(i, j) = g(j, i) = acc * vol;
    }
  return g;
}

/// Sup norms of a coefficient velocity field sampled on a refinement of the
/// grid (samples_per_cell points per axis inside every cell).
template <int Dim>
struct VelocitySupNorms {
  real_t sup_value = 0;
  real_t sup_gradient = 0;    ///< Frobenius norm of the gradient matrix
  real_t sup_divergence = 0;
};

template <int Dim>
inline VelocitySupNorms<Dim> velocity_sup_norms(const SineBasis<Dim>& basis,
                                                const Eigen::VectorXd& coeffs,
                                                const Grid<Dim>& grid, int samples_per_cell = 2) {
  VelocitySupNorms<Dim> out;
  const int per_axis = grid.n * samples_per_cell;
  const real_t step = real_t(1) / per_axis;
  const int total = Dim == 1 ? per_axis : per_axis * per_axis;
  for (int s = 0; s < total; ++s) {
    typename SineBasis<Dim>::Vec x;
    x[0] = (s % per_axis + real_t(0.5)) * step;
    if constexpr (Dim == 2) x[1] = (s / per_axis + real_t(0.5)) * step;
    const auto v = velocity_value(basis, coeffs, x);
    const auto g = velocity_gradient(basis, coeffs, x);
    out.sup_value = std::max(out.sup_value, v.norm());
    out.sup_gradient = std::max(out.sup_gradient, g.norm());
    out.sup_divergence = std::max(out.sup_divergence, std::abs(g.trace()));
  }
  return out;
}

/// Ratio of the L^q norm of the full gradient to the L^q norm of the
/// trace-free symmetric gradient, by midpoint quadrature.
/// Undefined (nullopt) when the denominator vanishes: zero field, or a field
/// whose symmetric gradient is purely spherical.
template <int Dim>
inline std::optional<real_t> korn_quotient(const SampledBasis<Dim>& sampled,
                                           const Eigen::VectorXd& coeffs, real_t q) {
  if (q <= 1) throw std::invalid_argument("korn quotient: exponent must exceed 1");
  real_t num = 0, den = 0;
  const auto& grid = sampled.grid();
  for (int c = 0; c < grid.cells(); ++c) {
    const auto g = sampled.velocity_gradient(coeffs, c);
    const auto dev = deviatoric(SymTensor<Dim>::FromFull(g));
    num += std::pow(g.norm(), q);
    den += std::pow(frobenius_norm(dev), q);
  }
  const real_t vol = grid.cell_volume();
  num = std::pow(num * vol, real_t(1) / q);
  den = std::pow(den * vol, real_t(1) / q);
  if (den < 1e-14 * std::max(real_t(1), num)) return std::nullopt;
  return num / den;
}

}  // namespace galflow
