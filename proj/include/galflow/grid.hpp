#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>

#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Uniform cell-centered grid on the unit box (0,1)^Dim.
///
/// Cells are indexed flat (x fastest); cell centers sit at (i + 1/2) * h.
/// The composite midpoint rule over the cells is the quadrature used across
/// the library; its weights are h^Dim per cell and sum to |Omega| = 1.
template <int Dim>
struct Grid {
  static_assert(Dim == 1 || Dim == 2);

  using Vec = Eigen::Matrix<real_t, Dim, 1>;

  int n = 0;     ///< cells per axis
  real_t h = 0;  ///< cell width, 1/n

  Grid() = default;
  explicit Grid(int cells_per_axis) : n(cells_per_axis), h(real_t(1) / cells_per_axis) {
    if (cells_per_axis < 4) throw std::invalid_argument("grid: need at least 4 cells per axis");
  }

  int cells() const {
    int c = n;
    if constexpr (Dim == 2) c *= n;
    return c;
  }

  real_t cell_volume() const {
    real_t v = h;
    if constexpr (Dim == 2) v *= h;
    return v;
  }

  std::array<int, Dim> coords(int flat) const {
    std::array<int, Dim> c{};
    c[0] = flat % n;
    if constexpr (Dim == 2) c[1] = flat / n;
    return c;
  }

  int flat(const std::array<int, Dim>& c) const {
    int f = c[0];
    if constexpr (Dim == 2) f += c[1] * n;
    return f;
  }

  Vec center(int flat_index) const {
    const auto c = coords(flat_index);
    Vec x;
    for (int a = 0; a < Dim; ++a) x[a] = (c[a] + real_t(0.5)) * h;
    return x;
  }

  bool operator==(const Grid& o) const { return n == o.n; }
};

/// Strictly positive scalar field sampled at cell centers.
template <int Dim>
struct DensityField {
  Grid<Dim> grid;
  Eigen::VectorXd values;

  DensityField() = default;
  DensityField(const Grid<Dim>& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.cells())
      throw std::invalid_argument("density field: value count does not match grid");
  }

  real_t mass() const { return values.sum() * grid.cell_volume(); }
  real_t min() const { return values.minCoeff(); }
  real_t max() const { return values.maxCoeff(); }
  bool positive() const { return min() > real_t(0); }
};

/// Midpoint-rule integral of a cell-sampled scalar field.
template <int Dim>
inline real_t integrate(const Grid<Dim>& grid, const Eigen::VectorXd& cell_values) {
  return cell_values.sum() * grid.cell_volume();
}

/// Gradient of a cell-centered field by centered differences with reflected
/// ghost cells (zero normal derivative at the boundary). At boundary cells the
/// reflected stencil degenerates to the halved one-sided difference.
template <int Dim>
inline typename Grid<Dim>::Vec cell_gradient(const Grid<Dim>& grid, const Eigen::VectorXd& v,
                                             int flat_index) {
  typename Grid<Dim>::Vec g;
  const auto c = grid.coords(flat_index);
  for (int a = 0; a < Dim; ++a) {
    auto lo = c, hi = c;
    lo[a] = c[a] > 0 ? c[a] - 1 : c[a];            // reflect: ghost equals boundary cell
    hi[a] = c[a] < grid.n - 1 ? c[a] + 1 : c[a];
    g[a] = (v[grid.flat(hi)] - v[grid.flat(lo)]) / (2 * grid.h);
  }
  return g;
}

}  // namespace galflow
