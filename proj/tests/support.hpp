#pragma once

#include <cmath>
#include <functional>

#include "galflow/sym_tensor.hpp"

namespace galflow::testing {

/// Composite Simpson integral on [0,1]; independent fine-grid oracle for
/// frozen expected values (deliberately not the library's midpoint rule).
inline real_t simpson_01(const std::function<real_t(real_t)>& f, int panels = 1 << 14) {
  const real_t h = real_t(1) / panels;
  real_t acc = f(0.0) + f(1.0);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3;
}

/// Independent five-point central difference against which the library's
/// three-point stress selection is cross-checked.
template <int Dim, class F>
SymTensor<Dim> five_point_gradient(F&& f, const SymTensor<Dim>& d, real_t step = 1e-4) {
  using Iso = typename SymTensor<Dim>::Iso;
  const Iso y0 = d.iso();
  Iso g;
  for (int a = 0; a < SymTensor<Dim>::packed_size; ++a) {
    auto at = [&](real_t offset) {
      Iso y = y0;
      y[a] += offset;
      return f(SymTensor<Dim>::FromIso(y));
    };
    g[a] = (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12 * step);
  }
  return SymTensor<Dim>::FromIso(g);
}

}  // namespace galflow::testing
