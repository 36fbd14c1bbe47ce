#pragma once

#include <cmath>
#include <vector>

#include "galflow/optimize.hpp"
#include "galflow/potential.hpp"
#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Controls for the dual-potential search: the supremum of S:B - F(B) is taken
/// over balls |B| <= R for an expanding radius schedule; within each ball a
/// nested-grid maximization refines the best point. The search reports
/// saturation once the running supremum stops moving between consecutive
/// radii; a supremum still growing at the last radius signals divergence
/// (the dual value is +infinity off the domain of F*).
struct ConjugateControls {
  std::vector<real_t> radii{1, 2, 4, 8, 16, 32};
  real_t saturation_rtol = 1e-8;
  int points_per_axis = 9;
  real_t shrink = real_t(0.4);
};

struct ConjugateValue {
  real_t value = 0;
  bool saturated = false;
  real_t radius_used = 0;
};

/// Dual potential F*(S) = sup_B { S:B - F(B) } for a generic functor F on
/// symmetric tensors.
template <int Dim, class F>
ConjugateValue fenchel_conjugate(F&& f, const SymTensor<Dim>& s,
                                 const ConjugateControls& ctl = {}) {
  constexpr int k = SymTensor<Dim>::packed_size;
  using Iso = typename SymTensor<Dim>::Iso;
  const Iso s_iso = s.iso();

  ConjugateValue out;
  bool have_prev = false;
  real_t prev = 0;
  std::optional<Iso> warm;
  for (const real_t radius : ctl.radii) {
    const auto best = detail::nested_grid_max<k>(
        [&](const Iso& y) { return s_iso.dot(y) - f(SymTensor<Dim>::FromIso(y)); }, radius,
        ctl.points_per_axis, ctl.shrink, warm);
    out.value = have_prev ? std::max(prev, best.value) : best.value;
    out.radius_used = radius;
    warm = best.arg;
    if (have_prev &&
        std::abs(out.value - prev) <= ctl.saturation_rtol * std::max(real_t(1), std::abs(out.value))) {
      out.saturated = true;
      return out;
    }
    prev = out.value;
    have_prev = true;
  }
  out.saturated = false;
  return out;
}

/// Radial reduction: for F(B) = g(|B|) with g nondecreasing the supremum
/// aligns B with S, so F*(S) = sup_{r >= 0} { r |S| - g(r) }.
template <class Profile>
ConjugateValue fenchel_conjugate_radial(Profile&& g, real_t s_norm,
                                        const ConjugateControls& ctl = {}) {
  using Iso1 = Eigen::Matrix<real_t, 1, 1>;
  ConjugateValue out;
  bool have_prev = false;
  real_t prev = 0;
  std::optional<Iso1> warm;
  for (const real_t radius : ctl.radii) {
    const auto best = detail::nested_grid_max<1>(
        [&](const Iso1& y) {
          const real_t r = std::abs(y[0]);
          return r * s_norm - g(r);
        },
        radius, ctl.points_per_axis, ctl.shrink, warm);
    out.value = have_prev ? std::max(prev, best.value) : best.value;
    out.radius_used = radius;
    warm = best.arg;
    if (have_prev &&
        std::abs(out.value - prev) <= ctl.saturation_rtol * std::max(real_t(1), std::abs(out.value))) {
      out.saturated = true;
      return out;
    }
    prev = out.value;
    have_prev = true;
  }
  out.saturated = false;
  return out;
}

/// Dual value of a bare potential spec; radial specs go through the 1-D
/// reduction (the per-direction radial treatment), others through the full
/// tensor-space search.
template <int Dim>
ConjugateValue conjugate_of(const PotentialSpec& spec, const SymTensor<Dim>& s,
                            const ConjugateControls& ctl = {}) {
  if (spec.radial(Dim)) {
    return fenchel_conjugate_radial([&](real_t r) { return spec.radial_profile(r, Dim); },
                                    frobenius_norm(s), ctl);
  }
  return fenchel_conjugate<Dim>([&](const SymTensor<Dim>& b) { return potential_value(spec, b); },
                                s, ctl);
}

/// Dual value of a smoothed potential handle.
template <int Dim>
ConjugateValue conjugate_of(const MollifiedPotential<Dim>& f, const SymTensor<Dim>& s,
                            const ConjugateControls& ctl = {}) {
  if (f.radial())
    return fenchel_conjugate_radial([&](real_t r) { return f.radial_value(r); },
                                    frobenius_norm(s), ctl);
  return fenchel_conjugate<Dim>(f, s, ctl);
}

/// Duality-gap residual F(D) + F*(S) - S:D. Nonnegative for exact values;
/// zero exactly when S is selected from the subdifferential at D. A
/// non-saturated dual value makes the residual +infinity (diverged flag).
struct FenchelYoungResidual {
  real_t value = 0;
  bool diverged = false;
};

template <int Dim, class F>
FenchelYoungResidual fenchel_young_residual(F&& f, const ConjugateValue& dual,
                                            const SymTensor<Dim>& d, const SymTensor<Dim>& s) {
  FenchelYoungResidual r;
  if (!dual.saturated) {
    r.diverged = true;
    r.value = std::numeric_limits<real_t>::infinity();
    return r;
  }
  r.value = f(d) + dual.value - ddot(s, d);
  return r;
}

/// Growth diagnostic of the dual potential along a fixed direction: values of
/// F*(r * dir)/r over the given radii. Strictly increasing ratios witness
/// superlinear growth; a non-saturated entry is reported as +infinity.
template <int Dim, class Conj>
std::vector<real_t> superlinearity_ratios(Conj&& dual_of, const SymTensor<Dim>& dir,
                                          const std::vector<real_t>& radii) {
  std::vector<real_t> out;
  out.reserve(radii.size());
  for (const real_t r : radii) {
    const ConjugateValue cv = dual_of(dir * r);
    out.push_back(cv.saturated ? cv.value / r : std::numeric_limits<real_t>::infinity());
  }
  return out;
}

/// Double dual of a potential spec at D (search composed over the numeric
/// dual); agrees with F at probe points for closed convex potentials.
template <int Dim>
ConjugateValue biconjugate_of(const PotentialSpec& spec, const SymTensor<Dim>& d,
                              const ConjugateControls& ctl = {}) {
  if (spec.radial(Dim)) {
    auto dual_profile = [&](real_t r) {
      const ConjugateValue cv = fenchel_conjugate_radial(
          [&](real_t rho) { return spec.radial_profile(rho, Dim); }, r, ctl);
      return cv.saturated ? cv.value : real_t(1e300);
    };
    return fenchel_conjugate_radial(dual_profile, frobenius_norm(d), ctl);
  }
  auto dual = [&](const SymTensor<Dim>& s) {
    const ConjugateValue cv = conjugate_of(spec, s, ctl);
    return cv.saturated ? cv.value : real_t(1e300);
  };
  return fenchel_conjugate<Dim>(dual, d, ctl);
}

}  // namespace galflow
