#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "galflow/optimize.hpp"
#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Convex dissipation potentials on symmetric tensors.
///
/// Variants:
///  - quadratic: F(D) = mu/2 |D|^2 + bulk/2 (tr D)^2 (classical viscous pair);
///  - power_law: F(D) = mu/q |D|^q, q > 1;
///  - custom:    F(D) = g(|D|) with g a piecewise-linear convex nondecreasing
///    profile through (knots, values), linearly extrapolated past the last knot.
/// All variants satisfy F >= 0 and F(0) = 0 by construction/validation.
enum class PotentialVariant { quadratic, power_law, custom };

struct PotentialSpec {
  PotentialVariant variant = PotentialVariant::quadratic;
  real_t mu = 1.0;    ///< shear coefficient, > 0
  real_t bulk = 0.0;  ///< divergence-part coefficient (quadratic only), >= -mu
  real_t q = 2.0;     ///< growth exponent (power_law only), > 1
  std::vector<real_t> knots;   ///< custom: radii, ascending from 0
  std::vector<real_t> values;  ///< custom: profile values, convex from 0

  void validate() const {
    if (!(mu > 0)) throw std::invalid_argument("potential.mu: must be > 0");
    switch (variant) {
      case PotentialVariant::quadratic:
        if (!(bulk >= -mu))
          throw std::invalid_argument("potential.bulk: must be >= -mu (ellipticity)");
        break;
      case PotentialVariant::power_law:
        if (!(q > 1)) throw std::invalid_argument("potential.q: must be > 1");
        break;
      case PotentialVariant::custom: {
        if (knots.size() != values.size() || knots.size() < 2)
          throw std::invalid_argument("potential.knots/values: need matching lists, length >= 2");
        if (knots.front() != 0 || values.front() != 0)
          throw std::invalid_argument("potential.knots/values: profile must start at (0, 0)");
        real_t prev_slope = 0;
        for (size_t i = 1; i < knots.size(); ++i) {
          if (!(knots[i] > knots[i - 1]))
            throw std::invalid_argument("potential.knots: must be strictly increasing");
          const real_t slope = (values[i] - values[i - 1]) / (knots[i] - knots[i - 1]);
          if (slope < prev_slope - 1e-12)
            throw std::invalid_argument("potential.values: profile must be convex nondecreasing");
          prev_slope = slope;
        }
        break;
      }
    }
  }

  /// Rotation invariance of F on tensor space. Every variant is a function of
  /// |D| except the quadratic with a bulk term; in one spatial dimension the
  /// trace coincides with the single component, so that case is radial too.
  bool radial(int dim) const {
    if (variant != PotentialVariant::quadratic) return true;
    return bulk == 0 || dim == 1;
  }

  /// Radial profile g with F(D) = g(|D|), valid when radial(dim).
  real_t radial_profile(real_t r, int dim) const {
    switch (variant) {
      case PotentialVariant::quadratic: {
        const real_t coeff = mu + (dim == 1 ? bulk : real_t(0));
        return real_t(0.5) * coeff * r * r;
      }
      case PotentialVariant::power_law:
        return mu / q * std::pow(r, q);
      case PotentialVariant::custom:
        return piecewise_linear(r);
    }
    return 0;
  }

  real_t piecewise_linear(real_t r) const {
    if (r <= 0) return 0;
    const size_t m = knots.size();
    if (r >= knots[m - 1]) {
      const real_t slope = (values[m - 1] - values[m - 2]) / (knots[m - 1] - knots[m - 2]);
      return values[m - 1] + slope * (r - knots[m - 1]);
    }
    size_t hi = 1;
    while (knots[hi] < r) ++hi;
    const real_t t = (r - knots[hi - 1]) / (knots[hi] - knots[hi - 1]);
    return values[hi - 1] + t * (values[hi] - values[hi - 1]);
  }
};

template <int Dim>
inline real_t potential_value(const PotentialSpec& spec, const SymTensor<Dim>& d) {
  switch (spec.variant) {
    case PotentialVariant::quadratic: {
      const real_t tr = d.trace();
      return real_t(0.5) * spec.mu * ddot(d, d) + real_t(0.5) * spec.bulk * tr * tr;
    }
    case PotentialVariant::power_law:
      return spec.mu / spec.q * std::pow(frobenius_norm(d), spec.q);
    case PotentialVariant::custom:
      return spec.piecewise_linear(frobenius_norm(d));
  }
  return 0;
}

/// Closed-form gradient where the variant admits one (smooth points only);
/// used as an independent oracle against finite-difference stress selection.
template <int Dim>
inline std::optional<SymTensor<Dim>> potential_gradient_analytic(const PotentialSpec& spec,
                                                                 const SymTensor<Dim>& d) {
  switch (spec.variant) {
    case PotentialVariant::quadratic: {
      SymTensor<Dim> g = d * spec.mu;
      const real_t tr = d.trace();
      for (int i = 0; i < Dim; ++i) g.p[i] += spec.bulk * tr;
      return g;
    }
    case PotentialVariant::power_law: {
      const real_t r = frobenius_norm(d);
      if (r == 0) return SymTensor<Dim>::Zero();
      return d * (spec.mu * std::pow(r, spec.q - 2));
    }
    case PotentialVariant::custom:
      return std::nullopt;
  }
  return std::nullopt;
}

/// Coercivity triple (nu, exponent, offset) with
///   F(D) >= nu * |dev D|^exponent - offset   (Dim >= 2),
/// valid by construction for the closed-form variants; custom profiles have no
/// a-priori triple and must be certified empirically.
struct CoercivityParams {
  real_t nu = 0;
  real_t exponent = 2;
  real_t offset = 0;
};

inline std::optional<CoercivityParams> suggested_coercivity(const PotentialSpec& spec) {
  switch (spec.variant) {
    case PotentialVariant::quadratic:
      return CoercivityParams{real_t(0.5) * spec.mu, 2, 0};
    case PotentialVariant::power_law:
      return CoercivityParams{spec.mu / spec.q, spec.q, 0};
    case PotentialVariant::custom:
      return std::nullopt;
  }
  return std::nullopt;
}

/// In one spatial dimension the trace-free part vanishes identically, so the
/// working assumption is coercivity against |D| itself; the closed-form
/// variants satisfy the same triples in that reading.
inline std::optional<CoercivityParams> full_coercivity(const PotentialSpec& spec) {
  switch (spec.variant) {
    case PotentialVariant::quadratic:
      // mu/2 |D|^2 + bulk/2 (tr D)^2 >= (mu + min(bulk, 0))/2 |D|^2 in 1-D.
      return CoercivityParams{real_t(0.5) * (spec.mu + std::min(spec.bulk, real_t(0))), 2, 0};
    case PotentialVariant::power_law:
      return CoercivityParams{spec.mu / spec.q, spec.q, 0};
    case PotentialVariant::custom:
      return std::nullopt;
  }
  return std::nullopt;
}

/// Uniform sample in the Frobenius ball |D| <= radius of tensor space.
template <int Dim>
inline SymTensor<Dim> random_sym_tensor(std::mt19937_64& rng, real_t radius) {
  constexpr int k = SymTensor<Dim>::packed_size;
  std::normal_distribution<real_t> gauss;
  std::uniform_real_distribution<real_t> unif(0, 1);
  typename SymTensor<Dim>::Iso dir;
  real_t norm = 0;
  do {
    for (int i = 0; i < k; ++i) dir[i] = gauss(rng);
    norm = dir.norm();
  } while (norm == 0);
  const real_t r = radius * std::pow(unif(rng), real_t(1) / k);
  return SymTensor<Dim>::FromIso(typename SymTensor<Dim>::Iso(dir * (r / norm)));
}

struct CoercivityReport {
  int samples = 0;
  int violations = 0;
  real_t worst_margin = std::numeric_limits<real_t>::infinity();  ///< min of F - bound
};

/// Empirical check of F(D) >= nu * |dev D|^p - c over random samples
/// (|dev D| replaced by |D| when Dim == 1, where the trace-free part is void).
template <int Dim, class F>
CoercivityReport coercivity_check(F&& f, const CoercivityParams& params, int n_samples,
                                  std::uint64_t seed, real_t radius = 10) {
  std::mt19937_64 rng(seed);
  CoercivityReport rep;
  rep.samples = n_samples;
  for (int s = 0; s < n_samples; ++s) {
    const auto d = random_sym_tensor<Dim>(rng, radius);
    const real_t lever =
        Dim == 1 ? frobenius_norm(d) : frobenius_norm(deviatoric(d));
    const real_t bound = params.nu * std::pow(lever, params.exponent) - params.offset;
    const real_t margin = f(d) - bound;
    rep.worst_margin = std::min(rep.worst_margin, margin);
    if (margin < -1e-12) ++rep.violations;
  }
  return rep;
}

/// Midpoint-convexity probe on random tensor pairs: returns the number of
/// violations of F((A+B)/2) <= (F(A)+F(B))/2 + tol.
template <int Dim, class F>
int convexity_violations(F&& f, int n_trials, std::uint64_t seed, real_t radius = 10,
                         real_t tol = 1e-9) {
  std::mt19937_64 rng(seed);
  int bad = 0;
  for (int t = 0; t < n_trials; ++t) {
    const auto a = random_sym_tensor<Dim>(rng, radius);
    const auto b = random_sym_tensor<Dim>(rng, radius);
    const auto mid = (a + b) * real_t(0.5);
    if (f(mid) > real_t(0.5) * (f(a) + f(b)) + tol) ++bad;
  }
  return bad;
}

/// Radially symmetric smoothing kernel on tensor space: the polynomial bump
/// (1 - |z/delta|^2)^bump_power supported on |z| <= delta, discretized by a
/// tensor-product midpoint rule in isometric coordinates and normalized to
/// unit mass on that rule.
struct MollifierSpec {
  real_t delta = 0.1;
  int nodes_per_axis = 15;
  int bump_power = 3;

  void validate() const {
    if (!(delta > 0)) throw std::invalid_argument("mollifier.delta: must be > 0");
    if (nodes_per_axis < 5) throw std::invalid_argument("mollifier.nodes_per_axis: need >= 5");
    if (bump_power < 1) throw std::invalid_argument("mollifier.bump_power: need >= 1");
  }
};

/// Smooth convex regularization of a potential: kernel average shifted so the
/// minimum over tensor space is zero. Evaluation is the quadrature sum
/// sum_i w_i F(D - Z_i) - shift; the gradient (viscous stress selection) is a
/// symmetric difference quotient in isometric coordinates with step
/// 1e-5 * max(1, |D|).
template <int Dim>
class MollifiedPotential {
 public:
  static constexpr int k = SymTensor<Dim>::packed_size;
  using Iso = typename SymTensor<Dim>::Iso;

  MollifiedPotential(PotentialSpec pot, MollifierSpec mol) : pot_(std::move(pot)), mol_(mol) {
    pot_.validate();
    mol_.validate();
    build_quadrature();
    // Shift so the smoothed potential has zero minimum. The raw average is
    // convex and coercive, so the minimizer sits near the origin.
    const real_t search_radius = std::max(real_t(1), 4 * mol_.delta);
    const auto lowest = detail::nested_grid_min<k>(
        [this](const Iso& y) { return raw(SymTensor<Dim>::FromIso(y)); }, search_radius);
    shift_ = lowest.value;
  }

  real_t operator()(const SymTensor<Dim>& d) const { return raw(d) - shift_; }

  /// Viscous stress selected from the smoothed potential at D.
  SymTensor<Dim> stress(const SymTensor<Dim>& d) const {
    const real_t step = 1e-5 * std::max(real_t(1), frobenius_norm(d));
    const Iso y0 = d.iso();
    Iso g;
    for (int a = 0; a < k; ++a) {
      Iso hi = y0, lo = y0;
      hi[a] += step;
      lo[a] -= step;
      g[a] = (raw(SymTensor<Dim>::FromIso(hi)) - raw(SymTensor<Dim>::FromIso(lo))) / (2 * step);
    }
    return SymTensor<Dim>::FromIso(g);
  }

  real_t shift() const { return shift_; }
  real_t delta() const { return mol_.delta; }
  const PotentialSpec& base() const { return pot_; }
  const MollifierSpec& kernel() const { return mol_; }

  /// Discrete mass of the normalized kernel (unity by construction).
  real_t kernel_mass() const {
    real_t m = 0;
    for (const auto& node : quad_) m += node.weight;
    return m;
  }

  /// Midpoint integral of the unnormalized bump, for quadrature sanity checks.
  real_t kernel_raw_integral() const { return raw_integral_; }

  bool radial() const { return pot_.radial(Dim); }

  /// Profile value at radius r (radial potentials only; mollification by a
  /// radial kernel preserves rotation invariance).
  real_t radial_value(real_t r) const {
    Iso y = Iso::Zero();
    y[0] = r;
    return (*this)(SymTensor<Dim>::FromIso(y));
  }

  /// Coercivity triple inherited from the base potential: the kernel average
  /// of a convex F dominates F, so F_smoothed >= F - shift pointwise and any
  /// base triple survives with the offset enlarged by the shift.
  CoercivityParams inherited_coercivity(const CoercivityParams& base_params) const {
    return {base_params.nu, base_params.exponent, base_params.offset + shift_};
  }

 private:
  struct Node {
    Iso offset;
    real_t weight;
  };

  void build_quadrature() {
    const int m = mol_.nodes_per_axis;
    const real_t d = mol_.delta;
    const real_t step = 2 * d / m;
    long total = 1;
    for (int a = 0; a < k; ++a) total *= m;
    real_t mass = 0;
    const real_t cell = std::pow(step, k);
    quad_.clear();
    for (long idx = 0; idx < total; ++idx) {
      long rem = idx;
      Iso z;
      for (int a = 0; a < k; ++a) {
        const int j = static_cast<int>(rem % m);
        rem /= m;
        z[a] = -d + (j + real_t(0.5)) * step;
      }
      const real_t s2 = z.squaredNorm() / (d * d);
      if (s2 >= 1) continue;
      const real_t w = std::pow(1 - s2, mol_.bump_power) * cell;
      quad_.push_back({z, w});
      mass += w;
    }
    raw_integral_ = mass;
    for (auto& node : quad_) node.weight /= mass;
  }

  real_t raw(const SymTensor<Dim>& d) const {
    const Iso y0 = d.iso();
    real_t acc = 0;
    for (const auto& node : quad_)
      acc += node.weight * potential_value<Dim>(pot_, SymTensor<Dim>::FromIso(Iso(y0 - node.offset)));
    return acc;
  }

  PotentialSpec pot_;
  MollifierSpec mol_;
  std::vector<Node> quad_;
  real_t shift_ = 0;
  real_t raw_integral_ = 0;
};

}  // namespace galflow
