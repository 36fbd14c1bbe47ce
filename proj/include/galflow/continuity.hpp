#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "galflow/grid.hpp"

namespace galflow {

/// Face-normal velocity samples on the staggered face lattice of a grid.
///
/// Axis a holds one entry per face orthogonal to axis a: (n+1) positions along
/// axis a, n along every other axis, flattened with the face-position index
/// fastest. Boundary faces are pinned to zero (impermeable box); only the
/// interior entries influence the transport stencil.
template <int Dim>
struct FaceVelocity {
  Grid<Dim> grid;
  std::array<Eigen::VectorXd, Dim> normal;
};

template <int Dim>
inline int face_count(const Grid<Dim>& g, int axis) {
  (void)axis;
  if constexpr (Dim == 1) return g.n + 1;
  return (g.n + 1) * g.n;
}

/// Center coordinates of a face; the face-position index runs fastest.
template <int Dim>
inline typename Grid<Dim>::Vec face_center(const Grid<Dim>& g, int axis, int face_index) {
  typename Grid<Dim>::Vec x;
  if constexpr (Dim == 1) {
    x[0] = face_index * g.h;
  } else if (axis == 0) {
    const int i = face_index % (g.n + 1), j = face_index / (g.n + 1);
    x[0] = i * g.h;
    x[1] = (j + real_t(0.5)) * g.h;
  } else {
    const int i = face_index % g.n, j = face_index / g.n;
    x[0] = (i + real_t(0.5)) * g.h;
    x[1] = j * g.h;
  }
  return x;
}

/// Samples the normal component of a velocity field at every face center.
/// Boundary faces are forced to zero so the stored table always describes a
/// closed box, whatever the callable returns on the walls.
template <int Dim, class VelocityFn>
FaceVelocity<Dim> sample_face_velocity(const Grid<Dim>& g, VelocityFn&& velocity) {
  FaceVelocity<Dim> out;
  out.grid = g;
  for (int a = 0; a < Dim; ++a) {
    out.normal[a] = Eigen::VectorXd::Zero(face_count(g, a));
    for (int f = 0; f < out.normal[a].size(); ++f) {
      const auto x = face_center(g, a, f);
      const int pos = [&] {
        if constexpr (Dim == 1) return f;
        return a == 0 ? f % (g.n + 1) : f / g.n;
      }();
      if (pos == 0 || pos == g.n) continue;  // wall faces stay zero
      const auto v = velocity(x);
      out.normal[a][f] = v[a];
    }
  }
  return out;
}

template <int Dim>
FaceVelocity<Dim> zero_face_velocity(const Grid<Dim>& g) {
  FaceVelocity<Dim> out;
  out.grid = g;
  for (int a = 0; a < Dim; ++a) out.normal[a] = Eigen::VectorXd::Zero(face_count(g, a));
  return out;
}

/// Linear combination of per-mode face tables; exact counterpart of combining
/// basis coefficients, since face sampling is linear in the field.
template <int Dim>
FaceVelocity<Dim> combine_face_tables(const std::vector<FaceVelocity<Dim>>& per_mode,
                                      const Eigen::VectorXd& coeffs) {
  if (per_mode.empty()) throw std::invalid_argument("combine_face_tables: no tables");
  if (static_cast<int>(per_mode.size()) != coeffs.size())
    throw std::invalid_argument("combine_face_tables: coefficient count mismatch");
  FaceVelocity<Dim> out;
  out.grid = per_mode.front().grid;
  for (int a = 0; a < Dim; ++a) {
    out.normal[a] = Eigen::VectorXd::Zero(per_mode.front().normal[a].size());
    for (size_t k = 0; k < per_mode.size(); ++k) {
      if (!(per_mode[k].grid == out.grid))
        throw std::invalid_argument("combine_face_tables: grids differ");
      out.normal[a] += coeffs[static_cast<int>(k)] * per_mode[k].normal[a];
    }
  }
  return out;
}

namespace detail {

/// Visits every interior face as (face value, left cell, right cell).
template <int Dim, class Visit>
void for_each_interior_face(const FaceVelocity<Dim>& vel, Visit&& visit) {
  const auto& g = vel.grid;
  if constexpr (Dim == 1) {
    for (int i = 1; i < g.n; ++i) visit(vel.normal[0][i], i - 1, i);
  } else {
    for (int j = 0; j < g.n; ++j)
      for (int i = 1; i < g.n; ++i)
        visit(vel.normal[0][i + (g.n + 1) * j], (i - 1) + g.n * j, i + g.n * j);
    for (int j = 1; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i)
        visit(vel.normal[1][i + g.n * j], i + g.n * (j - 1), i + g.n * j);
  }
}

}  // namespace detail

/// Largest cell-wise magnitude of the discrete divergence carried by the face
/// table: max over cells of |sum_axis (u_right - u_left)/h|.
template <int Dim>
real_t face_divergence_sup(const FaceVelocity<Dim>& vel) {
  const auto& g = vel.grid;
  Eigen::VectorXd div = Eigen::VectorXd::Zero(g.cells());
  detail::for_each_interior_face(vel, [&](real_t u, int left, int right) {
    div[left] += u / g.h;   // outflow through the shared face
    div[right] -= u / g.h;  // inflow for the neighbour
  });
  return div.size() ? div.cwiseAbs().maxCoeff() : real_t(0);
}

/// Backward-Euler system matrix I + dt*A[u] + eps*dt*L for one implicit step,
/// with A the conservative first-order upwind divergence and L the (negated)
/// Neumann Laplacian from ghost-cell reflection. Off-diagonals are
/// non-positive and every column sums to exactly one, which is what makes the
/// step positivity-preserving and mass-conserving.
template <int Dim>
Eigen::SparseMatrix<real_t> transport_system(const FaceVelocity<Dim>& vel, real_t eps, real_t dt) {
  if (dt <= 0) throw std::invalid_argument("transport_system: dt must be positive");
  if (eps < 0) throw std::invalid_argument("transport_system: eps must be non-negative");
  const auto& g = vel.grid;
  std::vector<Eigen::Triplet<real_t>> trip;
  trip.reserve(static_cast<size_t>(g.cells()) * (1 + 4 * Dim));
  for (int c = 0; c < g.cells(); ++c) trip.emplace_back(c, c, real_t(1));
  const real_t adv = dt / g.h;
  const real_t dif = eps * dt / (g.h * g.h);
  detail::for_each_interior_face(vel, [&](real_t u, int left, int right) {
    const real_t up = std::max(u, real_t(0)), um = std::min(u, real_t(0));
    trip.emplace_back(left, left, adv * up);
    trip.emplace_back(left, right, adv * um);
    trip.emplace_back(right, right, -adv * um);
    trip.emplace_back(right, left, -adv * up);
    if (dif != 0) {
      trip.emplace_back(left, left, dif);
      trip.emplace_back(left, right, -dif);
      trip.emplace_back(right, right, dif);
      trip.emplace_back(right, left, -dif);
    }
  });
  Eigen::SparseMatrix<real_t> m(g.cells(), g.cells());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// One implicit transport step. Throws on solver failure; positivity of the
/// result is the caller's contract to inspect (see integrate_density).
template <int Dim>
DensityField<Dim> advance_density(const DensityField<Dim>& rho, const FaceVelocity<Dim>& vel,
                                  real_t eps, real_t dt) {
  if (!(rho.grid == vel.grid))
    throw std::invalid_argument("advance_density: field and velocity grids differ");
  const auto system = transport_system(vel, eps, dt);
  Eigen::SparseLU<Eigen::SparseMatrix<real_t>> solver;
  solver.compute(system);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("advance_density: implicit step factorization failed");
  Eigen::VectorXd next = solver.solve(rho.values);
  if (solver.info() != Eigen::Success || !next.allFinite())
    throw std::runtime_error("advance_density: implicit step solve failed");
  return DensityField<Dim>(rho.grid, std::move(next));
}

/// Step-size heuristic keeping the advective Courant number comfortably small.
inline real_t transport_dt_limit(real_t h, real_t sup_speed) {
  return h / (2 * sup_speed + 1);
}

struct TransportRunReport {
  int steps = 0;
  int halvings = 0;
  real_t dt = 0;
};

/// Integrates the density from t0 to t1 with a fixed number of implicit
/// substeps, re-sampling the velocity table at each substep start. If a step
/// ever loses strict positivity (possible only through roundoff, the stencil
/// is an M-matrix) the whole interval is retried with doubled resolution.
template <int Dim, class VelocityAtTime>
DensityField<Dim> integrate_density(const DensityField<Dim>& rho0, VelocityAtTime&& velocity_at,
                                    real_t t0, real_t t1, real_t eps, int substeps,
                                    TransportRunReport* report = nullptr) {
  if (substeps < 1) throw std::invalid_argument("integrate_density: need at least one substep");
  if (!(t1 > t0)) throw std::invalid_argument("integrate_density: empty time interval");
  constexpr int kMaxHalvings = 12;
  for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
    const int steps = substeps << attempt;
    const real_t dt = (t1 - t0) / steps;
    DensityField<Dim> field = rho0;
    bool positive = true;
    for (int k = 0; k < steps && positive; ++k) {
      field = advance_density(field, velocity_at(t0 + k * dt), eps, dt);
      positive = field.positive();
    }
    if (positive) {
      if (report) *report = {steps, attempt, dt};
      return field;
    }
  }
  throw std::runtime_error("integrate_density: positivity lost even after step halvings");
}

/// Growth/decay envelope audit for a transported density: the continuum
/// bounds max <= max0 * exp(tD) and min >= min0 * exp(-tD) with D the sup of
/// |div u|, augmented by the discretization slack of the implicit upwind
/// stencil (relative slack 4t(dt D^2 + h^2 D) plus an absolute 1e-9 floor).
struct EnvelopeReport {
  real_t time = 0;
  real_t sup_div = 0;
  real_t pure_upper = 0;    ///< continuum bound max0 * exp(tD)
  real_t pure_lower = 0;    ///< continuum bound min0 * exp(-tD)
  real_t upper_allowed = 0; ///< pure bound with discretization slack
  real_t lower_allowed = 0;
  real_t observed_max = 0;
  real_t observed_min = 0;
  real_t over_upper = 0;  ///< how far the sample exceeds the pure bound (<=0: inside)
  real_t under_lower = 0; ///< how far the sample undershoots the pure bound (<=0: inside)
  bool ok = false;
};

template <int Dim>
EnvelopeReport density_envelope_check(const DensityField<Dim>& initial,
                                      const DensityField<Dim>& evolved, real_t elapsed,
                                      real_t sup_div, real_t dt) {
  if (!(initial.grid == evolved.grid))
    throw std::invalid_argument("density_envelope_check: grids differ");
  EnvelopeReport r;
  r.time = elapsed;
  r.sup_div = sup_div;
  const real_t growth = std::exp(elapsed * sup_div);
  r.pure_upper = initial.max() * growth;
  r.pure_lower = initial.min() / growth;
  const real_t h = initial.grid.h;
  const real_t slack = 4 * elapsed * (dt * sup_div * sup_div + h * h * sup_div);
  r.upper_allowed = r.pure_upper * (1 + slack) + 1e-9;
  r.lower_allowed = std::max(real_t(0), r.pure_lower * (1 - slack) - 1e-9);
  r.observed_max = evolved.max();
  r.observed_min = evolved.min();
  r.over_upper = r.observed_max - r.pure_upper;
  r.under_lower = r.pure_lower - r.observed_min;
  r.ok = r.observed_max <= r.upper_allowed && r.observed_min >= r.lower_allowed &&
         r.observed_min > 0;
  return r;
}

/// Continuous-dependence quotient of the transported density on its driving
/// velocity: sup over substep times of the L2 distance between the two
/// density trajectories, divided by the supplied W^{1,inf} distance of the
/// velocities. Returns nullopt on a degenerate (0/0) denominator.
template <int Dim, class VelA, class VelB>
std::optional<real_t> stability_gap(const DensityField<Dim>& rho0, VelA&& vel_a, VelB&& vel_b,
                                    real_t t_final, real_t eps, int substeps,
                                    real_t velocity_w1inf_distance) {
  if (velocity_w1inf_distance < 1e-14) return std::nullopt;
  if (substeps < 1) throw std::invalid_argument("stability_gap: need at least one substep");
  const real_t dt = t_final / substeps;
  const real_t vol = rho0.grid.cell_volume();
  DensityField<Dim> a = rho0, b = rho0;
  real_t worst = 0;
  for (int k = 0; k < substeps; ++k) {
    const real_t t = k * dt;
    a = advance_density(a, vel_a(t), eps, dt);
    b = advance_density(b, vel_b(t), eps, dt);
    worst = std::max(worst, std::sqrt((a.values - b.values).squaredNorm() * vol));
  }
  return worst / velocity_w1inf_distance;
}

}  // namespace galflow
