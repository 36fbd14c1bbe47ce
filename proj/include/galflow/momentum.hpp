#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "galflow/basis.hpp"
#include "galflow/continuity.hpp"
#include "galflow/grid.hpp"
#include "galflow/sym_tensor.hpp"

namespace galflow {

/// Everything the momentum dynamics needs that depends only on the basis and
/// the grid: sampled mode tables, per-mode face-velocity tables (face sampling
/// is linear in the coefficients, so any iterate's transport table is a linear
/// combination of these), and the two coupling constants.
template <int Dim>
struct GalerkinSystem {
  SineBasis<Dim> basis;
  Grid<Dim> grid;
  SampledBasis<Dim> sampled;
  std::vector<FaceVelocity<Dim>> mode_faces;
  real_t pressure_coeff;  ///< a in the barotropic law p = a * rho
  real_t eps;             ///< artificial viscosity, also scales the correction force

  GalerkinSystem(int mode_count, const Grid<Dim>& g, real_t a, real_t eps_)
      : basis(mode_count), grid(g), sampled(basis, g), pressure_coeff(a), eps(eps_) {
    if (a <= 0) throw std::invalid_argument("galerkin system: pressure coefficient must be > 0");
    if (eps_ < 0) throw std::invalid_argument("galerkin system: eps must be >= 0");
    mode_faces.reserve(basis.size());
    for (int k = 0; k < basis.size(); ++k)
      mode_faces.push_back(sample_face_velocity(
          g, [&](const typename Grid<Dim>::Vec& x) { return basis.value(k, x); }));
  }

  FaceVelocity<Dim> face_velocity(const Eigen::VectorXd& coeffs) const {
    return combine_face_tables(mode_faces, coeffs);
  }
};

/// Weighted mass matrix M_ij = integral rho w_i . w_j by the grid's midpoint
/// rule. Symmetric, and positive definite whenever rho is strictly positive.
template <int Dim>
Eigen::MatrixXd mass_matrix(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho) {
  if (!(rho.grid == sys.grid)) throw std::invalid_argument("mass_matrix: grid mismatch");
  if (!rho.positive())
    throw std::invalid_argument("mass_matrix: density must be strictly positive");
  const int n = sys.basis.size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const real_t vol = sys.grid.cell_volume();
  for (int c = 0; c < sys.grid.cells(); ++c) {
    const real_t w = vol * rho.values[c];
    for (int i = 0; i < n; ++i) {
      const auto vi = sys.sampled.mode_value(i, c);
      for (int j = i; j < n; ++j) m(i, j) += w * vi.dot(sys.sampled.mode_value(j, c));
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

/// Solves M x = rhs for an SPD mass matrix with one step of iterative
/// refinement; throws if the factorization reports loss of definiteness.
inline Eigen::VectorXd solve_mass(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("solve_mass: mass matrix is not positive definite");
  Eigen::VectorXd x = ldlt.solve(rhs);
  x += ldlt.solve(rhs - m * x);
  if (!x.allFinite()) throw std::runtime_error("solve_mass: non-finite solution");
  return x;
}

/// Extreme eigenvalues of a symmetric matrix (diagnostic helper).
inline std::pair<real_t, real_t> symmetric_spectrum_bounds(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("symmetric_spectrum_bounds: eigensolver failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

/// Basis constant c(n) with ||M[rho]||_2 <= c(n) * ||rho||_L1: the largest
/// cell value of sum_k |w_k(x)|^2 (Cauchy-Schwarz over coefficients).
template <int Dim>
real_t mass_norm_constant(const GalerkinSystem<Dim>& sys) {
  real_t worst = 0;
  for (int c = 0; c < sys.grid.cells(); ++c) {
    real_t s = 0;
    for (int k = 0; k < sys.basis.size(); ++k) s += sys.sampled.mode_value(k, c).squaredNorm();
    worst = std::max(worst, s);
  }
  return worst;
}

/// The four force contributions tested against every basis mode, separately
/// retrievable for diagnostics. Signs are those of the momentum balance in
/// weak form: d/dt <rho u, psi> = convective + viscous + pressure + correction.
struct ForcingParts {
  Eigen::VectorXd convective;   ///<  integral rho (u x u) : grad psi
  Eigen::VectorXd viscous;      ///< -integral S : grad psi
  Eigen::VectorXd pressure;     ///<  a * integral rho div psi
  Eigen::VectorXd correction;   ///< -eps * integral (grad rho . grad) u . psi

  Eigen::VectorXd total() const { return convective + viscous + pressure + correction; }
};

/// Assembles the forcing for one (density, velocity) snapshot. The stress
/// callable maps the symmetric velocity gradient to the viscous stress tensor
/// (a selection from the rheology module, or an analytic gradient).
template <int Dim, class StressFn>
ForcingParts assemble_forcing(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho,
                              const Eigen::VectorXd& coeffs, StressFn&& stress) {
  if (!(rho.grid == sys.grid)) throw std::invalid_argument("assemble_forcing: grid mismatch");
  const int n = sys.basis.size();
  ForcingParts f{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                 Eigen::VectorXd::Zero(n)};
  const real_t vol = sys.grid.cell_volume();
  using Mat = typename SineBasis<Dim>::Mat;
  for (int c = 0; c < sys.grid.cells(); ++c) {
    const auto u = sys.sampled.velocity(coeffs, c);
    const Mat grad_u = sys.sampled.velocity_gradient(coeffs, c);
    const auto s = stress(SymTensor<Dim>::FromFull(grad_u));
    const auto grad_rho = cell_gradient(sys.grid, rho.values, c);
    const Mat flux = rho.values[c] * (u * u.transpose());
    const auto drift = (grad_u * grad_rho).eval();  // (grad rho . grad) u
    const real_t a_rho = sys.pressure_coeff * rho.values[c];
    for (int j = 0; j < n; ++j) {
      const Mat gj = sys.sampled.mode_gradient(j, c);
      f.convective[j] += vol * flux.cwiseProduct(gj).sum();
      f.viscous[j] -= vol * ddot(s, gj);
      f.pressure[j] += vol * a_rho * sys.sampled.mode_divergence(j, c);
      f.correction[j] -= vol * sys.eps * drift.dot(sys.sampled.mode_value(j, c));
    }
  }
  return f;
}

/// L^2 projection of a pointwise momentum field onto the modes:
/// rhs_j = integral m0 . w_j by the midpoint rule.
template <int Dim, class MomentumFn>
Eigen::VectorXd project_momentum(const GalerkinSystem<Dim>& sys, MomentumFn&& m0) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.basis.size());
  const real_t vol = sys.grid.cell_volume();
  for (int c = 0; c < sys.grid.cells(); ++c) {
    const auto m = m0(sys.grid.center(c));
    for (int j = 0; j < sys.basis.size(); ++j)
      rhs[j] += vol * m.dot(sys.sampled.mode_value(j, c));
  }
  return rhs;
}

struct SolveControls {
  real_t t_final = 0.1;
  real_t node_dt = 1e-3;          ///< target node spacing; adjusted to divide t_final
  int window_nodes = 16;          ///< cap on node intervals per fixed-point window
  real_t window_cap_factor = 0.25;  ///< window length cap factor / (1 + K)
  real_t picard_tol = 1e-9;
  int picard_max_iter = 200;
  int window_max_halvings = 8;
  int substeps_per_node = 0;      ///< 0: pick from the initial velocity's Courant limit
  real_t stiffness_target = 0.5;  ///< per-step contraction budget for the stress reaction
};

struct WindowDiagnostics {
  int start_node = 0;
  int node_count = 0;
  int iterations = 0;
  int halvings = 0;                ///< failed longer attempts before this window converged
  std::vector<real_t> thetas;      ///< successive contraction quotients
  real_t final_delta = 0;

  /// Per-iteration contraction rate: geometric mean of all update quotients,
  /// i.e. (delta_last / delta_first)^(1/(k-1)). Individual quotients may
  /// briefly exceed one (the window map contracts in a time-weighted norm, so
  /// plain-norm transients are expected); the mean rate governs convergence
  /// and shrinks with the window length.
  real_t theta() const {
    if (thetas.empty()) return 0;
    real_t log_sum = 0;
    for (real_t t : thetas) log_sum += std::log(std::max(t, real_t(1e-300)));
    return std::exp(log_sum / static_cast<real_t>(thetas.size()));
  }
};

/// Node-grid trajectory of the coupled system. The momentum integral at node
/// j is the accumulated right-hand side m0* + integral_0^tj N, carried across
/// windows bit-for-bit so a window partition is purely a solution strategy.
template <int Dim>
struct Trajectory {
  std::vector<real_t> times;
  std::vector<Eigen::VectorXd> velocity;
  std::vector<DensityField<Dim>> density;
  std::vector<Eigen::VectorXd> momentum_integral;
  std::vector<WindowDiagnostics> windows;
  int substeps_per_node = 1;
  real_t node_dt = 0;
  int refine = 1;  ///< node intervals stored per requested node interval

  int nodes() const { return static_cast<int>(times.size()); }
};

/// Every refine-th node of a trajectory, as a trajectory on the coarser grid
/// (stride 1 copies). Window diagnostics stay with the solve that made them.
template <int Dim>
Trajectory<Dim> subsample_nodes(const Trajectory<Dim>& traj, int stride) {
  if (stride < 1) throw std::invalid_argument("subsample_nodes: stride must be positive");
  if ((traj.nodes() - 1) % stride != 0)
    throw std::invalid_argument("subsample_nodes: stride does not divide the node count");
  Trajectory<Dim> out;
  out.substeps_per_node = traj.substeps_per_node;
  out.node_dt = traj.node_dt * stride;
  out.refine = 1;
  for (int j = 0; j < traj.nodes(); j += stride) {
    out.times.push_back(traj.times[j]);
    out.velocity.push_back(traj.velocity[j]);
    out.density.push_back(traj.density[j]);
    out.momentum_integral.push_back(traj.momentum_integral[j]);
  }
  return out;
}

namespace detail {

/// Raised when a window refuses to contract even at one node interval; the
/// solver reacts by refining the whole node grid and retrying.
struct no_contraction_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Finite-difference estimate of the stress map's Lipschitz constant at the
/// strain magnitudes a solve will visit (shells around `scale`, kept away
/// from the origin where degenerate laws are not Lipschitz).
template <int Dim, class StressFn>
real_t stress_lipschitz_probe(StressFn&& stress, real_t scale) {
  std::vector<SymTensor<Dim>> dirs;
  for (int i = 0; i < SymTensor<Dim>::packed_size; ++i) {
    SymTensor<Dim> e;
    e.p[i] = 1;
    dirs.push_back(e);
  }
  real_t lip = 0;
  for (const auto& e : dirs)
    for (real_t m : {real_t(0.25), real_t(1), real_t(4)}) {
      const real_t mag = m * scale;
      const real_t step = real_t(0.05) * mag;
      const SymTensor<Dim> hi = stress(e * (mag + step));
      const SymTensor<Dim> lo = stress(e * (mag - step));
      const real_t ratio = frobenius_norm(hi - lo) / (2 * step);
      if (std::isfinite(ratio)) lip = std::max(lip, ratio);
    }
  return lip;
}

/// One fixed-point window over nodes [start, start+count] of the global grid.
template <int Dim, class StressFn>
struct WindowRun {
  bool converged = false;
  std::vector<Eigen::VectorXd> coeffs;       // per node, 0..count
  std::vector<DensityField<Dim>> densities;  // per node, consistent with coeffs
  std::vector<Eigen::VectorXd> integrals;    // I_j = integral over [t_start, t_j] of N
  WindowDiagnostics diag;
};

template <int Dim, class StressFn>
WindowRun<Dim, StressFn> run_picard_window(const GalerkinSystem<Dim>& sys,
                                           const std::vector<real_t>& times, int start, int count,
                                           const DensityField<Dim>& rho_start,
                                           const Eigen::VectorXd& u_start,
                                           const Eigen::VectorXd& m_star,
                                           const SolveControls& ctl, int substeps,
                                           StressFn&& stress) {
  WindowRun<Dim, StressFn> run;
  run.diag.start_node = start;
  run.diag.node_count = count;

  std::vector<Eigen::VectorXd> coeffs(count + 1, u_start);
  std::vector<DensityField<Dim>> rho_nodes(count + 1, rho_start);
  std::vector<Eigen::VectorXd> forces(count + 1);
  std::vector<Eigen::VectorXd> integrals(count + 1);

  // Density + forcing + integral sweep along the current iterate; velocity
  // between nodes interpolates linearly in the coefficients.
  auto sweep = [&] {
    for (int j = 0; j < count; ++j) {
      const real_t t0 = times[start + j], t1 = times[start + j + 1];
      auto velocity_at = [&](real_t t) {
        const real_t th = std::clamp((t - t0) / (t1 - t0), real_t(0), real_t(1));
        return sys.face_velocity(((1 - th) * coeffs[j] + th * coeffs[j + 1]).eval());
      };
      rho_nodes[j + 1] = integrate_density(rho_nodes[j], velocity_at, t0, t1, sys.eps, substeps);
    }
    for (int j = 0; j <= count; ++j)
      forces[j] = assemble_forcing(sys, rho_nodes[j], coeffs[j], stress).total();
    integrals[0] = Eigen::VectorXd::Zero(sys.basis.size());
    for (int j = 0; j < count; ++j) {
      const real_t dt = times[start + j + 1] - times[start + j];
      integrals[j + 1] = integrals[j] + (real_t(0.5) * dt) * (forces[j] + forces[j + 1]);
    }
  };

  const real_t start_scale = 1 + u_start.template lpNorm<Eigen::Infinity>();
  real_t prev_delta = -1, first_delta = -1;
  for (int iter = 1; iter <= ctl.picard_max_iter; ++iter) {
    run.diag.iterations = iter;
    real_t delta = 0, scale = 1;
    try {
      sweep();
      for (int j = 1; j <= count; ++j) {
        Eigen::VectorXd next = solve_mass(mass_matrix(sys, rho_nodes[j]), m_star + integrals[j]);
        delta = std::max(delta, (next - coeffs[j]).template lpNorm<Eigen::Infinity>());
        scale = std::max(scale, next.template lpNorm<Eigen::Infinity>());
        coeffs[j] = std::move(next);
      }
    } catch (const std::runtime_error&) {
      break;  // numeric breakdown along a runaway iterate: window too long
    }
    if (!std::isfinite(delta)) break;  // diverged: window too long
    if (first_delta < 0) first_delta = delta;
    if (prev_delta > 0) run.diag.thetas.push_back(delta / prev_delta);
    run.diag.final_delta = delta;
    if (delta <= ctl.picard_tol * scale) {
      run.converged = true;
      break;
    }
    // A bounded transient above the initial update is expected (the window map
    // contracts in a time-weighted norm); a runaway one means the window
    // violates the smallness condition and should be halved by the caller.
    if (delta > 100 * (first_delta + start_scale)) break;
    prev_delta = delta;
  }
  if (run.converged) {
    sweep();  // align densities and integrals with the accepted coefficients
    run.coeffs = std::move(coeffs);
    run.densities = std::move(rho_nodes);
    run.integrals = std::move(integrals);
  }
  return run;
}

/// One full pass over [0, t_final] on a fixed node grid. Throws
/// no_contraction_error if some window refuses to contract even at a single
/// node interval; the caller refines the grid and retries.
template <int Dim, class StressFn>
Trajectory<Dim> solve_on_grid(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho0,
                              const Eigen::VectorXd& u0, const SolveControls& ctl,
                              int node_count, int refine, StressFn&& stress) {
  const real_t node_dt = ctl.t_final / node_count;

  Trajectory<Dim> traj;
  traj.node_dt = node_dt;
  traj.refine = refine;
  traj.times.resize(node_count + 1);
  for (int j = 0; j <= node_count; ++j) traj.times[j] = ctl.t_final * j / node_count;
  traj.times[node_count] = ctl.t_final;

  int substeps = ctl.substeps_per_node;
  if (substeps < 1) {
    const auto sup0 = velocity_sup_norms(sys.basis, u0, sys.grid, 2);
    const real_t dt_cap = transport_dt_limit(sys.grid.h, 2 * sup0.sup_value);
    substeps = std::max(1, static_cast<int>(std::ceil(node_dt / dt_cap)));
  }
  traj.substeps_per_node = substeps;

  traj.velocity.assign(1, u0);
  traj.density.assign(1, rho0);
  traj.momentum_integral.assign(1, mass_matrix(sys, rho0) * u0);

  int start = 0;
  while (start < node_count) {
    const auto& u_start = traj.velocity[start];
    const auto sups = velocity_sup_norms(sys.basis, u_start, sys.grid, 2);
    const real_t k_norm = std::max(sups.sup_value, sups.sup_gradient);
    const real_t cap_time = ctl.window_cap_factor / (1 + k_norm);
    const int cap_nodes = std::max(1, static_cast<int>(std::floor(cap_time / node_dt)));
    int count = std::min({ctl.window_nodes, cap_nodes, node_count - start});

    int halvings = 0;
    for (;; ++halvings) {
      if (halvings > ctl.window_max_halvings)
        throw no_contraction_error("solve_momentum: no contraction at t = " +
                                   std::to_string(traj.times[start]) +
                                   " even at the minimal window length");
      auto run = detail::run_picard_window(sys, traj.times, start, count, traj.density[start],
                                           u_start, traj.momentum_integral[start], ctl, substeps,
                                           stress);
      if (!run.converged) {
        if (count == 1)
          throw no_contraction_error("solve_momentum: no contraction at t = " +
                                     std::to_string(traj.times[start]) +
                                     " even at the minimal window length");
        count = std::max(1, count / 2);
        continue;
      }
      run.diag.halvings = halvings;
      for (int j = 1; j <= count; ++j) {
        traj.velocity.push_back(run.coeffs[j]);
        traj.density.push_back(run.densities[j]);
        traj.momentum_integral.push_back(
            (traj.momentum_integral[start] + run.integrals[j]).eval());
      }
      traj.windows.push_back(std::move(run.diag));
      start += count;
      break;
    }
  }
  return traj;
}

}  // namespace detail

/// Integrates the coupled density/momentum system over [0, t_final] by
/// chaining contraction windows over a single global node grid. The window
/// layout adapts (initial cap from the iterate's W^{1,inf} size, halving on
/// contraction failure), and the node grid itself is refined by an integer
/// factor when the stress reaction is too stiff for the requested spacing:
/// the per-step contraction constant of the fixed-point map grows like
/// L_S * (pi k_max)^2 * dt / 4 with the stress Lipschitz constant L_S and the
/// top basis frequency k_max, so dt must shrink as the mode count grows. The
/// factor is estimated up front by probing the stress map and doubled on any
/// residual contraction failure.
template <int Dim, class StressFn>
Trajectory<Dim> solve_momentum(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho0,
                               const Eigen::VectorXd& u0, const SolveControls& ctl,
                               StressFn&& stress) {
  if (!(rho0.grid == sys.grid)) throw std::invalid_argument("solve_momentum: grid mismatch");
  if (u0.size() != sys.basis.size())
    throw std::invalid_argument("solve_momentum: coefficient count mismatch");
  if (!(ctl.t_final > 0) || !(ctl.node_dt > 0))
    throw std::invalid_argument("solve_momentum: horizon and node spacing must be positive");
  if (!(ctl.stiffness_target > 0))
    throw std::invalid_argument("solve_momentum: stiffness target must be positive");

  const int requested =
      std::max(1, static_cast<int>(std::ceil(ctl.t_final / ctl.node_dt - 1e-12)));
  const real_t requested_dt = ctl.t_final / requested;

  real_t freq2 = 0;
  for (int i = 0; i < sys.basis.size(); ++i) {
    real_t f2 = 0;
    for (int a = 0; a < Dim; ++a) {
      const real_t f = sys.basis.mode(i).freq[a];
      f2 += f * f;
    }
    freq2 = std::max(freq2, f2);
  }
  const auto sup0 = velocity_sup_norms(sys.basis, u0, sys.grid, 2);
  const real_t lip =
      detail::stress_lipschitz_probe<Dim>(stress, std::max(real_t(1), sup0.sup_gradient));
  const real_t rho_ref = std::clamp(rho0.min(), real_t(0.1), real_t(1));
  constexpr real_t pi2 = real_t(9.869604401089358);
  const real_t reaction_rate = lip * pi2 * freq2 / (4 * rho_ref);

  int refine = std::max(1, static_cast<int>(std::ceil(requested_dt * reaction_rate /
                                                      ctl.stiffness_target - 1e-12)));
  constexpr int kMaxRefine = 1 << 16;
  for (int doubling = 0;; ++doubling) {
    if (refine > kMaxRefine)
      throw std::runtime_error("solve_momentum: stress reaction too stiff for the node grid");
    try {
      return detail::solve_on_grid(sys, rho0, u0, ctl, requested * refine, refine, stress);
    } catch (const detail::no_contraction_error&) {
      if (doubling >= ctl.window_max_halvings) throw;
      refine *= 2;
    }
  }
}

/// A-posteriori audit of the projected momentum balance: recomputes the
/// forcing integral from the stored snapshots alone and reports the worst
/// relative residual of M[rho_j] u_j = m0* + integral_0^tj N over all nodes.
template <int Dim, class StressFn>
real_t galerkin_residual(const GalerkinSystem<Dim>& sys, const Trajectory<Dim>& traj,
                         StressFn&& stress) {
  if (traj.nodes() < 1) throw std::invalid_argument("galerkin_residual: empty trajectory");
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(sys.basis.size());
  Eigen::VectorXd prev_force =
      assemble_forcing(sys, traj.density[0], traj.velocity[0], stress).total();
  const Eigen::VectorXd m0 = traj.momentum_integral[0];
  real_t worst = 0;
  for (int j = 1; j < traj.nodes(); ++j) {
    const Eigen::VectorXd force =
        assemble_forcing(sys, traj.density[j], traj.velocity[j], stress).total();
    const real_t dt = traj.times[j] - traj.times[j - 1];
    integral += (real_t(0.5) * dt) * (prev_force + force);
    prev_force = force;
    const Eigen::VectorXd rhs = m0 + integral;
    const real_t resid = (mass_matrix(sys, traj.density[j]) * traj.velocity[j] - rhs)
                             .template lpNorm<Eigen::Infinity>();
    worst = std::max(worst, resid / std::max(real_t(1), rhs.template lpNorm<Eigen::Infinity>()));
  }
  return worst;
}

}  // namespace galflow
