#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "galflow/conjugate.hpp"
#include "galflow/momentum.hpp"

namespace galflow {

/// Pressure potential P(rho) = a rho log rho, extended continuously by
/// P(0) = 0. Defined for nonnegative densities only.
inline real_t pressure_potential(real_t a, real_t rho) {
  if (rho < 0) throw std::domain_error("pressure_potential: negative density");
  if (rho == 0) return 0;
  return a * rho * std::log(rho);
}

/// P'(rho) = a (log rho + 1), for diagnostics and derivative checks.
inline real_t pressure_potential_slope(real_t a, real_t rho) {
  if (rho <= 0) throw std::domain_error("pressure_potential_slope: density must be positive");
  return a * (std::log(rho) + 1);
}

template <int Dim>
real_t potential_energy(real_t a, const DensityField<Dim>& rho) {
  real_t acc = 0;
  for (int c = 0; c < rho.grid.cells(); ++c) acc += pressure_potential(a, rho.values[c]);
  return acc * rho.grid.cell_volume();
}

/// Pointwise momentum samples rho * u at the cell centers.
template <int Dim>
Eigen::Matrix<real_t, Eigen::Dynamic, Dim> momentum_field(const GalerkinSystem<Dim>& sys,
                                                          const DensityField<Dim>& rho,
                                                          const Eigen::VectorXd& coeffs) {
  if (!(rho.grid == sys.grid)) throw std::invalid_argument("momentum_field: grid mismatch");
  Eigen::Matrix<real_t, Eigen::Dynamic, Dim> m(sys.grid.cells(), Dim);
  for (int c = 0; c < sys.grid.cells(); ++c)
    m.row(c) = (rho.values[c] * sys.sampled.velocity(coeffs, c)).transpose();
  return m;
}

struct KineticEnergy {
  real_t value = 0;
  bool infinite = false;  ///< momentum observed on a vacuum cell
};

/// Kinetic energy integral (1/2) |m|^2 / rho from raw field samples, with the
/// vacuum convention: cells with rho = 0 and m = 0 contribute nothing, while
/// momentum on a vacuum cell signals an infinite-energy state.
template <int Dim>
KineticEnergy kinetic_energy_from_fields(const Grid<Dim>& g, const Eigen::VectorXd& rho,
                                         const Eigen::Matrix<real_t, Eigen::Dynamic, Dim>& m) {
  if (rho.size() != g.cells() || m.rows() != g.cells())
    throw std::invalid_argument("kinetic_energy_from_fields: sample count mismatch");
  KineticEnergy out;
  real_t acc = 0;
  for (int c = 0; c < g.cells(); ++c) {
    if (rho[c] < 0) throw std::domain_error("kinetic_energy_from_fields: negative density");
    const real_t m2 = m.row(c).squaredNorm();
    if (rho[c] == 0) {
      if (m2 > 0) out.infinite = true;
      continue;
    }
    acc += m2 / rho[c];
  }
  out.value = out.infinite ? std::numeric_limits<real_t>::infinity()
                           : real_t(0.5) * acc * g.cell_volume();
  return out;
}

/// Kinetic energy of a Galerkin state, (1/2) c^T M[rho] c.
template <int Dim>
real_t kinetic_energy(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho,
                      const Eigen::VectorXd& coeffs) {
  return real_t(0.5) * coeffs.dot(mass_matrix(sys, rho) * coeffs);
}

/// Dissipation rate of the density regularization: eps a int |grad rho|^2 / rho.
template <int Dim>
real_t artificial_dissipation_rate(real_t a, real_t eps, const DensityField<Dim>& rho) {
  if (!rho.positive())
    throw std::invalid_argument("artificial_dissipation_rate: density must be positive");
  real_t acc = 0;
  for (int c = 0; c < rho.grid.cells(); ++c)
    acc += cell_gradient(rho.grid, rho.values, c).squaredNorm() / rho.values[c];
  return eps * a * acc * rho.grid.cell_volume();
}

/// Viscous dissipation rate int S(Du) : Du.
template <int Dim, class StressFn>
real_t viscous_dissipation_rate(const GalerkinSystem<Dim>& sys, const Eigen::VectorXd& coeffs,
                                StressFn&& stress) {
  real_t acc = 0;
  for (int c = 0; c < sys.grid.cells(); ++c) {
    const auto d = SymTensor<Dim>::FromFull(sys.sampled.velocity_gradient(coeffs, c));
    acc += ddot(stress(d), d);
  }
  return acc * sys.grid.cell_volume();
}

/// Compression work rate a int rho div u (feeds the potential-balance column).
template <int Dim>
real_t compression_work_rate(const GalerkinSystem<Dim>& sys, const DensityField<Dim>& rho,
                             const Eigen::VectorXd& coeffs) {
  real_t acc = 0;
  for (int c = 0; c < sys.grid.cells(); ++c) {
    real_t div = 0;
    for (int k = 0; k < sys.basis.size(); ++k)
      div += coeffs[k] * sys.sampled.mode_divergence(k, c);
    acc += rho.values[c] * div;
  }
  return sys.pressure_coeff * acc * sys.grid.cell_volume();
}

/// One audited ledger row. Dissipation columns are cumulative integrals from
/// the initial time; residual is the defect of the energy equality
/// E(t) + int_0^t (viscous + regularization) = E(0).
struct EnergyRow {
  real_t time = 0;
  real_t kinetic = 0;
  real_t potential = 0;
  real_t visc_diss = 0;
  real_t art_diss = 0;
  real_t residual = 0;
  real_t potential_balance = 0;  ///< defect of the pressure-channel identity alone
};

struct EnergyAudit {
  std::vector<EnergyRow> rows;
  real_t initial_energy = 0;
  real_t tolerance = 0;  ///< c_audit * (node_dt + h^2) * max(|E(0)|, 1e-12)
  real_t worst_residual = 0;
  real_t worst_potential_balance = 0;
  bool dissipations_nonnegative = true;
  bool dissipations_monotone = true;
  bool pass = false;
};

/// Recomputes the energy balance of a stored trajectory along an independent
/// path: only node snapshots are used (never the solver's own integrals),
/// rates are re-derived per node and accumulated by the trapezoid rule.
template <int Dim, class StressFn>
EnergyAudit audit_energy(const GalerkinSystem<Dim>& sys, const Trajectory<Dim>& traj,
                         StressFn&& stress, real_t c_audit = 10) {
  if (traj.nodes() < 1) throw std::invalid_argument("audit_energy: empty trajectory");
  EnergyAudit audit;
  audit.rows.reserve(traj.nodes());

  std::vector<real_t> visc_rate(traj.nodes()), art_rate(traj.nodes()), work_rate(traj.nodes());
  for (int j = 0; j < traj.nodes(); ++j) {
    visc_rate[j] = viscous_dissipation_rate(sys, traj.velocity[j], stress);
    art_rate[j] = artificial_dissipation_rate(sys.pressure_coeff, sys.eps, traj.density[j]);
    work_rate[j] = compression_work_rate(sys, traj.density[j], traj.velocity[j]);
  }

  real_t visc_acc = 0, art_acc = 0, work_acc = 0;
  const real_t p0 = potential_energy(sys.pressure_coeff, traj.density[0]);
  for (int j = 0; j < traj.nodes(); ++j) {
    if (j > 0) {
      const real_t half_dt = real_t(0.5) * (traj.times[j] - traj.times[j - 1]);
      visc_acc += half_dt * (visc_rate[j - 1] + visc_rate[j]);
      art_acc += half_dt * (art_rate[j - 1] + art_rate[j]);
      work_acc += half_dt * (work_rate[j - 1] + work_rate[j]);
    }
    EnergyRow row;
    row.time = traj.times[j];
    row.kinetic = kinetic_energy(sys, traj.density[j], traj.velocity[j]);
    row.potential = potential_energy(sys.pressure_coeff, traj.density[j]);
    row.visc_diss = visc_acc;
    row.art_diss = art_acc;
    if (j == 0) audit.initial_energy = row.kinetic + row.potential;
    row.residual = row.kinetic + row.potential + row.visc_diss + row.art_diss -
                   audit.initial_energy;
    row.potential_balance = row.potential - p0 + work_acc + art_acc;
    audit.rows.push_back(row);
  }

  const real_t h = sys.grid.h;
  const real_t scale = std::max(std::abs(audit.initial_energy), real_t(1e-12));
  audit.tolerance = c_audit * (traj.node_dt + h * h) * scale;

  real_t prev_visc = 0, prev_art = 0;
  for (const auto& row : audit.rows) {
    audit.worst_residual = std::max(audit.worst_residual, std::abs(row.residual));
    audit.worst_potential_balance =
        std::max(audit.worst_potential_balance, std::abs(row.potential_balance));
    if (row.visc_diss < -1e-8 || row.art_diss < -1e-8) audit.dissipations_nonnegative = false;
    if (row.visc_diss < prev_visc - 1e-12 || row.art_diss < prev_art - 1e-12)
      audit.dissipations_monotone = false;
    prev_visc = row.visc_diss;
    prev_art = row.art_diss;
  }
  audit.pass = audit.worst_residual <= audit.tolerance && audit.dissipations_nonnegative &&
               audit.dissipations_monotone;
  return audit;
}

/// Worst Fenchel-Young defect |F(D) + F*(S) - S:D| with S selected by the
/// given stress map, over (at most max_cells) cell states of one snapshot.
/// For a subgradient selection the defect vanishes; a nonzero value bounds the
/// error of splitting the dissipation integrand into the two dual potentials.
template <int Dim, class StressFn>
real_t dissipation_consistency_gap(const GalerkinSystem<Dim>& sys, const Eigen::VectorXd& coeffs,
                                   const PotentialSpec& spec, StressFn&& stress,
                                   int max_cells = 64) {
  const int stride = std::max(1, sys.grid.cells() / std::max(1, max_cells));
  real_t worst = 0;
  for (int c = 0; c < sys.grid.cells(); c += stride) {
    const auto d = SymTensor<Dim>::FromFull(sys.sampled.velocity_gradient(coeffs, c));
    const auto s = stress(d);
    const auto dual = conjugate_of(spec, s);
    const auto r = fenchel_young_residual([&](const SymTensor<Dim>& b) {
      return potential_value(spec, b);
    }, dual, d, s);
    if (r.diverged) return std::numeric_limits<real_t>::infinity();
    worst = std::max(worst, std::abs(r.value));
  }
  return worst;
}

}  // namespace galflow
