#pragma once

/// \file scenario.hpp
/// Simulation scenarios: a flat key/value config format, validated scenario
/// descriptions with named initial-data presets, and a one-call driver that
/// runs the full solve + bookkeeping pipeline for a scenario.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <galflow/continuity.hpp>
#include <galflow/energy.hpp>
#include <galflow/momentum.hpp>
#include <galflow/potential.hpp>
#include <galflow/sweep.hpp>

namespace galflow {

/// Flat configuration: `[section]` headers group plain `key = value` lines,
/// full-line comments start with `#` or `;`.  Keys are addressed by callers as
/// "section.key".  Every lookup marks its key as consumed so a final
/// check_consumed() can reject misspelled or misplaced keys by name.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text,
                                const std::string& origin = "<config>");

  bool has(const std::string& field) const;

  std::string get_string(const std::string& field) const;
  std::string get_string(const std::string& field, const std::string& fallback) const;
  real_t get_real(const std::string& field) const;
  real_t get_real(const std::string& field, real_t fallback) const;
  long long get_int(const std::string& field) const;
  long long get_int(const std::string& field, long long fallback) const;
  std::uint64_t get_u64(const std::string& field, std::uint64_t fallback) const;
  bool get_bool(const std::string& field, bool fallback) const;
  /// Comma-separated list of reals; an absent field yields the fallback.
  std::vector<real_t> get_reals(const std::string& field,
                                std::vector<real_t> fallback = {}) const;
  std::vector<int> get_ints(const std::string& field, std::vector<int> fallback = {}) const;

  /// Throws if any stored key was never read, naming every leftover.
  void check_consumed() const;

  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
  std::string origin_;

  const std::string& raw(const std::string& field) const;
};

enum class DensityPreset { constant, cosine, random_smooth, tabulated };
enum class MomentumPreset { rest, single_mode, random_modes };

DensityPreset density_preset_from(const std::string& name);
MomentumPreset momentum_preset_from(const std::string& name);
std::string to_string(DensityPreset preset);
std::string to_string(MomentumPreset preset);

/// Complete description of one simulation run.  Field names mirror the config
/// keys ("section.key") that fill them; validate() reports violations under
/// those names.
struct Scenario {
  // [scenario]
  int dim = 1;
  int grid_cells = 64;
  int modes = 4;
  std::uint64_t seed = 0;
  real_t t_final = 0.1;
  real_t node_dt = 1e-3;
  int output_every = 1;

  // [density]
  DensityPreset density_preset = DensityPreset::constant;
  real_t density_base = 1.0;
  real_t density_amplitude = 0.0;
  int density_waves = 1;
  std::vector<real_t> density_values;  ///< tabulated preset: one value per cell

  // [momentum]
  MomentumPreset momentum_preset = MomentumPreset::rest;
  real_t momentum_amplitude = 0.0;
  int momentum_waves = 1;

  // [physics]
  real_t pressure_coeff = 1.0;
  real_t eps = 0.1;
  real_t delta = 0.1;

  // [potential]
  PotentialSpec potential;

  // [solver]
  SolveControls controls;  ///< t_final / node_dt are overwritten from above
  real_t c_audit = 10.0;

  static Scenario from_config(const ConfigMap& cfg);
  void validate() const;

  /// Requested node intervals for the configured horizon and spacing.
  int requested_intervals() const {
    return std::max(1, static_cast<int>(std::ceil(t_final / node_dt - 1e-12)));
  }
};

/// Clamp a sampled density into [1/modes, modes] and rescale the result so the
/// total mass matches the input.  The identity on data already inside the
/// band; always returns strictly positive values.
Eigen::VectorXd mollify_initial_density(const Eigen::VectorXd& rho, int modes);

/// Initial density as a point-evaluable closure.  Deterministic in
/// scenario.seed for the random preset.
template <int Dim>
std::function<real_t(const typename Grid<Dim>::Vec&)> initial_density_fn(const Scenario& sc) {
  using Vec = typename Grid<Dim>::Vec;
  constexpr real_t pi = real_t(3.14159265358979323846);
  switch (sc.density_preset) {
    case DensityPreset::constant: {
      const real_t base = sc.density_base;
      return [base](const Vec&) { return base; };
    }
    case DensityPreset::cosine: {
      const real_t base = sc.density_base;
      const real_t amp = sc.density_amplitude;
      const int waves = sc.density_waves;
      return [=](const Vec& x) {
        real_t prod = 1;
        for (int a = 0; a < Dim; ++a) prod *= std::cos(pi * waves * x[a]);
        return base + amp * prod;
      };
    }
    case DensityPreset::random_smooth: {
      // Three low harmonics with geometrically decaying random weights; the
      // weights sum below the amplitude, so base > amplitude keeps the field
      // positive.
      std::mt19937_64 rng(sc.seed);
      std::uniform_real_distribution<real_t> unit(-1, 1);
      std::array<real_t, 3> coeff{};
      for (int k = 0; k < 3; ++k)
        coeff[k] = unit(rng) * sc.density_amplitude / real_t(1 << (k + 1));
      const real_t base = sc.density_base;
      return [base, coeff](const Vec& x) {
        real_t value = base;
        for (int k = 0; k < 3; ++k) {
          real_t prod = 1;
          for (int a = 0; a < Dim; ++a) prod *= std::cos(pi * (k + 1) * x[a]);
          value += coeff[k] * prod;
        }
        return value;
      };
    }
    case DensityPreset::tabulated: {
      const long long expected = [&] {
        long long cells = sc.grid_cells;
        if (Dim == 2) cells *= sc.grid_cells;
        return cells;
      }();
      if (static_cast<long long>(sc.density_values.size()) != expected)
        throw std::invalid_argument("density.values: need exactly one entry per grid cell");
      const std::vector<real_t> table = sc.density_values;
      const int n = sc.grid_cells;
      return [table, n](const Vec& x) {
        std::array<int, Dim> c{};
        for (int a = 0; a < Dim; ++a)
          c[a] = std::clamp(static_cast<int>(std::floor(x[a] * n)), 0, n - 1);
        int flat = c[0];
        if constexpr (Dim == 2) flat += c[1] * n;
        return table[static_cast<size_t>(flat)];
      };
    }
  }
  throw std::logic_error("initial_density_fn: unhandled preset");
}

/// Initial momentum as a point-evaluable closure.  All presets vanish on the
/// domain boundary.  The random preset draws from a stream independent of the
/// density's.
template <int Dim>
std::function<typename Grid<Dim>::Vec(const typename Grid<Dim>::Vec&)> initial_momentum_fn(
    const Scenario& sc) {
  using Vec = typename Grid<Dim>::Vec;
  constexpr real_t pi = real_t(3.14159265358979323846);
  switch (sc.momentum_preset) {
    case MomentumPreset::rest:
      return [](const Vec&) { return Vec::Zero().eval(); };
    case MomentumPreset::single_mode: {
      const real_t amp = sc.momentum_amplitude;
      const int waves = sc.momentum_waves;
      return [=](const Vec& x) {
        real_t prod = amp;
        for (int a = 0; a < Dim; ++a) prod *= std::sin(pi * waves * x[a]);
        Vec m = Vec::Zero();
        m[0] = prod;
        return m;
      };
    }
    case MomentumPreset::random_modes: {
      std::mt19937_64 rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
      std::uniform_real_distribution<real_t> unit(-1, 1);
      std::array<std::array<real_t, 3>, Dim> coeff{};
      for (int a = 0; a < Dim; ++a)
        for (int k = 0; k < 3; ++k)
          coeff[a][k] = unit(rng) * sc.momentum_amplitude / real_t(1 << (k + 1));
      return [coeff](const Vec& x) {
        Vec m = Vec::Zero();
        for (int a = 0; a < Dim; ++a)
          for (int k = 0; k < 3; ++k) {
            real_t prod = 1;
            for (int b = 0; b < Dim; ++b) prod *= std::sin(pi * (k + 1) * x[b]);
            m[a] += coeff[a][k] * prod;
          }
        return m;
      };
    }
  }
  throw std::logic_error("initial_momentum_fn: unhandled preset");
}

/// Largest |velocity component| over all cells and stored nodes.
template <int Dim>
real_t velocity_sup(const GalerkinSystem<Dim>& sys, const Trajectory<Dim>& traj) {
  real_t sup = 0;
  for (const auto& coeffs : traj.velocity)
    for (int c = 0; c < sys.grid.cells(); ++c)
      sup = std::max(sup, sys.sampled.velocity(coeffs, c).template lpNorm<Eigen::Infinity>());
  return sup;
}

/// Largest |div u| over cell centers for one coefficient vector.
template <int Dim>
real_t div_sup(const GalerkinSystem<Dim>& sys, const Eigen::VectorXd& coeffs) {
  real_t sup = 0;
  for (int c = 0; c < sys.grid.cells(); ++c)
    sup = std::max(sup, std::abs(sys.sampled.velocity_gradient(coeffs, c).trace()));
  return sup;
}

/// Exponential-envelope check of every stored node against the initial
/// density, using the running sup of |div u| over the nodes seen so far and
/// the actual transport step of the solve.  Entry j corresponds to node j+1.
template <int Dim>
std::vector<EnvelopeReport> envelope_reports(const GalerkinSystem<Dim>& sys,
                                             const Trajectory<Dim>& traj) {
  std::vector<EnvelopeReport> out;
  if (traj.nodes() < 2) return out;
  const real_t dt = traj.node_dt / std::max(1, traj.substeps_per_node);
  real_t sup_div = div_sup(sys, traj.velocity[0]);
  out.reserve(static_cast<size_t>(traj.nodes()) - 1);
  for (int j = 1; j < traj.nodes(); ++j) {
    sup_div = std::max(sup_div, div_sup(sys, traj.velocity[j]));
    out.push_back(density_envelope_check(traj.density[0], traj.density[j],
                                         traj.times[j] - traj.times[0], sup_div, dt));
  }
  return out;
}

/// Everything one scenario run produces: the solve itself at full internal
/// resolution, a thinned copy on the requested reporting grid, and the
/// bookkeeping (energy audit, density envelopes, mass drift).
template <int Dim>
struct ScenarioRun {
  Grid<Dim> grid;
  std::unique_ptr<GalerkinSystem<Dim>> system;
  Trajectory<Dim> trajectory;             ///< full solve resolution
  Trajectory<Dim> reported;               ///< requested nodes thinned by output_every
  EnergyAudit audit;
  std::vector<EnvelopeReport> envelopes;  ///< per full-resolution node
  real_t mass_drift = 0;                  ///< max relative mass deviation
};

/// Build initial data from the presets, clamp-and-renormalize the density,
/// assemble the spectral system, and run solve + audit + envelopes.
template <int Dim>
ScenarioRun<Dim> run_scenario(const Scenario& sc) {
  static_assert(Dim == 1 || Dim == 2);
  sc.validate();
  if (sc.dim != Dim)
    throw std::invalid_argument("scenario.dimension: does not match the compiled dispatch");

  ScenarioRun<Dim> run;
  run.grid = Grid<Dim>(sc.grid_cells);

  const auto rho_fn = initial_density_fn<Dim>(sc);
  Eigen::VectorXd rho_values(run.grid.cells());
  for (int c = 0; c < run.grid.cells(); ++c) rho_values[c] = rho_fn(run.grid.center(c));
  rho_values = mollify_initial_density(rho_values, sc.modes);
  const DensityField<Dim> rho0(run.grid, rho_values);

  run.system = std::make_unique<GalerkinSystem<Dim>>(sc.modes, run.grid, sc.pressure_coeff,
                                                     sc.eps);
  const auto stress = detail::select_stress<Dim>(sc.potential, sc.delta);

  const Eigen::VectorXd m_star = project_momentum(*run.system, initial_momentum_fn<Dim>(sc));
  const Eigen::VectorXd u0 = solve_mass(mass_matrix(*run.system, rho0), m_star);

  SolveControls controls = sc.controls;
  controls.t_final = sc.t_final;
  controls.node_dt = sc.node_dt;
  run.trajectory = solve_momentum(*run.system, rho0, u0, controls, stress);

  run.audit = audit_energy(*run.system, run.trajectory, stress, sc.c_audit);
  run.envelopes = envelope_reports(*run.system, run.trajectory);

  const real_t mass0 = run.trajectory.density.front().mass();
  for (const auto& field : run.trajectory.density)
    run.mass_drift = std::max(run.mass_drift, std::abs(field.mass() - mass0) /
                                                  std::max(std::abs(mass0), real_t(1e-300)));

  run.reported = subsample_nodes(run.trajectory, run.trajectory.refine * sc.output_every);
  return run;
}

/// Constitutive potential from the [potential] section.
PotentialSpec potential_from_config(const ConfigMap& cfg);

/// Parameter-study plan from the [sweep] section; scenario-level fields
/// (grid, horizon, physics) stay on the Scenario.
SweepPlan sweep_plan_from_config(const ConfigMap& cfg);

/// Scenario initial data and controls repackaged for the parameter-study
/// driver.  Sweeps sample the presets directly — no clamping — because the
/// comparison machinery requires every level to start from identical data.
template <int Dim>
SweepScenario<Dim> sweep_scenario_from(const Scenario& sc) {
  SweepScenario<Dim> s;
  s.grid_cells = sc.grid_cells;
  s.pressure_coeff = sc.pressure_coeff;
  s.potential = sc.potential;
  s.t_final = sc.t_final;
  s.node_dt = sc.node_dt;
  s.initial_density = initial_density_fn<Dim>(sc);
  s.initial_momentum = initial_momentum_fn<Dim>(sc);
  s.controls = sc.controls;
  return s;
}

}  // namespace galflow
