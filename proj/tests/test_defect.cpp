#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "galflow/defect.hpp"
#include "galflow/sweep.hpp"

using namespace galflow;

namespace {

constexpr real_t kPi = 3.14159265358979323846;

template <int Dim, class Fn>
DensityField<Dim> sample_density(const Grid<Dim>& g, Fn&& fn) {
  Eigen::VectorXd v(g.cells());
  for (int c = 0; c < g.cells(); ++c) v[c] = fn(g.center(c));
  return DensityField<Dim>(g, std::move(v));
}

PotentialSpec quadratic_spec(real_t mu) {
  PotentialSpec s;
  s.mu = mu;
  return s;
}

template <int Dim>
auto analytic_stress(const PotentialSpec& spec) {
  return [spec](const SymTensor<Dim>& d) { return *potential_gradient_analytic(spec, d); };
}

/// Cosine-bump density / single-mode momentum scenario used across the cases.
SweepScenario<1> smooth_scenario() {
  SweepScenario<1> sc;
  sc.grid_cells = 64;
  sc.pressure_coeff = 1.0;
  sc.potential = quadratic_spec(1.0);
  sc.t_final = 0.05;
  sc.node_dt = 0.005;
  sc.initial_density = [](const Grid<1>::Vec& x) { return 1.0 + 0.3 * std::cos(kPi * x[0]); };
  sc.initial_momentum = [](const Grid<1>::Vec& x) {
    return Grid<1>::Vec(0.4 * std::sqrt(2.0) * std::sin(kPi * x[0]));
  };
  return sc;
}

template <int Dim>
Trajectory<Dim> solve_level(const SweepScenario<Dim>& sc, const GalerkinSystem<Dim>& sys) {
  Eigen::VectorXd rho_values(sys.grid.cells());
  for (int c = 0; c < sys.grid.cells(); ++c)
    rho_values[c] = sc.initial_density(sys.grid.center(c));
  const DensityField<Dim> rho0(sys.grid, rho_values);
  const Eigen::VectorXd m_star = project_momentum(sys, sc.initial_momentum);
  const Eigen::VectorXd u0 = solve_mass(mass_matrix(sys, rho0), m_star);
  SolveControls ctl = sc.controls;
  ctl.t_final = sc.t_final;
  ctl.node_dt = sc.node_dt;
  const auto traj = solve_momentum(sys, rho0, u0, ctl, analytic_stress<Dim>(sc.potential));
  return subsample_nodes(traj, traj.refine);
}

}  // namespace

TEST_CASE("flux samples follow the vacuum indicator convention") {
  const Grid<1> g(4);
  Eigen::VectorXd rho(4);
  rho << 2.0, 0.0, 1.0, 0.0;
  Eigen::Matrix<real_t, Eigen::Dynamic, 1> m(4, 1);
  m << 3.0, 0.0, -1.0, 0.5;  // momentum on the last (vacuum) cell is masked

  const auto flux = flux_field(g, rho, m);
  CHECK(flux[0](0, 0) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(flux[1](0, 0) == 0.0);
  CHECK(flux[2](0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(flux[3](0, 0) == 0.0);

  rho[0] = -1.0;
  CHECK_THROWS_AS(flux_field(g, rho, m), std::domain_error);
}

TEST_CASE("smoothing conserves integrals, contracts L1, and flattens spikes") {
  const Grid<1> g(16);
  std::vector<SymTensor<1>> field(16);
  field[7].p[0] = 1.0;
  field[3].p[0] = -0.25;

  real_t sum_before = 0, l1_before = 0, sup_before = 0;
  for (const auto& t : field) {
    sum_before += t.trace();
    l1_before += frobenius_norm(t);
    sup_before = std::max(sup_before, frobenius_norm(t));
  }
  const auto smooth = smooth_tensor_field(g, field);
  real_t sum_after = 0, l1_after = 0, sup_after = 0;
  for (const auto& t : smooth) {
    sum_after += t.trace();
    l1_after += frobenius_norm(t);
    sup_after = std::max(sup_after, frobenius_norm(t));
  }
  CHECK(sum_after == doctest::Approx(sum_before).epsilon(1e-14));
  CHECK(l1_after <= l1_before + 1e-14);
  CHECK(sup_after < sup_before);

  // Boundary reflection keeps the conservation exact when mass sits at a wall.
  std::vector<SymTensor<1>> wall(16);
  wall[0].p[0] = 1.0;
  const auto wall_smooth = smooth_tensor_field(g, wall);
  real_t wall_sum = 0;
  for (const auto& t : wall_smooth) wall_sum += t.trace();
  CHECK(wall_sum == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("identical trajectories and rest states produce the zero defect") {
  auto sc = smooth_scenario();
  const Grid<1> g(sc.grid_cells);
  const GalerkinSystem<1> coarse(4, g, sc.pressure_coeff, 0.05);
  const GalerkinSystem<1> fine(8, g, sc.pressure_coeff, 0.05);

  SUBCASE("one trajectory against a refined run of the rest state") {
    sc.initial_momentum = [](const Grid<1>::Vec&) { return Grid<1>::Vec(0.0); };
    sc.initial_density = [](const Grid<1>::Vec&) { return 1.0; };
    const auto traj_c = solve_level(sc, coarse);
    const auto traj_f = solve_level(sc, fine);
    const auto defect = reynolds_defect(coarse, traj_c, fine, traj_f);
    CHECK(defect.norm <= 1e-14);
    for (real_t l1 : defect.l1_norms) CHECK(l1 <= 1e-14);

    const auto gaps = energy_gaps(coarse, traj_c, fine, traj_f);
    const auto tc = trace_compatibility(defect, gaps);
    CHECK(!tc.incompatible);
    for (bool defined : tc.defined) CHECK(!defined);  // 0/0 reported undefined
  }

  SUBCASE("a trajectory differenced against itself") {
    const auto traj = solve_level(sc, coarse);
    std::vector<std::vector<SymTensor<1>>> flux;
    for (int j = 0; j < traj.nodes(); ++j)
      flux.push_back(flux_field(g, traj.density[j].values,
                                momentum_field(coarse, traj.density[j], traj.velocity[j])));
    const auto defect = defect_from_flux(g, traj.times, flux, flux);
    CHECK(defect.norm == 0.0);
  }
}

TEST_CASE("constructed perturbation reproduces the trace split ratio of two") {
  const Grid<1> g(64);
  Eigen::VectorXd rho(g.cells());
  Eigen::Matrix<real_t, Eigen::Dynamic, 1> m_coarse(g.cells(), 1), m_fine(g.cells(), 1);
  for (int c = 0; c < g.cells(); ++c) {
    const real_t x = g.center(c)[0];
    rho[c] = 1.0 + 0.3 * std::cos(kPi * x);
    m_coarse(c, 0) = 0.4 * rho[c] * std::sin(kPi * x);
    const real_t p = 0.2 * std::sin(2 * kPi * x);  // injected fluctuation
    m_fine(c, 0) = std::sqrt(m_coarse(c, 0) * m_coarse(c, 0) + p * p);
  }

  const std::vector<real_t> times{0.0, 0.1};
  const std::vector<std::vector<SymTensor<1>>> coarse_flux(2, flux_field(g, rho, m_coarse));
  const std::vector<std::vector<SymTensor<1>>> fine_flux(2, flux_field(g, rho, m_fine));
  const auto defect = defect_from_flux(g, times, coarse_flux, fine_flux);

  EnergyGaps<1> gaps;
  for (int t = 0; t < 2; ++t) {
    gaps.kinetic.push_back(kinetic_energy_from_fields(g, rho, m_fine).value -
                           kinetic_energy_from_fields(g, rho, m_coarse).value);
    gaps.pressure.push_back(0.0);  // same density on both levels
  }
  const auto tc = trace_compatibility(defect, gaps);
  CHECK(!tc.incompatible);
  for (size_t t = 0; t < tc.ratios.size(); ++t) {
    REQUIRE(tc.defined[t]);
    // tr r integrates the injected p^2/rho while the kinetic gap carries
    // p^2/(2 rho): the quotient is exactly 2 (smoothing conserves integrals).
    CHECK(tc.ratios[t] == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("zero denominator with visible defect raises the incompatibility flag") {
  const Grid<1> g(8);
  std::vector<std::vector<SymTensor<1>>> coarse(1, std::vector<SymTensor<1>>(8));
  auto fine = coarse;
  for (auto& cell : fine[0]) cell.p[0] = 0.5;  // uniform flux surplus
  const auto defect = defect_from_flux(g, {0.0}, coarse, fine);
  REQUIRE(defect.trace_integrals[0] > 0.1);

  EnergyGaps<1> gaps;
  gaps.kinetic.push_back(0.0);
  gaps.pressure.push_back(0.0);
  const auto tc = trace_compatibility(defect, gaps);
  CHECK(tc.incompatible);
  CHECK(!tc.defined[0]);
}

TEST_CASE("semidefiniteness probe separates noise from genuine negativity") {
  const Grid<1> g(8);
  std::vector<std::vector<SymTensor<1>>> coarse(1, std::vector<SymTensor<1>>(8));
  auto fine = coarse;
  for (auto& cell : fine[0]) cell.p[0] = 1.0;
  // Bands three cells wide so the smoothing pass cannot average them away.
  for (int c = 2; c <= 4; ++c) fine[0][c].p[0] = -0.01;  // within the 5% noise band
  auto defect = defect_from_flux(g, {0.0}, coarse, fine);
  const auto probe_ok = psd_probe(defect);
  CHECK(probe_ok.ok);
  CHECK(probe_ok.floor >= -0.05 * probe_ok.scale);

  for (int c = 2; c <= 4; ++c) fine[0][c].p[0] = -0.5;  // genuine violation
  defect = defect_from_flux(g, {0.0}, coarse, fine);

  const auto probe_bad = psd_probe(defect);
  CHECK(!probe_bad.ok);
  CHECK(probe_bad.floor < -0.05 * probe_bad.scale);
}

TEST_CASE("two-dimensional eigenvalue floor uses the closed form") {
  SymTensor<2> t;
  t.p[0] = 3.0;
  t.p[1] = 1.0;
  t.p[2] = 1.0;  // eigenvalues 2 +/- sqrt(2)
  CHECK(min_eigenvalue(t) == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-14));
  SymTensor<1> s;
  s.p[0] = -0.7;
  CHECK(min_eigenvalue(s) == doctest::Approx(-0.7).epsilon(1e-15));
}

TEST_CASE("level mismatches and foreign scenarios are refused") {
  auto sc = smooth_scenario();
  const Grid<1> g(sc.grid_cells);
  const GalerkinSystem<1> coarse(4, g, sc.pressure_coeff, 0.05);
  const GalerkinSystem<1> fine(8, g, sc.pressure_coeff, 0.05);
  const auto traj_c = solve_level(sc, coarse);
  const auto traj_f = solve_level(sc, fine);

  // Not enough refinement.
  const GalerkinSystem<1> barely(6, g, sc.pressure_coeff, 0.05);
  const auto traj_b = solve_level(sc, barely);
  CHECK_THROWS_AS(reynolds_defect(coarse, traj_c, barely, traj_b), std::invalid_argument);

  // Different grids.
  const Grid<1> other(32);
  const GalerkinSystem<1> fine_other(8, other, sc.pressure_coeff, 0.05);
  auto sc_other = sc;
  sc_other.grid_cells = 32;
  const auto traj_other = solve_level(sc_other, fine_other);
  CHECK_THROWS_AS(reynolds_defect(coarse, traj_c, fine_other, traj_other),
                  std::invalid_argument);

  // Different model constants.
  const GalerkinSystem<1> fine_eps(8, g, sc.pressure_coeff, 0.1);
  const auto traj_eps = solve_level(sc, fine_eps);
  CHECK_THROWS_AS(reynolds_defect(coarse, traj_c, fine_eps, traj_eps), std::invalid_argument);

  // Different initial density (a different scenario altogether).
  auto sc_shifted = sc;
  sc_shifted.initial_density = [](const Grid<1>::Vec& x) {
    return 1.0 + 0.2 * std::cos(kPi * x[0]);
  };
  const auto traj_shifted = solve_level(sc_shifted, fine);
  CHECK_THROWS_AS(reynolds_defect(coarse, traj_c, fine, traj_shifted), std::invalid_argument);

  // Different stored times.
  auto sc_short = sc;
  sc_short.t_final = 0.04;
  const auto traj_short = solve_level(sc_short, fine);
  CHECK_THROWS_AS(reynolds_defect(coarse, traj_c, fine, traj_short), std::invalid_argument);
}

TEST_CASE("defect norm falls as the Galerkin level doubles") {
  const auto sc = smooth_scenario();
  const Grid<1> g(sc.grid_cells);
  const GalerkinSystem<1> n4(4, g, sc.pressure_coeff, 0.05);
  const GalerkinSystem<1> n8(8, g, sc.pressure_coeff, 0.05);
  const GalerkinSystem<1> n16(16, g, sc.pressure_coeff, 0.05);
  const auto t4 = solve_level(sc, n4);
  const auto t8 = solve_level(sc, n8);
  const auto t16 = solve_level(sc, n16);

  const real_t d4 = reynolds_defect(n4, t4, n8, t8).norm;
  const real_t d8 = reynolds_defect(n8, t8, n16, t16).norm;
  CHECK(d4 > 0);
  CHECK(d8 > 0);
  CHECK(d8 < d4);
}

TEST_CASE("sweep plan validation rejects malformed lattices") {
  SweepPlan plan;
  plan.deltas = {0.1};
  plan.epsilons = {0.1, 0.05};
  plan.modes = {4, 8};
  CHECK_NOTHROW(plan.validate(64, 1));

  auto bad = plan;
  bad.epsilons = {};
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  bad = plan;
  bad.epsilons = {0.05, 0.1};
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  bad = plan;
  bad.deltas = {0.1, 0.1};
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  bad = plan;
  bad.modes = {8, 4};
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  bad = plan;
  bad.modes = {4, 64};
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  bad = plan;
  bad.fine_factor = 1;
  CHECK_THROWS_AS(bad.validate(64, 1), std::invalid_argument);
  CHECK_THROWS_AS(plan.validate(512, 1), std::invalid_argument);
  CHECK_THROWS_AS(plan.validate(128, 2), std::invalid_argument);
}

TEST_CASE("sweep runs the lattice, records trends, and fits the drift scaling") {
  const auto sc = smooth_scenario();
  SweepPlan plan;
  plan.deltas = {0.1};
  plan.epsilons = {0.1, 0.05};
  plan.modes = {4, 8};

  const auto report = run_sweep(sc, plan, 2);
  CHECK(report.failures == 0);
  REQUIRE(report.groups.size() == 2);
  for (const auto& group : report.groups) {
    REQUIRE(group.rungs.size() == 2);
    CHECK(group.q_exceeds_dim);  // quadratic growth q = 2 > d = 1
    for (const auto& rec : group.rungs) {
      CHECK(rec.ok);
      CHECK(rec.energy_pass);
      CHECK(rec.energy_residual <= rec.energy_tolerance);
      CHECK(rec.psd_floor <= 0.0);
      CHECK(!rec.trace_incompatible);
      CHECK(rec.sqrt_eps_grad > 0);
      CHECK(rec.correction_norm > 0);
      REQUIRE(rec.tail_masses.size() == plan.tail_levels.size());
      for (size_t l = 1; l < rec.tail_masses.size(); ++l)
        CHECK(rec.tail_masses[l] <= rec.tail_masses[l - 1] + 1e-15);
      CHECK(rec.tail_masses.back() == 0.0);  // smooth run: flux far below the top level
    }
    CHECK(group.rungs[1].defect_norm < group.rungs[0].defect_norm);
    // A convergent two-level estimate is sign-indefinite noise, so the
    // eigenvalue floor must vanish along the ladder together with the norm.
    CHECK(std::abs(group.rungs[1].psd_floor) < std::abs(group.rungs[0].psd_floor));
    CHECK(group.defect_monotone);
    CHECK(group.verdict == "weak-solution regime");
  }

  REQUIRE(report.scalings.size() == 2);  // one per (delta, n)
  for (const auto& fit : report.scalings) {
    CHECK(fit.ok);
    CHECK(fit.slope >= 0.7);
    CHECK(fit.slope <= 1.3);
    CHECK(fit.grad_ratio >= 1.0);
    CHECK(fit.grad_ratio <= 10.0);
  }
}

TEST_CASE("single-rung ladders cannot claim a trend") {
  const auto sc = smooth_scenario();
  SweepPlan plan;
  plan.deltas = {0.1};
  plan.epsilons = {0.1};
  plan.modes = {4};
  const auto report = run_sweep(sc, plan, 1);
  REQUIRE(report.groups.size() == 1);
  CHECK(!report.groups[0].defect_monotone);
  CHECK(report.groups[0].verdict == "n-ladder too short for a trend");
}
