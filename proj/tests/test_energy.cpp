#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "galflow/energy.hpp"
#include "galflow/potential.hpp"
#include "support.hpp"

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

}  // namespace

TEST_CASE("pressure potential: values, slope, convexity, and the defining ODE") {
  CHECK(pressure_potential(1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pressure_potential(1.0, 2.718281828459045) ==
        doctest::Approx(2.718281828459045).epsilon(1e-14));
  CHECK(pressure_potential(3.0, 0.0) == 0.0);
  CHECK_THROWS_AS(pressure_potential(1.0, -0.1), std::domain_error);
  CHECK_THROWS_AS(pressure_potential_slope(1.0, 0.0), std::domain_error);

  // Central-difference slope against the closed form.
  const real_t a = 1.7, rho = 2.0, step = 1e-6;
  const real_t fd =
      (pressure_potential(a, rho + step) - pressure_potential(a, rho - step)) / (2 * step);
  CHECK(fd == doctest::Approx(pressure_potential_slope(a, rho)).epsilon(1e-8));

  // P solves rho P'(rho) - P(rho) = a rho (the linear pressure law), checked
  // with the finite-difference slope so the identity is not self-referential.
  const real_t a3 = 3.0;
  const real_t fd3 =
      (pressure_potential(a3, rho + step) - pressure_potential(a3, rho - step)) / (2 * step);
  CHECK(std::abs(rho * fd3 - pressure_potential(a3, rho) - a3 * rho) <= 1e-6);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<real_t> unif(0.05, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const real_t x = unif(rng), y = unif(rng);
    const real_t mid = pressure_potential(1.0, 0.5 * (x + y));
    const real_t chord = 0.5 * (pressure_potential(1.0, x) + pressure_potential(1.0, y));
    CHECK(mid <= chord + 1e-12);
  }
}

TEST_CASE("kinetic energy from fields honors the vacuum convention") {
  const Grid<1> g(4);
  Eigen::VectorXd rho(4);
  rho << 1.0, 0.0, 2.0, 0.0;
  Eigen::Matrix<real_t, Eigen::Dynamic, 1> m(4, 1);
  m << 1.0, 0.0, 3.0, 0.0;

  const auto fine = kinetic_energy_from_fields(g, rho, m);
  CHECK(!fine.infinite);
  CHECK(fine.value == doctest::Approx(0.5 * (1.0 + 4.5) * 0.25).epsilon(1e-14));

  m(3, 0) = 0.1;  // momentum on a vacuum cell
  const auto broken = kinetic_energy_from_fields(g, rho, m);
  CHECK(broken.infinite);
  CHECK(std::isinf(broken.value));

  rho[0] = -1.0;
  CHECK_THROWS_AS(kinetic_energy_from_fields(g, rho, m), std::domain_error);
}

TEST_CASE("field samples and coefficients give the same kinetic energy") {
  const Grid<1> g(64);
  const GalerkinSystem<1> sys(3, g, 1.0, 0.0);
  const auto rho = sample_density(g, [](const Grid<1>::Vec& x) {
    return 1.0 + 0.3 * std::cos(kPi * x[0]);
  });
  Eigen::VectorXd c(3);
  c << 0.4, -0.2, 0.1;
  const auto m = momentum_field(sys, rho, c);
  const auto from_fields = kinetic_energy_from_fields(g, rho.values, m);
  REQUIRE(!from_fields.infinite);
  // Note |m|^2/rho = rho |u|^2, so both routes sum the same midpoint rule.
  CHECK(from_fields.value == doctest::Approx(kinetic_energy(sys, rho, c)).epsilon(1e-12));
}

TEST_CASE("dissipation rates against frozen closed forms") {
  const Grid<1> g(64);
  const GalerkinSystem<1> sys(3, g, 1.0, 0.0);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
  c[0] = 0.4;
  // mu pi^2 |c|^2 for the quadratic law on the lowest mode.
  CHECK(viscous_dissipation_rate(sys, c, analytic_stress<1>(quadratic_spec(0.7))) ==
        doctest::Approx(1.1053956929220081).epsilon(1e-12));

  CHECK(artificial_dissipation_rate(2.0, 0.5, sample_density(g, [](auto) { return 1.3; })) ==
        doctest::Approx(0.0).epsilon(1e-15));

  // eps a int |rho'|^2 / rho for the cosine bump; the discrete cell gradient
  // converges at second order.
  auto measure = [](int n) {
    const Grid<1> gg(n);
    Eigen::VectorXd v(gg.cells());
    for (int cc = 0; cc < gg.cells(); ++cc)
      v[cc] = 1.0 + 0.5 * std::cos(kPi * gg.center(cc)[0]);
    return artificial_dissipation_rate(1.3, 0.02, DensityField<1>(gg, std::move(v)));
  };
  const real_t frozen = 3.437918287552513e-02;
  const real_t err64 = std::abs(measure(64) - frozen);
  const real_t err128 = std::abs(measure(128) - frozen);
  CHECK(err128 <= 1e-3 * frozen);
  CHECK(err128 < err64);
}

TEST_CASE("rest state produces an exact ledger") {
  const Grid<1> g(64);
  const GalerkinSystem<1> sys(4, g, 1.5, 0.01);
  const auto stress = analytic_stress<1>(quadratic_spec(1.0));
  SolveControls ctl;
  ctl.t_final = 0.05;
  ctl.node_dt = 0.01;

  for (real_t level : {1.0, 1.7}) {
    const auto rho0 = sample_density(g, [&](auto) { return level; });
    const auto traj = solve_momentum(sys, rho0, Eigen::VectorXd::Zero(4), ctl, stress);
    const auto audit = audit_energy(sys, traj, stress);
    CHECK(audit.pass);
    CHECK(audit.worst_residual <= 1e-12);
    CHECK(audit.worst_potential_balance <= 1e-12);
    for (const auto& row : audit.rows) {
      CHECK(row.kinetic <= 1e-14);
      CHECK(std::abs(row.visc_diss) <= 1e-14);
      CHECK(std::abs(row.art_diss) <= 1e-14);
    }
  }
}

TEST_CASE("pure diffusion: potential falls, its loss is the regularization heat") {
  const Grid<1> g(128);
  const GalerkinSystem<1> sys(2, g, 1.3, 0.02);
  const auto rho0 = sample_density(g, [](const Grid<1>::Vec& x) {
    return 1.0 + 0.5 * std::cos(kPi * x[0]);
  });

  Trajectory<1> traj;
  traj.node_dt = 0.005;
  traj.substeps_per_node = 10;
  traj.times.push_back(0.0);
  traj.velocity.push_back(Eigen::VectorXd::Zero(2));
  traj.density.push_back(rho0);
  traj.momentum_integral.push_back(Eigen::VectorXd::Zero(2));
  const auto still = zero_face_velocity(g);
  for (int j = 1; j <= 10; ++j) {
    const real_t t0 = traj.times.back(), t1 = 0.005 * j;
    traj.density.push_back(integrate_density(
        traj.density.back(), [&](real_t) { return still; }, t0, t1, sys.eps,
        traj.substeps_per_node));
    traj.times.push_back(t1);
    traj.velocity.push_back(Eigen::VectorXd::Zero(2));
    traj.momentum_integral.push_back(Eigen::VectorXd::Zero(2));
  }

  const auto stress = analytic_stress<1>(quadratic_spec(1.0));
  const auto audit = audit_energy(sys, traj, stress);
  CHECK(audit.pass);
  CHECK(audit.worst_residual <= audit.tolerance);
  for (size_t j = 1; j < audit.rows.size(); ++j) {
    CHECK(audit.rows[j].potential < audit.rows[j - 1].potential);
    CHECK(audit.rows[j].art_diss > audit.rows[j - 1].art_diss);
    CHECK(audit.rows[j].visc_diss == 0.0);
    CHECK(audit.rows[j].kinetic == 0.0);
  }
  // The pressure-channel balance carries the whole identity here (no flow).
  CHECK(audit.worst_potential_balance <= audit.tolerance);
}

TEST_CASE("moving scenario passes the audit with monotone dissipation") {
  const Grid<1> g(64);
  const GalerkinSystem<1> sys(3, g, 1.0, 0.05);
  const auto rho0 = sample_density(g, [](const Grid<1>::Vec& x) {
    return 1.0 + 0.3 * std::cos(kPi * x[0]);
  });
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(3);
  u0[0] = 0.4;
  const auto stress = analytic_stress<1>(quadratic_spec(1.0));
  SolveControls ctl;
  ctl.t_final = 0.1;
  ctl.node_dt = 0.005;
  const auto traj = solve_momentum(sys, rho0, u0, ctl, stress);

  const auto audit = audit_energy(sys, traj, stress);
  CHECK(audit.pass);
  CHECK(audit.worst_residual <= audit.tolerance);
  CHECK(audit.dissipations_nonnegative);
  CHECK(audit.dissipations_monotone);
  CHECK(audit.rows.back().visc_diss > 0);
  CHECK(audit.rows.back().art_diss > 0);
  // Energy decays overall: what remains plus what dissipated equals the start.
  CHECK(audit.rows.back().kinetic + audit.rows.back().potential < audit.initial_energy);
}

TEST_CASE("dissipation integrand splits into dual potentials without defect") {
  const Grid<1> g(64);
  const GalerkinSystem<1> sys(3, g, 1.0, 0.05);
  Eigen::VectorXd c(3);
  c << 0.4, -0.15, 0.05;

  const auto quad_spec = quadratic_spec(1.0);
  CHECK(dissipation_consistency_gap(sys, c, quad_spec, analytic_stress<1>(quad_spec)) <= 1e-5);

  PotentialSpec power;
  power.variant = PotentialVariant::power_law;
  power.mu = 0.8;
  power.q = 1.5;
  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(3);
  c2[0] = 0.3;
  CHECK(dissipation_consistency_gap(sys, c2, power, analytic_stress<1>(power)) <= 1e-5);
}

TEST_CASE("audit rejects an empty trajectory") {
  const Grid<1> g(32);
  const GalerkinSystem<1> sys(2, g, 1.0, 0.0);
  Trajectory<1> empty;
  CHECK_THROWS_AS(audit_energy(sys, empty, analytic_stress<1>(quadratic_spec(1.0))),
                  std::invalid_argument);
}
