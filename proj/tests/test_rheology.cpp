#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "galflow/conjugate.hpp"
#include "galflow/potential.hpp"
#include "support.hpp"

using namespace galflow;
using galflow::testing::five_point_gradient;

namespace {

SymTensor<2> sym2(real_t xx, real_t yy, real_t xy) {
  SymTensor<2> t;
  t.p << xx, yy, xy;
  return t;
}

SymTensor<1> sym1(real_t v) {
  SymTensor<1> t;
  t.p << v;
  return t;
}

PotentialSpec quadratic_spec(real_t mu = 1.0, real_t bulk = 0.0) {
  PotentialSpec s;
  s.variant = PotentialVariant::quadratic;
  s.mu = mu;
  s.bulk = bulk;
  return s;
}

PotentialSpec power_spec(real_t mu, real_t q) {
  PotentialSpec s;
  s.variant = PotentialVariant::power_law;
  s.mu = mu;
  s.q = q;
  return s;
}

PotentialSpec abs_spec() {
  PotentialSpec s;
  s.variant = PotentialVariant::custom;
  s.knots = {0.0, 1.0};
  s.values = {0.0, 1.0};
  return s;
}

}  // namespace

TEST_CASE("potential values and validation") {
  const auto quad = quadratic_spec();
  CHECK(potential_value(quad, sym2(2, 0, 1)) == doctest::Approx(3.0));  // (4+0+2)/2
  auto quad_bulk = quadratic_spec(1.0, 0.5);
  CHECK(potential_value(quad_bulk, sym2(2, 0, 1)) == doctest::Approx(4.0));  // +0.5/2*tr^2

  const auto plaw = power_spec(1.0, 3.0);
  CHECK(potential_value(plaw, sym1(2.0)) == doctest::Approx(8.0 / 3.0).epsilon(1e-14));

  const auto absf = abs_spec();
  CHECK(potential_value(absf, sym1(0.3)) == doctest::Approx(0.3));
  CHECK(potential_value(absf, sym1(-7.0)) == doctest::Approx(7.0));  // linear extrapolation
  CHECK(potential_value(absf, SymTensor<1>::Zero()) == doctest::Approx(0.0));

  PotentialSpec bad = power_spec(1.0, 1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = quadratic_spec(-1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = abs_spec();
  bad.values = {0.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = abs_spec();
  bad.knots = {0.5, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  // Concave profile rejected.
  bad = abs_spec();
  bad.knots = {0.0, 1.0, 2.0};
  bad.values = {0.0, 1.0, 1.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("convexity and sign probes across variants") {
  for (const auto& spec : {quadratic_spec(), quadratic_spec(2.0, 0.7), power_spec(0.8, 1.5),
                           power_spec(1.0, 3.0), abs_spec()}) {
    spec.validate();
    auto f1 = [&](const SymTensor<1>& d) { return potential_value(spec, d); };
    auto f2 = [&](const SymTensor<2>& d) { return potential_value(spec, d); };
    CHECK(convexity_violations<1>(f1, 500, 11) == 0);
    CHECK(convexity_violations<2>(f2, 500, 12) == 0);
    CHECK(f1(SymTensor<1>::Zero()) == doctest::Approx(0.0));
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) CHECK(f2(random_sym_tensor<2>(rng, 10)) >= 0.0);
  }
}

TEST_CASE("closed-form gradients") {
  const auto plaw = power_spec(1.0, 3.0);
  const auto g = potential_gradient_analytic(plaw, sym1(2.0));
  REQUIRE(g.has_value());
  CHECK(g->p[0] == doctest::Approx(4.0));  // |D|^{q-2} D = 2*2

  const auto quad = quadratic_spec(2.0, 0.5);
  const auto d = sym2(1.0, -0.5, 0.25);
  const auto gq = potential_gradient_analytic(quad, d);
  REQUIRE(gq.has_value());
  CHECK(gq->p[0] == doctest::Approx(2.0 * 1.0 + 0.5 * 0.5));
  CHECK(gq->p[2] == doctest::Approx(2.0 * 0.25));

  CHECK_FALSE(potential_gradient_analytic(abs_spec(), sym1(1.0)).has_value());
}

TEST_CASE("coercivity triples hold on random samples") {
  const auto quad = quadratic_spec(1.0, 0.3);
  const auto params = suggested_coercivity(quad);
  REQUIRE(params.has_value());
  auto f2 = [&](const SymTensor<2>& d) { return potential_value(quad, d); };
  auto rep = coercivity_check<2>(f2, *params, 1000, 21);
  CHECK(rep.violations == 0);

  const auto plaw = power_spec(1.0, 1.5);
  const auto pp = suggested_coercivity(plaw);
  REQUIRE(pp.has_value());
  auto fp = [&](const SymTensor<2>& d) { return potential_value(plaw, d); };
  rep = coercivity_check<2>(fp, *pp, 1000, 22);
  CHECK(rep.violations == 0);

  // One-dimensional reading: bound against |D| itself.
  const auto fc = full_coercivity(plaw);
  REQUIRE(fc.has_value());
  auto fp1 = [&](const SymTensor<1>& d) { return potential_value(plaw, d); };
  rep = coercivity_check<1>(fp1, *fc, 1000, 23);
  CHECK(rep.violations == 0);

  CHECK_FALSE(suggested_coercivity(abs_spec()).has_value());
}

TEST_CASE("dual potential of the quadratic is |S|^2 / 2") {
  const auto quad = quadratic_spec();
  const auto cv = conjugate_of(quad, sym2(2, 0, 0));
  CHECK(cv.saturated);
  CHECK(cv.value == doctest::Approx(2.0).epsilon(1e-8));

  std::mt19937_64 rng(31);
  for (int t = 0; t < 40; ++t) {
    const auto s = random_sym_tensor<2>(rng, 4.0);
    const auto v = conjugate_of(quad, s);
    CHECK(v.saturated);
    CHECK(std::abs(v.value - 0.5 * ddot(s, s)) <= 1e-6);
  }
  // Non-radial quadratic goes through the full tensor search:
  // F*(S) = |dev S|^2/(2 mu) + (tr S)^2 / (2 d (mu + d*bulk)) in d dimensions.
  const auto quad_bulk = quadratic_spec(1.0, 0.5);
  const auto s = sym2(1.0, 0.4, -0.3);
  const auto v = conjugate_of(quad_bulk, s);
  const auto dev = deviatoric(s);
  const real_t tr = s.trace();
  const real_t expected = 0.5 * ddot(dev, dev) / 1.0 + tr * tr / (2.0 * 2.0 * (1.0 + 2.0 * 0.5));
  CHECK(v.saturated);
  CHECK(v.value == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("dual potential of the power law") {
  // F = |D|^q / q has dual |S|^p / p with 1/p + 1/q = 1.
  const auto plaw = power_spec(1.0, 3.0);
  const auto cv = conjugate_of(plaw, sym1(2.0));
  CHECK(cv.saturated);
  CHECK(cv.value == doctest::Approx(1.885618083164127).epsilon(1e-7));
}

TEST_CASE("dual of the norm potential: indicator of the unit ball") {
  const auto absf = abs_spec();
  const auto inside = conjugate_of(absf, sym1(0.5));
  CHECK(inside.saturated);
  CHECK(inside.value == doctest::Approx(0.0).epsilon(1e-9));

  const auto outside = conjugate_of(absf, sym1(2.0));
  CHECK_FALSE(outside.saturated);  // grows through every radius: divergence signal
  CHECK(outside.value > 10.0);

  const auto res = fenchel_young_residual([&](const SymTensor<1>& d) { return potential_value(absf, d); },
                                          outside, sym1(0.2), sym1(2.0));
  CHECK(res.diverged);
  CHECK(std::isinf(res.value));
}

TEST_CASE("duality gap: nonnegative everywhere, zero on selected pairs") {
  const auto quad = quadratic_spec();
  auto f2 = [&](const SymTensor<2>& d) { return potential_value(quad, d); };
  std::mt19937_64 rng(41);
  for (int t = 0; t < 200; ++t) {
    const auto d = random_sym_tensor<2>(rng, 5.0);
    const auto s = random_sym_tensor<2>(rng, 5.0);
    const auto res = fenchel_young_residual(f2, conjugate_of(quad, s), d, s);
    REQUIRE_FALSE(res.diverged);
    CHECK(res.value >= -1e-7);
  }
  for (int t = 0; t < 100; ++t) {
    const auto d = random_sym_tensor<2>(rng, 5.0);
    const auto s = *potential_gradient_analytic(quad, d);
    const auto res = fenchel_young_residual(f2, conjugate_of(quad, s), d, s);
    REQUIRE_FALSE(res.diverged);
    CHECK(std::abs(res.value) <= 1e-6);
  }
}

TEST_CASE("double dual recovers the potential at probes") {
  const auto quad = quadratic_spec();
  for (real_t v : {0.0, 0.7, -1.3, 2.5}) {
    const auto bi = biconjugate_of(quad, sym1(v));
    CHECK(bi.saturated);
    CHECK(std::abs(bi.value - potential_value(quad, sym1(v))) <= 1e-5);
  }
  const auto plaw = power_spec(1.0, 1.5);
  for (real_t v : {0.5, 1.5}) {
    const auto bi = biconjugate_of(plaw, sym1(v));
    CHECK(bi.saturated);
    CHECK(std::abs(bi.value - potential_value(plaw, sym1(v))) <= 1e-5);
  }
  // Radial 2-D probe.
  const auto bi2 = biconjugate_of(quad, sym2(1.2, -0.4, 0.3));
  CHECK(bi2.saturated);
  CHECK(std::abs(bi2.value - potential_value(quad, sym2(1.2, -0.4, 0.3))) <= 1e-5);
}

TEST_CASE("superlinearity ratios grow for superlinear duals only") {
  const std::vector<real_t> radii{1, 2, 4, 8, 16};
  SymTensor<2> dir = sym2(1, 0, 0);

  const auto quad = quadratic_spec();
  auto ratios = superlinearity_ratios<2>(
      [&](const SymTensor<2>& s) { return conjugate_of(quad, s); }, dir, radii);
  for (size_t i = 1; i < ratios.size(); ++i) CHECK(ratios[i] > ratios[i - 1]);
  CHECK(ratios[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(ratios.back() == doctest::Approx(8.0).epsilon(1e-6));

  // Linear-growth potential: dual ratios explode to infinity instead of
  // increasing through finite values — the expected negative signal.
  const auto absf = abs_spec();
  auto abs_ratios = superlinearity_ratios<1>(
      [&](const SymTensor<1>& s) { return conjugate_of(absf, s); }, SymTensor<1>::Identity(),
      radii);
  CHECK(abs_ratios[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::isinf(abs_ratios.back()));
}

TEST_CASE("kernel smoothing of the quadratic is exact") {
  MollifierSpec mol;
  mol.delta = 0.1;
  const MollifiedPotential<1> f1(quadratic_spec(), mol);
  CHECK(f1.kernel_mass() == doctest::Approx(1.0).epsilon(1e-15));
  // Midpoint integral of (1-(z/delta)^2)^3 on [-delta, delta] is 32 delta/35.
  CHECK(f1.kernel_raw_integral() == doctest::Approx(0.09142857142857143).epsilon(2e-2));
  // Smoothed quadratic equals the quadratic exactly; shift is half the kernel
  // second moment, delta^2/18 in one tensor dimension.
  CHECK(f1.shift() == doctest::Approx(0.0005555555555555557).epsilon(1e-3));
  for (real_t v : {0.0, 0.3, -1.7, 4.0})
    CHECK(f1(sym1(v)) == doctest::Approx(0.5 * v * v).epsilon(1e-12));

  const MollifiedPotential<2> f2(quadratic_spec(), mol);
  CHECK(f2.kernel_mass() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(f2.kernel_raw_integral() == doctest::Approx(0.0006382918407293549).epsilon(5e-2));
  CHECK(f2.shift() == doctest::Approx(0.001363636363636364).epsilon(1e-2));
  const auto d = sym2(1.0, -0.5, 0.25);
  CHECK(f2(d) == doctest::Approx(0.5 * ddot(d, d)).epsilon(1e-12));
  // Stress selection on a quadratic recovers D to difference-quotient accuracy.
  const auto s = f2.stress(d);
  CHECK((s.p - d.p).norm() <= 1e-9);
}

TEST_CASE("kernel smoothing of kinked potentials") {
  MollifierSpec mol;
  mol.delta = 0.1;
  const MollifiedPotential<1> fabs(abs_spec(), mol);
  auto wrap = [&](const SymTensor<1>& d) { return fabs(d); };
  CHECK(convexity_violations<1>(wrap, 400, 51, 3.0) == 0);
  CHECK(fabs(SymTensor<1>::Zero()) >= -1e-12);
  CHECK(fabs(SymTensor<1>::Zero()) <= 1e-8);  // zero minimum after the shift
  // Away from the kink the smoothing is invisible.
  CHECK(fabs(sym1(2.0)) == doctest::Approx(2.0 - fabs.shift()).epsilon(1e-9));
  // Stress stays inside the subdifferential range [-1, 1].
  for (real_t v : {-0.5, -0.02, 0.0, 0.03, 0.8})
    CHECK(std::abs(fabs.stress(sym1(v)).p[0]) <= 1.0 + 1e-8);
}

TEST_CASE("stress selection against an independent difference oracle") {
  MollifierSpec mol;
  mol.delta = 0.05;
  const MollifiedPotential<2> f(power_spec(1.0, 1.5), mol);
  std::mt19937_64 rng(61);
  for (int t = 0; t < 25; ++t) {
    const auto d = random_sym_tensor<2>(rng, 5.0);
    const auto s = f.stress(d);
    const auto oracle = five_point_gradient(f, d);
    const real_t scale = std::max(real_t(1e-8), frobenius_norm(oracle));
    CHECK(frobenius_norm(s - oracle) / scale <= 1e-4);
  }
  // Quadratic case: selected stress matches mu D + bulk tr(D) I closely.
  const MollifiedPotential<2> fq(quadratic_spec(2.0, 0.5), mol);
  const auto d = sym2(0.8, -0.2, 0.6);
  const auto expect = *potential_gradient_analytic(quadratic_spec(2.0, 0.5), d);
  CHECK(frobenius_norm(fq.stress(d) - expect) <= 1e-8);
}

TEST_CASE("smoothing consistency improves as delta shrinks") {
  std::mt19937_64 rng(71);
  std::vector<SymTensor<1>> probes;
  for (int i = 0; i < 20; ++i) probes.push_back(random_sym_tensor<1>(rng, 5.0));

  const auto plaw = power_spec(1.0, 1.5);
  real_t prev_modulus = std::numeric_limits<real_t>::infinity();
  for (real_t delta : {0.2, 0.1, 0.05}) {
    MollifierSpec mol;
    mol.delta = delta;
    const MollifiedPotential<1> f(plaw, mol);
    real_t modulus = 0;
    for (const auto& d : probes)
      modulus = std::max(modulus, std::abs(f(d) - potential_value(plaw, d)));
    CHECK(modulus < prev_modulus);
    prev_modulus = modulus;
  }
  CHECK(prev_modulus <= 1e-2);  // delta = 0.05 end point is already tight
}

TEST_CASE("smoothed potentials keep one coercivity certificate across deltas") {
  const auto plaw = power_spec(1.0, 1.5);
  const auto base = *suggested_coercivity(plaw);
  real_t worst_offset = 0;
  std::vector<MollifiedPotential<2>> handles;
  for (real_t delta : {0.2, 0.1, 0.05}) {
    MollifierSpec mol;
    mol.delta = delta;
    handles.emplace_back(plaw, mol);
    worst_offset = std::max(worst_offset, handles.back().inherited_coercivity(base).offset);
  }
  const CoercivityParams unified{base.nu, base.exponent, worst_offset};
  for (const auto& f : handles) {
    const auto rep = coercivity_check<2>(f, unified, 1000, 81);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("dual consistency of smoothed potentials") {
  // Fenchel equality along selected pairs survives smoothing: for S chosen by
  // stress selection, F(D) + F*(S) - S:D stays at difference-quotient scale.
  MollifierSpec mol;
  mol.delta = 0.1;
  const MollifiedPotential<1> f(quadratic_spec(), mol);
  std::mt19937_64 rng(91);
  for (int t = 0; t < 20; ++t) {
    const auto d = random_sym_tensor<1>(rng, 3.0);
    const auto s = f.stress(d);
    const auto dual = conjugate_of(f, s);
    REQUIRE(dual.saturated);
    const auto res = fenchel_young_residual(f, dual, d, s);
    CHECK(std::abs(res.value) <= 1e-5);
  }
}
