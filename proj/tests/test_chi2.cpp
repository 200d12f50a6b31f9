#include <catch_amalgamated.hpp>

#include <cmath>

#include "sketchbreak/chi2.hpp"

using namespace sketchbreak;
using Catch::Approx;

namespace {

// Composite Simpson with an even number of panels; the reference integrator for
// everything in this file.
template <class F>
double simpson(F f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// nu written straight from the definition, without log space.
double nu_direct(double s, int d, double tau) {
  const double k = d / 2.0;
  return d * std::pow(s * d / tau, k - 1.0) * std::exp(-s * d / (2.0 * tau)) /
         (tau * std::pow(2.0, k) * std::tgamma(k));
}

double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

}  // namespace

TEST_CASE("nu_density closed form for d=2") {
  CHECK(nu_density(0.0, {2, 2.0, 8.0}) == Approx(0.5).epsilon(1e-14));
  CHECK(nu_density(3.0, {2, 2.0, 8.0}) == Approx(0.5 * std::exp(-1.5)).epsilon(1e-13));
}

TEST_CASE("nu_density agrees with the direct formula where that does not overflow") {
  for (int d : {3, 10, 20, 40}) {
    for (double tau : {1.0, 5.0, 30.0}) {
      for (double s : {0.1, 1.0, 4.0, 25.0, 60.0}) {
        CHECK(rel(nu_density(s, {d, tau, 8.0}), nu_direct(s, d, tau)) < 1e-11);
      }
    }
  }
}

TEST_CASE("nu_density stays finite for large d") {
  const double v = nu_density(600.0, {600, 600.0, 8.0});
  CHECK(std::isfinite(v));
  CHECK(v > 0);
  CHECK(std::isfinite(log_nu_density(1e5, {900, 10.0, 8.0})));
}

TEST_CASE("nu_density normalization and mean by Simpson") {
  const ChiSquareParams p{20, 5.0, 8.0};
  auto f = [&](double s) { return nu_density(s, p); };
  CHECK(simpson(f, 0.0, 60.0) == Approx(1.0).margin(1e-9));
  CHECK(simpson([&](double s) { return s * f(s); }, 0.0, 60.0) == Approx(5.0).margin(1e-8));
  CHECK(nu_normalization(p).value == Approx(1.0).margin(1e-10));
  CHECK(nu_mean(p).value == Approx(5.0).epsilon(1e-8));
}

TEST_CASE("nu_density domain errors") {
  CHECK_THROWS_AS(nu_density(-1.0, {20, 5.0, 8.0}), std::domain_error);
  CHECK_THROWS_AS(nu_density(1.0, {20, 0.0, 8.0}), std::domain_error);
}

TEST_CASE("gamma_interval_mass examples") {
  CHECK(gamma_interval_mass(1.0, 0.0, std::log(2.0)) == Approx(0.5).epsilon(1e-14));
  CHECK(gamma_interval_mass(8.0, 0.0, INFINITY) == Approx(1.0).epsilon(1e-14));
  const double fact7 = 5040.0;
  const double ref = simpson([&](double x) { return std::pow(x, 7) * std::exp(-x) / fact7; }, 0.0, 8.0, 40000);
  CHECK(std::abs(gamma_interval_mass(8.0, 0.0, 8.0) - ref) < 1e-10);
  CHECK_THROWS_AS(gamma_interval_mass(2.0, 3.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(gamma_interval_mass(0.0, 0.0, 1.0), std::domain_error);
}

TEST_CASE("weighted_interval_integrals at s=0") {
  auto w = weighted_interval_integrals(0.0, 10.0, 40.0, {20, 1.0, 8.0});
  CHECK(w.I_s == 0.0);
  CHECK(w.I_tau == 0.0);
}

TEST_CASE("weighted_interval_integrals against Simpson in tau") {
  const ChiSquareParams p{20, 1.0, 4.0};
  for (double s : {20.0, 30.0}) {
    auto w = weighted_interval_integrals(s, 20.0, 80.0, p);
    auto dens = [&](double tau) { return nu_direct(s, 20, tau); };
    const double is = simpson([&](double tau) { return s * dens(tau); }, 20.0, 80.0);
    const double it = simpson([&](double tau) { return tau * dens(tau); }, 20.0, 80.0);
    CHECK(rel(w.I_s, is) < 1e-6);
    CHECK(rel(w.I_tau, it) < 1e-6);
    auto q = weighted_interval_quadrature(s, 20.0, 80.0, p);
    CHECK(rel(w.I_s, q.I_s) < 1e-6);
    CHECK(rel(w.I_tau, q.I_tau) < 1e-6);
  }
}

TEST_CASE("weighted_interval_integrals rejects small d and reversed intervals") {
  CHECK_THROWS_AS(weighted_interval_integrals(1.0, 1.0, 2.0, {4, 1.0, 8.0}), std::domain_error);
  CHECK_THROWS_AS(weighted_interval_integrals(1.0, 3.0, 2.0, {20, 1.0, 8.0}), std::domain_error);
}

TEST_CASE("delta_advantage examples at d=20, B=4") {
  const ChiSquareParams p{20, 1.0, 4.0};
  CHECK(delta_advantage(0.0, p) == 0.0);
  for (double s = 5.0; s <= 40.0; s += 5.0) CHECK(delta_advantage(s, p) < 0.0);
  const double d30 = delta_advantage(30.0, p);
  CHECK(d30 < -0.5);
  // direct definition as a single integral in tau
  const double ref = simpson([](double tau) { return (30.0 - tau) * nu_direct(30.0, 20, tau); }, 20.0, 80.0);
  CHECK(rel(d30, ref) < 1e-6);
}

TEST_CASE("integral of delta vanishes") {
  auto tot = delta_total_integral({20, 1.0, 4.0});
  CHECK(std::abs(tot.value) < 1e-5);
}

TEST_CASE("StepFunction integrals") {
  auto h = StepFunction::indicator_above(10.0, 40.0, 400);
  CHECK(h(5.0) == 0.0);
  CHECK(h(15.0) == 1.0);
  CHECK(h(100.0) == 1.0);
  CHECK(h.integral(0.0, 50.0, 0.0, 1.0) == Approx(40.0).epsilon(1e-12));
  CHECK(h.integral(0.0, 50.0, 1.0, -1.0) == Approx(10.0).epsilon(1e-12));
  CHECK_THROWS(StepFunction(10.0, {0.5, 2.0}, 0.0));
}

TEST_CASE("check_h_soundness_inequality for conforming and zero h") {
  const ChiSquareParams p{64, 1.0, 8.0};
  const double s_max = 4.0 * p.B * p.d;
  auto above = check_h_soundness_inequality(StepFunction::indicator_above(p.B * p.d / 2.0, s_max, 4096), p);
  CHECK(above.conforming());
  CHECK(above.value >= p.d / 4.0);
  auto step = check_h_soundness_inequality(StepFunction::indicator_above(2.0 * p.d, s_max, 4096), p);
  CHECK(step.conforming());
  CHECK(step.value >= p.d / 4.0);

  auto zero = check_h_soundness_inequality(StepFunction::zero(s_max, 4096), p);
  CHECK(zero.value == 0.0);
  CHECK_FALSE(zero.cond1_ok);
  CHECK(zero.cond2_ok);
  CHECK(zero.violations().find("condition 1") != std::string::npos);
}

TEST_CASE("check_h_soundness_inequality matches Simpson on the step at Bd/2") {
  const ChiSquareParams p{20, 1.0, 5.0};
  const double s_max = 4.0 * p.B * p.d;
  auto rep = check_h_soundness_inequality(StepFunction::indicator_above(p.B * p.d / 2.0, s_max, 800), p);
  const double top = s_truncation(p.d, p);
  const double ref = simpson([&](double s) { return delta_advantage(s, p); }, p.B * p.d / 2.0, top, 4000);
  CHECK(rel(rep.value, ref) < 1e-6);
}
