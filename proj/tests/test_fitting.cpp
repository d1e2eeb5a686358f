#include <catch2/catch_amalgamated.hpp>

#include <cavpol/fitting.hpp>

#include <cmath>
#include <vector>

using namespace cavpol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

// Small reflectance map from the canonical stack; cheap enough for optimizer
// loops in unit tests.
DispersionMap small_target(const std::map<std::string, double>& params) {
  return dispersion_map(stack_from_params(params), linspace(1.9, 2.3, 41), {0.0, 4.0, 8.0},
                        Polarization::TE);
}

}  // namespace

TEST_CASE("Objective vanishes for the generating parameters", "[fitting]") {
  const auto params = default_stack_params();
  const DispersionMap target = small_target(params);
  CHECK(fit_objective(params, target, {}, Polarization::TE) <= 1e-20);

  auto off = params;
  off.at("L") *= 1.05;
  CHECK(fit_objective(off, target, {}, Polarization::TE) > 1e-4);
}

TEST_CASE("Zero weights silence the objective", "[fitting]") {
  const auto params = default_stack_params();
  const DispersionMap target = small_target(params);
  auto off = params;
  off.at("L") *= 1.2;
  const std::vector<std::vector<double>> zeros(target.energies_ev.size(),
                                               std::vector<double>(target.momenta_um.size(), 0.0));
  CHECK(fit_objective(off, target, zeros, Polarization::TE) == 0.0);
}

TEST_CASE("Near-resonance weights emphasize the line region", "[fitting]") {
  const DispersionMap target = small_target(default_stack_params());
  const auto w = near_resonance_weights(target, 2.1, 0.1, 3.0);
  REQUIRE(w.size() == target.energies_ev.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double expect = std::abs(target.energies_ev[i] - 2.1) <= 0.1 ? 3.0 : 1.0;
    for (double v : w[i]) REQUIRE(v == expect);
  }
}

TEST_CASE("Objective failures carry the offending grid point", "[fitting]") {
  DispersionMap target;
  target.energies_ev = {1.0, 1.1, 1.2};
  target.momenta_um = {9.0};  // beyond the incidence cone at these energies
  target.values.assign(3, {0.5});
  CHECK_THROWS_WITH(fit_objective(default_stack_params(), target, {}, Polarization::TE),
                    Catch::Matchers::ContainsSubstring("kx=9"));

  // Masking the bad points with zero weight skips their evaluation entirely.
  const std::vector<std::vector<double>> zeros(3, std::vector<double>{0.0});
  CHECK(fit_objective(default_stack_params(), target, zeros, Polarization::TE) == 0.0);
}

TEST_CASE("Fit problem validation", "[fitting]") {
  FitProblem p;
  p.target = small_target(default_stack_params());

  SECTION("well-formed problem passes") { CHECK_NOTHROW(p.validate()); }

  SECTION("unknown names are rejected") {
    p.free.push_back({"thickness", 600.0, 500.0, 700.0});
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.free.clear();
    p.fixed["bogus"] = 1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }

  SECTION("initial value must sit inside the bounds") {
    p.free.push_back({"L", 720.0, 500.0, 700.0});
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.free[0] = {"L", 600.0, 700.0, 500.0};  // inverted bounds
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }

  SECTION("weight matrix must match the target shape") {
    p.weights.assign(2, std::vector<double>(3, 1.0));
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }

  SECTION("optimizer settings must be sane") {
    p.max_iterations = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.max_iterations = 500;
    p.tol_rel = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}

TEST_CASE("Simplex minimizer on analytic objectives", "[fitting]") {
  detail::NelderMead nm;
  nm.lo = {-1.0, -1.0};
  nm.hi = {1.0, 1.0};

  SECTION("separable quadratic") {
    nm.fn = [](const std::vector<double>& x) {
      return (x[0] - 0.3) * (x[0] - 0.3) + 2.0 * (x[1] + 0.2) * (x[1] + 0.2);
    };
    std::vector<double> best;
    const FitResult res = nm.run({-0.8, 0.9}, &best);
    CHECK(res.converged);
    CHECK_THAT(best[0], WithinAbs(0.3, 1e-5));
    CHECK_THAT(best[1], WithinAbs(-0.2, 1e-5));
    CHECK(res.objective < 1e-9);
  }

  SECTION("minimum outside the box lands on the boundary") {
    nm.fn = [](const std::vector<double>& x) {
      return (x[0] - 2.0) * (x[0] - 2.0) + x[1] * x[1];
    };
    std::vector<double> best;
    const FitResult res = nm.run({0.0, 0.5}, &best);
    CHECK(res.converged);
    CHECK_THAT(best[0], WithinAbs(1.0, 1e-6));
    CHECK_THAT(best[1], WithinAbs(0.0, 1e-5));
  }

  SECTION("deterministic across runs") {
    nm.fn = [](const std::vector<double>& x) {
      return std::sin(3.0 * x[0]) + x[0] * x[0] + (x[1] - 0.1) * (x[1] - 0.1);
    };
    std::vector<double> b1, b2;
    const FitResult r1 = nm.run({0.4, -0.4}, &b1);
    const FitResult r2 = nm.run({0.4, -0.4}, &b2);
    CHECK(r1.objective == r2.objective);
    CHECK(r1.iterations == r2.iterations);
    CHECK(b1 == b2);
  }

  SECTION("iteration cap reports non-convergence") {
    nm.fn = [](const std::vector<double>& x) {
      const double a = x[1] - x[0] * x[0];
      return 100.0 * a * a + (1.0 - x[0]) * (1.0 - x[0]);  // banana valley
    };
    nm.max_iter = 3;
    const FitResult res = nm.run({-0.8, 0.9}, nullptr);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 3);
  }

  SECTION("non-finite start is rejected") {
    nm.fn = [](const std::vector<double>&) { return std::nan(""); };
    CHECK_THROWS_AS(nm.run({0.0, 0.0}, nullptr), std::runtime_error);
  }
}

TEST_CASE("Fit with no free parameters evaluates once", "[fitting]") {
  FitProblem p;
  p.target = small_target(default_stack_params());
  const FitResult res = fit(p);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK(res.objective <= 1e-20);
  CHECK(res.fitted.empty());
}

TEST_CASE("Cavity length is recoverable from a clean target", "[fitting]") {
  FitProblem p;
  p.target = small_target(default_stack_params());

  for (double init : {590.0, 665.0}) {
    p.free = {{"L", init, 560.0, 700.0}};
    const FitResult res = fit(p);
    CHECK(res.converged);
    REQUIRE(res.fitted.count("L") == 1);
    CHECK_THAT(res.fitted.at("L"), WithinRel(628.0, 5e-3));
    // The optimizer never worsens the starting point.
    std::map<std::string, double> at_init = default_stack_params();
    at_init.at("L") = init;
    CHECK(res.objective <= fit_objective(at_init, p.target, {}, Polarization::TE));
  }
}

TEST_CASE("Fixed parameter overrides shift the optimum", "[fitting]") {
  // Target generated with a nonstandard mirror thickness; fitting L with the
  // mirror fixed to that value must still land on the true length.
  auto gen = default_stack_params();
  gen.at("mirror") = 40.0;
  FitProblem p;
  p.target = small_target(gen);
  p.fixed["mirror"] = 40.0;
  p.free = {{"L", 655.0, 560.0, 700.0}};
  const FitResult res = fit(p);
  CHECK(res.converged);
  CHECK_THAT(res.fitted.at("L"), WithinRel(628.0, 5e-3));
}

TEST_CASE("Multi-start keeps the best basin and is reproducible", "[fitting]") {
  FitProblem p;
  p.target = small_target(default_stack_params());
  p.free = {{"L", 580.0, 560.0, 700.0}};

  const FitResult a = fit_multistart(p, 3, 777);
  const FitResult b = fit_multistart(p, 3, 777);
  CHECK(a.objective == b.objective);
  CHECK(a.fitted.at("L") == b.fitted.at("L"));

  const FitResult single = fit(p);
  CHECK(a.objective <= single.objective);
  CHECK_THAT(a.fitted.at("L"), WithinRel(628.0, 5e-3));
}
