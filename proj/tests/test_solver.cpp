#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "generators.hpp"
#include "poisint/errors.hpp"
#include "poisint/oracles.hpp"
#include "poisint/solver.hpp"

using namespace poisint;

namespace {

SolveConfig config(double delta, double h, double x_max, double T) {
  return SolveConfig{.mesh = Mesh(delta, 0.0, x_max), .time = TimeGrid(h, T)};
}

// e^-1 * sum_k 1/(k!)^2: the Example-1 CDF at x = 1, since P_k(1) = 1/k!.
double series_at_one() {
  double sum = 0.0;
  double f = 1.0;
  for (int k = 0; k < 20; ++k) {
    if (k > 0) f *= k;
    sum += 1.0 / (f * f);
  }
  return std::exp(-1.0) * sum;
}

}  // namespace

TEST_CASE("stability margins") {
  CHECK(stability_check(0.5, 3.0) == -0.5);
  CHECK(stability_check(1e-4, 1.0) == doctest::Approx(0.9999));
  CHECK(stability_check(1.0, 0.0) == 1.0);
}

TEST_CASE("stencil construction") {
  const auto st0 = make_stencil(0, 0.0, 1.0, 0.1);
  CHECK(st0.k == 1);
  CHECK(st0.lambda == 1.0);
  const auto st3 = make_stencil(3, 3 * 0.1, 1.0, 0.1);
  CHECK(st3.k == 4);
  CHECK(st3.lambda == 1.0);
  const auto mid = make_stencil(1, 0.25, 1.0, 0.1);
  CHECK(mid.k == 3);
  CHECK(mid.lambda == doctest::Approx(0.5));
}

TEST_CASE("hand-applied first step") {
  const std::vector<double> F0(5, 1.0);
  const auto st = make_stencil(0, 0.0, 1.0, 0.1);
  const auto F1 = step(F0, st, 0.1);
  // 0.9 * 1 + 0.1 * (0 * F[-1] + 1 * F[0])
  CHECK(F1[0] == doctest::Approx(1.0).epsilon(1e-15));
  const auto st_far = make_stencil(0, 0.25, 1.0, 0.1);
  const auto F2 = step(F0, st_far, 0.1);
  CHECK(F2[0] == doctest::Approx(0.9));
  // k = 3, lambda = 0.5: node 2 reads F[-1] = 0 and F[0] = 1.
  CHECK(F2[1] == doctest::Approx(0.9));
  CHECK(F2[2] == doctest::Approx(0.9 + 0.1 * 0.5));
  CHECK(F2[3] == doctest::Approx(1.0));
}

TEST_CASE("zero intensity leaves the state unchanged") {
  gen::Rng rng(5);
  const auto grid = gen::cdf_grid(rng, 0.1, 0.0, 20);
  const auto st = make_stencil(0, 0.37, 0.0, 0.1);
  CHECK(step(grid.values, st, 0.1) == grid.values);

  const ControlDensity zero(Expression::parse("0"), 1.0);
  const auto res = solve_segment(Expression::parse("s"), zero, InitialCondition::point_mass_at_zero(),
                                 config(0.1, 0.1, 1.0, 1.0));
  for (double v : res.grid.values) CHECK(v == 1.0);
  REQUIRE(res.grid.atoms.size() == 1);
  CHECK(res.grid.atoms[0].mass == 1.0);

  const auto init = InitialCondition::from_grid(grid);
  const auto same = solve_segment(Expression::parse("s"), zero, init, config(0.1, 0.1, 1.9, 1.0));
  CHECK(same.grid.values == grid.values);
}

TEST_CASE("identity kernel: jump, accuracy and the value at 1") {
  const ControlDensity one(Expression::parse("1"), 1.0);
  const auto res =
      solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), config(1e-3, 1e-3, 3.0, 1.0));
  CHECK(res.grid.values[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
  REQUIRE(res.grid.atoms.size() == 1);
  CHECK(res.grid.atoms[0].location == 0.0);
  CHECK(res.grid.atoms[0].mass == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(cdf_at(res.grid, 1.0) == doctest::Approx(series_at_one()).epsilon(2e-3));
  CHECK(series_at_one() == doctest::Approx(0.8386).epsilon(1e-4));
  double worst = 0.0;
  for (std::size_t j = 0; j + 1 < res.grid.mesh.size(); ++j) {
    const double exact = irwin_hall_cdf(res.grid.mesh.node(j));
    worst = std::max(worst, std::fabs(res.grid.values[j] - exact) / exact);
  }
  CHECK(worst < 2e-3);
  CHECK(check_invariants(res.grid).empty());
}

TEST_CASE("stability violation happens before any step") {
  const ControlDensity one(Expression::parse("1"), 2.0);
  bool stepped = false;
  auto cfg = config(0.5, 2.0, 3.0, 2.0);
  cfg.progress = [&](std::size_t, std::size_t) { stepped = true; };
  try {
    solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), cfg);
    FAIL("expected StabilityViolation");
  } catch (const StabilityViolation& e) {
    CHECK(e.margin() < 0.0);
  }
  CHECK_FALSE(stepped);
}

TEST_CASE("short mesh raises a mass leak warning") {
  const ControlDensity one(Expression::parse("1"), 1.0);
  const auto res =
      solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), config(0.01, 0.01, 1.0, 1.0));
  REQUIRE(res.warnings.size() == 1);
  CHECK(res.warnings[0].find("MassLeakWarning") != std::string::npos);
}

TEST_CASE("worker count does not change the result") {
  const ControlDensity n(Expression::parse("1+sin(s)^2"), 1.0);
  auto cfg = config(1e-3, 1e-3, 4.0, 1.0);
  const auto g = Expression::parse("s^2+0.1");
  const auto one = solve_segment(g, n, InitialCondition::point_mass_at_zero(), cfg);
  cfg.workers = 3;
  const auto three = solve_segment(g, n, InitialCondition::point_mass_at_zero(), cfg);
  CHECK(one.grid.values == three.grid.values);
  cfg.check_invariants = true;
  CHECK_NOTHROW(solve_segment(g, n, InitialCondition::point_mass_at_zero(), cfg));
}

TEST_CASE("atom pinning fixes node 0 to the exact jump") {
  const ControlDensity one(Expression::parse("1"), 1.0);
  auto cfg = config(1e-2, 1e-2, 3.0, 1.0);
  cfg.atom_pinning = true;
  const auto res = solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), cfg);
  CHECK(res.grid.values[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("chaining through the initial condition matches one long solve") {
  const ControlDensity one(Expression::parse("1"), 1.0);
  const auto g = Expression::parse("s");
  const auto whole = solve_segment(g, one, InitialCondition::point_mass_at_zero(), config(0.01, 0.01, 3.0, 1.0));
  const auto first = solve_segment(g, one, InitialCondition::point_mass_at_zero(), config(0.01, 0.01, 3.0, 0.5));
  auto cfg = config(0.01, 0.01, 3.0, 0.5);
  cfg.t0 = 0.5;
  const auto second = solve_segment(g, one, InitialCondition::from_grid(first.grid), cfg);
  for (std::size_t j = 0; j < whole.grid.values.size(); ++j) {
    CHECK(second.grid.values[j] == doctest::Approx(whole.grid.values[j]).epsilon(1e-12));
  }
  CHECK(second.grid.atoms[0].mass == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("trajectory and argument checks") {
  const ControlDensity one(Expression::parse("1"), 1.0);
  auto cfg = config(0.1, 0.1, 2.0, 1.0);
  cfg.record_trajectory = true;
  const auto res = solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), cfg);
  CHECK(res.trajectory.size() == 11);
  CHECK(res.trajectory.back() == res.grid.values);
  CHECK_THROWS_AS(solve_segment(Expression::parse("s-0.5"), one, InitialCondition::point_mass_at_zero(), cfg),
                  InvalidArgument);
  const SolveConfig shifted{.mesh = Mesh(0.1, -1.0, 1.0), .time = TimeGrid(0.1, 1.0)};
  CHECK_THROWS_AS(solve_segment(Expression::parse("s"), one, InitialCondition::point_mass_at_zero(), shifted),
                  InvalidArgument);
}

TEST_CASE("property: one step preserves monotonicity, bounds and column sums") {
  gen::Rng rng(99);
  for (int c = 0; c < gen::kCases; ++c) {
    const double delta = rng.uniform(0.01, 0.2);
    const auto M = static_cast<std::size_t>(rng.integer(5, 80));
    const auto grid = gen::cdf_grid(rng, delta, 0.0, M);
    const double h = rng.uniform(0.001, 0.5);
    const double n = rng.uniform(0.0, 0.999 / h);
    const auto st = make_stencil(static_cast<std::size_t>(c), rng.uniform(0.0, 3.0), n, delta);
    REQUIRE(st.lambda >= 0.0);
    REQUIRE(st.lambda <= 1.0);
    const double a = h * n;
    CHECK(std::fabs(1.0 - a) + a * st.lambda + a * (1.0 - st.lambda) == doctest::Approx(1.0).epsilon(1e-14));
    const auto next = step(grid.values, st, h);
    for (std::size_t j = 0; j < M; ++j) {
      CHECK(next[j] >= -1e-15);
      CHECK(next[j] <= 1.0 + 1e-15);
      if (j > 0) CHECK(next[j] >= next[j - 1] - 1e-15);
    }
  }
}

TEST_CASE("property: exact multiples of delta land on nodes") {
  gen::Rng rng(123);
  for (int c = 0; c < gen::kCases; ++c) {
    const double delta = rng.uniform(1e-4, 0.5);
    const long m = rng.integer(0, 1000);
    const auto st = make_stencil(0, static_cast<double>(m) * delta, 1.0, delta);
    CHECK(st.k == m + 1);
    CHECK(st.lambda == 1.0);
  }
}

TEST_CASE("property: the stencil brackets x_j - g") {
  gen::Rng rng(321);
  for (int c = 0; c < gen::kCases; ++c) {
    const double delta = rng.uniform(1e-3, 0.3);
    const double g = rng.uniform(0.0, 5.0);
    const auto st = make_stencil(0, g, 1.0, delta);
    const double j = 100.0;
    const double target = j * delta - g;
    CHECK(target >= (j - st.k) * delta - 1e-9);
    CHECK(target <= (j - st.k + 1) * delta + 1e-9);
    CHECK((1.0 - st.lambda) * (j - st.k) * delta + st.lambda * (j - st.k + 1) * delta ==
          doctest::Approx(target).epsilon(1e-9));
  }
}
