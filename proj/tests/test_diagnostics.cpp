#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "generators.hpp"
#include "poisint/diagnostics.hpp"
#include "poisint/errors.hpp"
#include "poisint/oracles.hpp"
#include "poisint/transforms.hpp"

using namespace poisint;

namespace {

CdfGrid solve(const std::string& g, const std::string& n, double T, double delta, double h, double x_max) {
  const ControlDensity density(Expression::parse(n), T);
  PiecewiseConfig c;
  c.delta = delta;
  c.h = h;
  c.x_max = x_max;
  return compose_piecewise(Expression::parse(g), density, T, c);
}

}  // namespace

TEST_CASE("holder constant") {
  CHECK(holder_constant(1.0, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK(holder_constant(2.0, 0.0) == 2.0);
  CHECK(holder_constant(2.0, 1e-9) == doctest::Approx(2.0));
}

TEST_CASE("identity kernel respects its Holder bound") {
  const auto F = solve("s", "1", 1.0, 5e-4, 5e-4, 3.0);
  const double c = holder_constant(1.000001, 1.0);
  const auto report = holder_estimate(F, 1.0, 20000, c, 1.0);
  REQUIRE(report.bound);
  CHECK(report.seminorm_estimate > 0.4);
  CHECK(report.seminorm_estimate <= *report.bound);
  CHECK(report.pairs_used == 20000);
  CHECK_THROWS_AS(holder_estimate(F, 1.0, 100), InvalidArgument);
  CHECK_THROWS_AS(holder_estimate(F, 1.5, 20000), InvalidArgument);
}

TEST_CASE("flat region below g(0) has zero ratio") {
  const auto F = solve("s+0.5", "1", 1.0, 1e-3, 1e-3, 4.0);
  const auto below = resample_range(F, 0.0, 0.45);
  CHECK(holder_estimate(below, 1.0, 10000).seminorm_estimate == 0.0);
}

TEST_CASE("parabola kernel: gamma 1 diverges, gamma 1/2 stays bounded") {
  const auto coarse = solve("1-(1-s)^2", "1", 2.0, 4e-3, 4e-3, 8.0);
  const auto fine = solve("1-(1-s)^2", "1", 2.0, 1e-3, 1e-3, 8.0);
  const double r1 = holder_estimate(fine, 1.0, 20000).seminorm_estimate /
                    holder_estimate(coarse, 1.0, 20000).seminorm_estimate;
  const double r_half = holder_estimate(fine, 0.5, 20000).seminorm_estimate /
                        holder_estimate(coarse, 0.5, 20000).seminorm_estimate;
  // Quartering delta roughly doubles the gamma = 1 estimate.
  CHECK(r1 > 1.5);
  CHECK(r_half < 1.3);
}

// Every sampled pair has |x - y| <= 1, where |x - y|^gamma shrinks as gamma
// grows, so the ratio can only grow with gamma.
TEST_CASE("property: holder estimate is monotone in gamma on pairs at most 1 apart") {
  gen::Rng rng(31);
  for (int c = 0; c < gen::kCases; ++c) {
    const double delta = rng.uniform(0.002, 0.05);
    const auto grid = gen::cdf_grid(rng, delta, 0.0, static_cast<std::size_t>(rng.integer(20, 400)));
    const double g1 = rng.uniform(0.05, 1.0);
    const double g2 = rng.uniform(0.05, 1.0);
    const auto a = holder_estimate(grid, std::min(g1, g2), 10000, 0.0, std::nullopt, 5);
    const auto b = holder_estimate(grid, std::max(g1, g2), 10000, 0.0, std::nullopt, 5);
    CHECK(a.seminorm_estimate <= b.seminorm_estimate);
  }
}

TEST_CASE("l1 distance") {
  const Mesh mesh(0.1, 0.0, 1.0);
  CdfGrid a{mesh, std::vector<double>(mesh.size(), 0.5), {}};
  CdfGrid b{mesh, std::vector<double>(mesh.size(), 0.7), {}};
  CHECK(l1_distance(a, a) == 0.0);
  CHECK(l1_distance(a, b) == doctest::Approx(0.2 * 0.1 * 11));
  CHECK_THROWS_AS(l1_distance(a, CdfGrid{Mesh(0.1, 0.0, 2.0), std::vector<double>(21, 0.5), {}}), MeshMismatch);

  const auto F = solve("s", "1", 1.0, 5e-4, 5e-4, 3.0);
  CHECK(l1_distance(F, irwin_hall_grid(F.mesh)) < 1e-3);
}

TEST_CASE("property: l1 distance is a metric") {
  gen::Rng rng(32);
  for (int c = 0; c < gen::kCases; ++c) {
    const auto M = static_cast<std::size_t>(rng.integer(2, 100));
    const auto x = gen::cdf_grid(rng, 0.1, 0.0, M);
    const auto y = gen::cdf_grid(rng, 0.1, 0.0, M);
    const auto z = gen::cdf_grid(rng, 0.1, 0.0, M);
    CHECK(l1_distance(x, y) == l1_distance(y, x));
    CHECK(l1_distance(x, z) <= l1_distance(x, y) + l1_distance(y, z) + 1e-15);
    CHECK(l1_distance(x, y) >= 0.0);
  }
}

TEST_CASE("order fit") {
  CHECK(*fitted_order({{1.0, 2.0}, {2.0, 4.0}, {4.0, 8.0}}) == doctest::Approx(1.0));
  CHECK(*fitted_order({{1.0, 1.0}, {2.0, 4.0}}) == doctest::Approx(2.0));
  CHECK_FALSE(fitted_order({{1.0, 0.0}, {2.0, 1.0}}).has_value());
  CHECK_FALSE(fitted_order({{1.0, 1.0}}).has_value());
}

TEST_CASE("convergence studies") {
  ConvergenceProblem series{[](double d, double h) { return solve("s", "1", 1.0, d, h, 3.0); },
                            [](const Mesh& m) { return irwin_hall_grid(m); }};
  const auto table = convergence_study(series, {{1e-3, 1e-3}, {4e-3, 4e-3}, {2e-3, 2e-3}}, 2);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].delta == 1e-3);
  CHECK(table.rows[0].l1_error < table.rows[1].l1_error);
  CHECK(table.rows[1].l1_error < table.rows[2].l1_error);
  REQUIRE(table.order);
  CHECK(*table.order >= 0.8);

  ConvergenceProblem idle{[](double d, double h) { return solve("s", "0", 1.0, d, h, 1.0); },
                          [](const Mesh& m) { return point_mass_grid(m); }};
  const auto zero = convergence_study(idle, {{0.1, 0.1}, {0.05, 0.05}});
  for (const auto& row : zero.rows) CHECK(row.l1_error == 0.0);
  CHECK_FALSE(zero.order.has_value());

  // delta fixed, h doubled: the error moves one way.
  std::vector<double> errors;
  for (double h : {1e-3, 2e-3, 4e-3, 8e-3}) {
    const auto F = solve("s", "1", 1.0, 1e-3, h, 3.0);
    errors.push_back(l1_distance(F, irwin_hall_grid(F.mesh)));
  }
  const bool up = std::is_sorted(errors.begin(), errors.end());
  const bool down = std::is_sorted(errors.rbegin(), errors.rend());
  CHECK((up || down));
}
