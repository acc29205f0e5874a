#pragma once

// Small hand-rolled generators for the property tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "poisint/expr.hpp"
#include "poisint/model.hpp"

namespace gen {

inline constexpr int kCases = 200;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine_); }
  long integer(long a, long b) { return std::uniform_int_distribution<long>(a, b)(engine_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline poisint::Expression expression(Rng& rng, int depth) {
  using E = poisint::Expression;
  if (depth <= 0 || rng.coin(0.25)) {
    switch (rng.integer(0, 3)) {
      case 0:
        return E::number(static_cast<double>(rng.integer(0, 9)));
      case 1:
        return E::number(rng.uniform(0.0, 5.0));
      case 2:
        return E::constant(rng.coin() ? E::Named::Pi : E::Named::E);
      default:
        return E::variable();
    }
  }
  switch (rng.integer(0, 6)) {
    case 0:
      return E::negate(expression(rng, depth - 1));
    case 1: {
      static const E::Kind ops[] = {E::Kind::Add, E::Kind::Sub, E::Kind::Mul, E::Kind::Div, E::Kind::Pow};
      const auto op = ops[rng.integer(0, 4)];
      return E::binary(op, expression(rng, depth - 1), expression(rng, depth - 1));
    }
    case 2:
    case 3: {
      static const E::Kind ops[] = {E::Kind::Add, E::Kind::Sub, E::Kind::Mul, E::Kind::Div};
      return E::binary(ops[rng.integer(0, 3)], expression(rng, depth - 1), expression(rng, depth - 1));
    }
    case 4: {
      static const E::Func unary[] = {E::Func::Sin, E::Func::Cos, E::Func::Tan, E::Func::Exp,
                                      E::Func::Log, E::Func::Sqrt, E::Func::Abs};
      return E::call(unary[rng.integer(0, 6)], {expression(rng, depth - 1)});
    }
    case 5:
      return E::call(rng.coin() ? E::Func::Min : E::Func::Max, {expression(rng, depth - 1), expression(rng, depth - 1)});
    default:
      return E::binary(E::Kind::Pow, expression(rng, depth - 1), E::number(static_cast<double>(rng.integer(0, 3))));
  }
}

// Random valid CDF grid on [x_min, x_min + (M-1) delta] with a few atoms on nodes.
inline poisint::CdfGrid cdf_grid(Rng& rng, double delta, double x_min, std::size_t M, int max_atoms = 3) {
  const auto mesh = poisint::Mesh::with_count(delta, x_min, M);
  std::vector<double> steps(M, 0.0);
  for (std::size_t j = 0; j < M; ++j) steps[j] = rng.coin(0.7) ? rng.uniform(0.0, 1.0) : 0.0;
  std::vector<poisint::Atom> atoms;
  const int n_atoms = static_cast<int>(rng.integer(0, max_atoms));
  std::vector<std::size_t> used;
  for (int a = 0; a < n_atoms; ++a) {
    const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<long>(M) - 1));
    if (std::find(used.begin(), used.end(), j) != used.end()) continue;
    used.push_back(j);
    const double mass = rng.uniform(1.0, 5.0) * static_cast<double>(M) / 10.0;
    steps[j] += mass;
    atoms.push_back({mesh.node(j), mass});
  }
  double total = 0.0;
  for (double s : steps) total += s;
  const double captured = rng.coin(0.5) ? 1.0 : rng.uniform(0.5, 1.0);
  const double scale = total > 0.0 ? captured / total : 0.0;
  poisint::CdfGrid grid{mesh, std::vector<double>(M), {}};
  double acc = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    acc += steps[j] * scale;
    grid.values[j] = std::min(acc, 1.0);
  }
  for (auto& a : atoms) {
    a.mass *= scale;
    if (a.mass > 0.0) grid.atoms.push_back(a);
  }
  return grid;
}

}  // namespace gen
