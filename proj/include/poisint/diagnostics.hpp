#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "poisint/model.hpp"

namespace poisint {

// n*_t (1 - exp(-L)) / L with L = int_0^t n; tends to n*_t as L -> 0.
double holder_constant(double n_star, double Lambda);

struct HolderReport {
  double gamma = 1.0;
  double seminorm_estimate = 0.0;
  double c_nt = 0.0;            // 0 when not supplied
  std::optional<double> bound;  // c_nt * [g^-1], when [g^-1] is supplied
  std::size_t pair_budget = 0;
  std::size_t pairs_used = 0;
};

inline constexpr std::size_t kMinHolderPairs = 10000;

// Max of |F(x) - F(y)| / |x - y|^gamma over node pairs with 0 < x < y,
// y - x <= 1 and no atom in [x, y]. Every adjacent pair is used, the rest of
// the budget is drawn at random with log-uniform separations.
HolderReport holder_estimate(const CdfGrid& F, double gamma, std::size_t pairs, double c_nt = 0.0,
                             std::optional<double> g_inverse_seminorm = std::nullopt, std::uint64_t seed = 1);

// sum_j delta |A_j - B_j|. Throws MeshMismatch unless the meshes agree.
double l1_distance(const CdfGrid& A, const CdfGrid& B);

// Oracle sampled at the nodes of `mesh`.
CdfGrid coarsen(const CdfGrid& fine, const Mesh& mesh);

struct ConvergenceRow {
  double delta = 0.0;
  double h = 0.0;
  double l1_error = 0.0;
  double seconds = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;  // sorted by delta
  std::optional<double> order;       // slope of log(error) against log(delta)
};

struct ConvergenceProblem {
  std::function<CdfGrid(double delta, double h)> solve;
  std::function<CdfGrid(const Mesh& mesh)> oracle;
};

// Least-squares slope of log(y) on log(x); empty if any y <= 0 or fewer than
// two distinct x.
std::optional<double> fitted_order(const std::vector<std::pair<double, double>>& points);

ConvergenceTable convergence_study(const ConvergenceProblem& problem,
                                   const std::vector<std::pair<double, double>>& resolutions, unsigned workers = 1);

}  // namespace poisint
