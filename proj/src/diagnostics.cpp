#include "poisint/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "poisint/errors.hpp"
#include "poisint/oracles.hpp"

namespace poisint {

double holder_constant(double n_star, double Lambda) {
  if (Lambda < 1e-12) return n_star;
  return n_star * (1.0 - std::exp(-Lambda)) / Lambda;
}

HolderReport holder_estimate(const CdfGrid& F, double gamma, std::size_t pairs, double c_nt,
                             std::optional<double> g_inverse_seminorm, std::uint64_t seed) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
  if (pairs < kMinHolderPairs) throw InvalidArgument("holder_estimate needs at least 10000 pairs");
  HolderReport report;
  report.gamma = gamma;
  report.pair_budget = pairs;
  report.c_nt = c_nt;
  if (g_inverse_seminorm) report.bound = c_nt * *g_inverse_seminorm;

  const Mesh& mesh = F.mesh;
  const double delta = mesh.delta();
  // First node strictly right of 0.
  std::size_t first = 0;
  while (first < mesh.size() && mesh.node(first) <= 0.5 * delta) ++first;
  if (first + 1 >= mesh.size()) return report;

  // atoms_upto[j]: number of atoms at or left of node j (with snapping).
  std::vector<Atom> atoms = F.atoms;
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  std::vector<std::size_t> count_upto(mesh.size(), 0);
  {
    std::size_t k = 0;
    for (std::size_t j = 0; j < mesh.size(); ++j) {
      while (k < atoms.size() && atoms[k].location <= mesh.node(j) + 1e-6 * delta) ++k;
      count_upto[j] = k;
    }
  }
  // An atom in [x_i, x_j] is counted at j but not at i-1.
  auto clean = [&](std::size_t i, std::size_t j) { return count_upto[j] == (i == 0 ? 0 : count_upto[i - 1]); };

  double worst = 0.0;
  std::size_t used = 0;
  auto consider = [&](std::size_t i, std::size_t j) {
    if (!clean(i, j)) return;
    const double d = static_cast<double>(j - i) * delta;
    worst = std::max(worst, std::fabs(F.values[j] - F.values[i]) / std::pow(d, gamma));
    ++used;
  };
  for (std::size_t i = first; i + 1 < mesh.size() && used < pairs; ++i) consider(i, i + 1);

  const auto max_sep = static_cast<std::size_t>(std::max(1.0, std::floor(1.0 / delta + 1e-9)));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t span = mesh.size() - first;
  std::size_t attempts = 0;
  while (used < pairs && attempts < 4 * pairs) {
    ++attempts;
    const std::size_t i = first + static_cast<std::size_t>(unit(rng) * static_cast<double>(span - 1));
    const std::size_t limit = std::min(max_sep, mesh.size() - 1 - i);
    if (limit < 1) continue;
    const auto sep = static_cast<std::size_t>(std::clamp(
        std::floor(std::exp(unit(rng) * std::log(static_cast<double>(limit) + 1.0))), 1.0, static_cast<double>(limit)));
    consider(i, i + sep);
  }
  report.seminorm_estimate = worst;
  report.pairs_used = used;
  return report;
}

double l1_distance(const CdfGrid& A, const CdfGrid& B) {
  if (!A.mesh.same_as(B.mesh) || A.values.size() != B.values.size()) {
    throw MeshMismatch("l1_distance needs grids on the same mesh");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < A.values.size(); ++j) sum += std::fabs(A.values[j] - B.values[j]);
  return sum * A.mesh.delta();
}

CdfGrid coarsen(const CdfGrid& fine, const Mesh& mesh) {
  CdfGrid out{mesh, std::vector<double>(mesh.size()), {}};
  for (std::size_t j = 0; j < mesh.size(); ++j) out.values[j] = cdf_at(fine, mesh.node(j));
  const double half = 0.5 * mesh.delta();
  for (const Atom& a : fine.atoms) {
    if (a.location >= mesh.x_min() - half && a.location <= mesh.x_max() + half) out.atoms.push_back(a);
  }
  return out;
}

std::optional<double> fitted_order(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) return std::nullopt;
    const double lx = std::log(x);
    const double ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  if (std::fabs(denom) < 1e-300) return std::nullopt;
  return (n * sxy - sx * sy) / denom;
}

ConvergenceTable convergence_study(const ConvergenceProblem& problem,
                                   const std::vector<std::pair<double, double>>& resolutions, unsigned workers) {
  if (resolutions.empty()) throw InvalidArgument("convergence_study needs at least one resolution");
  ConvergenceTable table;
  table.rows.resize(resolutions.size());
  std::vector<std::exception_ptr> errors(resolutions.size());
  auto run_one = [&](std::size_t r) {
    try {
      const auto [delta, h] = resolutions[r];
      const auto start = std::chrono::steady_clock::now();
      const CdfGrid grid = problem.solve(delta, h);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const CdfGrid exact = problem.oracle(grid.mesh);
      table.rows[r] = {delta, h, l1_distance(grid, exact), seconds};
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t r = 0; r < resolutions.size(); ++r) run_one(r);
  } else {
    std::vector<std::jthread> pool;
    std::size_t next = 0;
    std::mutex lock;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, resolutions.size()); ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t r;
          {
            std::lock_guard guard(lock);
            if (next >= resolutions.size()) return;
            r = next++;
          }
          run_one(r);
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const ConvergenceRow& a, const ConvergenceRow& b) { return a.delta < b.delta; });
  std::vector<std::pair<double, double>> points;
  for (const auto& row : table.rows) points.emplace_back(row.delta, row.l1_error);
  table.order = fitted_order(points);
  return table;
}

}  // namespace poisint
