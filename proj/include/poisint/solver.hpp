#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poisint/model.hpp"

namespace poisint {

// 1 - h*n_star. Callers reject margins <= 0.
double stability_check(double h, double n_star);

// One time level of the scheme: x_j - g(t_i) is interpolated between nodes
// j-k and j-k+1 with weight lambda on the upper node.
struct StepStencil {
  std::size_t i = 0;
  long k = 1;
  double lambda = 1.0;
  double n = 0.0;
};

// k = floor(g/delta) + 1, lambda = |delta*k - g|/delta. When g/delta is within
// 1e-9 of an integer the stencil snaps to the exact node (lambda = 1).
StepStencil make_stencil(std::size_t i, double g_value, double n_value, double delta);

// Writes out[j] for j in [begin, end). Reads F at indices <= j only; negative
// indices read 0.
void step_range(std::span<const double> F, std::span<double> out, const StepStencil& st, double h, std::size_t begin,
                std::size_t end);
std::vector<double> step(std::span<const double> F, const StepStencil& st, double h);

// Empty grid means a point mass at zero.
struct InitialCondition {
  std::optional<CdfGrid> grid;

  static InitialCondition point_mass_at_zero() { return {}; }
  static InitialCondition from_grid(CdfGrid g) { return {std::move(g)}; }
  bool is_point_mass() const { return !grid.has_value(); }
};

struct SolveConfig {
  Mesh mesh;        // x_min must be 0
  TimeGrid time;    // time.T is the segment length
  double t0 = 0.0;  // the segment covers [t0, t0 + time.T]
  bool atom_pinning = false;
  bool record_trajectory = false;
  unsigned workers = 1;
  bool check_invariants = false;  // per-step monotone / bounded / stochastic checks
  std::function<void(std::size_t step, std::size_t total)> progress{};
};

inline constexpr double kMassLeakThreshold = 0.999;

struct SegmentResult {
  CdfGrid grid;
  double stability_margin = 1.0;
  std::vector<std::string> warnings;
  std::vector<std::vector<double>> trajectory;  // F^0 .. F^N when recorded
};

// Forward scheme for an increasing, non-negative kernel on [t0, t0 + T].
// Throws StabilityViolation before any step when h*n* >= 1.
SegmentResult solve_segment(const Expression& g, const ControlDensity& n, const InitialCondition& init,
                            const SolveConfig& cfg);

// Default worker count: POISINT_WORKERS if set, else 1.
unsigned default_workers();

}  // namespace poisint
