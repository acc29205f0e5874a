#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "poisint/model.hpp"
#include "poisint/solver.hpp"

namespace poisint {

enum class Reduction { Direct, TimeReversal, Reflection, ReflectionAndTimeReversal, ExactPoisson };

std::string to_string(Reduction r);
Reduction reduction_for(SegmentClass cls);

struct PlannedSegment {
  KernelSegment segment;
  Reduction reduction;
};
using SegmentPlan = std::vector<PlannedSegment>;

SegmentPlan plan_segments(const std::vector<KernelSegment>& segments);

struct Reversed {
  Expression g;
  ControlDensity n;
};

// g(a+b-s) and n(a+b-s) on [a, b].
Reversed reverse_time(const Expression& g, const ControlDensity& n, double a, double b);

// Smallest k_max with Poisson(Lambda) tail beyond k_max below 1e-12.
int poisson_k_max(double Lambda);

// level * Poisson(Lambda) as a pure-atom grid. Throws MeshTooShort when the
// atoms up to k_max do not fit in the mesh.
CdfGrid flat_segment_cdf(double level, double Lambda, const Mesh& mesh, int k_max);

// CDF of I from the CDF of -I, on the mirrored mesh.
CdfGrid reflect(const CdfGrid& F_neg);

// CDF of the sum of independent variables with CDFs A and B. Throws
// MeshMismatch unless both meshes share delta and a common lattice.
CdfGrid convolve(const CdfGrid& A, const CdfGrid& B);

struct PiecewiseConfig {
  double delta = 1e-3;
  double h = 1e-3;
  double x_max = 1.0;
  std::optional<double> x_min;     // output lower bound; default 0, or -x_max with negative parts
  std::vector<double> breakpoints;  // empty: detect automatically
  int probe_count = kDefaultProbeCount;
  bool atom_pinning = false;
  unsigned workers = 1;
  bool check_invariants = false;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct SolveReport {
  CdfGrid grid;
  SegmentPlan plan;
  double stability_margin = 1.0;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

// Full pipeline: stability gate, segmentation, per-segment reductions and
// solves, same-sign chaining through initial conditions, convolution.
SolveReport solve_kernel(const Expression& g, const ControlDensity& n, double T, const PiecewiseConfig& cfg);
CdfGrid compose_piecewise(const Expression& g, const ControlDensity& n, double T, const PiecewiseConfig& cfg);

}  // namespace poisint
