#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poisint/expr.hpp"

namespace poisint {

// Uniform spatial mesh x_min + j*delta, j = 0..size()-1.
class Mesh {
 public:
  // (x_max - x_min)/delta must be an integer within 1e-9*delta.
  Mesh(double delta, double x_min, double x_max);
  Mesh() : Mesh(1.0, 0.0, 0.0, 1) {}  // single node at 0
  static Mesh with_count(double delta, double x_min, std::size_t count);

  double delta() const { return delta_; }
  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  std::size_t size() const { return count_; }
  double node(std::size_t j) const { return x_min_ + static_cast<double>(j) * delta_; }

  // Index of the node within `tol` of x, if any.
  std::optional<std::size_t> index_of(double x, double tol) const;
  // Signed lattice offset of `x` relative to x_min, when x lies on the lattice.
  std::optional<long> lattice_offset(double x) const;

  bool same_as(const Mesh& other) const;

 private:
  Mesh(double delta, double x_min, double x_max, std::size_t count)
      : delta_(delta), x_min_(x_min), x_max_(x_max), count_(count) {}
  double delta_;
  double x_min_;
  double x_max_;
  std::size_t count_;
};

struct TimeGrid {
  TimeGrid(double h, double T);
  double h;
  double T;
  std::size_t N;
};

struct Atom {
  double location;
  double mass;
};

// Right-continuous CDF values on a mesh, with the point masses listed
// separately. values[j] already includes every atom located at or below x_j.
struct CdfGrid {
  Mesh mesh;
  std::vector<double> values;
  std::vector<Atom> atoms;

  double mass_captured() const { return values.empty() ? 0.0 : values.back(); }
  double atom_mass() const;
};

// Violations of the CdfGrid invariants, empty when the grid is valid.
std::vector<std::string> check_invariants(const CdfGrid& grid);
// Throws InvariantViolation listing every violation.
void validate(const CdfGrid& grid);

// Values with the atom steps removed (continuous part at each node).
std::vector<double> continuous_part(const CdfGrid& grid);

// F(x): the continuous part is interpolated linearly between nodes and the
// atoms contribute exact steps. Below the mesh F = 0, above it F = F(x_max).
double cdf_at(const CdfGrid& grid, double x);
// F(x-), excluding atoms located at x.
double cdf_left_limit(const CdfGrid& grid, double x);

// Point mass at `location` (must be inside the mesh).
CdfGrid point_mass_grid(const Mesh& mesh, double location = 0.0);

// Restrict or extend the grid to [x_lo, x_hi] on the same lattice. Nodes below
// the source mesh read 0, nodes above read the last value; atoms outside the
// new range are dropped.
CdfGrid resample_range(const CdfGrid& grid, double x_lo, double x_hi);

// Sort atoms, merge those closer than `tol`, drop masses <= `min_mass`.
std::vector<Atom> normalize_atoms(std::vector<Atom> atoms, double tol, double min_mass);

enum class SegmentClass { IncreasingPositive, DecreasingPositive, IncreasingNegative, DecreasingNegative, Flat };

std::string to_string(SegmentClass cls);

struct KernelSegment {
  double t_start;
  double t_end;
  Expression expression;
  SegmentClass cls;
  double level = 0.0;  // meaningful for Flat only
};

inline constexpr double kFlatTolerance = 1e-10;
inline constexpr int kDefaultProbeCount = 2048;

// Split g on [0, T] into monotone, single-signed pieces. Supplied breakpoints
// are used verbatim; otherwise boundaries are detected by sampling and
// refined to 1e-10.
std::vector<KernelSegment> segment_kernel(const Expression& g, double T, std::span<const double> breakpoints = {},
                                          int probe_count = kDefaultProbeCount);

// Control measure density n(s) >= 0 on [lo, hi]; n_star and the total mass
// are computed at construction.
class ControlDensity {
 public:
  ControlDensity(Expression n, double lo, double hi);
  ControlDensity(Expression n, double T) : ControlDensity(std::move(n), 0.0, T) {}

  const Expression& expression() const { return expr_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double operator()(double s) const;  // throws NonFiniteDensity
  double n_star() const { return n_star_; }
  double total() const { return total_; }

 private:
  Expression expr_;
  double lo_;
  double hi_;
  double n_star_ = 0.0;
  double total_ = 0.0;
};

// Composite Simpson on >= 1024 panels, refined until two successive estimates
// agree to 1e-8 relative.
double integrate_control(const ControlDensity& n, double a, double b);

// Max over 4097 grid points of [a, b], inflated by 1 + 1e-6.
double sup_control(const ControlDensity& n, double a, double b);
inline double sup_control(const ControlDensity& n, double T) { return sup_control(n, 0.0, T); }

}  // namespace poisint
