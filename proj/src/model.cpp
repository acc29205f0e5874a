#include "poisint/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "poisint/errors.hpp"

namespace poisint {

namespace {

// An atom sits "at" a node when it is within this fraction of delta.
constexpr double kAtomSnap = 1e-6;
constexpr double kNodeSnap = 1e-9;

}  // namespace

Mesh::Mesh(double delta, double x_min, double x_max) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("mesh delta must be positive and finite");
  if (!std::isfinite(x_min) || !std::isfinite(x_max)) throw InvalidArgument("mesh bounds must be finite");
  if (x_max < x_min) throw InvalidArgument("mesh x_max < x_min");
  const double ratio = (x_max - x_min) / delta;
  const double steps = std::round(ratio);
  if (std::fabs((x_max - x_min) - steps * delta) > 1e-9 * delta && std::fabs(ratio - steps) > 1e-9) {
    std::ostringstream msg;
    msg << "mesh span " << (x_max - x_min) << " is not a multiple of delta " << delta;
    throw InvalidArgument(msg.str());
  }
  *this = Mesh(delta, x_min, x_max, static_cast<std::size_t>(steps) + 1);
}

Mesh Mesh::with_count(double delta, double x_min, std::size_t count) {
  if (count == 0) throw InvalidArgument("mesh needs at least one node");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("mesh delta must be positive and finite");
  return Mesh(delta, x_min, x_min + static_cast<double>(count - 1) * delta, count);
}

std::optional<std::size_t> Mesh::index_of(double x, double tol) const {
  const double r = std::round((x - x_min_) / delta_);
  if (r < 0.0 || r >= static_cast<double>(count_)) return std::nullopt;
  const auto j = static_cast<std::size_t>(r);
  if (std::fabs(node(j) - x) > tol) return std::nullopt;
  return j;
}

std::optional<long> Mesh::lattice_offset(double x) const {
  const double r = (x - x_min_) / delta_;
  const double k = std::round(r);
  if (std::fabs(r - k) > 1e-6) return std::nullopt;
  return static_cast<long>(k);
}

bool Mesh::same_as(const Mesh& other) const {
  return count_ == other.count_ && std::fabs(delta_ - other.delta_) <= 1e-12 * delta_ &&
         std::fabs(x_min_ - other.x_min_) <= kNodeSnap * delta_;
}

TimeGrid::TimeGrid(double h_, double T_) : h(h_), T(T_), N(0) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("time step h must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("horizon T must be positive");
  const double ratio = T / h;
  const double steps = std::round(ratio);
  if (steps < 1.0 || std::fabs(ratio - steps) > 1e-9 * std::max(1.0, ratio)) {
    std::ostringstream msg;
    msg << "T/h = " << ratio << " is not a positive integer";
    throw InvalidArgument(msg.str());
  }
  N = static_cast<std::size_t>(steps);
}

double CdfGrid::atom_mass() const {
  return std::accumulate(atoms.begin(), atoms.end(), 0.0, [](double acc, const Atom& a) { return acc + a.mass; });
}

std::vector<std::string> check_invariants(const CdfGrid& grid) {
  std::vector<std::string> issues;
  constexpr double tol = 1e-12;
  auto report = [&](std::string msg) {
    if (issues.size() < 20) issues.push_back(std::move(msg));
  };
  if (grid.values.size() != grid.mesh.size()) {
    report("values has " + std::to_string(grid.values.size()) + " entries for a mesh of " +
           std::to_string(grid.mesh.size()));
    return issues;
  }
  for (std::size_t j = 0; j < grid.values.size(); ++j) {
    const double v = grid.values[j];
    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) {
      report("value " + std::to_string(v) + " outside [0,1] at node " + std::to_string(j));
    }
    if (j > 0 && v < grid.values[j - 1] - tol) {
      report("values decrease at node " + std::to_string(j));
    }
  }
  double total = 0.0;
  const double half = 0.5 * grid.mesh.delta();
  for (const Atom& a : grid.atoms) {
    if (!(a.mass > 0.0)) report("atom at " + std::to_string(a.location) + " has non-positive mass");
    if (a.location < grid.mesh.x_min() - half || a.location > grid.mesh.x_max() + half) {
      report("atom at " + std::to_string(a.location) + " lies outside the mesh");
    }
    total += a.mass;
  }
  if (total > 1.0 + tol) report("atom masses sum to " + std::to_string(total));
  return issues;
}

void validate(const CdfGrid& grid) {
  const auto issues = check_invariants(grid);
  if (issues.empty()) return;
  std::string msg = "invalid CDF grid:";
  for (const auto& issue : issues) msg += "\n  " + issue;
  throw InvariantViolation(msg);
}

namespace {

std::vector<Atom> sorted_atoms(const CdfGrid& grid) {
  std::vector<Atom> atoms = grid.atoms;
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  return atoms;
}

// Mass of atoms at or below x (strict = below only), with node snapping.
double atoms_up_to(const std::vector<Atom>& atoms, double x, double snap, bool strict) {
  double sum = 0.0;
  for (const Atom& a : atoms) {
    const bool counted = strict ? a.location < x - snap : a.location <= x + snap;
    if (counted) sum += a.mass;
  }
  return sum;
}

double continuous_at(const CdfGrid& grid, const std::vector<Atom>& atoms, std::size_t j) {
  const double snap = kAtomSnap * grid.mesh.delta();
  return grid.values[j] - atoms_up_to(atoms, grid.mesh.node(j), snap, false);
}

// Linear interpolation of the continuous part at x inside the mesh.
double continuous_interp(const CdfGrid& grid, const std::vector<Atom>& atoms, double x) {
  const Mesh& m = grid.mesh;
  const double r = (x - m.x_min()) / m.delta();
  auto j0 = static_cast<std::size_t>(std::clamp(std::floor(r), 0.0, static_cast<double>(m.size() - 1)));
  if (j0 + 1 >= m.size()) return continuous_at(grid, atoms, m.size() - 1);
  const double w = std::clamp(r - static_cast<double>(j0), 0.0, 1.0);
  return (1.0 - w) * continuous_at(grid, atoms, j0) + w * continuous_at(grid, atoms, j0 + 1);
}

}  // namespace

std::vector<double> continuous_part(const CdfGrid& grid) {
  const auto atoms = sorted_atoms(grid);
  const double snap = kAtomSnap * grid.mesh.delta();
  std::vector<double> out(grid.values.size());
  std::size_t next = 0;
  double acc = 0.0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double x = grid.mesh.node(j);
    while (next < atoms.size() && atoms[next].location <= x + snap) acc += atoms[next++].mass;
    out[j] = grid.values[j] - acc;
  }
  return out;
}

double cdf_at(const CdfGrid& grid, double x) {
  if (grid.values.empty()) throw InvalidArgument("empty CDF grid");
  const Mesh& m = grid.mesh;
  const double snap = kNodeSnap * m.delta();
  if (x < m.x_min() - snap) return 0.0;
  if (x >= m.x_max() - snap) return grid.values.back();
  if (auto j = m.index_of(x, snap)) return grid.values[*j];
  const auto atoms = sorted_atoms(grid);
  return continuous_interp(grid, atoms, x) + atoms_up_to(atoms, x, kAtomSnap * m.delta(), false);
}

double cdf_left_limit(const CdfGrid& grid, double x) {
  if (grid.values.empty()) throw InvalidArgument("empty CDF grid");
  const Mesh& m = grid.mesh;
  const auto atoms = sorted_atoms(grid);
  const double snap = kAtomSnap * m.delta();
  if (x < m.x_min() - snap) return 0.0;
  if (x > m.x_max() + snap) return grid.values.back();
  return continuous_interp(grid, atoms, x) + atoms_up_to(atoms, x, snap, true);
}

CdfGrid point_mass_grid(const Mesh& mesh, double location) {
  if (location < mesh.x_min() - 0.5 * mesh.delta() || location > mesh.x_max() + 0.5 * mesh.delta()) {
    throw InvalidArgument("point mass outside the mesh");
  }
  CdfGrid grid{mesh, std::vector<double>(mesh.size(), 0.0), {{location, 1.0}}};
  const double snap = kAtomSnap * mesh.delta();
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    if (mesh.node(j) >= location - snap) grid.values[j] = 1.0;
  }
  return grid;
}

CdfGrid resample_range(const CdfGrid& grid, double x_lo, double x_hi) {
  const double delta = grid.mesh.delta();
  const auto offset = grid.mesh.lattice_offset(x_lo);
  if (!offset) throw InvalidArgument("resample range is not aligned with the source mesh");
  Mesh mesh(delta, x_lo, x_hi);
  CdfGrid out{mesh, std::vector<double>(mesh.size()), {}};
  const long n = static_cast<long>(grid.values.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const long src = *offset + static_cast<long>(i);
    out.values[i] = src < 0 ? 0.0 : src >= n ? grid.values.back() : grid.values[static_cast<std::size_t>(src)];
  }
  const double half = 0.5 * delta;
  for (const Atom& a : grid.atoms) {
    if (a.location >= x_lo - half && a.location <= x_hi + half) out.atoms.push_back(a);
  }
  return out;
}

std::vector<Atom> normalize_atoms(std::vector<Atom> atoms, double tol, double min_mass) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  std::vector<Atom> out;
  for (const Atom& a : atoms) {
    if (!out.empty() && std::fabs(a.location - out.back().location) <= tol) {
      Atom& prev = out.back();
      const double mass = prev.mass + a.mass;
      if (mass > 0.0) prev.location = (prev.location * prev.mass + a.location * a.mass) / mass;
      prev.mass = mass;
    } else {
      out.push_back(a);
    }
  }
  std::erase_if(out, [&](const Atom& a) { return !(a.mass > min_mass); });
  return out;
}

std::string to_string(SegmentClass cls) {
  switch (cls) {
    case SegmentClass::IncreasingPositive:
      return "IncreasingPositive";
    case SegmentClass::DecreasingPositive:
      return "DecreasingPositive";
    case SegmentClass::IncreasingNegative:
      return "IncreasingNegative";
    case SegmentClass::DecreasingNegative:
      return "DecreasingNegative";
    case SegmentClass::Flat:
      return "Flat";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Kernel segmentation

namespace {

constexpr double kRefineTol = 1e-10;

struct Run {
  int sign;  // -1, 0, +1: direction of the increments
  std::size_t first;
  std::size_t last;  // interval indices, inclusive
};

// Shrinks [lo, hi] around the switch of `pred`, assuming pred(lo) != pred(hi).
template <class Pred>
double bisect(double lo, double hi, Pred pred) {
  const bool at_lo = pred(lo);
  while (hi - lo > kRefineTol) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid) == at_lo) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Extremum inside [lo, hi] located by the sign of a symmetric difference.
// The sign resolves positions far below the sqrt(eps) limit of comparing
// function values directly.
double locate_extremum(const Expression& g, double lo, double hi, double T, bool maximize) {
  const double eta = 1e-6 * std::max(T, 1.0);
  auto rising = [&](double x) {
    const double d = g(std::min(x + eta, T)) - g(std::max(x - eta, 0.0));
    return maximize ? d > 0.0 : d < 0.0;
  };
  if (rising(lo) == rising(hi)) return 0.5 * (lo + hi);
  return bisect(lo, hi, rising);
}

struct Classified {
  SegmentClass cls;
  double level;
};

Classified classify(const Expression& g, double a, double b, double zero_tol, bool verify) {
  constexpr int kSamples = 257;
  std::vector<double> v(kSamples);
  for (int i = 0; i < kSamples; ++i) v[i] = g(a + (b - a) * i / (kSamples - 1));
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  if (*hi_it - *lo_it < kFlatTolerance) return {SegmentClass::Flat, g(0.5 * (a + b))};

  const bool increasing = v.back() > v.front();
  const double peak = std::fabs(*hi_it) >= std::fabs(*lo_it) ? *hi_it : *lo_it;
  const bool positive = peak > 0.0;
  if (verify) {
    const double mono_tol = 1e-12 * std::max(1.0, std::fabs(peak));
    for (int i = 1; i < kSamples; ++i) {
      const double d = v[i] - v[i - 1];
      if ((increasing && d < -mono_tol) || (!increasing && d > mono_tol)) {
        throw SegmentationFailure("kernel is not monotone on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
      }
    }
    for (double x : v) {
      if ((positive && x < -zero_tol) || (!positive && x > zero_tol)) {
        throw SegmentationFailure("kernel changes sign on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
      }
    }
  }
  if (positive) return {increasing ? SegmentClass::IncreasingPositive : SegmentClass::DecreasingPositive, 0.0};
  return {increasing ? SegmentClass::IncreasingNegative : SegmentClass::DecreasingNegative, 0.0};
}

std::vector<Run> monotone_runs(const std::vector<double>& v, double inc_tol) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double d = v[i + 1] - v[i];
    const int sign = d > inc_tol ? 1 : d < -inc_tol ? -1 : 0;
    if (!runs.empty() && runs.back().sign == sign) {
      runs.back().last = i;
    } else {
      runs.push_back({sign, i, i});
    }
  }
  // A single flat interval is an extremum straddling a probe midpoint (or
  // rounding noise), not a plateau: fold it into its neighbour.
  std::vector<Run> merged;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    Run run = runs[r];
    if (run.sign == 0 && run.first == run.last && runs.size() > 1) {
      if (!merged.empty()) {
        merged.back().last = run.last;
      } else {
        runs[r + 1].first = run.first;
      }
      continue;
    }
    if (!merged.empty() && merged.back().sign == run.sign) {
      merged.back().last = run.last;
    } else {
      merged.push_back(run);
    }
  }
  return merged;
}

}  // namespace

std::vector<KernelSegment> segment_kernel(const Expression& g, double T, std::span<const double> breakpoints,
                                          int probe_count) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("segment_kernel: T must be positive");
  if (probe_count < 64) throw InvalidArgument("segment_kernel: probe_count must be >= 64");

  const auto P = static_cast<std::size_t>(probe_count);
  std::vector<double> xs(P + 1);
  std::vector<double> v(P + 1);
  for (std::size_t i = 0; i <= P; ++i) {
    xs[i] = i == P ? T : T * static_cast<double>(i) / static_cast<double>(P);
    v[i] = g(xs[i]);
  }
  double scale = 1.0;
  for (double x : v) scale = std::max(scale, std::fabs(x));
  const double zero_tol = 1e-12 * scale;

  std::vector<double> edges{0.0};
  if (!breakpoints.empty()) {
    for (double b : breakpoints) {
      if (!(b > edges.back()) || !(b < T)) {
        throw InvalidArgument("breakpoints must be strictly increasing inside (0, T)");
      }
      edges.push_back(b);
    }
    edges.push_back(T);
  } else {
    const double inc_tol = 1e-13 * scale;
    const auto runs = monotone_runs(v, inc_tol);
    std::vector<double> cuts;
    for (std::size_t r = 0; r + 1 < runs.size(); ++r) {
      const Run& a = runs[r];
      const Run& b = runs[r + 1];
      const std::size_t e = a.last;  // boundary sample is xs[e + 1]
      if (a.sign != 0 && b.sign != 0) {
        const double lo = xs[e == 0 ? 0 : e - 1];
        const double hi = xs[std::min(e + 2, P)];
        cuts.push_back(locate_extremum(g, lo, hi, T, a.sign > 0));
      } else if (b.sign == 0) {
        const double level = v[std::min(e + 2, P)];
        cuts.push_back(bisect(xs[e], xs[e + 1], [&](double x) { return std::fabs(g(x) - level) <= inc_tol; }));
      } else {
        const double level = v[e];
        cuts.push_back(bisect(xs[e + 1], xs[std::min(e + 2, P)],
                              [&](double x) { return std::fabs(g(x) - level) <= inc_tol; }));
      }
    }
    // Zero crossings inside each monotone run.
    std::vector<double> run_edges{0.0};
    run_edges.insert(run_edges.end(), cuts.begin(), cuts.end());
    run_edges.push_back(T);
    for (std::size_t r = 0; r + 1 < run_edges.size(); ++r) {
      const double lo = run_edges[r];
      const double hi = run_edges[r + 1];
      double last_x = lo;
      int last_sign = 0;
      auto visit = [&](double x, double value) {
        const int sign = value > zero_tol ? 1 : value < -zero_tol ? -1 : 0;
        if (sign == 0) return;
        if (last_sign != 0 && sign != last_sign) {
          cuts.push_back(bisect(last_x, x, [&](double t) { return g(t) > 0.0; }));
        }
        last_sign = sign;
        last_x = x;
      };
      visit(lo, g(lo));
      for (std::size_t i = 0; i <= P; ++i) {
        if (xs[i] > lo && xs[i] < hi) visit(xs[i], v[i]);
      }
      visit(hi, g(hi));
    }
    std::sort(cuts.begin(), cuts.end());
    for (double c : cuts) {
      if (c <= 1e-9 || c >= T - 1e-9) continue;
      if (c - edges.back() <= 1e-9) continue;
      edges.push_back(c);
    }
    edges.push_back(T);
    if (edges.size() - 2 > P / 4) {
      throw SegmentationFailure("kernel oscillates faster than the probe resolution (" +
                                std::to_string(edges.size() - 2) + " boundaries)");
    }
  }

  std::vector<KernelSegment> segments;
  const bool verify = !breakpoints.empty();
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const auto c = classify(g, edges[i], edges[i + 1], zero_tol, verify);
    segments.push_back({edges[i], edges[i + 1], g, c.cls, c.level});
  }
  return segments;
}

// ---------------------------------------------------------------------------
// Control density

ControlDensity::ControlDensity(Expression n, double lo, double hi) : expr_(std::move(n)), lo_(lo), hi_(hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) throw InvalidArgument("control density interval is invalid");
  n_star_ = sup_control(*this, lo_, hi_);
  total_ = integrate_control(*this, lo_, hi_);
}

double ControlDensity::operator()(double s) const {
  double value = 0.0;
  try {
    value = expr_.evaluate(s);
  } catch (const DomainError& e) {
    throw NonFiniteDensity(std::string("control density: ") + e.what());
  }
  if (!std::isfinite(value) || value < 0.0) {
    throw NonFiniteDensity("control density n(" + std::to_string(s) + ") = " + std::to_string(value) +
                           " is negative or non-finite");
  }
  return value;
}

double integrate_control(const ControlDensity& n, double a, double b) {
  const double slack = 1e-12 * std::max(1.0, n.hi() - n.lo());
  if (b < a || a < n.lo() - slack || b > n.hi() + slack) {
    throw InvalidArgument("integrate_control: need lo <= a <= b <= hi");
  }
  if (a == b) return 0.0;
  if (n.expression().is_constant()) return n(a) * (b - a);

  std::size_t panels = 1024;
  for (;;) {
    const std::size_t intervals = 2 * panels;
    const double w = (b - a) / static_cast<double>(intervals);
    std::vector<double> f(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) f[i] = n(i == intervals ? b : a + w * static_cast<double>(i));
    double fine = f.front() + f.back();
    double coarse = f.front() + f.back();
    for (std::size_t i = 1; i < intervals; ++i) fine += (i % 2 ? 4.0 : 2.0) * f[i];
    for (std::size_t i = 2; i < intervals; i += 2) coarse += ((i / 2) % 2 ? 4.0 : 2.0) * f[i];
    fine *= w / 3.0;
    coarse *= 2.0 * w / 3.0;
    if (std::fabs(fine - coarse) <= 1e-8 * std::fabs(fine) || panels >= (std::size_t{1} << 17)) return fine;
    panels *= 2;
  }
}

double sup_control(const ControlDensity& n, double a, double b) {
  constexpr int kPoints = 4097;
  double best = 0.0;
  for (int i = 0; i < kPoints; ++i) {
    const double s = i == kPoints - 1 ? b : a + (b - a) * i / (kPoints - 1);
    best = std::max(best, n(s));
  }
  return best * (1.0 + 1e-6);
}

}  // namespace poisint
