#include "poisint/transforms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "poisint/errors.hpp"

namespace poisint {

std::string to_string(Reduction r) {
  switch (r) {
    case Reduction::Direct:
      return "Direct";
    case Reduction::TimeReversal:
      return "TimeReversal";
    case Reduction::Reflection:
      return "Reflection";
    case Reduction::ReflectionAndTimeReversal:
      return "ReflectionAndTimeReversal";
    case Reduction::ExactPoisson:
      return "ExactPoisson";
  }
  return "?";
}

Reduction reduction_for(SegmentClass cls) {
  switch (cls) {
    case SegmentClass::IncreasingPositive:
      return Reduction::Direct;
    case SegmentClass::DecreasingPositive:
      return Reduction::TimeReversal;
    case SegmentClass::DecreasingNegative:
      return Reduction::Reflection;
    case SegmentClass::IncreasingNegative:
      return Reduction::ReflectionAndTimeReversal;
    case SegmentClass::Flat:
      return Reduction::ExactPoisson;
  }
  return Reduction::Direct;
}

SegmentPlan plan_segments(const std::vector<KernelSegment>& segments) {
  SegmentPlan plan;
  plan.reserve(segments.size());
  for (const auto& s : segments) plan.push_back({s, reduction_for(s.cls)});
  return plan;
}

namespace {

Expression mirror_variable(double a, double b) {
  return Expression::binary(Expression::Kind::Sub, Expression::number(a + b), Expression::variable());
}

}  // namespace

Reversed reverse_time(const Expression& g, const ControlDensity& n, double a, double b) {
  const auto r = mirror_variable(a, b);
  return {g.substitute(r), ControlDensity(n.expression().substitute(r), a, b)};
}

int poisson_k_max(double Lambda) {
  if (!(Lambda >= 0.0) || !std::isfinite(Lambda)) throw InvalidArgument("Poisson mean must be finite and >= 0");
  if (Lambda == 0.0) return 0;
  for (int k = 0;; ++k) {
    const double next = std::exp((k + 1) * std::log(Lambda) - Lambda - std::lgamma(k + 2.0));
    if (k + 2 > Lambda && next / (1.0 - Lambda / (k + 2)) < 1e-12) return k;
    if (k > 100000) throw NumericalError("Poisson mean too large for an exact flat segment");
  }
}

CdfGrid flat_segment_cdf(double level, double Lambda, const Mesh& mesh, int k_max) {
  if (level == 0.0 || !std::isfinite(level)) throw InvalidArgument("flat segment level must be non-zero");
  if (!(Lambda >= 0.0)) throw InvalidArgument("flat segment needs Lambda >= 0");
  if (k_max < 0) throw InvalidArgument("k_max must be >= 0");
  std::vector<Atom> atoms;
  const double half = 0.5 * mesh.delta();
  for (int k = 0; k <= k_max; ++k) {
    const double mass = Lambda == 0.0 ? (k == 0 ? 1.0 : 0.0)
                                      : std::exp(k * std::log(Lambda) - Lambda - std::lgamma(k + 1.0));
    if (!(mass > 0.0)) continue;
    const double x = k * level;
    if (x < mesh.x_min() - half || x > mesh.x_max() + half) {
      std::ostringstream msg;
      msg << "flat segment atom at " << x << " lies outside the mesh [" << mesh.x_min() << ", " << mesh.x_max()
          << "]";
      throw MeshTooShort(msg.str());
    }
    atoms.push_back({x, mass});
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  CdfGrid grid{mesh, std::vector<double>(mesh.size(), 0.0), atoms};
  const double snap = 1e-6 * mesh.delta();
  std::size_t next = 0;
  double acc = 0.0;
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    while (next < atoms.size() && atoms[next].location <= mesh.node(j) + snap) acc += atoms[next++].mass;
    grid.values[j] = std::min(acc, 1.0);
  }
  return grid;
}

CdfGrid reflect(const CdfGrid& F_neg) {
  const Mesh& src = F_neg.mesh;
  const std::size_t M = src.size();
  std::vector<double> atom_at(M, 0.0);
  const double snap = 1e-6 * src.delta();
  for (const Atom& a : F_neg.atoms) {
    if (auto j = src.index_of(a.location, snap)) atom_at[*j] += a.mass;
  }
  CdfGrid out{Mesh(src.delta(), -src.x_max(), -src.x_min()), std::vector<double>(M), {}};
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t s = M - 1 - i;
    out.values[i] = std::clamp(1.0 - (F_neg.values[s] - atom_at[s]), 0.0, 1.0);
  }
  for (const Atom& a : F_neg.atoms) out.atoms.push_back({a.location == 0.0 ? 0.0 : -a.location, a.mass});
  std::sort(out.atoms.begin(), out.atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  return out;
}

CdfGrid convolve(const CdfGrid& A, const CdfGrid& B) {
  const double delta = A.mesh.delta();
  if (std::fabs(delta - B.mesh.delta()) > 1e-12 * delta) throw MeshMismatch("convolve: meshes use different delta");
  if (!A.mesh.lattice_offset(B.mesh.x_min())) throw MeshMismatch("convolve: meshes are not on a common lattice");
  const std::size_t MA = A.mesh.size();
  const std::size_t MB = B.mesh.size();
  const Mesh mesh = Mesh::with_count(delta, A.mesh.x_min() + B.mesh.x_min(), MA + MB - 1);

  // Right-endpoint Stieltjes weights of B: continuous increments plus atoms
  // snapped to their nodes.
  const auto Bc = continuous_part(B);
  std::vector<double> w(MB);
  for (std::size_t j = 0; j < MB; ++j) w[j] = Bc[j] - (j > 0 ? Bc[j - 1] : 0.0);
  for (const Atom& a : B.atoms) {
    const double r = std::round((a.location - B.mesh.x_min()) / delta);
    const auto j = static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(MB - 1)));
    w[j] += a.mass;
  }
  std::vector<double> W(MB + 1, 0.0);
  for (std::size_t j = 0; j < MB; ++j) W[j + 1] = W[j] + w[j];

  CdfGrid out{mesh, std::vector<double>(mesh.size()), {}};
  const double A_last = A.values.back();
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    double sum = 0.0;
    // j with i - j >= MA read the last value of A.
    if (i >= MA) sum += A_last * W[std::min(i - MA, MB - 1) + 1];
    const std::size_t j_lo = i + 1 > MA ? i + 1 - MA : 0;
    const std::size_t j_hi = std::min(i, MB - 1);
    const double* a = A.values.data();
    for (std::size_t j = j_lo; j <= j_hi; ++j) sum += a[i - j] * w[j];
    out.values[i] = std::clamp(sum, 0.0, 1.0);
  }

  std::vector<Atom> atoms;
  for (const Atom& a : A.atoms) {
    for (const Atom& b : B.atoms) {
      const double m = a.mass * b.mass;
      if (m > 1e-15) atoms.push_back({a.location + b.location, m});
    }
  }
  out.atoms = normalize_atoms(std::move(atoms), 1e-6 * delta, 1e-15);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double round_up(double x, double delta) { return std::max(delta, std::ceil(x / delta - 1e-9) * delta); }

// mean + 10 sd of the part of the integral with the given sign.
double signed_span(const Expression& g, const ControlDensity& n, double T, bool positive) {
  using E = Expression;
  const auto part = positive ? E::call(E::Func::Max, {g, E::number(0.0)})
                             : E::call(E::Func::Max, {E::negate(g), E::number(0.0)});
  const auto n_expr = n.expression();
  const double mean = ControlDensity(E::binary(E::Kind::Mul, part, n_expr), T).total();
  const double var =
      ControlDensity(E::binary(E::Kind::Mul, E::binary(E::Kind::Mul, part, part), n_expr), T).total();
  double peak = 0.0;
  for (int i = 0; i <= 1024; ++i) peak = std::max(peak, part(T * i / 1024.0));
  return std::max(mean + 10.0 * std::sqrt(var), peak);
}

std::size_t steps_for(double length, double h) {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(length / h - 1e-9)));
}

}  // namespace

SolveReport solve_kernel(const Expression& g, const ControlDensity& n, double T, const PiecewiseConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("T must be positive");
  if (!(cfg.delta > 0.0)) throw InvalidArgument("delta must be positive");
  if (!(cfg.h > 0.0)) throw InvalidArgument("h must be positive");
  if (!(cfg.x_max > 0.0)) throw InvalidArgument("x_max must be positive");
  if (n.lo() > 0.0 || n.hi() < T) throw InvalidArgument("control density must cover [0, T]");

  SolveReport report;
  report.stability_margin = stability_check(cfg.h, n.n_star());
  if (report.stability_margin <= 0.0) throw StabilityViolation(report.stability_margin);

  const double delta = cfg.delta;
  (void)Mesh(delta, 0.0, cfg.x_max);  // validates that x_max is a multiple of delta
  report.plan = plan_segments(segment_kernel(g, T, cfg.breakpoints, cfg.probe_count));

  double scale = 1.0;
  for (const auto& p : report.plan) scale = std::max(scale, std::fabs(p.segment.level));
  auto is_zero_flat = [&](const PlannedSegment& p) {
    return p.reduction == Reduction::ExactPoisson && std::fabs(p.segment.level) <= 1e-12 * scale;
  };
  bool has_pos = false;
  bool has_neg = false;
  std::size_t total_steps = 0;
  for (const auto& p : report.plan) {
    if (is_zero_flat(p)) continue;
    const bool neg = p.reduction == Reduction::ExactPoisson
                         ? p.segment.level < 0.0
                         : (p.reduction == Reduction::Reflection || p.reduction == Reduction::ReflectionAndTimeReversal);
    (neg ? has_neg : has_pos) = true;
    if (p.reduction != Reduction::ExactPoisson) total_steps += steps_for(p.segment.t_end - p.segment.t_start, cfg.h);
  }
  const bool mixed = has_pos && has_neg;
  const double pos_span = mixed ? std::max(cfg.x_max, round_up(signed_span(g, n, T, true), delta)) : cfg.x_max;
  const double neg_span = mixed ? std::max(cfg.x_max, round_up(signed_span(g, n, T, false), delta)) : cfg.x_max;

  std::optional<CdfGrid> result;  // empty: point mass at 0
  std::optional<CdfGrid> chain;   // CDF of |partial sum| for the current same-sign run
  bool chain_negative = false;
  std::size_t done_steps = 0;

  auto absorb = [&](CdfGrid part) {
    result = result ? convolve(*result, part) : std::move(part);
  };
  auto close_chain = [&]() {
    if (!chain) return;
    absorb(chain_negative ? reflect(*chain) : std::move(*chain));
    chain.reset();
  };

  for (const auto& p : report.plan) {
    if (is_zero_flat(p)) continue;
    const double a = p.segment.t_start;
    const double b = p.segment.t_end;
    if (p.reduction == Reduction::ExactPoisson) {
      const double level = p.segment.level;
      const double Lambda = integrate_control(n, a, b);
      const int k_max = poisson_k_max(Lambda);
      const double span = round_up(k_max * std::fabs(level), delta);
      const Mesh mesh = level > 0.0 ? Mesh(delta, 0.0, span) : Mesh(delta, -span, 0.0);
      absorb(flat_segment_cdf(level, Lambda, mesh, k_max));
      continue;
    }

    const bool negative = p.reduction == Reduction::Reflection || p.reduction == Reduction::ReflectionAndTimeReversal;
    if (chain && chain_negative != negative) close_chain();

    Expression g_seg = g;
    std::optional<ControlDensity> n_seg;
    switch (p.reduction) {
      case Reduction::Direct:
        break;
      case Reduction::TimeReversal: {
        auto r = reverse_time(g, n, a, b);
        g_seg = r.g;
        n_seg.emplace(std::move(r.n));
        break;
      }
      case Reduction::Reflection:
        g_seg = Expression::negate(g);
        break;
      case Reduction::ReflectionAndTimeReversal: {
        auto r = reverse_time(g, n, a, b);
        g_seg = Expression::negate(r.g);
        n_seg.emplace(std::move(r.n));
        break;
      }
      case Reduction::ExactPoisson:
        break;
    }

    const std::size_t steps = steps_for(b - a, cfg.h);
    const double span = negative ? neg_span : pos_span;
    SolveConfig sc{.mesh = Mesh(delta, 0.0, span), .time = TimeGrid((b - a) / static_cast<double>(steps), b - a)};
    sc.t0 = a;
    sc.atom_pinning = cfg.atom_pinning;
    sc.workers = cfg.workers;
    sc.check_invariants = cfg.check_invariants;
    if (cfg.progress) {
      sc.progress = [&, base = done_steps](std::size_t i, std::size_t) { cfg.progress(base + i, total_steps); };
    }
    const auto init = chain ? InitialCondition::from_grid(std::move(*chain)) : InitialCondition::point_mass_at_zero();
    auto seg = solve_segment(g_seg, n_seg ? *n_seg : n, init, sc);
    done_steps += steps;
    chain = std::move(seg.grid);
    chain_negative = negative;
  }
  close_chain();

  const double x_lo = cfg.x_min.value_or(has_neg ? -cfg.x_max : 0.0);
  if (!result) result = point_mass_grid(Mesh(delta, std::min(x_lo, 0.0), std::max(cfg.x_max, 0.0)), 0.0);
  report.grid = resample_range(*result, x_lo, cfg.x_max);
  if (report.grid.mass_captured() < kMassLeakThreshold) {
    std::ostringstream msg;
    msg << "MassLeakWarning: F(x_max) = " << report.grid.mass_captured() << " < " << kMassLeakThreshold
        << "; increase x_max";
    report.warnings.push_back(msg.str());
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

CdfGrid compose_piecewise(const Expression& g, const ControlDensity& n, double T, const PiecewiseConfig& cfg) {
  return solve_kernel(g, n, T, cfg).grid;
}

}  // namespace poisint
