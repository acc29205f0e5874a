#include "poisint/solver.hpp"

#include <algorithm>
#include <barrier>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <thread>

#include "poisint/errors.hpp"

namespace poisint {

double stability_check(double h, double n_star) { return 1.0 - h * n_star; }

StepStencil make_stencil(std::size_t i, double g_value, double n_value, double delta) {
  StepStencil st;
  st.i = i;
  st.n = n_value;
  const double r = g_value / delta;
  const double nearest = std::round(r);
  if (std::fabs(r - nearest) < 1e-9) {
    st.k = static_cast<long>(nearest) + 1;
    st.lambda = 1.0;
  } else {
    st.k = static_cast<long>(std::floor(r)) + 1;
    st.lambda = std::fabs(delta * static_cast<double>(st.k) - g_value) / delta;
  }
  return st;
}

void step_range(std::span<const double> F, std::span<double> out, const StepStencil& st, double h, std::size_t begin,
                std::size_t end) {
  const double a = h * st.n;
  const double keep = 1.0 - a;
  const double w_lo = a * (1.0 - st.lambda);
  const double w_hi = a * st.lambda;
  const long k = st.k;
  for (std::size_t j = begin; j < end; ++j) {
    const long lo = static_cast<long>(j) - k;
    const double f_lo = lo >= 0 ? F[static_cast<std::size_t>(lo)] : 0.0;
    const double f_hi = lo + 1 >= 0 ? F[static_cast<std::size_t>(lo + 1)] : 0.0;
    out[j] = keep * F[j] + w_lo * f_lo + w_hi * f_hi;
  }
}

std::vector<double> step(std::span<const double> F, const StepStencil& st, double h) {
  std::vector<double> out(F.size());
  step_range(F, out, st, h, 0, F.size());
  return out;
}

unsigned default_workers() {
  if (const char* env = std::getenv("POISINT_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
  }
  return 1;
}

namespace {

void check_level(std::span<const double> F, const StepStencil& st, double h) {
  constexpr double tol = 1e-12;
  const double a = h * st.n;
  const double col = std::fabs(1.0 - a) + a * st.lambda + a * (1.0 - st.lambda);
  if (std::fabs(col - 1.0) > tol) {
    throw InvariantViolation("column sum " + std::to_string(col) + " at step " + std::to_string(st.i));
  }
  for (std::size_t j = 0; j < F.size(); ++j) {
    if (!(F[j] >= -tol && F[j] <= 1.0 + tol)) {
      throw InvariantViolation("value out of [0,1] at node " + std::to_string(j) + " after step " +
                               std::to_string(st.i));
    }
    if (j > 0 && F[j] < F[j - 1] - tol) {
      throw InvariantViolation("monotonicity lost at node " + std::to_string(j) + " after step " +
                               std::to_string(st.i));
    }
  }
}

}  // namespace

SegmentResult solve_segment(const Expression& g, const ControlDensity& n, const InitialCondition& init,
                            const SolveConfig& cfg) {
  const Mesh& mesh = cfg.mesh;
  const double h = cfg.time.h;
  const std::size_t N = cfg.time.N;
  const double t_end = cfg.t0 + cfg.time.T;
  if (std::fabs(mesh.x_min()) > 1e-12 * mesh.delta()) throw InvalidArgument("solve_segment needs a mesh starting at 0");

  const double n_star = sup_control(n, cfg.t0, t_end);
  const double margin = stability_check(h, n_star);
  if (margin <= 0.0) throw StabilityViolation(margin);

  // Coefficients at the left endpoint of every time step.
  std::vector<StepStencil> stencils(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double t = cfg.t0 + static_cast<double>(i) * h;
    double gv = g(t);
    if (gv < 0.0) {
      if (gv < -1e-9) {
        std::ostringstream msg;
        msg << "solve_segment needs g >= 0, got g(" << t << ") = " << gv;
        throw InvalidArgument(msg.str());
      }
      gv = 0.0;
    }
    stencils[i] = make_stencil(i, gv, n(t), mesh.delta());
  }

  const std::size_t M = mesh.size();
  std::vector<double> buf_a(M, 1.0);
  std::vector<double> buf_b(M, 0.0);
  std::vector<Atom> init_atoms{{0.0, 1.0}};
  if (!init.is_point_mass()) {
    const CdfGrid& F0 = *init.grid;
    if (std::fabs(F0.mesh.delta() - mesh.delta()) > 1e-12 * mesh.delta()) {
      throw MeshMismatch("initial condition mesh has a different delta");
    }
    if (cdf_at(F0, -0.5 * mesh.delta()) > 1e-12) throw InvalidArgument("initial condition has mass below 0");
    buf_a = resample_range(F0, 0.0, mesh.x_max()).values;
    init_atoms = F0.atoms;
  }
  const double pin_base = buf_a[0];

  SegmentResult result{CdfGrid{mesh, {}, {}}, margin, {}, {}};
  if (cfg.record_trajectory) result.trajectory.push_back(buf_a);

  double* cur = buf_a.data();
  double* next = buf_b.data();
  std::size_t i = 0;
  const std::size_t report_every = std::max<std::size_t>(1, N / 100);

  auto finish_step = [&]() {
    std::swap(cur, next);
    if (cfg.atom_pinning) {
      cur[0] = pin_base * std::exp(-integrate_control(n, cfg.t0, std::min(cfg.t0 + static_cast<double>(i + 1) * h, t_end)));
    }
    if (cfg.check_invariants) check_level({cur, M}, stencils[i], h);
    if (cfg.record_trajectory) result.trajectory.emplace_back(cur, cur + M);
    ++i;
    if (cfg.progress && (i % report_every == 0 || i == N)) cfg.progress(i, N);
  };

  const unsigned workers = std::clamp<unsigned>(cfg.workers, 1, static_cast<unsigned>(std::max<std::size_t>(1, M / 256)));
  if (workers == 1) {
    while (i < N) {
      step_range({cur, M}, {next, M}, stencils[i], h, 0, M);
      finish_step();
    }
  } else {
    std::exception_ptr error;
    auto on_complete = [&]() noexcept {
      try {
        finish_step();
      } catch (...) {
        error = std::current_exception();
        i = N;
      }
    };
    std::barrier sync(static_cast<std::ptrdiff_t>(workers), on_complete);
    auto run = [&](unsigned w) {
      const std::size_t begin = M * w / workers;
      const std::size_t end = M * (w + 1) / workers;
      while (i < N) {
        step_range({cur, M}, {next, M}, stencils[i], h, begin, end);
        sync.arrive_and_wait();
      }
    };
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run, w);
      run(0);
    }
    if (error) std::rethrow_exception(error);
  }

  result.grid.values.assign(cur, cur + M);
  const double survive = std::exp(-integrate_control(n, cfg.t0, t_end));
  for (const Atom& a : init_atoms) {
    const double mass = a.mass * survive;
    if (mass > 1e-15) result.grid.atoms.push_back({a.location, mass});
  }
  if (result.grid.mass_captured() < kMassLeakThreshold) {
    std::ostringstream msg;
    msg << "MassLeakWarning: F(x_max) = " << result.grid.mass_captured() << " < " << kMassLeakThreshold
        << "; increase x_max";
    result.warnings.push_back(msg.str());
  }
  return result;
}

}  // namespace poisint
