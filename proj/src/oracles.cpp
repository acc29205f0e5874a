#include "poisint/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "poisint/errors.hpp"

namespace poisint {

double irwin_hall_component(int k, double x) {
  if (k < 0) throw InvalidArgument("irwin_hall_component: negative k");
  if (k == 0) return x >= 0.0 ? 1.0 : 0.0;
  if (x <= 0.0) return 0.0;
  if (x >= k) return 1.0;
  double sum = 0.0;
  double binom = 1.0;
  double fact = 1.0;
  for (int i = 2; i <= k; ++i) fact *= i;
  const int top = static_cast<int>(std::floor(x));
  for (int m = 0; m <= top && m <= k; ++m) {
    sum += ((m % 2) ? -1.0 : 1.0) * binom * std::pow(x - m, k);
    binom = binom * (k - m) / (m + 1);
  }
  return std::clamp(sum / fact, 0.0, 1.0);
}

double irwin_hall_cdf(double x, int terms) {
  if (terms < 1) throw InvalidArgument("irwin_hall_cdf: terms must be >= 1");
  if (x < 0.0) return 0.0;
  double sum = 0.0;
  double weight = std::exp(-1.0);  // e^-1 / k!
  for (int k = 0; k < terms; ++k) {
    sum += irwin_hall_component(k, x) * weight;
    weight /= (k + 1);
  }
  return sum;
}

CdfGrid irwin_hall_grid(const Mesh& mesh, int terms) {
  CdfGrid grid{mesh, std::vector<double>(mesh.size()), {}};
  for (std::size_t j = 0; j < mesh.size(); ++j) grid.values[j] = irwin_hall_cdf(mesh.node(j), terms);
  if (mesh.x_min() <= 0.0 && mesh.x_max() >= 0.0) grid.atoms.push_back({0.0, std::exp(-1.0)});
  return grid;
}

// ---------------------------------------------------------------------------

ArrivalLaw::ArrivalLaw(const ControlDensity& n, double a, double b, std::size_t cells)
    : a_(a), b_(b), normalizer_(integrate_control(n, a, b)), cumulative_(cells + 1, 0.0) {
  if (cells < 1 || !(b > a)) throw InvalidArgument("ArrivalLaw needs a < b and at least one cell");
  const double w = (b - a) / static_cast<double>(cells);
  double left = n(a);
  for (std::size_t c = 0; c < cells; ++c) {
    const double x0 = a + w * static_cast<double>(c);
    const double right = n(c + 1 == cells ? b : x0 + w);
    cumulative_[c + 1] = cumulative_[c] + w / 6.0 * (left + 4.0 * n(x0 + 0.5 * w) + right);
    left = right;
  }
}

double ArrivalLaw::sample(double u) const {
  const double total = cumulative_.back();
  if (!(total > 0.0)) return a_;
  const double target = u * total;
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) return b_;
  const auto c = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  const double lo = cumulative_[c];
  const double hi = cumulative_[c + 1];
  const double frac = hi > lo ? (target - lo) / (hi - lo) : 0.0;
  const double w = (b_ - a_) / static_cast<double>(cumulative_.size() - 1);
  return std::min(b_, a_ + w * (static_cast<double>(c) + frac));
}

SplitMix64::result_type SplitMix64::operator()() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

SplitMix64 replicate_stream(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 mix(seed);
  const std::uint64_t base = mix();
  SplitMix64 keyed(base ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  return SplitMix64(keyed());
}

std::vector<double> mc_sample(const Expression& g, const ControlDensity& n, double T, std::size_t count,
                              std::uint64_t seed, unsigned workers) {
  if (count < 1) throw InvalidArgument("mc_sample: count must be >= 1");
  if (!(T > 0.0)) throw InvalidArgument("mc_sample: T must be positive");
  const ArrivalLaw law(n, 0.0, T);
  const double mean = law.normalizer();
  std::vector<double> out(count, 0.0);
  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      if (!(mean > 0.0)) continue;
      auto rng = replicate_stream(seed, r);
      std::poisson_distribution<long> arrivals(mean);
      const long N = arrivals(rng);
      double sum = 0.0;
      for (long a = 0; a < N; ++a) sum += g(law.sample(rng.uniform()));
      out[r] = sum;
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::min<std::size_t>(count, 256))));
  if (workers == 1) {
    fill(0, count);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          fill(count * w / workers, count * (w + 1) / workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using cplx = std::complex<double>;

struct InnerIntegrator {
  const CfSpec& spec;
  double theta;
  std::size_t evaluations = 0;

  cplx f(double s) {
    if (++evaluations > spec.node_budget) {
      throw QuadratureFailure("inner characteristic-function integral exceeded its node budget at theta = " +
                              std::to_string(theta));
    }
    const double ns = spec.n(s);
    if (!std::isfinite(ns) || ns < 0.0) throw NonFiniteDensity("control density is negative or non-finite");
    const double phase = theta * spec.g(s);
    return cplx(std::cos(phase) - 1.0, std::sin(phase)) * ns;
  }

  cplx adapt(double a, double b, cplx fa, cplx fm, cplx fb, cplx whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const cplx flm = f(0.5 * (a + m));
    const cplx frm = f(0.5 * (m + b));
    const cplx left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const cplx right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const cplx diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return adapt(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + adapt(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }
};

double kernel_range(const CfSpec& spec) {
  double lo = spec.g(0.0);
  double hi = lo;
  for (int i = 1; i <= 256; ++i) {
    const double v = spec.g(spec.T * i / 256.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < -1e-12) throw InvalidArgument("characteristic-function inversion needs a non-negative kernel");
  return hi - lo;
}

std::complex<double> exponent_with_range(const CfSpec& spec, double theta, double range) {
  InnerIntegrator inner{spec, theta};
  const auto panels = static_cast<std::size_t>(std::ceil(1.0 + std::fabs(theta) * range));
  const double w = spec.T / static_cast<double>(panels);
  const double panel_tol = spec.tol / static_cast<double>(panels);
  cplx total = 0.0;
  cplx fa = inner.f(0.0);
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = w * static_cast<double>(p);
    const double b = p + 1 == panels ? spec.T : a + w;
    const cplx fm = inner.f(0.5 * (a + b));
    const cplx fb = inner.f(b);
    const cplx whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += inner.adapt(a, b, fa, fm, fb, whole, panel_tol, 40);
    fa = fb;
  }
  return total;
}

}  // namespace

std::complex<double> cf_exponent(const CfSpec& spec, double theta) {
  return exponent_with_range(spec, theta, kernel_range(spec));
}

std::vector<double> cf_inversion_cdf(const CfSpec& spec, std::span<const double> xs) {
  if (!(spec.eta > 0.0) || !(spec.T_I > 0.0) || !(spec.T > 0.0)) throw InvalidArgument("invalid CfSpec");
  const double ratio = spec.T_I / spec.eta;
  const auto K = static_cast<std::size_t>(std::llround(ratio));
  if (K < 1 || std::fabs(ratio - static_cast<double>(K)) > 1e-9 * ratio) {
    throw InvalidArgument("CfSpec: T_I / eta must be a positive integer");
  }
  for (double x : xs) {
    if (!(x > 0.0)) throw InvalidArgument("cf_inversion_cdf needs x > 0");
  }
  const double range = kernel_range(spec);
  const double no_arrival = std::exp(-ControlDensity(spec.n, spec.T).total());
  const double phi_bar_0 = 1.0 - no_arrival;

  std::vector<double> sums(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) sums[i] = 0.5 * phi_bar_0 * xs[i];
  for (std::size_t j = 1; j <= K; ++j) {
    const double u = j == K ? spec.T_I : spec.eta * static_cast<double>(j);
    const double re = (std::exp(exponent_with_range(spec, u, range)) - no_arrival).real();
    const double weight = j == K ? 0.5 : 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) sums[i] += weight * re * std::sin(xs[i] * u) / u;
  }
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = no_arrival + 2.0 / std::numbers::pi * spec.eta * sums[i];
  return out;
}

double cf_inversion_cdf(const CfSpec& spec, double x) {
  const double xs[] = {x};
  return cf_inversion_cdf(spec, xs)[0];
}

// ---------------------------------------------------------------------------

namespace {

// Fast F(x) and F(x-) for repeated queries.
class Lookup {
 public:
  explicit Lookup(const CdfGrid& F) : F_(F), cont_(continuous_part(F)), atoms_(F.atoms) {
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
    prefix_.push_back(0.0);
    for (const Atom& a : atoms_) prefix_.push_back(prefix_.back() + a.mass);
    snap_ = 1e-6 * F.mesh.delta();
  }

  double at(double x, bool left) const {
    const Mesh& m = F_.mesh;
    if (x < m.x_min() - snap_) return 0.0;
    if (x > m.x_max() + snap_) return F_.values.back();
    const double r = std::clamp((x - m.x_min()) / m.delta(), 0.0, static_cast<double>(m.size() - 1));
    const auto j0 = std::min(static_cast<std::size_t>(r), m.size() - 1);
    const double w = r - static_cast<double>(j0);
    const double c = j0 + 1 < m.size() ? (1.0 - w) * cont_[j0] + w * cont_[j0 + 1] : cont_[j0];
    std::size_t count = 0;
    if (left) {
      count = static_cast<std::size_t>(
          std::lower_bound(atoms_.begin(), atoms_.end(), x - snap_, [](const Atom& a, double v) { return a.location < v; }) -
          atoms_.begin());
    } else {
      count = static_cast<std::size_t>(
          std::upper_bound(atoms_.begin(), atoms_.end(), x + snap_, [](double v, const Atom& a) { return v < a.location; }) -
          atoms_.begin());
    }
    return c + prefix_[count];
  }

 private:
  const CdfGrid& F_;
  std::vector<double> cont_;
  std::vector<Atom> atoms_;
  std::vector<double> prefix_;
  double snap_;
};

}  // namespace

double ecdf_distance(std::span<const double> sorted_samples, const CdfGrid& F) {
  if (sorted_samples.empty()) throw InvalidArgument("ecdf_distance: no samples");
  if (F.values.empty()) throw InvalidArgument("ecdf_distance: empty grid");
  const Lookup lookup(F);
  const double m = static_cast<double>(sorted_samples.size());
  double worst = 0.0;
  std::size_t i = 0;
  while (i < sorted_samples.size()) {
    const double v = sorted_samples[i];
    std::size_t j = i;
    while (j < sorted_samples.size() && sorted_samples[j] == v) ++j;
    const double below = static_cast<double>(i) / m;
    const double upto = static_cast<double>(j) / m;
    worst = std::max(worst, std::fabs(lookup.at(v, false) - upto));
    worst = std::max(worst, std::fabs(lookup.at(v, true) - below));
    i = j;
  }
  return worst;
}

}  // namespace poisint
