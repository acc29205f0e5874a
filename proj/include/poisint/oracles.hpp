#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "poisint/model.hpp"

namespace poisint {

// CDF of a sum of k independent U(0,1) variables.
double irwin_hall_component(int k, double x);

// Exact CDF of the integral of s against a unit-rate Poisson measure on
// [0,1], truncated to `terms` arrival counts.
double irwin_hall_cdf(double x, int terms = 11);
CdfGrid irwin_hall_grid(const Mesh& mesh, int terms = 11);

// Inverse-CDF table for arrival times on [a, b] with density n / int_a^b n.
class ArrivalLaw {
 public:
  ArrivalLaw(const ControlDensity& n, double a, double b, std::size_t cells = 8192);
  double normalizer() const { return normalizer_; }
  // Arrival time for a uniform u in [0, 1).
  double sample(double u) const;
  const std::vector<double>& cumulative() const { return cumulative_; }

 private:
  double a_;
  double b_;
  double normalizer_;
  std::vector<double> cumulative_;  // unnormalized, cumulative_[0] = 0
};

// SplitMix64 stream; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();
  double uniform();  // [0, 1)

 private:
  std::uint64_t state_;
};

// Stream for replicate `index` under `seed`; independent of any partition.
SplitMix64 replicate_stream(std::uint64_t seed, std::uint64_t index);

// `count` draws of the integral of g over [0, T], sorted ascending.
std::vector<double> mc_sample(const Expression& g, const ControlDensity& n, double T, std::size_t count,
                              std::uint64_t seed, unsigned workers = 1);

struct CfSpec {
  Expression g;
  Expression n;
  double T = 1.0;
  double T_I = 100.0;  // truncation of the outer integral
  double eta = 0.01;   // outer trapezoid step
  double tol = 1e-8;   // inner adaptive Simpson tolerance
  std::size_t node_budget = 2'000'000;  // inner evaluations per frequency
};

// int_0^T (exp(i theta g(s)) - 1) n(s) ds.
std::complex<double> cf_exponent(const CfSpec& spec, double theta);

// Characteristic-function inversion for a non-negative kernel. Valid for x > 0.
double cf_inversion_cdf(const CfSpec& spec, double x);
// Same, sharing the characteristic-function table across all points.
std::vector<double> cf_inversion_cdf(const CfSpec& spec, std::span<const double> xs);

// Kolmogorov-Smirnov distance between sorted samples and F, evaluated on both
// sides of every distinct sample value.
double ecdf_distance(std::span<const double> sorted_samples, const CdfGrid& F);

}  // namespace poisint
