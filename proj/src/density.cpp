#include "poisint/density.hpp"

#include <cmath>

#include "poisint/errors.hpp"

namespace poisint {

DensityGrid central_difference_density(const CdfGrid& F, std::optional<double> delta1) {
  const double delta = F.mesh.delta();
  const double d1 = delta1.value_or(10.0 * delta);
  if (!(d1 >= 2.0 * delta * (1.0 - 1e-9))) {
    throw Delta1TooSmall("delta1 = " + std::to_string(d1) + " must be at least 2*delta = " + std::to_string(2 * delta));
  }
  const auto q = static_cast<std::size_t>(std::llround(d1 / delta));
  const auto C = continuous_part(F);
  const std::size_t M = C.size();
  DensityGrid D{F.mesh, std::vector<double>(M, 0.0), F.atoms, static_cast<double>(q) * delta, 0.0};
  if (M < 2) return D;
  const std::size_t qq = std::min(q, M - 1);
  for (std::size_t j = 0; j < M; ++j) {
    double f = 0.0;
    if (j >= qq && j + qq < M) {
      f = (C[j + qq] - C[j - qq]) / (2.0 * static_cast<double>(qq) * delta);
    } else if (j < qq) {
      const std::size_t hi = std::min(j + qq, M - 1);
      f = (C[hi] - C[j]) / (static_cast<double>(hi - j) * delta);
    } else {
      f = (C[j] - C[j - qq]) / (static_cast<double>(qq) * delta);
    }
    if (f < 0.0) {
      D.clamped_mass += -f * delta;
      f = 0.0;
    }
    D.values[j] = f;
  }
  return D;
}

double density_mass(const DensityGrid& D) {
  if (D.values.size() < 2) return 0.0;
  double sum = 0.0;
  for (double v : D.values) sum += v;
  sum -= 0.5 * (D.values.front() + D.values.back());
  return sum * D.mesh.delta();
}

DensityGrid smooth_density(const DensityGrid& D, double window) {
  const double delta = D.mesh.delta();
  if (!(window >= delta * (1.0 - 1e-9))) throw InvalidArgument("smoothing window must be at least delta");
  const auto r = static_cast<std::size_t>(std::max(0.0, std::round((window / delta - 1.0) / 2.0)));
  DensityGrid out = D;
  if (r == 0 || D.values.empty()) return out;
  const std::size_t M = D.values.size();
  std::vector<double> prefix(M + 1, 0.0);
  for (std::size_t j = 0; j < M; ++j) prefix[j + 1] = prefix[j] + D.values[j];
  for (std::size_t j = 0; j < M; ++j) {
    const std::size_t lo = j >= r ? j - r : 0;
    const std::size_t hi = std::min(M - 1, j + r);
    out.values[j] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  const double before = density_mass(D);
  const double after = density_mass(out);
  if (after > 0.0 && before > 0.0) {
    for (double& v : out.values) v *= before / after;
  }
  return out;
}

std::string to_csv(const DensityGrid& D) { return write_grid_csv(D.mesh, D.values, D.atoms, "f"); }

nlohmann::json to_json(const DensityGrid& D, const std::optional<GridMeta>& meta) {
  auto j = grid_json(D.mesh, D.values, D.atoms, meta);
  j["delta1"] = D.delta1;
  j["clamped_mass"] = D.clamped_mass;
  return j;
}

}  // namespace poisint
