#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisint/io.hpp"
#include "poisint/model.hpp"

namespace poisint {

// Density of the continuous part on the CDF's mesh, with the atoms kept aside.
struct DensityGrid {
  Mesh mesh;
  std::vector<double> values;
  std::vector<Atom> atoms;
  double delta1 = 0.0;        // differencing half-width actually used
  double clamped_mass = 0.0;  // sum of delta * |negative differences| set to 0
};

// Central difference of half-width delta1 (rounded to whole nodes, default
// 10*delta) of the atom-removed CDF; one-sided in the two boundary bands.
// Throws Delta1TooSmall when delta1 < 2*delta.
DensityGrid central_difference_density(const CdfGrid& F, std::optional<double> delta1 = std::nullopt);

// Centered moving average over `window` (odd node count, truncated at the
// edges), renormalized to the input's mass.
DensityGrid smooth_density(const DensityGrid& D, double window);

// Trapezoid integral of the density values.
double density_mass(const DensityGrid& D);

std::string to_csv(const DensityGrid& D);
nlohmann::json to_json(const DensityGrid& D, const std::optional<GridMeta>& meta = std::nullopt);

}  // namespace poisint
