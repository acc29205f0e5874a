#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "poisint/model.hpp"

namespace poisint {

// Problem description carried alongside a serialized grid.
struct GridMeta {
  std::string g;
  std::string n;
  double T = 0.0;
  double delta = 0.0;
  double h = 0.0;
};

// Grid-shaped table: CDF values (column "F") or density values (column "f").
struct GridTable {
  Mesh mesh;
  std::vector<double> values;
  std::vector<Atom> atoms;
};

// "x,<column>" header, one row per node, then "# atom,<x>,<mass>" lines and a
// "# mesh,<delta>,<x_min>,<x_max>" line. Numbers use 17 significant digits so
// reading the text back is bit-exact.
std::string write_grid_csv(const Mesh& mesh, const std::vector<double>& values, const std::vector<Atom>& atoms,
                           std::string_view column);
GridTable read_grid_csv(std::string_view text);

std::string to_csv(const CdfGrid& grid);
CdfGrid cdf_from_csv(std::string_view text);

nlohmann::json grid_json(const Mesh& mesh, const std::vector<double>& values, const std::vector<Atom>& atoms,
                         const std::optional<GridMeta>& meta);
nlohmann::json to_json(const CdfGrid& grid, const std::optional<GridMeta>& meta = std::nullopt);
CdfGrid cdf_from_json(const nlohmann::json& j);

nlohmann::json mesh_json(const Mesh& mesh);
nlohmann::json atoms_json(const std::vector<Atom>& atoms);

std::string format_double(double v);

}  // namespace poisint
