#include "poisint/io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "poisint/errors.hpp"

namespace poisint {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r' || field.back() == '\t')) field.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw InvalidArgument("CSV line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string write_grid_csv(const Mesh& mesh, const std::vector<double>& values, const std::vector<Atom>& atoms,
                           std::string_view column) {
  std::string out;
  out.reserve(values.size() * 40 + 64);
  out += "x,";
  out += column;
  out += '\n';
  for (std::size_t j = 0; j < values.size(); ++j) {
    out += format_double(mesh.node(j));
    out += ',';
    out += format_double(values[j]);
    out += '\n';
  }
  for (const Atom& a : atoms) {
    out += "# atom," + format_double(a.location) + "," + format_double(a.mass) + "\n";
  }
  out += "# mesh," + format_double(mesh.delta()) + "," + format_double(mesh.x_min()) + "," +
         format_double(mesh.x_max()) + "\n";
  return out;
}

GridTable read_grid_csv(std::string_view text) {
  std::vector<double> xs;
  std::vector<double> values;
  std::vector<Atom> atoms;
  std::optional<Mesh> mesh;
  bool header = false;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      const auto fields = split(line, ',');
      if (fields[0] == "atom" && fields.size() == 3) {
        atoms.push_back({parse_double(fields[1], line_no), parse_double(fields[2], line_no)});
      } else if (fields[0] == "mesh" && fields.size() == 4) {
        mesh = Mesh(parse_double(fields[1], line_no), parse_double(fields[2], line_no),
                    parse_double(fields[3], line_no));
      }
      continue;
    }
    if (!header) {
      if (line.substr(0, 2) != "x,") throw InvalidArgument("CSV header must start with 'x,'");
      header = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 2) throw InvalidArgument("CSV line " + std::to_string(line_no) + ": expected 2 fields");
    xs.push_back(parse_double(fields[0], line_no));
    values.push_back(parse_double(fields[1], line_no));
  }
  if (values.empty()) throw InvalidArgument("CSV has no data rows");
  if (!mesh) {
    if (xs.size() < 2) throw InvalidArgument("CSV without a mesh line needs at least two rows");
    const double delta = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
    mesh = Mesh::with_count(delta, xs.front(), xs.size());
  }
  if (mesh->size() != values.size()) throw InvalidArgument("CSV row count does not match its mesh line");
  return {*mesh, std::move(values), std::move(atoms)};
}

std::string to_csv(const CdfGrid& grid) { return write_grid_csv(grid.mesh, grid.values, grid.atoms, "F"); }

CdfGrid cdf_from_csv(std::string_view text) {
  auto t = read_grid_csv(text);
  return {t.mesh, std::move(t.values), std::move(t.atoms)};
}

nlohmann::json mesh_json(const Mesh& mesh) {
  return {{"delta", mesh.delta()}, {"x_min", mesh.x_min()}, {"x_max", mesh.x_max()}};
}

nlohmann::json atoms_json(const std::vector<Atom>& atoms) {
  auto arr = nlohmann::json::array();
  for (const Atom& a : atoms) arr.push_back({{"x", a.location}, {"mass", a.mass}});
  return arr;
}

nlohmann::json grid_json(const Mesh& mesh, const std::vector<double>& values, const std::vector<Atom>& atoms,
                         const std::optional<GridMeta>& meta) {
  nlohmann::json j;
  j["mesh"] = mesh_json(mesh);
  j["values"] = values;
  j["atoms"] = atoms_json(atoms);
  if (meta) {
    j["meta"] = {{"g", meta->g}, {"n", meta->n}, {"T", meta->T}, {"delta", meta->delta}, {"h", meta->h}};
  }
  return j;
}

nlohmann::json to_json(const CdfGrid& grid, const std::optional<GridMeta>& meta) {
  return grid_json(grid.mesh, grid.values, grid.atoms, meta);
}

CdfGrid cdf_from_json(const nlohmann::json& j) {
  try {
    const auto& m = j.at("mesh");
    Mesh mesh(m.at("delta").get<double>(), m.at("x_min").get<double>(), m.at("x_max").get<double>());
    CdfGrid grid{mesh, j.at("values").get<std::vector<double>>(), {}};
    for (const auto& a : j.at("atoms")) grid.atoms.push_back({a.at("x").get<double>(), a.at("mass").get<double>()});
    if (grid.values.size() != mesh.size()) throw InvalidArgument("JSON values do not match the mesh");
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed grid JSON: ") + e.what());
  }
}

}  // namespace poisint
