#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisint/io.hpp"
#include "poisint/transforms.hpp"

namespace poisint {

// Problem inputs shared by the command line and the HTTP service.
struct RunConfig {
  std::string g = "s";
  std::string n = "1";
  double delta = 1e-3;
  double h = 1e-3;
  double T = 1.0;
  double x_max = 3.0;
  std::optional<double> x_min;
  std::vector<double> breakpoints;
  bool atom_pinning = false;
};

nlohmann::json to_json(const RunConfig& cfg);
GridMeta meta_of(const RunConfig& cfg);

// Parsed and checked inputs, ready for solve_kernel. Construction throws the
// UserError subclasses for bad expressions or meshes, and StabilityViolation
// when h * n* >= 1.
struct PreparedRun {
  Expression g;
  ControlDensity n;
  double T;
  PiecewiseConfig config;
  double stability_margin;
};

PreparedRun prepare(const RunConfig& cfg, unsigned workers = 1);

SolveReport execute(const RunConfig& cfg, unsigned workers = 1,
                    std::function<void(std::size_t, std::size_t)> progress = {});

// Entry point behind the executable. Exit codes: 0 success, 1 user or usage
// error, 2 numerical failure (including mass leak under --strict).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poisint
