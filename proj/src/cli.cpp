#include "poisint/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "poisint/density.hpp"
#include "poisint/diagnostics.hpp"
#include "poisint/errors.hpp"
#include "poisint/oracles.hpp"
#include "poisint/service.hpp"
#include "poisint/solver.hpp"

namespace poisint {

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = {{"g", cfg.g},         {"n", cfg.n},         {"delta", cfg.delta},
                      {"h", cfg.h},         {"T", cfg.T},         {"x_max", cfg.x_max},
                      {"breakpoints", cfg.breakpoints},           {"atom_pinning", cfg.atom_pinning}};
  if (cfg.x_min) j["x_min"] = *cfg.x_min;
  return j;
}

GridMeta meta_of(const RunConfig& cfg) { return {cfg.g, cfg.n, cfg.T, cfg.delta, cfg.h}; }

PreparedRun prepare(const RunConfig& cfg, unsigned workers) {
  Expression g = Expression::parse(cfg.g);
  Expression n = Expression::parse(cfg.n);
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive and finite");
  };
  positive(cfg.T, "T");
  positive(cfg.delta, "delta");
  positive(cfg.h, "h");
  positive(cfg.x_max, "x_max");

  // Stability first, so an unstable run is reported as such whatever else is wrong.
  ControlDensity density(n, cfg.T);
  double margin = stability_check(cfg.h, sup_control(density, cfg.T));
  if (margin <= 0.0) throw StabilityViolation(margin);

  (void)Mesh(cfg.delta, 0.0, cfg.x_max);
  if (cfg.x_min) {
    if (*cfg.x_min > 0.0) throw InvalidArgument("x_min must be <= 0");
    (void)Mesh(cfg.delta, *cfg.x_min, cfg.x_max);
  }

  PiecewiseConfig pc;
  pc.delta = cfg.delta;
  pc.h = cfg.h;
  pc.x_max = cfg.x_max;
  pc.x_min = cfg.x_min;
  pc.breakpoints = cfg.breakpoints;
  pc.atom_pinning = cfg.atom_pinning;
  pc.workers = std::max(1u, workers);
  return {std::move(g), std::move(density), cfg.T, std::move(pc), margin};
}

SolveReport execute(const RunConfig& cfg, unsigned workers, std::function<void(std::size_t, std::size_t)> progress) {
  PreparedRun run = prepare(cfg, workers);
  run.config.progress = std::move(progress);
  return solve_kernel(run.g, run.n, run.T, run.config);
}

namespace {

struct Options {
  RunConfig cfg;
  double x_min = 0.0;
  std::string out;
  std::string format = "csv";
  bool strict = false;
  unsigned workers = 1;
  // density
  double delta1 = 0.0;
  double smooth_window = 0.0;
  // oracle
  std::string against = "series";
  std::vector<double> points;
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 1;
  double T_I = 100.0;
  double eta = 0.01;
  // converge
  std::vector<double> deltas;
  double h_ratio = 1.0;
  std::string reference = "series";
  double ref_factor = 4.0;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned jobs = 2;
  std::string cors_origin = "*";
};

void add_problem(CLI::App* sub, Options& o, bool with_resolution) {
  sub->add_option("--g", o.cfg.g, "kernel g(s)")->required();
  sub->add_option("--n", o.cfg.n, "density of the control measure n(s)")->required();
  sub->add_option("--T", o.cfg.T, "time horizon")->required();
  if (with_resolution) {
    sub->add_option("--delta", o.cfg.delta, "step size in the spatial mesh")->required();
    sub->add_option("--h", o.cfg.h, "step size in time")->required();
  }
  sub->add_option("--xmax", o.cfg.x_max, "upper end of the spatial mesh")->required();
  sub->add_option("--xmin", o.x_min, "lower end of the output mesh (default 0, or -xmax for signed kernels)");
  sub->add_option("--breakpoints", o.cfg.breakpoints, "monotonicity breakpoints of g, comma separated")
      ->delimiter(',');
  sub->add_flag("--pinning", o.cfg.atom_pinning, "pin the node at 0 to the exact no-arrival mass");
  sub->add_option("--workers", o.workers, "threads for the step loop (default $POISINT_WORKERS or 1)");
}

void add_output(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out, "output file (default stdout)");
  sub->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--strict", o.strict, "treat a mass leak past x_max as fatal");
}

void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(o.out, std::ios::binary);
  if (!file) throw InvalidArgument("cannot open output file '" + o.out + "'");
  file << text;
  if (!file) throw InvalidArgument("failed writing '" + o.out + "'");
}

// Prints warnings; true when they must abort the command.
bool report_warnings(const Options& o, const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return o.strict && !warnings.empty();
}

SolveReport solve_for(Options& o, const CLI::App* sub) {
  if (sub->count("--xmin") > 0) o.cfg.x_min = o.x_min;
  return execute(o.cfg, o.workers);
}

int cmd_solve(Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  SolveReport report = solve_for(o, sub);
  if (report_warnings(o, report.warnings, err)) return 2;
  emit(o, o.format == "json" ? to_json(report.grid, meta_of(o.cfg)).dump() + "\n" : to_csv(report.grid), out);
  return 0;
}

int cmd_density(Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  SolveReport report = solve_for(o, sub);
  if (report_warnings(o, report.warnings, err)) return 2;
  std::optional<double> delta1;
  if (sub->count("--delta1") > 0) delta1 = o.delta1;
  DensityGrid d = central_difference_density(report.grid, delta1);
  if (sub->count("--smooth-window") > 0) d = smooth_density(d, o.smooth_window);
  if (d.clamped_mass > 0.0) err << "note: clamped negative density mass " << d.clamped_mass << "\n";
  emit(o, o.format == "json" ? to_json(d, meta_of(o.cfg)).dump() + "\n" : to_csv(d), out);
  return 0;
}

bool is_irwin_hall(const RunConfig& cfg) {
  if (cfg.T != 1.0) return false;
  Expression g = Expression::parse(cfg.g);
  Expression n = Expression::parse(cfg.n);
  for (int i = 0; i <= 64; ++i) {
    double s = i / 64.0;
    if (std::fabs(g(s) - s) > 1e-14 || std::fabs(n(s) - 1.0) > 1e-14) return false;
  }
  return true;
}

double rel_err(double abs_err, double ref) {
  if (abs_err == 0.0) return 0.0;
  return ref == 0.0 ? INFINITY : abs_err / std::fabs(ref);
}

int cmd_oracle(Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  if (o.against == "series" && !is_irwin_hall(o.cfg))
    throw InvalidArgument("the series oracle needs g = s, n = 1, T = 1");
  SolveReport report = solve_for(o, sub);
  report_warnings(o, report.warnings, err);
  const CdfGrid& F = report.grid;

  std::vector<double> xs = o.points;
  if (xs.empty()) {
    if (o.against == "cf") {
      for (double x = 0.25; x <= F.mesh.x_max() + 1e-12; x += 0.25) xs.push_back(x);
    } else {
      for (std::size_t j = 0; j < F.mesh.size(); ++j) xs.push_back(F.mesh.node(j));
    }
  }

  std::vector<double> ref(xs.size());
  std::vector<std::string> summary;
  if (o.against == "series") {
    for (std::size_t i = 0; i < xs.size(); ++i) ref[i] = irwin_hall_cdf(xs[i]);
  } else if (o.against == "mc") {
    Expression g = Expression::parse(o.cfg.g);
    ControlDensity n(Expression::parse(o.cfg.n), o.cfg.T);
    std::vector<double> samples = mc_sample(g, n, o.cfg.T, o.samples, o.seed, o.workers);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto upto = std::upper_bound(samples.begin(), samples.end(), xs[i]) - samples.begin();
      ref[i] = static_cast<double>(upto) / static_cast<double>(samples.size());
    }
    summary.push_back("# ks_distance," + format_double(ecdf_distance(samples, F)));
    double dkw = std::sqrt(std::log(2.0 / 0.01) / (2.0 * static_cast<double>(samples.size())));
    summary.push_back("# dkw99," + format_double(dkw));
  } else {
    CfSpec spec{Expression::parse(o.cfg.g), Expression::parse(o.cfg.n), o.cfg.T, o.T_I, o.eta};
    ref = cf_inversion_cdf(spec, xs);
  }

  std::ostringstream table;
  table << "x,F_fd,F_oracle,abs_err,rel_err\n";
  double max_abs = 0.0, max_rel = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double fd = cdf_at(F, xs[i]);
    double a = std::fabs(fd - ref[i]);
    double r = rel_err(a, ref[i]);
    max_abs = std::max(max_abs, a);
    max_rel = std::max(max_rel, r);
    table << format_double(xs[i]) << ',' << format_double(fd) << ',' << format_double(ref[i]) << ','
          << format_double(a) << ',' << format_double(r) << '\n';
  }
  table << "# max_abs_err," << format_double(max_abs) << '\n';
  table << "# max_rel_err," << format_double(max_rel) << '\n';
  for (const auto& line : summary) table << line << '\n';
  emit(o, table.str(), out);
  return 0;
}

int cmd_converge(Options& o, const CLI::App* sub, std::ostream& out, std::ostream& err) {
  if (o.deltas.size() < 2) throw InvalidArgument("--deltas needs at least two values");
  if (!(o.h_ratio > 0.0)) throw InvalidArgument("--h-ratio must be positive");
  if (o.reference == "series" && !is_irwin_hall(o.cfg))
    throw InvalidArgument("the series oracle needs g = s, n = 1, T = 1");
  if (sub->count("--xmin") > 0) o.cfg.x_min = o.x_min;

  auto solve_at = [&o, &err](double delta, double h) {
    RunConfig c = o.cfg;
    c.delta = delta;
    c.h = h;
    SolveReport r = execute(c, 1);
    for (const auto& w : r.warnings) err << "warning (delta=" << delta << "): " << w << "\n";
    return r.grid;
  };

  ConvergenceProblem problem;
  problem.solve = solve_at;
  if (o.reference == "series") {
    problem.oracle = [](const Mesh& mesh) { return irwin_hall_grid(mesh); };
  } else {
    if (!(o.ref_factor >= 2.0)) throw InvalidArgument("--ref-factor must be >= 2");
    double finest = *std::min_element(o.deltas.begin(), o.deltas.end()) / o.ref_factor;
    auto fine = std::make_shared<CdfGrid>(solve_at(finest, finest * o.h_ratio));
    problem.oracle = [fine](const Mesh& mesh) { return coarsen(*fine, mesh); };
  }

  std::vector<std::pair<double, double>> ladder;
  for (double d : o.deltas) ladder.emplace_back(d, d * o.h_ratio);
  ConvergenceTable table = convergence_study(problem, ladder, std::max(1u, o.workers));

  std::ostringstream csv;
  csv << "delta,h,l1_error,seconds\n";
  for (const auto& row : table.rows)
    csv << format_double(row.delta) << ',' << format_double(row.h) << ',' << format_double(row.l1_error) << ','
        << format_double(row.seconds) << '\n';
  csv << "# order," << (table.order ? format_double(*table.order) : std::string("nan")) << '\n';
  emit(o, csv.str(), out);
  if (table.order) err << "fitted order " << *table.order << "\n";
  return 0;
}

int cmd_serve(Options& o, std::ostream& err) {
  ServiceOptions so;
  so.cors_origin = o.cors_origin;
  so.job_workers = std::max(1u, o.jobs);
  so.solve_workers = std::max(1u, o.workers);
  Service service(so);
  err << "serving on http://" << o.host << ':' << o.port << "\n";
  err.flush();
  if (!service.listen(o.host, o.port)) {
    err << "error: cannot bind " << o.host << ':' << o.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  o.workers = default_workers();

  CLI::App app{"Distribution of Poisson stochastic integrals by finite differences", "poisint"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_help_flag("--help", "print this help and exit");  // -h would collide with the time step flag

  CLI::App* solve = app.add_subcommand("solve", "solve for the CDF and write it as CSV or JSON");
  add_problem(solve, o, true);
  add_output(solve, o);

  CLI::App* density = app.add_subcommand("density", "solve, then differentiate the CDF");
  add_problem(density, o, true);
  add_output(density, o);
  density->add_option("--delta1", o.delta1, "difference half-width (default 10*delta)");
  density->add_option("--smooth-window", o.smooth_window, "moving-average window");

  CLI::App* oracle = app.add_subcommand("oracle", "compare the solver with an independent oracle");
  add_problem(oracle, o, true);
  oracle->add_option("--out", o.out, "output file (default stdout)");
  oracle->add_option("--against", o.against, "series, mc or cf")->check(CLI::IsMember({"series", "mc", "cf"}));
  oracle->add_option("--points", o.points, "evaluation points, comma separated")->delimiter(',');
  oracle->add_option("--samples", o.samples, "Monte Carlo sample count");
  oracle->add_option("--seed", o.seed, "Monte Carlo seed");
  oracle->add_option("--TI", o.T_I, "truncation of the inversion integral");
  oracle->add_option("--eta", o.eta, "trapezoid step of the inversion integral");

  CLI::App* converge = app.add_subcommand("converge", "L1 error over a resolution ladder");
  add_problem(converge, o, false);
  converge->add_option("--out", o.out, "output file (default stdout)");
  converge->add_option("--deltas", o.deltas, "mesh sizes, comma separated")->required()->delimiter(',');
  converge->add_option("--h-ratio", o.h_ratio, "h = ratio * delta");
  converge->add_option("--oracle", o.reference, "series or reference")
      ->check(CLI::IsMember({"series", "reference"}));
  converge->add_option("--ref-factor", o.ref_factor, "reference solve uses finest delta / factor");

  CLI::App* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--port", o.port, "TCP port");
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--jobs", o.jobs, "jobs solved concurrently");
  serve->add_option("--workers", o.workers, "threads inside each solve");
  serve->add_option("--cors-origin", o.cors_origin, "Access-Control-Allow-Origin value");

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.push_back("poisint");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*solve) return cmd_solve(o, solve, out, err);
    if (*density) return cmd_density(o, density, out, err);
    if (*oracle) return cmd_oracle(o, oracle, out, err);
    if (*converge) return cmd_converge(o, converge, out, err);
    if (*serve) return cmd_serve(o, err);
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace poisint
