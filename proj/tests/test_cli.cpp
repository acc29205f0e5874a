#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "poisint/cli.hpp"
#include "poisint/io.hpp"

using namespace poisint;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> example1(const std::string& delta, const std::string& xmax = "3") {
  return {"--g", "s", "--n", "1", "--T", "1", "--delta", delta, "--h", delta, "--xmax", xmax};
}

std::vector<std::string> with(std::string cmd, std::vector<std::string> rest, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{std::move(cmd)};
  a.insert(a.end(), rest.begin(), rest.end());
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

// Value of a "# key,value" summary line.
double summary(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line, prefix = "# " + key + ",";
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return std::stod(line.substr(prefix.size()));
  FAIL("missing summary line " << key);
  return NAN;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("poisint_cli_" + name);
}

}  // namespace

TEST_CASE("solve writes a CSV whose row at 0 is the no-arrival mass") {
  auto path = temp_file("ex1.csv");
  auto r = cli(with("solve", example1("5e-4"), {"--out", path.string()}));
  REQUIRE(r.code == 0);
  std::ifstream in(path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  CdfGrid F = cdf_from_csv(text.str());
  CHECK(F.mesh.node(0) == 0.0);
  CHECK(std::fabs(F.values[0] - 0.367879) < 1e-3);
  REQUIRE(F.atoms.size() == 1);
  CHECK(std::fabs(F.atoms[0].mass - std::exp(-1.0)) < 1e-3);
  std::filesystem::remove(path);
}

TEST_CASE("solve CSV round-trips to the in-process grid bit for bit") {
  auto r = cli(with("solve", example1("0.01")));
  REQUIRE(r.code == 0);
  RunConfig cfg;
  cfg.delta = cfg.h = 0.01;
  cfg.x_max = 3.0;
  SolveReport direct = execute(cfg);
  CdfGrid parsed = cdf_from_csv(r.out);
  REQUIRE(parsed.values.size() == direct.grid.values.size());
  for (std::size_t j = 0; j < parsed.values.size(); ++j) CHECK(parsed.values[j] == direct.grid.values[j]);
  CHECK(r.out == to_csv(direct.grid));
}

TEST_CASE("solve emits JSON with metadata") {
  auto r = cli(with("solve", example1("0.01"), {"--format", "json"}));
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["meta"]["g"] == "s");
  CHECK(j["mesh"]["delta"].get<double>() == 0.01);
  CHECK(j["values"].size() == 301);
  CdfGrid F = cdf_from_json(j);
  CHECK(F.atoms.size() == 1);
}

TEST_CASE("stability violation exits 2 before solving") {
  auto r = cli({"solve", "--g", "s", "--n", "1", "--T", "1", "--delta", "0.01", "--h", "2", "--xmax", "3"});
  CHECK(r.code == 2);
  CHECK(r.err.find("stability violation") != std::string::npos);
  CHECK(r.out.empty());
  auto also_bad_mesh = cli({"solve", "--g", "s", "--n", "1", "--T", "1", "--delta", "0.3", "--h", "2", "--xmax", "1"});
  CHECK(also_bad_mesh.code == 2);
}

TEST_CASE("bad expression exits 1 with the offset") {
  auto r = cli({"solve", "--g", "s^", "--n", "1", "--T", "1", "--delta", "0.01", "--h", "0.01", "--xmax", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.find("offset 2") != std::string::npos);
}

TEST_CASE("usage errors exit 1 and print the flags") {
  auto r = cli({"solve", "--g", "s"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--delta") != std::string::npos);
  auto none = cli({});
  CHECK(none.code == 1);
  auto unknown = cli({"frobnicate"});
  CHECK(unknown.code == 1);
}

TEST_CASE("help exits 0") {
  auto r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("solve") != std::string::npos);
  CHECK(r.out.find("converge") != std::string::npos);
}

TEST_CASE("mesh not divisible by delta is a user error") {
  auto r = cli({"solve", "--g", "s", "--n", "1", "--T", "1", "--delta", "0.3", "--h", "0.01", "--xmax", "1"});
  CHECK(r.code == 1);
}

TEST_CASE("mass leak warns, and is fatal only with --strict") {
  auto loose = cli(with("solve", example1("0.01", "1")));
  CHECK(loose.code == 0);
  CHECK(loose.err.find("warning") != std::string::npos);
  auto strict = cli(with("solve", example1("0.01", "1"), {"--strict"}));
  CHECK(strict.code == 2);
  CHECK(strict.out.empty());
}

TEST_CASE("negative kernel gets a mirrored default range, --xmin overrides it") {
  auto r = cli({"solve", "--g", "-s", "--n", "1", "--T", "1", "--delta", "0.01", "--h", "0.01", "--xmax", "3"});
  REQUIRE(r.code == 0);
  CdfGrid F = cdf_from_csv(r.out);
  CHECK(F.mesh.x_min() == doctest::Approx(-3.0));
  auto narrow = cli({"solve", "--g", "-s", "--n", "1", "--T", "1", "--delta", "0.01", "--h", "0.01", "--xmax", "3",
                     "--xmin", "-2"});
  REQUIRE(narrow.code == 0);
  CHECK(cdf_from_csv(narrow.out).mesh.x_min() == doctest::Approx(-2.0));
}

TEST_CASE("density writes an x,f table") {
  auto r = cli(with("density", example1("0.01"), {"--smooth-window", "0.05"}));
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("x,f\n", 0) == 0);
  auto tiny = cli(with("density", example1("0.01"), {"--delta1", "0.01"}));
  CHECK(tiny.code == 1);
}

TEST_CASE("oracle against the series meets the accuracy target") {
  auto r = cli(with("oracle", example1("5e-4"), {"--against", "series"}));
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("x,F_fd,F_oracle,abs_err,rel_err\n", 0) == 0);
  CHECK(summary(r.out, "max_rel_err") < 1e-3);
}

TEST_CASE("series oracle refuses other problems") {
  auto r = cli({"oracle", "--g", "s^2", "--n", "1", "--T", "1", "--delta", "0.01", "--h", "0.01", "--xmax", "3"});
  CHECK(r.code == 1);
}

TEST_CASE("oracle against Monte Carlo reports the KS distance") {
  auto r = cli(with("oracle", example1("0.005"), {"--against", "mc", "--samples", "20000", "--seed", "7"}));
  REQUIRE(r.code == 0);
  double ks = summary(r.out, "ks_distance");
  double dkw = summary(r.out, "dkw99");
  CHECK(ks < dkw + 0.01);
}

TEST_CASE("oracle against inversion at chosen points") {
  auto r = cli(with("oracle", example1("1e-3"), {"--against", "cf", "--points", "0.5,1.5"}));
  REQUIRE(r.code == 0);
  CHECK(summary(r.out, "max_abs_err") < 5e-3);
}

TEST_CASE("converge fits an order close to one") {
  auto r = cli({"converge", "--g", "s", "--n", "1", "--T", "1", "--xmax", "3", "--deltas", "0.04,0.02,0.01"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("delta,h,l1_error,seconds\n", 0) == 0);
  CHECK(summary(r.out, "order") >= 0.8);
  auto ref = cli({"converge", "--g", "s^2", "--n", "1", "--T", "1", "--xmax", "2", "--deltas", "0.04,0.02",
                  "--oracle", "reference"});
  REQUIRE(ref.code == 0);
  CHECK(summary(ref.out, "order") > 0.5);
}
