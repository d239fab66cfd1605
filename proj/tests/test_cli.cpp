#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "sphgal/cli.hpp"
#include "sphgal/geometry.hpp"
#include "sphgal/harness.hpp"
#include "sphgal/quadrature.hpp"

using namespace sphgal;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  const fs::path dir = fs::temp_directory_path() / "sphgal_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("points subcommand writes the requested file") {
  const fs::path out = test_dir() / "x961.txt";
  CHECK(cli_run({"points", "--family", "fibonacci", "--n", "961", "--out", out.string()}) ==
        0);
  const PointSet X = PointSet::load(out);
  CHECK(X.size() == 961);

  const fs::path ico = test_dir() / "ico.txt";
  CHECK(cli_run({"points", "--family", "icosahedral", "--level", "2", "--out",
                 ico.string()}) == 0);
  CHECK(PointSet::load(ico).size() == 162);
}

TEST_CASE("weights subcommand computes a rule file") {
  const fs::path pts = test_dir() / "y500.txt";
  REQUIRE(cli_run({"points", "--family", "fibonacci", "--n", "500", "--out", pts.string()}) ==
          0);
  const fs::path rule_file = test_dir() / "rule500.txt";
  CHECK(cli_run({"weights", "--points", pts.string(), "--m", "2", "--out",
                 rule_file.string()}) == 0);
  const QuadratureRule rule = QuadratureRule::load(rule_file);
  CHECK(rule.kernel_order == 2);
  CHECK(rule.apply(Eigen::VectorXd::Ones(500)) ==
        doctest::Approx(4.0 * std::numbers::pi).epsilon(1e-10));
}

TEST_CASE("usage errors exit with code 2, runtime failures with 1") {
  CHECK(cli_run({"frobnicate"}) == 2);
  CHECK(cli_run({}) == 2);
  CHECK(cli_run({"points", "--no-such-flag", "1", "--out", "x.txt"}) == 2);
  CHECK(cli_run({"weights", "--points", "/nonexistent/file.txt", "--out",
                 (test_dir() / "r.txt").string()}) == 1);
  CHECK(cli_run({"solve", "--x-source", "fibonacci"}) == 1);
}

TEST_CASE("solve emits a record matching the sweep for the same configuration") {
  const fs::path dir = test_dir() / "solve_out";
  fs::remove_all(dir);
  CHECK(cli_run({"solve", "--problem", "1", "--x-source", "fibonacci", "--x-n", "100",
                 "--y-source", "fibonacci", "--y-n", "600", "--m", "3", "--M", "2",
                 "--n-eval", "2000", "--out", dir.string()}) == 0);
  REQUIRE(fs::exists(dir / "solve.csv"));
  REQUIRE(fs::exists(dir / "solve.json"));

  std::ifstream csv(dir / "solve.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == "sweep,size,h,error,kappa2,wall_ms");
  const auto cells = split_csv_row(row);
  REQUIRE(cells.size() == 6);
  CHECK(cells[0] == "solve");
  CHECK(cells[1] == "600");

  // Cross-check against the sweep path on the same configuration.
  ExperimentConfig c;
  c.problem = 1;
  c.m = 3;
  c.M = 2;
  c.x_source = "fibonacci";
  c.x_sizes = {100};
  c.y_source = "fibonacci";
  c.y_sizes = {400, 600, 900};
  c.n_eval = 2000;
  RuleCache cache;
  const ConvergenceRecord rec = sweep_quadrature(c, cache);
  CHECK(std::stod(cells[3]) == doctest::Approx(rec.steps[1].error).epsilon(1e-12));
  CHECK(std::stod(cells[4]) == doctest::Approx(rec.steps[1].kappa2).epsilon(1e-4));
}

TEST_CASE("config file drives sweeps and flags override it") {
  const fs::path dir = test_dir() / "cfg_out";
  fs::remove_all(dir);
  const fs::path cfg = test_dir() / "config.json";
  {
    ExperimentConfig c;
    c.m = 2;
    c.x_sizes = {100, 200, 400};
    c.n_eval = 2000;
    c.output_dir = dir.string();
    std::ofstream out(cfg);
    out << c.to_json().dump(2);
  }
  CHECK(cli_run({"sweep-interp", "--config", cfg.string()}) == 0);
  REQUIRE(fs::exists(dir / "sweep_interp.json"));
  {
    std::ifstream in(dir / "sweep_interp.json");
    nlohmann::json j;
    in >> j;
    const auto rec = ConvergenceRecord::from_json(j);
    CHECK(rec.config.m == 2);
    REQUIRE(rec.steps.size() == 3);
    CHECK(rec.steps[2].size == 400);
  }

  // Flag overrides the config file value.
  CHECK(cli_run({"sweep-interp", "--config", cfg.string(), "--x-sizes", "100,200,300"}) ==
        0);
  {
    std::ifstream in(dir / "sweep_interp.json");
    nlohmann::json j;
    in >> j;
    CHECK(ConvergenceRecord::from_json(j).steps[2].size == 300);
  }
}

TEST_CASE("seed changes nothing numeric; threads are recorded") {
  const fs::path dir1 = test_dir() / "seed1";
  const fs::path dir2 = test_dir() / "seed2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  const std::vector<std::string> base = {"sweep-interp", "--x-sizes", "100,150,220",
                                         "--n-eval",     "2000",      "--m", "2"};
  auto with = [&](const std::vector<std::string>& extra, const fs::path& out) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    args.push_back("--out");
    args.push_back(out.string());
    return args;
  };
  CHECK(cli_run(with({"--seed", "7"}, dir1)) == 0);
  CHECK(cli_run(with({"--seed", "99", "--threads", "3"}, dir2)) == 0);

  nlohmann::json j1, j2;
  std::ifstream(dir1 / "sweep_interp.json") >> j1;
  std::ifstream(dir2 / "sweep_interp.json") >> j2;
  const auto r1 = ConvergenceRecord::from_json(j1);
  const auto r2 = ConvergenceRecord::from_json(j2);
  REQUIRE(r1.steps.size() == r2.steps.size());
  for (std::size_t i = 0; i < r1.steps.size(); ++i)
    CHECK(r1.steps[i].error == r2.steps[i].error);
  CHECK(r2.config.threads == 3);
  CHECK(r2.config.seed == 99);
}

TEST_CASE("solve reuses a basis cache file across runs") {
  const fs::path dir = test_dir() / "bcache";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cache = dir / "basis.txt";
  const std::vector<std::string> run = {
      "solve",   "--problem", "1",    "--x-source", "fibonacci", "--x-n",
      "100",     "--y-source", "fibonacci", "--y-n", "500",      "--m",
      "3",       "--M",       "2",    "--n-eval",   "2000",      "--basis-cache",
      cache.string(), "--out", (dir / "r1").string()};
  CHECK(cli_run(run) == 0);
  CHECK(fs::exists(cache));

  std::vector<std::string> run2 = run;
  run2.back() = (dir / "r2").string();
  CHECK(cli_run(run2) == 0);

  std::ifstream c1(dir / "r1" / "solve.csv"), c2(dir / "r2" / "solve.csv");
  std::string h1, h2, row1, row2;
  std::getline(c1, h1);
  std::getline(c1, row1);
  std::getline(c2, h2);
  std::getline(c2, row2);
  const auto a = split_csv_row(row1), b = split_csv_row(row2);
  CHECK(a[3] == b[3]);  // error identical through the cached basis
  CHECK(a[4] == b[4]);

  // Mismatched kernel order is refused.
  std::vector<std::string> bad = run2;
  bad[11] = "--m";
  bad[12] = "2";
  CHECK(cli_run(bad) == 1);
}

TEST_CASE("SPHG_THREADS is the fallback for --threads") {
  const fs::path dir = test_dir() / "env_out";
  fs::remove_all(dir);
  setenv("SPHG_THREADS", "5", 1);
  CHECK(cli_run({"sweep-interp", "--x-sizes", "100,150,220", "--n-eval", "2000", "--m", "2",
                 "--out", dir.string()}) == 0);
  unsetenv("SPHG_THREADS");
  nlohmann::json j;
  std::ifstream(dir / "sweep_interp.json") >> j;
  CHECK(ConvergenceRecord::from_json(j).config.threads == 5);
}
