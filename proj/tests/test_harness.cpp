#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "sphgal/errors.hpp"
#include "sphgal/harness.hpp"
#include "support/oracles.hpp"

using namespace sphgal;
namespace fs = std::filesystem;

namespace {

// Strong-form residual -div(a grad u) + b u - f on a cell-centered
// latitude-longitude grid, in spherical coordinates with staggered fluxes.
double pde_residual(const PDEProblem& p, int n_theta, int n_phi) {
  const double dt = std::numbers::pi / n_theta;
  const double dp = 2.0 * std::numbers::pi / n_phi;
  auto at = [&](double theta, double phi) {
    const double s = std::sin(theta);
    return SpherePoint(s * std::cos(phi), s * std::sin(phi), std::cos(theta));
  };
  const auto& u = *p.exact_u;
  // Fourth-order staggered first derivative; walking past a pole lands on
  // the antipodal meridian, which at() reproduces via signed sin(theta).
  auto du_dtheta = [&](double theta, double phi) {
    return (9.0 / 8.0) * (u(at(theta + 0.5 * dt, phi)) - u(at(theta - 0.5 * dt, phi))) / dt -
           (1.0 / 24.0) * (u(at(theta + 1.5 * dt, phi)) - u(at(theta - 1.5 * dt, phi))) / dt;
  };
  auto flux = [&](double theta, double phi) {
    return std::sin(theta) * p.a(at(theta, phi)) * du_dtheta(theta, phi);
  };
  double worst = 0.0;
  for (int j = 0; j < n_theta; ++j) {
    const double theta = (j + 0.5) * dt;
    const double s = std::sin(theta);
    for (int k = 0; k < n_phi; k += 7) {
      const double phi = (k + 0.5) * dp;
      const double u0 = u(at(theta, phi));
      const double lap_theta =
          ((9.0 / 8.0) * (flux(theta + 0.5 * dt, phi) - flux(theta - 0.5 * dt, phi)) / dt -
           (1.0 / 24.0) * (flux(theta + 1.5 * dt, phi) - flux(theta - 1.5 * dt, phi)) / dt) /
          s;
      const double fp = p.a(at(theta, phi + 0.5 * dp)) * (u(at(theta, phi + dp)) - u0) / dp;
      const double fm = p.a(at(theta, phi - 0.5 * dp)) * (u0 - u(at(theta, phi - dp))) / dp;
      const double lap_phi = (fp - fm) / (s * s * dp);
      const double residual =
          -(lap_theta + lap_phi) + p.b(at(theta, phi)) * u0 - p.f(at(theta, phi));
      worst = std::max(worst, std::abs(residual));
    }
  }
  return worst;
}

ExperimentConfig mini_quadrature_config() {
  ExperimentConfig c;
  c.problem = 1;
  c.m = 3;
  c.M = 2;
  c.x_source = "fibonacci";
  c.x_sizes = {100};
  c.y_source = "fibonacci";
  c.y_sizes = {300, 600, 1200};
  c.n_eval = 2000;
  return c;
}

std::string mask_wall_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    out << line.substr(0, last) << ",*\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("builtin problems satisfy their equations") {
  CHECK_THROWS_AS(builtin_problem(0), std::invalid_argument);
  CHECK_THROWS_AS(builtin_problem(3), std::invalid_argument);

  const PDEProblem p1 = builtin_problem(1);
  CHECK((*p1.exact_u)(SpherePoint(0, 0, 1)) == doctest::Approx(std::exp(1.0)));
  CHECK(p1.a(SpherePoint(1, 0, 0)) == 1.0);

  const PDEProblem p2 = builtin_problem(2);
  CHECK(p2.a(SpherePoint(0, 0, 1)) == doctest::Approx(0.5));
  CHECK(p2.a(SpherePoint(0, 0, -1)) == doctest::Approx(1.5));

  // One-time strong-form gate on the 512x1024 probe grid.
  CHECK(pde_residual(p1, 512, 1024) < 1e-4);
  CHECK(pde_residual(p2, 512, 1024) < 1e-4);
}

TEST_CASE("relative l2 error basics") {
  RuleCache cache;
  const QuadratureRule& E = cache.evaluation_rule(2000);
  const PDEProblem p1 = builtin_problem(1);
  const PointSet X = PointSet::fibonacci(100);
  const LagrangeBasis basis = LagrangeBasis::build_global(X, 3);

  CHECK(relative_l2_error(basis, Eigen::VectorXd::Zero(100), p1, E) ==
        doctest::Approx(1.0).epsilon(1e-12));

  // Coefficients sampled from u give the kernel interpolant of u: small
  // but nonzero error.
  Eigen::VectorXd alpha(100);
  for (std::size_t i = 0; i < X.size(); ++i)
    alpha(static_cast<Eigen::Index>(i)) = (*p1.exact_u)(X.point(i));
  const double err = relative_l2_error(basis, alpha, p1, E);
  CHECK(err > 1e-12);
  CHECK(err < 1e-2);

  PDEProblem no_exact = p1;
  no_exact.exact_u.reset();
  CHECK_THROWS_AS(relative_l2_error(basis, alpha, no_exact, E), std::invalid_argument);
}

TEST_CASE("fit_rate") {
  std::vector<std::pair<double, double>> pts;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) pts.emplace_back(h, h * h);
  auto [slope2, res2] = fit_rate(pts);
  CHECK(slope2 == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res2 == doctest::Approx(0.0).epsilon(1e-12));

  pts.clear();
  for (double h : {0.1, 0.05, 0.025}) pts.emplace_back(h, 3.7 * h * h * h * h);
  auto [slope4, res4] = fit_rate(pts);
  CHECK(slope4 == doctest::Approx(4.0).epsilon(1e-12));

  // Slope is invariant under scaling of the errors.
  std::vector<std::pair<double, double>> scaled;
  for (auto [h, e] : pts) scaled.emplace_back(h, 1e6 * e);
  CHECK(fit_rate(scaled).first == doctest::Approx(slope4).epsilon(1e-12));

  CHECK_THROWS_AS(fit_rate({{0.1, 1.0}, {0.05, 0.0}, {0.025, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_rate({{0.1, 1.0}, {0.05, 0.5}}), std::invalid_argument);
}

TEST_CASE("make_nodes resolves families and rejects bad counts") {
  CHECK(make_nodes("fibonacci", 123).size() == 123);
  CHECK(make_nodes("icosahedral", 2562).size() == 2562);
  CHECK(make_nodes("icosahedral", 23042).size() == 23042);
  CHECK_THROWS_AS(make_nodes("icosahedral", 2563), std::invalid_argument);

  const fs::path dir = fs::temp_directory_path() / "sphgal_harness_test";
  fs::create_directories(dir);
  PointSet::fibonacci(77).save(dir / "x.txt");
  CHECK(make_nodes((dir / "x.txt").string(), 0).size() == 77);
}

TEST_CASE("config json round trip and validation") {
  ExperimentConfig c = mini_quadrature_config();
  c.K = 5.5;
  c.basis = "local";
  c.seed = 1234;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());

  ExperimentConfig bad = c;
  bad.y_sizes = {300, 300};
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad.y_sizes = {300, 200};
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad = c;
  bad.m = 1;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}

TEST_CASE("quadrature sweep: record contents and determinism") {
  const ExperimentConfig c = mini_quadrature_config();
  RuleCache cache;
  const ConvergenceRecord rec = sweep_quadrature(c, cache);
  REQUIRE(rec.steps.size() == 3);
  CHECK(rec.sweep == "quadrature");
  for (const auto& s : rec.steps) {
    CHECK(s.error > 0.0);
    CHECK(s.kappa2 > 1.0);
    CHECK(s.h > 0.0);
  }
  CHECK(rec.steps[2].error < rec.steps[0].error);  // finer quadrature helps

  // Byte-identical CSV apart from wall time.
  RuleCache cache2;
  const ConvergenceRecord rec2 = sweep_quadrature(c, cache2);
  CHECK(mask_wall_column(rec.csv()) == mask_wall_column(rec2.csv()));
  CHECK(rec.csv().substr(0, 36) == "sweep,size,h,error,kappa2,wall_ms\nqu");
}

TEST_CASE("record serialization round trips bit-exactly") {
  const ExperimentConfig c = mini_quadrature_config();
  RuleCache cache;
  ConvergenceRecord rec = sweep_quadrature(c, cache);

  const nlohmann::json j = rec.to_json();
  const ConvergenceRecord back = ConvergenceRecord::from_json(j);
  CHECK(back.to_json().dump() == j.dump());

  const fs::path dir = fs::temp_directory_path() / "sphgal_harness_test";
  fs::create_directories(dir);
  rec.write_json(dir / "rec.json");
  rec.write_csv(dir / "rec.csv");
  CHECK(!fs::exists(dir / "rec.json.tmp"));  // atomic writer cleaned up
  std::ifstream jin(dir / "rec.json");
  nlohmann::json loaded;
  jin >> loaded;
  CHECK(ConvergenceRecord::from_json(loaded).to_json().dump() == j.dump());

  // NaN rate maps to null and back.
  rec.rate_skipped = true;
  rec.fitted_rate = std::numeric_limits<double>::quiet_NaN();
  rec.fit_residual = std::numeric_limits<double>::quiet_NaN();
  const ConvergenceRecord nan_back = ConvergenceRecord::from_json(rec.to_json());
  CHECK(std::isnan(nan_back.fitted_rate));
}

TEST_CASE("centers sweep populates h_X and kappa") {
  ExperimentConfig c;
  c.problem = 1;
  c.x_sizes = {100, 200};
  c.y_source = "fibonacci";
  c.y_sizes = {1200};
  c.n_eval = 2000;
  RuleCache cache;
  const ConvergenceRecord rec = sweep_centers(c, cache);
  REQUIRE(rec.steps.size() == 2);
  CHECK(rec.steps[0].h > rec.steps[1].h);
  CHECK(rec.steps[0].kappa2 < rec.steps[1].kappa2);  // conditioning grows with N_X
  CHECK(rec.rate_skipped);                            // two points cannot be fitted
}

TEST_CASE("interpolation sweep converges fast for the smooth target") {
  ExperimentConfig c;
  c.m = 2;
  c.x_sizes = {100, 200, 400};
  c.n_eval = 2000;
  RuleCache cache;
  const ConvergenceRecord rec = sweep_interpolation(c, cache);
  REQUIRE(rec.steps.size() == 3);
  CHECK(rec.steps[2].error < rec.steps[1].error);
  CHECK(rec.steps[1].error < rec.steps[0].error);
  CHECK(!rec.rate_skipped);
  CHECK(rec.fitted_rate > 2.5);

  // m=3 beats m=2 on the same sweep.
  ExperimentConfig c3 = c;
  c3.m = 3;
  const ConvergenceRecord rec3 = sweep_interpolation(c3, cache);
  CHECK(rec3.fitted_rate > rec.fitted_rate);
}

TEST_CASE("rule cache persists rules on disk") {
  const fs::path dir = fs::temp_directory_path() / "sphgal_cache_test";
  fs::remove_all(dir);
  {
    RuleCache cache(dir);
    const QuadratureRule& r = cache.get("fibonacci", 300, 2);
    CHECK(r.size() == 300);
    CHECK(fs::exists(dir / "rule_fibonacci_300_M2.txt"));
    // second lookup: same object
    const QuadratureRule& r2 = cache.get("fibonacci", 300, 2);
    CHECK(&r == &r2);
  }
  {
    RuleCache cache(dir);  // fresh cache loads from disk
    const QuadratureRule& r = cache.get("fibonacci", 300, 2);
    CHECK(r.apply(Eigen::VectorXd::Ones(300)) ==
          doctest::Approx(4.0 * std::numbers::pi).epsilon(1e-10));
  }
}
