// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Quadrature rules are cached under ./acceptance_cache so reruns
// and later criteria reuse earlier work.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sphgal/galerkin.hpp"
#include "sphgal/harness.hpp"
#include "sphgal/rates.hpp"
#include "support/oracles.hpp"

using namespace sphgal;

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;

struct Context {
  RuleCache cache{"acceptance_cache"};
  std::map<std::string, LagrangeBasis> bases;
  std::map<std::string, StiffnessMatrix> matrices;
  std::map<std::string, Eigen::VectorXd> rhs_vectors;

  const LagrangeBasis& basis(std::size_t n, int m, const std::string& variant, double K = 7.0) {
    std::ostringstream key;
    key << n << ":" << m << ":" << variant << ":" << K;
    auto it = bases.find(key.str());
    if (it == bases.end()) {
      const PointSet X = PointSet::fibonacci(n);
      it = bases
               .emplace(key.str(), variant == "local" ? LagrangeBasis::build_local(X, m, K)
                                                      : LagrangeBasis::build_global(X, m))
               .first;
    }
    return it->second;
  }

  // Assembled stiffness and load for (n, basis variant, problem, N_Y icosahedral).
  std::pair<const StiffnessMatrix*, const Eigen::VectorXd*> system(
      std::size_t nx, const std::string& variant, int problem_id, std::size_t ny) {
    std::ostringstream key;
    key << nx << ":" << variant << ":" << problem_id << ":" << ny;
    auto it = matrices.find(key.str());
    if (it == matrices.end()) {
      const PDEProblem problem = builtin_problem(problem_id);
      const LagrangeBasis& b = basis(nx, 3, variant);
      const QuadratureRule& rule = cache.get("icosahedral", ny, 2);
      it = matrices.emplace(key.str(), assemble_stiffness(b, rule, problem)).first;
      rhs_vectors.emplace(key.str(), assemble_rhs(b, rule, problem));
    }
    return {&it->second, &rhs_vectors.at(key.str())};
  }
};

struct Outcome {
  bool pass = true;
  std::string detail;
};

#define REQUIRE_MSG(cond, msg)                                      \
  do {                                                              \
    if (!(cond)) {                                                  \
      out.pass = false;                                             \
      out.detail += std::string("  FAILED: ") + (msg) + "\n";       \
    }                                                               \
  } while (0)

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// --------------------------------------------------------------------------
// 1. Basis correctness: Kronecker, side conditions, polynomial reproduction.
Outcome criterion_1(Context& ctx) {
  Outcome out;
  test::RandomSphere rng(101);
  for (const int m : {2, 3})
    for (const std::size_t n : {100ul, 400ul, 961ul}) {
      const LagrangeBasis& basis = ctx.basis(n, m, "global");
      Eigen::MatrixXd V;
      basis.tables(basis.centers().coords(), &V, nullptr, nullptr, nullptr);
      const double kron =
          (V - Eigen::MatrixXd::Identity(V.rows(), V.cols())).cwiseAbs().maxCoeff();
      REQUIRE_MSG(kron < 1e-8, "Kronecker deviation " + fmt(kron) + " at m=" +
                                   std::to_string(m) + " N=" + std::to_string(n));

      const HarmonicBasis hb(m - 1);
      Eigen::MatrixXd P;
      hb.eval_matrix(basis.centers().coords(), P);
      double side = 0.0;
      for (std::size_t xi = 0; xi < n; ++xi) {
        const LagrangeFunction f = basis.function(static_cast<int>(xi));
        side = std::max(side,
                        (P.transpose() * f.alpha).cwiseAbs().maxCoeff() / f.alpha.norm());
      }
      REQUIRE_MSG(side < 1e-8, "side condition " + fmt(side) + " at m=" + std::to_string(m) +
                                   " N=" + std::to_string(n));

      Eigen::Matrix3Xd probes(3, 50);
      for (int i = 0; i < 50; ++i) probes.col(i) = rng.next().vec();
      Eigen::MatrixXd Vp, Hp;
      basis.tables(probes, &Vp, nullptr, nullptr, nullptr);
      hb.eval_matrix(basis.centers().coords(), P);
      hb.eval_matrix(probes, Hp);
      double reproduction = 0.0;
      for (int f = 0; f < hb.size(); ++f)
        reproduction =
            std::max(reproduction, (Vp * P.col(f) - Hp.col(f)).cwiseAbs().maxCoeff());
      REQUIRE_MSG(reproduction < 1e-8,
                  "polynomial reproduction " + fmt(reproduction) + " at m=" +
                      std::to_string(m) + " N=" + std::to_string(n));
    }
  return out;
}

// --------------------------------------------------------------------------
// 2. Gradients against geodesic finite differences.
Outcome criterion_2(Context& ctx) {
  Outcome out;
  test::RandomSphere rng(202);
  const auto check_fd = [&](const std::function<double(const SpherePoint&)>& f,
                            const Eigen::Vector3d& grad, const SpherePoint& x,
                            double scale_floor, const std::string& what) {
    REQUIRE_MSG(std::abs(grad.dot(x.vec())) < 1e-10, what + ": tangency");
    const Eigen::Vector3d dir = rng.next_tangent(x);
    const double fd = test::geodesic_fd(f, x, dir, 2e-6);
    const double an = grad.dot(dir);
    const bool ok = std::abs(an - fd) <= 1e-5 * std::max({std::abs(an), std::abs(fd),
                                                           scale_floor});
    REQUIRE_MSG(ok, what + ": fd " + fmt(fd) + " vs " + fmt(an));
  };

  const SurfaceSplineKernel k3(3);
  for (int t = 0; t < 100; ++t) {
    const SpherePoint zeta = rng.next();
    const SpherePoint tau =
        test::geodesic_step(zeta, rng.next_tangent(zeta), 0.1 + 0.025 * t);
    check_fd([&](const SpherePoint& p) { return k3.eval(p.vec().dot(tau.vec())); },
             k3.surface_gradient(zeta, tau).components, zeta, 1e-3, "kernel gradient");
  }

  const HarmonicBasis hb(4);
  for (int t = 0; t < 100; ++t) {
    const int l = t % 4 + 1;
    const int k = t % (2 * l + 1) + 1;
    const SpherePoint x = rng.next();
    check_fd([&](const SpherePoint& p) { return hb.eval(l, k, p); },
             hb.surface_gradient(l, k, x).components, x, 1e-3, "harmonic gradient");
  }

  const LagrangeBasis& basis = ctx.basis(400, 3, "global");
  const double h = basis.mesh_norm();
  for (int t = 0; t < 100; ++t) {
    const int xi = (t * 37) % 400;
    const SpherePoint c = basis.centers().point(static_cast<std::size_t>(xi));
    const SpherePoint x =
        test::geodesic_step(c, rng.next_tangent(c), (0.3 + 2.7 * (t % 10) / 10.0) * h);
    check_fd([&](const SpherePoint& p) { return basis.value(xi, p); },
             basis.gradient(xi, x).components, x, 1e-2, "lagrange gradient");
  }
  return out;
}

// --------------------------------------------------------------------------
// 3. Quadrature exactness and convergence.
Outcome criterion_3(Context& ctx) {
  Outcome out;
  const HarmonicBasis hb(1);
  for (const std::size_t n : {1000ul, 4000ul, 16000ul}) {
    const QuadratureRule& rule = ctx.cache.get("fibonacci", n, 2);
    const double sum_dev =
        std::abs(rule.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))) - kFourPi);
    REQUIRE_MSG(sum_dev < 1e-9, "sum(w)-4pi = " + fmt(sum_dev) + " at N=" + std::to_string(n));
    for (int l = 0; l <= 1; ++l)
      for (int k = 1; k <= 2 * l + 1; ++k) {
        const double q = rule.apply([&](const SpherePoint& p) { return hb.eval(l, k, p); });
        const double expect = l == 0 ? std::sqrt(kFourPi) : 0.0;
        REQUIRE_MSG(std::abs(q - expect) < 1e-8,
                    "harmonic (" + std::to_string(l) + "," + std::to_string(k) +
                        ") integrates to " + fmt(q));
      }
  }
  const double exact = 2.0 * std::numbers::pi * (std::exp(1.0) - std::exp(-1.0));
  std::vector<std::pair<double, double>> pts;
  for (const std::size_t n : {1000ul, 4000ul, 16000ul}) {
    const QuadratureRule& rule = ctx.cache.get("fibonacci", n, 2);
    pts.emplace_back(rule.metrics.mesh_norm,
                     std::abs(rule.apply([](const SpherePoint& p) { return std::exp(p.z); }) -
                              exact));
  }
  const auto [rate, resid] = fit_rate(pts);
  out.detail += "  smooth-integrand rate " + fmt(rate) + "\n";
  REQUIRE_MSG(rate >= 3.5, "quadrature rate " + fmt(rate) + " < 3.5");
  return out;
}

// --------------------------------------------------------------------------
// 4. Stiffness entries against 200k-node reference integration.
Outcome criterion_4(Context& ctx) {
  Outcome out;
  const PointSet X = PointSet::icosahedral(0);
  const LagrangeBasis basis = LagrangeBasis::build_global(X, 3);
  const QuadratureRule& rule = ctx.cache.get("fibonacci", 16000, 2);
  const auto& ref = test::reference_nodes_200k();

  for (const int id : {1, 2}) {
    const PDEProblem problem = builtin_problem(id);
    const StiffnessMatrix A = assemble_stiffness(basis, rule, problem);
    double worst = 0.0;
    for (int i = 0; i < 12; ++i)
      for (int j = i; j < 12; ++j) {
        const double reference = test::integrate_reference(
            [&](const SpherePoint& x) {
              return problem.a(x) * basis.gradient(i, x).components.dot(
                                        basis.gradient(j, x).components) +
                     problem.b(x) * basis.value(i, x) * basis.value(j, x);
            },
            ref);
        worst = std::max(worst, std::abs(A.dense_matrix()(i, j) - reference));
      }
    out.detail += "  problem " + std::to_string(id) + ": max entry deviation " +
                  fmt(worst) + "\n";
    REQUIRE_MSG(worst < 1e-6, "entry deviation " + fmt(worst) + " for problem " +
                                  std::to_string(id));
  }
  return out;
}

// --------------------------------------------------------------------------
// 5. Table-1 rate reproduction at desk scale.
Outcome criterion_5(Context& ctx) {
  Outcome out;
  ExperimentConfig c;
  c.problem = 1;
  c.m = 3;
  c.M = 2;
  c.x_source = "fibonacci";
  c.x_sizes = {961};
  c.y_source = "icosahedral";
  c.y_sizes = {2562, 10242, 23042, 40962};
  c.basis = "global";
  c.n_eval = 62500;
  const ConvergenceRecord rec = sweep_quadrature(c, ctx.cache);
  for (const auto& s : rec.steps)
    out.detail += "  N_Y=" + std::to_string(s.size) + " error " + fmt(s.error) + "\n";
  for (std::size_t i = 1; i < rec.steps.size(); ++i)
    REQUIRE_MSG(rec.steps[i].error < rec.steps[i - 1].error,
                "error not strictly decreasing at step " + std::to_string(i));
  out.detail += "  fitted rate vs h_Y: " + fmt(rec.fitted_rate) + "\n";
  REQUIRE_MSG(!rec.rate_skipped && rec.fitted_rate >= 4.0,
              "fitted rate " + fmt(rec.fitted_rate) + " < 4.0");

  if (const char* me = std::getenv("SPHGAL_ME_X")) {
    ExperimentConfig cme = c;
    cme.x_source = me;
    const ConvergenceRecord rme = sweep_quadrature(cme, ctx.cache);
    const double final_err = rme.steps.back().error;
    out.detail += "  minimum-energy X final error " + fmt(final_err) + "\n";
    REQUIRE_MSG(final_err < 10.0 * 8.96e-8,
                "minimum-energy final error " + fmt(final_err) + " above 10x table value");
  } else {
    out.detail += "  (no minimum-energy X file supplied; rate-band check only)\n";
  }
  return out;
}

// --------------------------------------------------------------------------
// 6. Local-basis parity on problem 2.
Outcome criterion_6(Context& ctx) {
  Outcome out;
  ExperimentConfig c;
  c.problem = 2;
  c.m = 3;
  c.M = 2;
  c.x_source = "fibonacci";
  c.x_sizes = {961};
  c.y_source = "icosahedral";
  c.y_sizes = {2562, 10242, 23042, 40962};
  c.n_eval = 62500;

  c.basis = "global";
  const ConvergenceRecord global_rec = sweep_quadrature(c, ctx.cache);
  c.basis = "local";
  const ConvergenceRecord local_rec = sweep_quadrature(c, ctx.cache);
  for (std::size_t i = 0; i < global_rec.steps.size(); ++i) {
    const double ratio = local_rec.steps[i].error / global_rec.steps[i].error;
    out.detail += "  N_Y=" + std::to_string(global_rec.steps[i].size) + " global " +
                  fmt(global_rec.steps[i].error) + " local " +
                  fmt(local_rec.steps[i].error) + " ratio " + fmt(ratio) + "\n";
    REQUIRE_MSG(ratio < 2.0 && ratio > 0.5,
                "local/global error ratio " + fmt(ratio) + " outside [0.5, 2]");
  }
  return out;
}

// --------------------------------------------------------------------------
// 7. Conditioning: q_X^-2 growth, insensitivity to N_Y.
Outcome criterion_7(Context& ctx) {
  Outcome out;
  std::vector<std::pair<double, double>> pts;
  for (const std::size_t nx : {250ul, 961ul, 3721ul}) {
    const LagrangeBasis& basis = ctx.basis(nx, 3, "global");
    const auto metrics = compute_metrics(basis.centers());
    const auto [A, rhs] = ctx.system(nx, "global", 1, 23042);
    (void)rhs;
    const double kappa = condition_number(*A);
    pts.emplace_back(1.0 / metrics.separation_radius, kappa);
    out.detail += "  N_X=" + std::to_string(nx) + " kappa " + fmt(kappa) + "\n";
  }
  const auto [slope, resid] = fit_rate(pts);
  out.detail += "  kappa slope vs 1/q_X: " + fmt(slope) + "\n";
  REQUIRE_MSG(slope >= 1.5 && slope <= 2.5, "conditioning slope " + fmt(slope));

  const double k_coarse = condition_number(*ctx.system(961, "global", 1, 10242).first);
  const double k_fine = condition_number(*ctx.system(961, "global", 1, 40962).first);
  const double change = std::abs(k_fine - k_coarse) / k_coarse;
  out.detail += "  kappa(N_Y=10242) " + fmt(k_coarse) + " vs kappa(N_Y=40962) " +
                fmt(k_fine) + " change " + fmt(change) + "\n";
  REQUIRE_MSG(change < 0.2, "kappa changed by " + fmt(change) + " when N_Y quadrupled");
  return out;
}

// --------------------------------------------------------------------------
// 8. Sparsification quality.
Outcome criterion_8(Context& ctx) {
  Outcome out;
  const std::size_t nx = 3721;
  const LagrangeBasis& basis = ctx.basis(nx, 3, "global");
  const auto [A, rhs] = ctx.system(nx, "global", 1, 10242);

  double prev = std::numeric_limits<double>::infinity();
  std::optional<StiffnessMatrix> k7;
  for (const double K : {2.0, 4.0, 7.0}) {
    StiffnessMatrix At = truncate(*A, basis.centers(), K);
    const double dist = spectral_norm_diff(*A, At);
    out.detail += "  K=" + fmt(K) + " |A-At|_2 " + fmt(dist) + " nnz/row " +
                  fmt(At.mean_row_nonzeros()) + "\n";
    REQUIRE_MSG(dist < prev, "spectral distance not decreasing at K=" + fmt(K));
    prev = dist;
    if (K == 7.0) k7.emplace(std::move(At));
  }

  const GalerkinSolution dense_sol = solve(*A, *rhs);
  const GalerkinSolution sparse_sol = solve(*k7, *rhs);
  const QuadratureRule& E = ctx.cache.evaluation_rule(62500);
  const Eigen::VectorXd ud =
      evaluate_solution(basis, dense_sol.coefficients, E.nodes.coords());
  const Eigen::VectorXd us =
      evaluate_solution(basis, sparse_sol.coefficients, E.nodes.coords());
  const double num = E.apply(Eigen::VectorXd((ud - us).array().square()));
  const double den = E.apply(Eigen::VectorXd(ud.array().square()));
  const double rel = std::sqrt(std::max(num, 0.0) / den);
  out.detail += "  dense vs K=7 truncated solution: relative L2 " + fmt(rel) + "\n";
  REQUIRE_MSG(rel < 1e-3, "truncated solution off by " + fmt(rel));
  return out;
}

// --------------------------------------------------------------------------
// 9. Fixed-Y phenomenon: finer X makes things worse.
Outcome criterion_9(Context& ctx) {
  Outcome out;
  const PDEProblem problem = builtin_problem(1);
  const QuadratureRule& E = ctx.cache.evaluation_rule(62500);
  std::map<std::size_t, double> err;
  for (const std::size_t nx : {250ul, 961ul, 3721ul}) {
    const LagrangeBasis& basis = ctx.basis(nx, 3, "global");
    const auto [A, rhs] = ctx.system(nx, "global", 1, 10242);
    const GalerkinSolution sol = solve(*A, *rhs);
    err[nx] = relative_l2_error(basis, sol.coefficients, problem, E);
    out.detail += "  N_X=" + std::to_string(nx) + " error " + fmt(err[nx]) + "\n";
  }
  REQUIRE_MSG(err[3721] > err[961],
              "error at N_X=3721 (" + fmt(err[3721]) + ") does not exceed error at 961 (" +
                  fmt(err[961]) + ")");
  return out;
}

// --------------------------------------------------------------------------
// 10. Doubling-trick interpolation rates.
Outcome criterion_10(Context& ctx) {
  Outcome out;
  ExperimentConfig c;
  c.x_source = "fibonacci";
  c.x_sizes = {250, 1000, 4000};
  c.n_eval = 62500;

  c.m = 2;
  const ConvergenceRecord r2 = sweep_interpolation(c, ctx.cache);
  c.m = 3;
  const ConvergenceRecord r3 = sweep_interpolation(c, ctx.cache);
  out.detail += "  m=2 rate " + fmt(r2.fitted_rate) + ", m=3 rate " + fmt(r3.fitted_rate) +
                "\n";
  REQUIRE_MSG(!r2.rate_skipped && r2.fitted_rate >= 3.5,
              "m=2 interpolation rate " + fmt(r2.fitted_rate) + " < 3.5");
  REQUIRE_MSG(r3.fitted_rate > r2.fitted_rate, "m=3 rate does not exceed m=2 rate");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using clock_type = std::chrono::steady_clock;
  std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"basis correctness (Kronecker, side conditions, reproduction)", criterion_1},
      {"surface gradients vs geodesic finite differences", criterion_2},
      {"quadrature exactness and smooth-integrand rate", criterion_3},
      {"stiffness entries vs 200k-node reference integration", criterion_4},
      {"quadrature-density convergence rate (Table-1 shape)", criterion_5},
      {"local-basis parity on the variable-coefficient problem", criterion_6},
      {"stiffness conditioning vs center density", criterion_7},
      {"sparsification: spectral distance and truncated solve", criterion_8},
      {"fixed-Y phenomenon: finer centers increase the error", criterion_9},
      {"doubling-trick interpolation rates", criterion_10}};

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  Context ctx;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    const auto t0 = clock_type::now();
    Outcome out;
    try {
      out = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail += std::string("  exception: ") + e.what() + "\n";
    }
    const double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id,
                criteria[i].first.c_str(), secs);
    if (!out.detail.empty()) std::fputs(out.detail.c_str(), stdout);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
