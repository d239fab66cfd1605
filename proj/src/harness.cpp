#include "sphgal/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sphgal/errors.hpp"

namespace sphgal {

namespace {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

double elapsed_ms(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write: " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

LagrangeBasis build_basis(const ExperimentConfig& config, const PointSet& X) {
  if (config.basis == "local") return LagrangeBasis::build_local(X, config.m, config.K);
  if (config.basis == "global") return LagrangeBasis::build_global(X, config.m);
  throw std::invalid_argument("unknown basis variant '" + config.basis + "'");
}

// Rate fits drop steps where the quadrature set is coarser than the centers
// (h_Y > q_X); those points sit outside the convergence regime.
void fit_record(ConvergenceRecord& rec, const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 3) {
    rec.rate_skipped = true;
    rec.fitted_rate = std::numeric_limits<double>::quiet_NaN();
    rec.fit_residual = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const auto [slope, resid] = fit_rate(pts);
  rec.fitted_rate = slope;
  rec.fit_residual = resid;
}

}  // namespace

PDEProblem builtin_problem(int id) {
  PDEProblem p;
  if (id == 1) {
    p.name = "problem-1";
    p.a = [](const SpherePoint&) { return 1.0; };
    p.b = [](const SpherePoint&) { return 1.0; };
    p.f = [](const SpherePoint& x) { return std::exp(x.z) * (x.z * x.z + 2.0 * x.z); };
    p.exact_u = [](const SpherePoint& x) { return std::exp(x.z); };
    p.a_lower = 0.999;
    p.b_lower = 0.999;
  } else if (id == 2) {
    p.name = "problem-2";
    p.a = [](const SpherePoint& x) { return 1.0 - 0.5 * x.z; };
    p.b = [](const SpherePoint&) { return 1.0; };
    p.f = [](const SpherePoint& x) {
      const double z = x.z;
      return (-0.5 * (z * z * z + z * z - 5.0 * z + 1.0) + 1.0) * std::exp(z);
    };
    p.exact_u = [](const SpherePoint& x) { return std::exp(x.z); };
    p.a_lower = 0.499;
    p.b_lower = 0.999;
  } else {
    throw std::invalid_argument("builtin_problem: unknown id " + std::to_string(id));
  }
  p.validate();
  return p;
}

PointSet make_nodes(const std::string& source, std::size_t n) {
  if (source == "fibonacci") return PointSet::fibonacci(n);
  if (source == "icosahedral") {
    const double nu_real = std::sqrt((static_cast<double>(n) - 2.0) / 10.0);
    const int nu = static_cast<int>(std::llround(nu_real));
    if (nu < 1 || static_cast<std::size_t>(10 * nu * nu + 2) != n)
      throw std::invalid_argument("make_nodes: " + std::to_string(n) +
                                  " is not an icosahedral count (10 nu^2 + 2)");
    return PointSet::icosahedral_frequency(nu);
  }
  return PointSet::load(source);
}

double relative_l2_error(const LagrangeBasis& basis,
                         const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                         const PDEProblem& problem, const QuadratureRule& E) {
  if (!problem.exact_u)
    throw std::invalid_argument("relative_l2_error: problem has no exact solution");
  const Eigen::VectorXd uh = evaluate_solution(basis, coefficients, E.nodes.coords());
  Eigen::VectorXd u(static_cast<Eigen::Index>(E.size()));
  for (std::size_t i = 0; i < E.size(); ++i)
    u(static_cast<Eigen::Index>(i)) = (*problem.exact_u)(E.nodes.point(i));
  const double num = E.apply(Eigen::VectorXd((uh - u).array().square()));
  const double den = E.apply(Eigen::VectorXd(u.array().square()));
  return std::sqrt(std::max(num, 0.0) / den);
}

// ---------------------------------------------------------------------------
// ExperimentConfig

void ExperimentConfig::check() const {
  if (m < 2 || M < 2) throw std::invalid_argument("config: kernel orders must be >= 2");
  auto increasing = [](const std::vector<std::size_t>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] <= v[i - 1]) return false;
    return true;
  };
  if (!increasing(x_sizes) || !increasing(y_sizes))
    throw std::invalid_argument("config: size sweeps must be strictly increasing");
}

json ExperimentConfig::to_json() const {
  return json{{"problem", problem}, {"m", m},           {"M", M},
              {"x_source", x_source}, {"x_sizes", x_sizes}, {"y_source", y_source},
              {"y_sizes", y_sizes},   {"K", K},             {"basis", basis},
              {"truncate", truncate}, {"n_eval", n_eval},   {"output_dir", output_dir},
              {"threads", threads},   {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  c.problem = j.value("problem", c.problem);
  c.m = j.value("m", c.m);
  c.M = j.value("M", c.M);
  c.x_source = j.value("x_source", c.x_source);
  c.x_sizes = j.value("x_sizes", c.x_sizes);
  c.y_source = j.value("y_source", c.y_source);
  c.y_sizes = j.value("y_sizes", c.y_sizes);
  c.K = j.value("K", c.K);
  c.basis = j.value("basis", c.basis);
  c.truncate = j.value("truncate", c.truncate);
  c.n_eval = j.value("n_eval", c.n_eval);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.threads = j.value("threads", 0);  // 0 = unset, lets the CLI apply SPHG_THREADS
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// ConvergenceRecord

std::string ConvergenceRecord::csv() const {
  std::ostringstream out;
  out << "sweep,size,h,error,kappa2,wall_ms\n";
  for (const auto& s : steps)
    out << sweep << "," << s.size << "," << format_double(s.h) << ","
        << format_double(s.error) << "," << format_double(s.kappa2) << ","
        << format_double(s.wall_ms) << "\n";
  return out.str();
}

json ConvergenceRecord::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps)
    steps_json.push_back(json{{"size", s.size},
                              {"h", s.h},
                              {"error", s.error},
                              {"kappa2", s.kappa2},
                              {"wall_ms", s.wall_ms}});
  json j{{"sweep", sweep},
         {"config", config.to_json()},
         {"steps", steps_json},
         {"fit_residual", fit_residual},
         {"rate_skipped", rate_skipped}};
  if (std::isnan(fitted_rate))
    j["fitted_rate"] = nullptr;
  else
    j["fitted_rate"] = fitted_rate;
  if (std::isnan(fit_residual)) j["fit_residual"] = nullptr;
  return j;
}

ConvergenceRecord ConvergenceRecord::from_json(const json& j) {
  ConvergenceRecord rec;
  rec.sweep = j.at("sweep").get<std::string>();
  rec.config = ExperimentConfig::from_json(j.at("config"));
  for (const auto& s : j.at("steps")) {
    SweepStep step;
    step.size = s.at("size").get<std::size_t>();
    step.h = s.at("h").get<double>();
    step.error = s.at("error").get<double>();
    step.kappa2 = s.at("kappa2").get<double>();
    step.wall_ms = s.at("wall_ms").get<double>();
    rec.steps.push_back(step);
  }
  rec.rate_skipped = j.at("rate_skipped").get<bool>();
  rec.fitted_rate = j.at("fitted_rate").is_null()
                        ? std::numeric_limits<double>::quiet_NaN()
                        : j.at("fitted_rate").get<double>();
  rec.fit_residual = j.at("fit_residual").is_null()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : j.at("fit_residual").get<double>();
  return rec;
}

void ConvergenceRecord::write_csv(const std::filesystem::path& path) const {
  atomic_write(path, csv());
}

void ConvergenceRecord::write_json(const std::filesystem::path& path) const {
  atomic_write(path, to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// RuleCache

RuleCache::RuleCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

const QuadratureRule& RuleCache::get(const std::string& family, std::size_t n, int M) {
  const std::string key = family + ":" + std::to_string(n) + ":M" + std::to_string(M);
  auto it = rules_.find(key);
  if (it != rules_.end()) return it->second;

  if (!dir_.empty()) {
    const std::filesystem::path file =
        dir_ / ("rule_" + family + "_" + std::to_string(n) + "_M" + std::to_string(M) + ".txt");
    if (std::filesystem::exists(file)) {
      auto [jt, ok] = rules_.emplace(key, QuadratureRule::load(file));
      return jt->second;
    }
    QuadratureRule rule = compute_weights(make_nodes(family, n), M, solve_options);
    rule.save(file);
    auto [jt, ok] = rules_.emplace(key, std::move(rule));
    return jt->second;
  }
  auto [jt, ok] = rules_.emplace(key, compute_weights(make_nodes(family, n), M, solve_options));
  return jt->second;
}

const QuadratureRule& RuleCache::evaluation_rule(std::size_t n_eval) {
  return get("fibonacci", n_eval, 2);
}

// ---------------------------------------------------------------------------
// Sweeps

ConvergenceRecord sweep_quadrature(const ExperimentConfig& config, RuleCache& cache) {
  config.check();
  if (config.y_sizes.size() < 3)
    throw std::invalid_argument("sweep_quadrature: need at least 3 Y sizes");
  if (config.x_sizes.empty())
    throw std::invalid_argument("sweep_quadrature: need an X size");

  const PDEProblem problem = builtin_problem(config.problem);
  const PointSet X = make_nodes(config.x_source, config.x_sizes.front());
  const auto x_metrics = compute_metrics(X);
  const LagrangeBasis basis = build_basis(config, X);
  const QuadratureRule& E = cache.evaluation_rule(config.n_eval);

  ConvergenceRecord rec;
  rec.sweep = "quadrature";
  rec.config = config;
  std::vector<std::pair<double, double>> fit_pts;
  for (const std::size_t ny : config.y_sizes) {
    const auto t0 = clock_type::now();
    const QuadratureRule& rule = cache.get(config.y_source, ny, config.M);
    StiffnessMatrix A = assemble_stiffness(basis, rule, problem);
    const Eigen::VectorXd rhs = assemble_rhs(basis, rule, problem);
    GalerkinSolution sol;
    double kappa;
    if (config.truncate) {
      const StiffnessMatrix At = truncate(A, X, config.K);
      sol = solve(At, rhs);
      kappa = condition_number(At);
    } else {
      sol = solve(A, rhs);
      kappa = condition_number(A);
    }
    const double err = relative_l2_error(basis, sol.coefficients, problem, E);
    SweepStep step{ny, rule.metrics.mesh_norm, err, kappa, elapsed_ms(t0)};
    rec.steps.push_back(step);
    if (rule.metrics.mesh_norm <= x_metrics.separation_radius)
      fit_pts.emplace_back(step.h, step.error);
  }
  fit_record(rec, fit_pts);
  return rec;
}

ConvergenceRecord sweep_centers(const ExperimentConfig& config, RuleCache& cache) {
  config.check();
  if (config.x_sizes.size() < 2)
    throw std::invalid_argument("sweep_centers: need at least 2 X sizes");
  if (config.y_sizes.empty())
    throw std::invalid_argument("sweep_centers: need a fixed Y size");

  const PDEProblem problem = builtin_problem(config.problem);
  const QuadratureRule& rule = cache.get(config.y_source, config.y_sizes.front(), config.M);
  const QuadratureRule& E = cache.evaluation_rule(config.n_eval);

  ConvergenceRecord rec;
  rec.sweep = "centers";
  rec.config = config;
  std::vector<std::pair<double, double>> fit_pts;
  for (const std::size_t nx : config.x_sizes) {
    const auto t0 = clock_type::now();
    const PointSet X = make_nodes(config.x_source, nx);
    const LagrangeBasis basis = build_basis(config, X);
    StiffnessMatrix A = assemble_stiffness(basis, rule, problem);
    const Eigen::VectorXd rhs = assemble_rhs(basis, rule, problem);
    GalerkinSolution sol;
    double kappa;
    if (config.truncate) {
      const StiffnessMatrix At = truncate(A, X, config.K);
      sol = solve(At, rhs);
      kappa = condition_number(At);
    } else {
      sol = solve(A, rhs);
      kappa = condition_number(A);
    }
    const double err = relative_l2_error(basis, sol.coefficients, problem, E);
    SweepStep step{nx, basis.mesh_norm(), err, kappa, elapsed_ms(t0)};
    rec.steps.push_back(step);
    fit_pts.emplace_back(step.h, step.error);
  }
  fit_record(rec, fit_pts);
  return rec;
}

ConvergenceRecord sweep_interpolation(const ExperimentConfig& config, RuleCache& cache) {
  config.check();
  if (config.x_sizes.size() < 3)
    throw std::invalid_argument("sweep_interpolation: need at least 3 X sizes");
  const auto target = [](const SpherePoint& x) { return std::exp(x.z); };
  const QuadratureRule& E = cache.evaluation_rule(config.n_eval);

  Eigen::VectorXd u_exact(static_cast<Eigen::Index>(E.size()));
  for (std::size_t i = 0; i < E.size(); ++i)
    u_exact(static_cast<Eigen::Index>(i)) = target(E.nodes.point(i));
  const double den = E.apply(Eigen::VectorXd(u_exact.array().square()));

  ConvergenceRecord rec;
  rec.sweep = "interpolation";
  rec.config = config;
  std::vector<std::pair<double, double>> fit_pts;
  for (const std::size_t nx : config.x_sizes) {
    const auto t0 = clock_type::now();
    const PointSet X = make_nodes(config.x_source, nx);
    Eigen::VectorXd samples(static_cast<Eigen::Index>(X.size()));
    for (std::size_t i = 0; i < X.size(); ++i)
      samples(static_cast<Eigen::Index>(i)) = target(X.point(i));
    const Interpolant interp = interpolate(X, config.m, samples);
    const Eigen::VectorXd uh = interp.values(E.nodes.coords());
    const double num = E.apply(Eigen::VectorXd((uh - u_exact).array().square()));
    const double err = std::sqrt(std::max(num, 0.0) / den);
    const auto metrics = compute_metrics(X);
    SweepStep step{nx, metrics.mesh_norm, err, 0.0, elapsed_ms(t0)};
    rec.steps.push_back(step);
    if (err > 1e-14) fit_pts.emplace_back(step.h, step.error);
  }
  fit_record(rec, fit_pts);
  return rec;
}

}  // namespace sphgal
