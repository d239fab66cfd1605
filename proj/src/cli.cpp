#include "sphgal/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sphgal/errors.hpp"
#include "sphgal/harness.hpp"

namespace sphgal {

namespace {

using json = nlohmann::json;

struct ConfigFlags {
  std::optional<int> problem, m, M, threads;
  std::optional<std::string> x_source, y_source, basis, output_dir;
  std::optional<std::vector<std::size_t>> x_sizes, y_sizes;
  std::optional<double> K;
  std::optional<std::size_t> n_eval;
  std::optional<bool> truncate;
  std::optional<std::uint64_t> seed;

  // Flags override config-file values only when given on the command line.
  ExperimentConfig merge(ExperimentConfig base) const {
    if (problem) base.problem = *problem;
    if (m) base.m = *m;
    if (M) base.M = *M;
    if (x_source) base.x_source = *x_source;
    if (y_source) base.y_source = *y_source;
    if (basis) base.basis = *basis;
    if (output_dir) base.output_dir = *output_dir;
    if (x_sizes) base.x_sizes = *x_sizes;
    if (y_sizes) base.y_sizes = *y_sizes;
    if (K) base.K = *K;
    if (n_eval) base.n_eval = *n_eval;
    if (truncate) base.truncate = *truncate;
    if (threads) base.threads = *threads;
    if (seed) base.seed = *seed;
    return base;
  }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--problem", f.problem, "builtin problem id (1 or 2)");
  cmd->add_option("--m", f.m, "basis kernel order");
  cmd->add_option("--M", f.M, "quadrature kernel order");
  cmd->add_option("--x-source", f.x_source, "center family or point file");
  cmd->add_option("--y-source", f.y_source, "quadrature family or point file");
  cmd->add_option("--x-sizes", f.x_sizes, "center counts (increasing)")->delimiter(',');
  cmd->add_option("--y-sizes", f.y_sizes, "quadrature counts (increasing)")->delimiter(',');
  cmd->add_option("--K", f.K, "footprint / truncation constant");
  cmd->add_option("--basis", f.basis, "basis variant: global or local");
  cmd->add_flag("--truncate", f.truncate, "sparsify the stiffness matrix");
  cmd->add_option("--n-eval", f.n_eval, "evaluation point count");
  cmd->add_option("--out", f.output_dir, "output directory");
}

ExperimentConfig resolve_config(const std::string& config_path, const ConfigFlags& flags) {
  ExperimentConfig base;
  base.threads = 0;  // unset until a file value, flag, or SPHG_THREADS decides
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw FormatError("cannot open config file: " + config_path);
    json j;
    in >> j;
    base = ExperimentConfig::from_json(j);
  }
  ExperimentConfig merged = flags.merge(base);
  if (merged.threads <= 0) {
    if (const char* env = std::getenv("SPHG_THREADS")) merged.threads = std::atoi(env);
    if (merged.threads <= 0) merged.threads = 1;
  }
  return merged;
}

void print_steps(const ConvergenceRecord& rec) {
  for (const auto& s : rec.steps)
    std::printf("%s size=%zu h=%.4e error=%.6e kappa2=%.4e wall=%.0fms\n",
                rec.sweep.c_str(), s.size, s.h, s.error, s.kappa2, s.wall_ms);
  if (!rec.rate_skipped)
    std::printf("%s fitted rate %.3f (fit rms %.3f)\n", rec.sweep.c_str(), rec.fitted_rate,
                rec.fit_residual);
}

void write_record(const ConvergenceRecord& rec, const std::string& out_dir,
                  const std::string& stem) {
  const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
  std::filesystem::create_directories(dir);
  rec.write_csv(dir / (stem + ".csv"));
  rec.write_json(dir / (stem + ".json"));
}

int run_points(const std::string& family, std::size_t n, int level, const std::string& out) {
  PointSet pts = family == "icosahedral" ? PointSet::icosahedral(level)
                                         : make_nodes(family, n);
  pts.save(out);
  std::printf("points family=%s N=%zu -> %s\n", family.c_str(), pts.size(), out.c_str());
  return 0;
}

int run_weights(const std::string& points_file, const std::string& family, std::size_t n,
                int M, const std::string& out) {
  const PointSet Y = points_file.empty() ? make_nodes(family, n) : PointSet::load(points_file);
  const auto t0 = std::chrono::steady_clock::now();
  const QuadratureRule rule = compute_weights(Y, M);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  rule.save(out);
  double sum = rule.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rule.size())));
  std::printf("weights N_Y=%zu M=%d sum(w)=%.12f positive=%s wall=%.0fms -> %s\n",
              rule.size(), M, sum, rule.all_positive ? "yes" : "no", ms, out.c_str());
  return 0;
}

int run_solve(const ExperimentConfig& config, const std::string& x_file,
              const std::string& y_file, const std::string& basis_cache) {
  ExperimentConfig c = config;
  if (!x_file.empty()) c.x_source = x_file;
  if (!y_file.empty()) c.y_source = y_file;
  if (c.x_sizes.empty()) c.x_sizes = {0};
  if (c.y_sizes.empty()) c.y_sizes = {0};
  const bool x_generated = c.x_source == "fibonacci" || c.x_source == "icosahedral";
  const bool y_generated = c.y_source == "fibonacci" || c.y_source == "icosahedral";
  if (x_generated && c.x_sizes.front() == 0)
    throw std::invalid_argument("solve: give --x FILE or --x-source FAMILY with --x-n N");
  if (y_generated && c.y_sizes.front() == 0)
    throw std::invalid_argument("solve: give --y FILE or --y-source FAMILY with --y-n N");

  const PDEProblem problem = builtin_problem(c.problem);
  const PointSet X = x_generated ? make_nodes(c.x_source, c.x_sizes.front())
                                 : PointSet::load(c.x_source);
  const PointSet Y = y_generated ? make_nodes(c.y_source, c.y_sizes.front())
                                 : PointSet::load(c.y_source);
  const auto t0 = std::chrono::steady_clock::now();
  const LagrangeBasis basis = [&] {
    if (!basis_cache.empty() && std::filesystem::exists(basis_cache)) {
      LagrangeBasis loaded = LagrangeBasis::load(basis_cache, X);
      if (loaded.order() != c.m)
        throw DataError("basis cache '" + basis_cache + "' has kernel order " +
                        std::to_string(loaded.order()) + ", expected " + std::to_string(c.m));
      return loaded;
    }
    LagrangeBasis built = c.basis == "local" ? LagrangeBasis::build_local(X, c.m, c.K)
                                             : LagrangeBasis::build_global(X, c.m);
    if (!basis_cache.empty()) built.save(basis_cache);
    return built;
  }();
  const QuadratureRule rule = compute_weights(Y, c.M);
  StiffnessMatrix A = assemble_stiffness(basis, rule, problem);
  const Eigen::VectorXd rhs = assemble_rhs(basis, rule, problem);
  GalerkinSolution sol;
  double kappa;
  if (c.truncate) {
    const StiffnessMatrix At = truncate(A, X, c.K);
    sol = solve(At, rhs);
    kappa = condition_number(At);
  } else {
    sol = solve(A, rhs);
    kappa = condition_number(A);
  }
  RuleCache cache;
  const double err = relative_l2_error(basis, sol.coefficients, problem,
                                       cache.evaluation_rule(c.n_eval));
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  ConvergenceRecord rec;
  rec.sweep = "solve";
  rec.config = c;
  rec.steps.push_back(SweepStep{Y.size(), rule.metrics.mesh_norm, err, kappa, ms});
  rec.rate_skipped = true;
  rec.fitted_rate = std::numeric_limits<double>::quiet_NaN();
  rec.fit_residual = std::numeric_limits<double>::quiet_NaN();
  print_steps(rec);
  write_record(rec, c.output_dir, "solve");
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"meshless kernel Galerkin solver for elliptic problems on the unit sphere"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  app.add_option("--config", config_path, "JSON experiment config; flags override")
      ->expected(1);

  // points
  auto* points = app.add_subcommand("points", "generate a point file");
  std::string pt_family = "fibonacci", pt_out = "points.txt";
  std::size_t pt_n = 0;
  int pt_level = 0;
  points->add_option("--family", pt_family, "fibonacci or icosahedral");
  points->add_option("--n", pt_n, "point count (fibonacci)");
  points->add_option("--level", pt_level, "subdivision level (icosahedral)");
  points->add_option("--out", pt_out, "output file")->required();

  // weights
  auto* weights = app.add_subcommand("weights", "compute quadrature weights");
  std::string w_points, w_family = "fibonacci", w_out = "rule.txt";
  std::size_t w_n = 0;
  int w_M = 2;
  weights->add_option("--points", w_points, "node file");
  weights->add_option("--family", w_family, "node family if no file given");
  weights->add_option("--n", w_n, "node count if no file given");
  weights->add_option("--m", w_M, "quadrature kernel order");
  weights->add_option("--out", w_out, "output rule file")->required();

  // solve + sweeps share the config flags
  ConfigFlags solve_flags, sq_flags, sc_flags, si_flags, cs_flags;
  auto* solve_cmd = app.add_subcommand("solve", "solve one configuration");
  std::string solve_x, solve_y, solve_basis_cache;
  solve_cmd->add_option("--x", solve_x, "center point file");
  solve_cmd->add_option("--y", solve_y, "quadrature point file");
  solve_cmd->add_option("--basis-cache", solve_basis_cache,
                        "basis file reused between runs (built and saved if absent)");
  add_config_flags(solve_cmd, solve_flags);
  solve_cmd->add_option("--x-n", solve_flags.x_sizes, "center count")->delimiter(',');
  solve_cmd->add_option("--y-n", solve_flags.y_sizes, "quadrature count")->delimiter(',');

  auto* sq = app.add_subcommand("sweep-quadrature", "fixed X, varying Y");
  add_config_flags(sq, sq_flags);
  auto* sc = app.add_subcommand("sweep-centers", "fixed Y, varying X");
  add_config_flags(sc, sc_flags);
  auto* si = app.add_subcommand("sweep-interp", "interpolation convergence");
  add_config_flags(si, si_flags);
  auto* cs = app.add_subcommand("cond-study", "conditioning vs center density");
  add_config_flags(cs, cs_flags);

  std::optional<int> threads_flag;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--threads", threads_flag, "thread count to record (numerics unaffected)");
  app.add_option("--seed", seed_flag, "seed for randomized probe sets only");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::printf("%s\n", app.help().c_str());
      return 0;
    }
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    for (auto* f : {&solve_flags, &sq_flags, &sc_flags, &si_flags, &cs_flags}) {
      f->threads = threads_flag ? threads_flag : f->threads;
      f->seed = seed_flag ? seed_flag : f->seed;
    }
    if (points->parsed()) {
      if (pt_family == "fibonacci" && pt_n == 0)
        throw std::invalid_argument("points: --n required for fibonacci");
      return run_points(pt_family, pt_n, pt_level, pt_out);
    }
    if (weights->parsed()) {
      if (w_points.empty() && w_n == 0)
        throw std::invalid_argument("weights: give --points or --family/--n");
      return run_weights(w_points, w_family, w_n, w_M, w_out);
    }
    if (solve_cmd->parsed())
      return run_solve(resolve_config(config_path, solve_flags), solve_x, solve_y,
                       solve_basis_cache);

    RuleCache cache;
    if (sq->parsed()) {
      const ExperimentConfig c = resolve_config(config_path, sq_flags);
      const ConvergenceRecord rec = sweep_quadrature(c, cache);
      print_steps(rec);
      write_record(rec, c.output_dir, "sweep_quadrature");
      return 0;
    }
    if (sc->parsed()) {
      const ExperimentConfig c = resolve_config(config_path, sc_flags);
      const ConvergenceRecord rec = sweep_centers(c, cache);
      print_steps(rec);
      write_record(rec, c.output_dir, "sweep_centers");
      return 0;
    }
    if (si->parsed()) {
      const ExperimentConfig c = resolve_config(config_path, si_flags);
      const ConvergenceRecord rec = sweep_interpolation(c, cache);
      print_steps(rec);
      write_record(rec, c.output_dir, "sweep_interp");
      return 0;
    }
    if (cs->parsed()) {
      const ExperimentConfig c = resolve_config(config_path, cs_flags);
      ConvergenceRecord rec = sweep_centers(c, cache);
      rec.sweep = "cond-study";
      print_steps(rec);
      write_record(rec, c.output_dir, "cond_study");
      return 0;
    }
    std::fprintf(stderr, "no subcommand\n");
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace sphgal
