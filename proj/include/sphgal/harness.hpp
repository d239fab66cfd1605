#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sphgal/galerkin.hpp"
#include "sphgal/rates.hpp"

namespace sphgal {

/// The two manufactured test problems; exact solution exp(cos theta) in both.
PDEProblem builtin_problem(int id);

/// Node generation by family name ("fibonacci", "icosahedral") or file path.
PointSet make_nodes(const std::string& source, std::size_t n);

/// sqrt(Q_E((u_h - u)^2)) / sqrt(Q_E(u^2)) over the evaluation rule E.
double relative_l2_error(const LagrangeBasis& basis,
                         const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                         const PDEProblem& problem, const QuadratureRule& E);

struct ExperimentConfig {
  int problem = 1;
  int m = 3;
  int M = 2;
  std::string x_source = "fibonacci";
  std::vector<std::size_t> x_sizes;
  std::string y_source = "icosahedral";
  std::vector<std::size_t> y_sizes;
  double K = 7.0;
  std::string basis = "global";  // "global" | "local"
  bool truncate = false;
  std::size_t n_eval = 62500;
  std::string output_dir;
  int threads = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void check() const;
};

struct SweepStep {
  std::size_t size = 0;
  double h = 0.0;
  double error = 0.0;
  double kappa2 = 0.0;
  double wall_ms = 0.0;
};

struct ConvergenceRecord {
  std::string sweep;
  ExperimentConfig config;
  std::vector<SweepStep> steps;
  double fitted_rate = 0.0;
  double fit_residual = 0.0;
  bool rate_skipped = false;

  std::string csv() const;
  nlohmann::json to_json() const;
  static ConvergenceRecord from_json(const nlohmann::json& j);

  /// Atomic writers (temp file + rename).
  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

/// Builds quadrature rules once per (family, size, M) and optionally persists
/// them as rule files under a cache directory.
class RuleCache {
 public:
  RuleCache() = default;
  explicit RuleCache(std::filesystem::path dir);

  const QuadratureRule& get(const std::string& family, std::size_t n, int M);
  const QuadratureRule& evaluation_rule(std::size_t n_eval);

  WeightSolveOptions solve_options;

 private:
  std::filesystem::path dir_;
  std::map<std::string, QuadratureRule> rules_;
};

/// Fixed X, increasing Y: error and conditioning against the quadrature density.
ConvergenceRecord sweep_quadrature(const ExperimentConfig& config, RuleCache& cache);

/// Fixed Y, increasing X: exposes the quadrature-dominated error regime.
ConvergenceRecord sweep_centers(const ExperimentConfig& config, RuleCache& cache);

/// Kernel interpolation of a smooth target; checks the doubling-trick rates.
ConvergenceRecord sweep_interpolation(const ExperimentConfig& config, RuleCache& cache);

}  // namespace sphgal
