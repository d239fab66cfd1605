#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <vector>

#include "sphgal/geometry.hpp"

namespace sphgal {

/// Kernel quadrature rule Q_Y: weights are the integrals of the Lagrange
/// functions of phi_M on Y, so the rule integrates V_{phi_M, Y} exactly.
struct QuadratureRule {
  PointSet nodes;
  Eigen::VectorXd weights;
  int kernel_order = 0;
  PointSetMetrics metrics;
  bool all_positive = false;
  double max_abs_weight = 0.0;

  std::size_t size() const { return nodes.size(); }

  /// Compensated (Kahan) weighted sum of one sample per node.
  double apply(const Eigen::Ref<const Eigen::VectorXd>& samples) const;

  double apply(const std::function<double(const SpherePoint&)>& f) const;

  void save(const std::filesystem::path& path) const;
  static QuadratureRule load(const std::filesystem::path& path);

  /// Wraps externally supplied weights (reference rules, tests).
  static QuadratureRule from_weights(PointSet nodes, Eigen::VectorXd weights,
                                     int kernel_order);
};

struct WeightSolveOptions {
  /// Bordered systems up to this size are factorized directly; larger ones go
  /// through projected GMRES with the local-Lagrange preconditioner.
  std::size_t direct_threshold = 4096;
  double tolerance = 1e-12;
  int max_iterations = 300;
  /// Minimum footprint size per node; the effective count grows with
  /// log^2(h_Y) to keep the iteration count mesh-independent.
  int preconditioner_neighbors = 80;
};

/// Solves the bordered moment system for the quadrature weights on Y.
QuadratureRule compute_weights(const PointSet& Y, int M,
                               const WeightSolveOptions& opts = {});

struct RateFit {
  double rate = 0.0;
  double residual = 0.0;
  bool skipped = false;  // all errors at rounding level
  std::vector<std::pair<double, double>> points;  // (h, error)
};

/// Fits |Q_Y(f) - exact| against h_Y over Fibonacci rules of the given sizes.
RateFit convergence_order(const std::function<double(const SpherePoint&)>& f, double exact,
                          const std::vector<std::size_t>& sizes, int M,
                          const WeightSolveOptions& opts = {});

}  // namespace sphgal
