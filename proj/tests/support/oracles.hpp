#pragma once

// Independent reference machinery for the test suites: plain quadrature,
// finite differences, and random sphere sampling. Nothing here goes through
// the kernel-weight solvers it is used to check.

#include <Eigen/Core>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "sphgal/geometry.hpp"

namespace sphgal::test {

/// Gauss-Legendre nodes and weights on [-1, 1].
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n);

/// 2 pi int_{-1}^{1} g(t) dt by composite Gauss-Legendre; integrates zonal
/// kernels (log singularity at t=1 included) to ~1e-12 with enough panels.
double integrate_zonal(const std::function<double(double)>& g, int panels = 4000);

/// Equal-weight integration over a Fibonacci reference set.
double integrate_reference(const std::function<double(const SpherePoint&)>& f,
                           const PointSet& ref);

/// Shared 200k-node reference set (built once per process).
const PointSet& reference_nodes_200k();

/// Uniformly random unit vectors from a fixed-seed generator.
class RandomSphere {
 public:
  explicit RandomSphere(std::uint32_t seed) : rng_(seed) {}
  SpherePoint next();
  Eigen::Vector3d next_tangent(const SpherePoint& base);

 private:
  std::mt19937 rng_;
  std::normal_distribution<double> normal_;
};

/// Walks the great circle from p along unit tangent dir by angle s.
SpherePoint geodesic_step(const SpherePoint& p, const Eigen::Vector3d& dir, double s);

/// Centered geodesic finite difference of f at p along dir.
double geodesic_fd(const std::function<double(const SpherePoint&)>& f, const SpherePoint& p,
                   const Eigen::Vector3d& dir, double h = 1e-6);

}  // namespace sphgal::test
