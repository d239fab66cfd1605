#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <filesystem>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "sphgal/geometry.hpp"
#include "sphgal/harmonics.hpp"
#include "sphgal/kernels.hpp"

namespace sphgal {

/// Bordered kernel system [[Phi, P], [P^T, 0]] for centers X, factorized once
/// with partial pivoting and solved against arbitrary right-hand sides.
class BorderedSystem {
 public:
  BorderedSystem(const PointSet& X, const SurfaceSplineKernel& kernel,
                 const HarmonicBasis& harmonics);

  Eigen::Index n() const { return n_; }
  Eigen::Index poly_dim() const { return k_; }

  /// Solves for [top; bottom] right-hand sides; returns the stacked solution
  /// ((n + k) x r): kernel coefficients on top, polynomial underneath.
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& top,
                        const Eigen::Ref<const Eigen::MatrixXd>& bottom) const;

 private:
  Eigen::Index n_, k_;
  Eigen::MatrixXd mat_;
  std::unique_ptr<Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>>> lu_;
};

struct LagrangeFunction {
  enum class Variant { global, local };
  int center = 0;
  std::vector<int> support;  // empty for the global variant (support is all of X)
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  Variant variant = Variant::global;
};

/// The Lagrange basis {chi_xi} of V_{phi_m, X}: every function is 1 at its own
/// center and 0 at the others. The local variant restricts each function to
/// the centers within K h_X |log h_X| of its own.
class LagrangeBasis {
 public:
  using Variant = LagrangeFunction::Variant;

  static LagrangeBasis build_global(const PointSet& X, int m);
  static LagrangeBasis build_local(const PointSet& X, int m, double K);

  const PointSet& centers() const { return X_; }
  int order() const { return m_; }
  Variant variant() const { return variant_; }
  double footprint_constant() const { return K_; }
  double mesh_norm() const { return h_; }
  std::size_t size() const { return X_.size(); }

  double value(int xi, const SpherePoint& x) const;
  TangentVector gradient(int xi, const SpherePoint& x) const;

  /// chi values and projected gradient components at a block of points.
  /// Each output is (#points x N); pass nullptr to skip gradients.
  void tables(const Eigen::Ref<const Eigen::Matrix3Xd>& pts, Eigen::MatrixXd* V,
              Eigen::MatrixXd* Gx, Eigen::MatrixXd* Gy, Eigen::MatrixXd* Gz) const;

  /// (distance, |value|) pairs for chi_xi over the probe set, sorted by distance.
  std::vector<std::pair<double, double>> decay_profile(int xi, const PointSet& probes) const;

  LagrangeFunction function(int xi) const;
  std::size_t support_size(int xi) const;

  void save(const std::filesystem::path& path) const;
  static LagrangeBasis load(const std::filesystem::path& path, const PointSet& X);

 private:
  LagrangeBasis(PointSet X, int m, Variant variant);

  PointSet X_;
  int m_;
  SurfaceSplineKernel kernel_;
  HarmonicBasis harmonics_;
  Variant variant_;
  double K_ = 0.0;
  double h_ = 0.0;

  // Kernel coefficients, one column per center; dense for the global build,
  // sparse (footprint columns) for the local one. Beta is (m^2 x N).
  Eigen::MatrixXd alpha_dense_;
  Eigen::SparseMatrix<double> alpha_sparse_;
  Eigen::MatrixXd beta_;
  std::vector<std::vector<int>> supports_;  // local variant only
};

/// Kernel interpolant built from samples on X; reproduces Pi_{m-1}.
class Interpolant {
 public:
  Interpolant(PointSet X, int m, Eigen::VectorXd alpha, Eigen::VectorXd beta);

  double value(const SpherePoint& x) const;
  TangentVector gradient(const SpherePoint& x) const;
  Eigen::VectorXd values(const Eigen::Ref<const Eigen::Matrix3Xd>& pts) const;

  const Eigen::VectorXd& alpha() const { return alpha_; }
  const Eigen::VectorXd& beta() const { return beta_; }

 private:
  PointSet X_;
  int m_;
  SurfaceSplineKernel kernel_;
  HarmonicBasis harmonics_;
  Eigen::VectorXd alpha_, beta_;
};

Interpolant interpolate(const PointSet& X, int m, const Eigen::VectorXd& samples);

}  // namespace sphgal
