#pragma once

#include <Eigen/Core>
#include <vector>

#include "sphgal/geometry.hpp"
#include "sphgal/kernels.hpp"

namespace sphgal {

/// Real orthonormal spherical harmonics of degree <= L, represented by
/// homogeneous harmonic polynomials in ambient Cartesian coordinates.
/// Indexing: (l, k) with 0 <= l <= L and 1 <= k <= 2l+1; flat index l^2 + k - 1.
class HarmonicBasis {
 public:
  explicit HarmonicBasis(int max_degree);

  static constexpr int kMaxSupportedDegree = 4;

  struct Term {
    double coef;
    int ex, ey, ez;
  };

  int max_degree() const { return degree_; }
  int size() const { return (degree_ + 1) * (degree_ + 1); }
  static int flat_index(int l, int k) { return l * l + k - 1; }

  double eval(int l, int k, const SpherePoint& x) const;

  /// Tangential projection of the ambient gradient of the polynomial
  /// representative.
  TangentVector surface_gradient(int l, int k, const SpherePoint& x) const;

  /// Integral of Y_{l,k} over S^2: sqrt(4 pi) for l = 0, else 0.
  double moment(int l, int k) const;

  /// Values at a block of points: out is n x size().
  void eval_matrix(const Eigen::Ref<const Eigen::Matrix3Xd>& pts, Eigen::MatrixXd& out) const;

  /// Projected gradient component tables, each n x size().
  void gradient_matrices(const Eigen::Ref<const Eigen::Matrix3Xd>& pts, Eigen::MatrixXd& gx,
                         Eigen::MatrixXd& gy, Eigen::MatrixXd& gz) const;

 private:
  void check_index(int l, int k) const;
  const std::vector<Term>& terms(int flat) const;

  int degree_;
};

}  // namespace sphgal
