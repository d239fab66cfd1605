#pragma once

#include <Eigen/Core>

#include "sphgal/geometry.hpp"

namespace sphgal {

/// A tangent vector to S^2, stored in ambient Cartesian coordinates.
struct TangentVector {
  SpherePoint base;
  Eigen::Vector3d components = Eigen::Vector3d::Zero();
};

/// Restricted surface spline phi_m(t) = (-1)^m (1-t)^(m-1) log(1-t), m >= 2,
/// evaluated as a function of the dot product t = x . y.
class SurfaceSplineKernel {
 public:
  explicit SurfaceSplineKernel(int order, double singular_clamp = 1e-14);

  int order() const { return m_; }
  double clamp() const { return eps_; }

  double eval(double t) const;

  /// d/dt of eval; 0 inside the clamp window (the surface-gradient limit).
  double deriv(double t) const;

  /// Covariant gradient of phi_m((.) . tau) at zeta:
  /// phi'(zeta . tau) (I - zeta zeta^T) tau.
  TangentVector surface_gradient(const SpherePoint& zeta, const SpherePoint& tau) const;

  /// Rotation-invariant moment: integral of phi_m(x . zeta) over S^2.
  double moment() const;

  /// Elementwise phi_m over a matrix of dot products, in place.
  void eval_inplace(Eigen::MatrixXd& t) const;

  /// Elementwise phi_m' over a matrix of dot products, in place.
  void deriv_inplace(Eigen::MatrixXd& t) const;

 private:
  int m_;
  double eps_;
};

}  // namespace sphgal
