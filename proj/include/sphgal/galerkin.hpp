#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "sphgal/geometry.hpp"
#include "sphgal/lagrange.hpp"
#include "sphgal/quadrature.hpp"

namespace sphgal {

using ScalarField = std::function<double(const SpherePoint&)>;

/// -div(a grad u) + b u = f on S^2 with scalar diffusion a >= a_lower > 0 and
/// reaction b >= b_lower > 0.
struct PDEProblem {
  std::string name;
  ScalarField a;
  ScalarField b;
  ScalarField f;
  std::optional<ScalarField> exact_u;
  double a_lower = 0.0;
  double b_lower = 0.0;

  /// Checks the declared lower bounds against sampled minima on a probe set.
  void validate(std::size_t probe_count = 10000) const;
};

/// Symmetric stiffness operator in the Lagrange basis, dense or CSR.
class StiffnessMatrix {
 public:
  enum class Variant { discretized, truncated, local, truncated_local };

  struct Info {
    int m = 0;      // basis kernel order
    int M = 0;      // quadrature kernel order
    double basis_K = 0.0;
    double truncation_K = 0.0;
    double h_X = 0.0;
    std::string rule_id;
  };

  static StiffnessMatrix dense(Eigen::MatrixXd A, Variant variant, Info info);
  static StiffnessMatrix sparse(Eigen::SparseMatrix<double, Eigen::RowMajor> A,
                                Variant variant, Info info);

  Eigen::Index dim() const { return dim_; }
  bool is_dense() const { return dense_storage_; }
  Variant variant() const { return variant_; }
  const Info& info() const { return info_; }

  const Eigen::MatrixXd& dense_matrix() const;
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& sparse_matrix() const;

  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd diagonal() const;
  std::size_t nonzeros() const;
  double mean_row_nonzeros() const;

  /// MatrixMarket: array format when dense, coordinate when sparse.
  void export_matrix_market(const std::filesystem::path& path) const;

 private:
  StiffnessMatrix() = default;
  bool dense_storage_ = true;
  Eigen::Index dim_ = 0;
  Variant variant_ = Variant::discretized;
  Info info_;
  Eigen::MatrixXd D_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> S_;
};

/// A^Y from the quadrature rule: grad-grad and value-value tables contracted
/// against the weighted coefficient fields.
StiffnessMatrix assemble_stiffness(const LagrangeBasis& basis, const QuadratureRule& rule,
                                   const PDEProblem& problem);

Eigen::VectorXd assemble_rhs(const LagrangeBasis& basis, const QuadratureRule& rule,
                             const PDEProblem& problem);

/// Zeroes entries with dist(xi, eta) > K h_X |log h_X|; result is CSR.
StiffnessMatrix truncate(const StiffnessMatrix& A, const PointSet& X, double K);

struct GalerkinSolution {
  Eigen::VectorXd coefficients;
  double residual = 0.0;
};

/// Dense: SPD factorization (one refinement step). Sparse: diagonally
/// preconditioned conjugate gradients, relative tolerance 1e-12.
GalerkinSolution solve(const StiffnessMatrix& A, const Eigen::Ref<const Eigen::VectorXd>& rhs);

/// lambda_max by power iteration, lambda_min by inverse iteration on the
/// factorization; tolerance 1e-6 on the eigenvalue estimates.
double condition_number(const StiffnessMatrix& A);

Eigen::VectorXd evaluate_solution(const LagrangeBasis& basis,
                                  const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                                  const Eigen::Ref<const Eigen::Matrix3Xd>& pts);

/// Power-iteration estimate of ||A - B||_2 for symmetric operators.
double spectral_norm_diff(const StiffnessMatrix& A, const StiffnessMatrix& B,
                          double tol = 1e-6, int max_iter = 10000);

}  // namespace sphgal
