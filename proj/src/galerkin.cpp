#include "sphgal/galerkin.hpp"

#include <Eigen/Cholesky>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sphgal/errors.hpp"

namespace sphgal {

namespace {

constexpr Eigen::Index kAssemblyBlock = 1024;
constexpr std::size_t kSparseNonzeroGuard = 50'000'000;

// Deterministic start vector for the eigenvalue iterations; user-facing
// seeds never reach it.
Eigen::VectorXd iteration_seed(Eigen::Index n) {
  Eigen::VectorXd v(n);
  std::uint64_t s = 0x9e3779b97f4a7c15ull;
  for (Eigen::Index i = 0; i < n; ++i) {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    v(i) = static_cast<double>(s >> 11) / static_cast<double>(1ull << 53) - 0.5;
  }
  v.normalize();
  return v;
}

Eigen::VectorXd sample_field(const ScalarField& f, const PointSet& pts) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = f(pts.point(i));
  return out;
}

}  // namespace

void PDEProblem::validate(std::size_t probe_count) const {
  if (!a || !b || !f) throw DataError("PDEProblem '" + name + "': missing coefficient field");
  if (!(a_lower > 0.0) || !(b_lower > 0.0))
    throw DataError("PDEProblem '" + name + "': lower bounds must be positive");
  const PointSet probes = PointSet::fibonacci(probe_count);
  double amin = std::numeric_limits<double>::infinity(), bmin = amin;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    amin = std::min(amin, a(probes.point(i)));
    bmin = std::min(bmin, b(probes.point(i)));
  }
  if (!(amin > a_lower))
    throw DataError("PDEProblem '" + name + "': sampled min of a (" + std::to_string(amin) +
                    ") does not exceed declared bound " + std::to_string(a_lower));
  if (!(bmin > b_lower))
    throw DataError("PDEProblem '" + name + "': sampled min of b (" + std::to_string(bmin) +
                    ") does not exceed declared bound " + std::to_string(b_lower));
}

// ---------------------------------------------------------------------------
// StiffnessMatrix

StiffnessMatrix StiffnessMatrix::dense(Eigen::MatrixXd A, Variant variant, Info info) {
  StiffnessMatrix s;
  s.dense_storage_ = true;
  s.dim_ = A.rows();
  s.D_ = std::move(A);
  s.variant_ = variant;
  s.info_ = std::move(info);
  if ((s.D_.diagonal().array() <= 0.0).any())
    throw NotPositiveDefiniteError("stiffness matrix has a nonpositive diagonal entry");
  return s;
}

StiffnessMatrix StiffnessMatrix::sparse(Eigen::SparseMatrix<double, Eigen::RowMajor> A,
                                        Variant variant, Info info) {
  StiffnessMatrix s;
  s.dense_storage_ = false;
  s.dim_ = A.rows();
  s.S_ = std::move(A);
  s.variant_ = variant;
  s.info_ = std::move(info);
  const Eigen::VectorXd d = s.diagonal();
  if ((d.array() <= 0.0).any())
    throw NotPositiveDefiniteError("stiffness matrix has a nonpositive diagonal entry");
  return s;
}

const Eigen::MatrixXd& StiffnessMatrix::dense_matrix() const {
  if (!dense_storage_) throw std::logic_error("StiffnessMatrix: not dense");
  return D_;
}

const Eigen::SparseMatrix<double, Eigen::RowMajor>& StiffnessMatrix::sparse_matrix() const {
  if (dense_storage_) throw std::logic_error("StiffnessMatrix: not sparse");
  return S_;
}

Eigen::VectorXd StiffnessMatrix::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  if (v.size() != dim_) throw std::invalid_argument("StiffnessMatrix::apply: size mismatch");
  if (dense_storage_) return D_.selfadjointView<Eigen::Lower>() * v;
  return S_ * v;
}

Eigen::VectorXd StiffnessMatrix::diagonal() const {
  if (dense_storage_) return D_.diagonal();
  Eigen::VectorXd d(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i) d(i) = S_.coeff(i, i);
  return d;
}

std::size_t StiffnessMatrix::nonzeros() const {
  if (dense_storage_) return static_cast<std::size_t>(dim_) * static_cast<std::size_t>(dim_);
  return static_cast<std::size_t>(S_.nonZeros());
}

double StiffnessMatrix::mean_row_nonzeros() const {
  return static_cast<double>(nonzeros()) / static_cast<double>(dim_);
}

void StiffnessMatrix::export_matrix_market(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write matrix file: " + path.string());
  char buf[64];
  if (dense_storage_) {
    out << "%%MatrixMarket matrix array real symmetric\n";
    out << dim_ << " " << dim_ << "\n";
    for (Eigen::Index j = 0; j < dim_; ++j)
      for (Eigen::Index i = j; i < dim_; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", D_(i, j));
        out << buf;
      }
  } else {
    std::size_t lower = 0;
    for (Eigen::Index r = 0; r < S_.outerSize(); ++r)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(S_, r); it; ++it)
        if (it.col() <= it.row()) ++lower;
    out << "%%MatrixMarket matrix coordinate real symmetric\n";
    out << dim_ << " " << dim_ << " " << lower << "\n";
    for (Eigen::Index r = 0; r < S_.outerSize(); ++r)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(S_, r); it; ++it)
        if (it.col() <= it.row()) {
          std::snprintf(buf, sizeof(buf), "%lld %lld %.17g\n",
                        static_cast<long long>(it.row() + 1),
                        static_cast<long long>(it.col() + 1), it.value());
          out << buf;
        }
  }
}

// ---------------------------------------------------------------------------
// Assembly

StiffnessMatrix assemble_stiffness(const LagrangeBasis& basis, const QuadratureRule& rule,
                                   const PDEProblem& problem) {
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  const Eigen::Index ny = static_cast<Eigen::Index>(rule.size());
  if (!rule.all_positive)
    std::fprintf(stderr,
                 "[sphgal] warning: quadrature rule '%s' has nonpositive weights; "
                 "stability assumptions may not hold\n",
                 rule.nodes.label().c_str());

  const Eigen::VectorXd aw =
      sample_field(problem.a, rule.nodes).cwiseProduct(rule.weights);
  const Eigen::VectorXd bw =
      sample_field(problem.b, rule.nodes).cwiseProduct(rule.weights);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd V, Gx, Gy, Gz, W;
  for (Eigen::Index p0 = 0; p0 < ny; p0 += kAssemblyBlock) {
    const Eigen::Index nb = std::min(kAssemblyBlock, ny - p0);
    basis.tables(rule.nodes.coords().middleCols(p0, nb), &V, &Gx, &Gy, &Gz);
    W.noalias() = bw.segment(p0, nb).asDiagonal() * V;
    A.noalias() += V.transpose() * W;
    const Eigen::MatrixXd* g[3] = {&Gx, &Gy, &Gz};
    for (int c = 0; c < 3; ++c) {
      W.noalias() = aw.segment(p0, nb).asDiagonal() * (*g[c]);
      A.noalias() += g[c]->transpose() * W;
    }
  }
  // One value per unordered pair: the lower triangle is the truth.
  A.triangularView<Eigen::StrictlyUpper>() = A.transpose();

  StiffnessMatrix::Info info;
  info.m = basis.order();
  info.M = rule.kernel_order;
  info.basis_K = basis.footprint_constant();
  info.h_X = basis.mesh_norm();
  info.rule_id = rule.nodes.label() + ":M=" + std::to_string(rule.kernel_order);
  const auto variant = basis.variant() == LagrangeBasis::Variant::global
                           ? StiffnessMatrix::Variant::discretized
                           : StiffnessMatrix::Variant::local;
  return StiffnessMatrix::dense(std::move(A), variant, std::move(info));
}

Eigen::VectorXd assemble_rhs(const LagrangeBasis& basis, const QuadratureRule& rule,
                             const PDEProblem& problem) {
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  const Eigen::Index ny = static_cast<Eigen::Index>(rule.size());
  const Eigen::VectorXd fw =
      sample_field(problem.f, rule.nodes).cwiseProduct(rule.weights);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd V;
  for (Eigen::Index p0 = 0; p0 < ny; p0 += kAssemblyBlock) {
    const Eigen::Index nb = std::min(kAssemblyBlock, ny - p0);
    basis.tables(rule.nodes.coords().middleCols(p0, nb), &V, nullptr, nullptr, nullptr);
    rhs.noalias() += V.transpose() * fw.segment(p0, nb);
  }
  return rhs;
}

StiffnessMatrix truncate(const StiffnessMatrix& A, const PointSet& X, double K) {
  if (A.variant() != StiffnessMatrix::Variant::discretized &&
      A.variant() != StiffnessMatrix::Variant::local)
    throw std::invalid_argument("truncate: input must be a discretized or local matrix");
  if (!A.is_dense()) throw std::invalid_argument("truncate: input must be dense");
  const Eigen::Index n = A.dim();
  if (static_cast<std::size_t>(n) != X.size())
    throw std::invalid_argument("truncate: point set does not match matrix dimension");
  const double h = A.info().h_X;
  const double radius = K * h * std::abs(std::log(h));
  const bool keep_all = radius >= std::acos(-1.0);

  const Eigen::MatrixXd& D = A.dense_matrix();
  std::vector<Eigen::Triplet<double>> trips;
  std::size_t nnz = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const SpherePoint pi = X.point(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j)
      if (keep_all ||
          geodesic_distance(pi, X.point(static_cast<std::size_t>(j))) <= radius) {
        trips.emplace_back(static_cast<int>(i), static_cast<int>(j), D(i, j));
        if (++nnz > kSparseNonzeroGuard)
          throw std::invalid_argument("truncate: nonzero count exceeds the sparse guard");
      }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> S(n, n);
  S.setFromTriplets(trips.begin(), trips.end());
  S.makeCompressed();

  StiffnessMatrix::Info info = A.info();
  info.truncation_K = K;
  const auto variant = A.variant() == StiffnessMatrix::Variant::discretized
                           ? StiffnessMatrix::Variant::truncated
                           : StiffnessMatrix::Variant::truncated_local;
  return StiffnessMatrix::sparse(std::move(S), variant, std::move(info));
}

// ---------------------------------------------------------------------------
// Solvers

GalerkinSolution solve(const StiffnessMatrix& A, const Eigen::Ref<const Eigen::VectorXd>& rhs) {
  if (rhs.size() != A.dim()) throw std::invalid_argument("solve: rhs size mismatch");
  GalerkinSolution sol;
  const double rhs_norm = std::max(rhs.norm(), std::numeric_limits<double>::min());
  if (A.is_dense()) {
    Eigen::LLT<Eigen::MatrixXd> llt(A.dense_matrix());
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError(
          "stiffness solve: matrix is not positive definite; increase the quadrature "
          "density N_Y or the footprint/truncation constant K");
    sol.coefficients = llt.solve(rhs);
    // One refinement step keeps the residual near rounding level.
    Eigen::VectorXd r = rhs - A.apply(sol.coefficients);
    sol.coefficients += llt.solve(r);
    sol.residual = (rhs - A.apply(sol.coefficients)).norm() / rhs_norm;
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double, Eigen::RowMajor>,
                             Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(10 * A.dim());
    cg.compute(A.sparse_matrix());
    sol.coefficients = cg.solve(rhs);
    if (cg.info() != Eigen::Success)
      throw NotPositiveDefiniteError(
          "stiffness solve: conjugate gradients did not converge; increase the quadrature "
          "density N_Y or the footprint/truncation constant K");
    sol.residual = (rhs - A.apply(sol.coefficients)).norm() / rhs_norm;
  }
  return sol;
}

namespace {

double power_iteration(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op,
                       Eigen::Index n, double tol, int max_iter) {
  Eigen::VectorXd v = iteration_seed(n);
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = op(v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double prev = lambda;
    lambda = norm;
    if (it > 0 && std::abs(lambda - prev) <= tol * std::abs(lambda)) break;
  }
  return lambda;
}

}  // namespace

double condition_number(const StiffnessMatrix& A) {
  const Eigen::Index n = A.dim();
  const double tol = 1e-6;
  const int maxit = 20000;
  const double lmax =
      power_iteration([&](const Eigen::VectorXd& v) { return A.apply(v); }, n, tol, maxit);

  double lmin_inv = 0.0;
  if (A.is_dense()) {
    Eigen::LLT<Eigen::MatrixXd> llt(A.dense_matrix());
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefiniteError("condition_number: matrix is not positive definite");
    lmin_inv = power_iteration(
        [&](const Eigen::VectorXd& v) { return llt.solve(v).eval(); }, n, tol, maxit);
  } else {
    Eigen::SparseMatrix<double> col = A.sparse_matrix();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(col);
    if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().array() <= 0.0).any())
      throw NotPositiveDefiniteError("condition_number: matrix is not positive definite");
    lmin_inv = power_iteration(
        [&](const Eigen::VectorXd& v) { return ldlt.solve(v).eval(); }, n, tol, maxit);
  }
  if (lmin_inv == 0.0)
    throw NotPositiveDefiniteError("condition_number: inverse iteration collapsed");
  return lmax * lmin_inv;
}

Eigen::VectorXd evaluate_solution(const LagrangeBasis& basis,
                                  const Eigen::Ref<const Eigen::VectorXd>& coefficients,
                                  const Eigen::Ref<const Eigen::Matrix3Xd>& pts) {
  if (coefficients.size() != static_cast<Eigen::Index>(basis.size()))
    throw std::invalid_argument("evaluate_solution: coefficient size mismatch");
  const Eigen::Index np = pts.cols();
  Eigen::VectorXd out(np);
  Eigen::MatrixXd V;
  for (Eigen::Index p0 = 0; p0 < np; p0 += kAssemblyBlock) {
    const Eigen::Index nb = std::min(kAssemblyBlock, np - p0);
    basis.tables(pts.middleCols(p0, nb), &V, nullptr, nullptr, nullptr);
    out.segment(p0, nb).noalias() = V * coefficients;
  }
  return out;
}

double spectral_norm_diff(const StiffnessMatrix& A, const StiffnessMatrix& B, double tol,
                          int max_iter) {
  if (A.dim() != B.dim()) throw std::invalid_argument("spectral_norm_diff: size mismatch");
  return power_iteration(
      [&](const Eigen::VectorXd& v) { return (A.apply(v) - B.apply(v)).eval(); }, A.dim(),
      tol, max_iter);
}

}  // namespace sphgal
