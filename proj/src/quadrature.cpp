#include "sphgal/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sphgal/errors.hpp"
#include "sphgal/harmonics.hpp"
#include "sphgal/kernels.hpp"
#include "sphgal/lagrange.hpp"
#include "sphgal/rates.hpp"

namespace sphgal {

namespace {

double kahan_dot(const Eigen::Ref<const Eigen::VectorXd>& a,
                 const Eigen::Ref<const Eigen::VectorXd>& b) {
  double s = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = a(i) * b(i) - comp;
    const double t = s + v;
    comp = (t - s) - v;
    s = t;
  }
  return s;
}

// y = Phi v computed tile by tile; the kernel matrix is never stored.
class TiledKernelOperator {
 public:
  TiledKernelOperator(const Eigen::Matrix3Xd& coords, const SurfaceSplineKernel& kernel)
      : coords_(coords), kernel_(kernel) {}

  void apply(const Eigen::VectorXd& v, Eigen::VectorXd& y) const {
    const Eigen::Index n = coords_.cols();
    constexpr Eigen::Index nr = 256, nc = 8192;
    y.setZero(n);
    for (Eigen::Index r = 0; r < n; r += nr) {
      const Eigen::Index mr = std::min(nr, n - r);
      for (Eigen::Index c = 0; c < n; c += nc) {
        const Eigen::Index mc = std::min(nc, n - c);
        tile_.resize(mr, mc);
        tile_.noalias() = coords_.middleCols(r, mr).transpose() * coords_.middleCols(c, mc);
        kernel_.eval_inplace(tile_);
        y.segment(r, mr).noalias() += tile_ * v.segment(c, mc);
      }
    }
  }

 private:
  const Eigen::Matrix3Xd& coords_;
  const SurfaceSplineKernel& kernel_;
  mutable Eigen::MatrixXd tile_;
};

// Orthogonal projector onto the complement of the harmonic columns P.
class PolyProjector {
 public:
  explicit PolyProjector(Eigen::MatrixXd P) : P_(std::move(P)) {
    llt_.compute(P_.transpose() * P_);
    if (llt_.info() != Eigen::Success)
      throw DegenerateGeometryError("weight system: harmonic block is rank deficient");
  }

  void project(Eigen::VectorXd& v) const {
    v.noalias() -= P_ * llt_.solve(P_.transpose() * v);
  }

  Eigen::VectorXd particular(const Eigen::VectorXd& moments) const {
    return P_ * llt_.solve(moments);
  }

 private:
  Eigen::MatrixXd P_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Approximate inverse from truncated Lagrange functions on k-nearest
// footprints; columns carry the local kernel coefficients.
Eigen::SparseMatrix<double> local_lagrange_preconditioner(const PointSet& Y,
                                                          const SurfaceSplineKernel& kernel,
                                                          const HarmonicBasis& harmonics,
                                                          int neighbors) {
  const Eigen::Index n = static_cast<Eigen::Index>(Y.size());
  const Eigen::Index k = harmonics.size();
  const std::size_t n_loc =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(neighbors, 4 * static_cast<int>(k))),
                            Y.size());
  SphereGrid grid(Y);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * n_loc);
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(n_loc));
  for (Eigen::Index zeta = 0; zeta < n; ++zeta) {
    const auto idx = grid.k_nearest(Y.point(static_cast<std::size_t>(zeta)), n_loc);
    const Eigen::Index nl = static_cast<Eigen::Index>(idx.size());
    Eigen::Index self = -1;
    for (Eigen::Index j = 0; j < nl; ++j) {
      pts.col(j) = Y.coords().col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
      if (idx[static_cast<std::size_t>(j)] == static_cast<std::size_t>(zeta)) self = j;
    }
    Eigen::MatrixXd A(nl + k, nl + k);
    Eigen::MatrixXd phi(nl, nl);
    phi.noalias() = pts.leftCols(nl).transpose() * pts.leftCols(nl);
    kernel.eval_inplace(phi);
    A.topLeftCorner(nl, nl) = phi;
    Eigen::MatrixXd P;
    harmonics.eval_matrix(pts.leftCols(nl), P);
    A.topRightCorner(nl, k) = P;
    A.bottomLeftCorner(k, nl) = P.transpose();
    A.bottomRightCorner(k, k).setZero();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nl + k);
    rhs(self) = 1.0;
    Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(A);
    const Eigen::VectorXd sol = lu.solve(rhs);
    for (Eigen::Index j = 0; j < nl; ++j)
      trips.emplace_back(static_cast<int>(idx[static_cast<std::size_t>(j)]),
                         static_cast<int>(zeta), sol(j));
  }
  Eigen::SparseMatrix<double> C(n, n);
  C.setFromTriplets(trips.begin(), trips.end());
  C.makeCompressed();
  return C;
}

struct GmresResult {
  Eigen::VectorXd x;
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Right-preconditioned GMRES with modified Gram-Schmidt and one
// reorthogonalization pass. Deterministic for fixed inputs.
template <typename Op, typename Precond>
GmresResult gmres(const Op& op, const Precond& precond, const Eigen::VectorXd& b, double tol,
                  int max_iter) {
  const Eigen::Index n = b.size();
  GmresResult res;
  const double beta = b.norm();
  if (beta == 0.0) {
    res.x = Eigen::VectorXd::Zero(n);
    res.converged = true;
    return res;
  }
  const int m = std::min<int>(max_iter, static_cast<int>(n));
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g = Eigen::VectorXd::Zero(m + 1);
  V.col(0) = b / beta;
  g(0) = beta;

  int j = 0;
  Eigen::VectorXd w(n), t(n);
  for (; j < m; ++j) {
    t = precond(V.col(j));
    op(t, w);
    for (int i = 0; i <= j; ++i) {
      const double h = V.col(i).dot(w);
      H(i, j) = h;
      w.noalias() -= h * V.col(i);
    }
    for (int i = 0; i <= j; ++i) {  // reorthogonalize
      const double h = V.col(i).dot(w);
      H(i, j) += h;
      w.noalias() -= h * V.col(i);
    }
    H(j + 1, j) = w.norm();
    if (H(j + 1, j) > 0.0) V.col(j + 1) = w / H(j + 1, j);

    for (int i = 0; i < j; ++i) {
      const double tmp = cs(i) * H(i, j) + sn(i) * H(i + 1, j);
      H(i + 1, j) = -sn(i) * H(i, j) + cs(i) * H(i + 1, j);
      H(i, j) = tmp;
    }
    const double denom = std::hypot(H(j, j), H(j + 1, j));
    cs(j) = denom == 0.0 ? 1.0 : H(j, j) / denom;
    sn(j) = denom == 0.0 ? 0.0 : H(j + 1, j) / denom;
    H(j, j) = denom;
    H(j + 1, j) = 0.0;
    g(j + 1) = -sn(j) * g(j);
    g(j) = cs(j) * g(j);

    res.relative_residual = std::abs(g(j + 1)) / beta;
    if (res.relative_residual <= tol) {
      ++j;
      res.converged = true;
      break;
    }
  }
  const int dim = std::min(j, m);
  Eigen::VectorXd y = H.topLeftCorner(dim, dim)
                          .triangularView<Eigen::Upper>()
                          .solve(g.head(dim));
  res.x = precond(V.leftCols(dim) * y);
  res.iterations = dim;
  return res;
}

}  // namespace

double QuadratureRule::apply(const Eigen::Ref<const Eigen::VectorXd>& samples) const {
  if (samples.size() != weights.size())
    throw std::invalid_argument("QuadratureRule::apply: expected " +
                                std::to_string(weights.size()) + " samples, got " +
                                std::to_string(samples.size()));
  return kahan_dot(weights, samples);
}

double QuadratureRule::apply(const std::function<double(const SpherePoint&)>& f) const {
  Eigen::VectorXd s(static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i)
    s(static_cast<Eigen::Index>(i)) = f(nodes.point(i));
  return apply(s);
}

void QuadratureRule::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write rule file: " + path.string());
  out << kernel_order << " " << size() << "\n";
  char buf[128];
  for (std::size_t i = 0; i < size(); ++i) {
    const auto c = nodes.coords().col(static_cast<Eigen::Index>(i));
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", c.x(), c.y(), c.z(),
                  weights(static_cast<Eigen::Index>(i)));
    out << buf;
  }
}

QuadratureRule QuadratureRule::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open rule file: " + path.string());
  int M = 0;
  std::size_t n = 0;
  if (!(in >> M >> n) || n == 0)
    throw FormatError(path.string() + ":1: expected header 'M N_Y'");
  std::vector<SpherePoint> pts;
  pts.reserve(n);
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double vals[4];
    for (double& v : vals) {
      std::string tok;
      if (!(in >> tok))
        throw FormatError(path.string() + ": truncated at node " + std::to_string(i));
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end == nullptr || *end != '\0')
        throw FormatError(path.string() + ": cannot parse '" + tok + "' at node " +
                          std::to_string(i));
      if (!std::isfinite(v))
        throw DataError(path.string() + ": non-finite value at node " + std::to_string(i));
    }
    pts.emplace_back(vals[0], vals[1], vals[2]);
    w(static_cast<Eigen::Index>(i)) = vals[3];
  }
  return from_weights(PointSet(std::move(pts), path.stem().string()), std::move(w), M);
}

QuadratureRule QuadratureRule::from_weights(PointSet nodes, Eigen::VectorXd weights,
                                            int kernel_order) {
  if (static_cast<std::size_t>(weights.size()) != nodes.size())
    throw std::invalid_argument("from_weights: one weight per node required");
  QuadratureRule rule{std::move(nodes), std::move(weights), kernel_order, {}, false, 0.0};
  rule.metrics = compute_metrics(rule.nodes);
  rule.all_positive = (rule.weights.array() > 0.0).all();
  rule.max_abs_weight = rule.weights.cwiseAbs().maxCoeff();
  return rule;
}

QuadratureRule compute_weights(const PointSet& Y, int M, const WeightSolveOptions& opts) {
  if (M < 2) throw std::invalid_argument("compute_weights: kernel order must be >= 2");
  const SurfaceSplineKernel kernel(M);
  const HarmonicBasis harmonics(M - 1);
  const Eigen::Index n = static_cast<Eigen::Index>(Y.size());
  const Eigen::Index k = harmonics.size();
  if (n < k)
    throw std::invalid_argument("compute_weights: need at least M^2 = " + std::to_string(k) +
                                " nodes");

  Eigen::VectorXd moments(k);
  for (int l = 0, f = 0; l <= harmonics.max_degree(); ++l)
    for (int kk = 1; kk <= 2 * l + 1; ++kk, ++f) moments(f) = harmonics.moment(l, kk);
  const double kernel_moment = kernel.moment();

  Eigen::VectorXd w;
  if (Y.size() + static_cast<std::size_t>(k) <= opts.direct_threshold) {
    BorderedSystem sys(Y, kernel, harmonics);
    const Eigen::MatrixXd sol =
        sys.solve(Eigen::VectorXd::Constant(n, kernel_moment), moments);
    w = sol.topRows(n);
  } else {
    Eigen::MatrixXd P;
    harmonics.eval_matrix(Y.coords(), P);
    PolyProjector proj(std::move(P));
    const Eigen::VectorXd w_particular = proj.particular(moments);

    TiledKernelOperator phi(Y.coords(), kernel);
    Eigen::VectorXd rhs(n);
    phi.apply(w_particular, rhs);
    rhs = Eigen::VectorXd::Constant(n, kernel_moment) - rhs;
    proj.project(rhs);

    // Footprints must track the Lagrange decay length h |log h|, so the
    // neighbor count grows like log^2 of the fill distance; a flat count
    // loses mesh independence on spiral lattices.
    const double h_est = std::sqrt(4.0 * std::numbers::pi / static_cast<double>(n));
    const double lg = std::log(h_est);
    const int n_pre =
        std::max(opts.preconditioner_neighbors, static_cast<int>(12.0 * lg * lg));
    const Eigen::SparseMatrix<double> C =
        local_lagrange_preconditioner(Y, kernel, harmonics, n_pre);

    auto op = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
      Eigen::VectorXd pv = v;
      proj.project(pv);
      phi.apply(pv, out);
      proj.project(out);
    };
    auto precond = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd pv = v;
      proj.project(pv);
      Eigen::VectorXd out = C * pv;
      proj.project(out);
      return out;
    };
    const GmresResult res = gmres(op, precond, rhs, opts.tolerance, opts.max_iterations);
    if (std::getenv("SPHGAL_VERBOSE"))
      std::fprintf(stderr, "[sphgal] weights N_Y=%zu: gmres %d iterations, residual %.2e\n",
                   Y.size(), res.iterations, res.relative_residual);
    if (!res.converged)
      throw DegenerateGeometryError(
          "compute_weights: GMRES stalled at relative residual " +
          std::to_string(res.relative_residual) + " after " + std::to_string(res.iterations) +
          " iterations (N_Y=" + std::to_string(Y.size()) + ")");
    w = w_particular + res.x;
  }

  return QuadratureRule::from_weights(Y, std::move(w), M);
}

RateFit convergence_order(const std::function<double(const SpherePoint&)>& f, double exact,
                          const std::vector<std::size_t>& sizes, int M,
                          const WeightSolveOptions& opts) {
  if (sizes.size() < 3)
    throw std::invalid_argument("convergence_order: need at least 3 sizes");
  RateFit fit;
  const double floor = 1e-13 * std::max(1.0, std::abs(exact));
  for (const std::size_t n : sizes) {
    const QuadratureRule rule = compute_weights(PointSet::fibonacci(n), M, opts);
    const double err = std::abs(rule.apply(f) - exact);
    if (err > floor) fit.points.emplace_back(rule.metrics.mesh_norm, err);
  }
  if (fit.points.size() < 3) {
    fit.skipped = true;
    fit.rate = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  const auto [slope, resid] = fit_rate(fit.points);
  fit.rate = slope;
  fit.residual = resid;
  return fit;
}

}  // namespace sphgal
