#include "sphgal/lagrange.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sphgal/errors.hpp"

namespace sphgal {

namespace {

constexpr Eigen::Index kTableBlock = 1024;
constexpr std::size_t kDenseCenterGuard = 8192;

void check_build_args(const PointSet& X, int m) {
  if (m < 2) throw std::invalid_argument("Lagrange basis: kernel order must be >= 2");
  if (m - 1 > HarmonicBasis::kMaxSupportedDegree)
    throw std::invalid_argument("Lagrange basis: kernel order must be <= " +
                                std::to_string(HarmonicBasis::kMaxSupportedDegree + 1));
  if (X.size() < static_cast<std::size_t>(m) * m)
    throw std::invalid_argument("Lagrange basis: need at least m^2 = " +
                                std::to_string(m * m) + " centers, got " +
                                std::to_string(X.size()));
  if (X.size() > kDenseCenterGuard)
    throw std::invalid_argument("Lagrange basis: center count " + std::to_string(X.size()) +
                                " exceeds the dense guard of " +
                                std::to_string(kDenseCenterGuard));
}

}  // namespace

// ---------------------------------------------------------------------------
// BorderedSystem

BorderedSystem::BorderedSystem(const PointSet& X, const SurfaceSplineKernel& kernel,
                               const HarmonicBasis& harmonics) {
  n_ = static_cast<Eigen::Index>(X.size());
  k_ = harmonics.size();
  const Eigen::Index dim = n_ + k_;
  mat_.resize(dim, dim);

  Eigen::MatrixXd phi(n_, n_);
  phi.noalias() = X.coords().transpose() * X.coords();
  kernel.eval_inplace(phi);
  mat_.topLeftCorner(n_, n_) = phi;

  Eigen::MatrixXd P;
  harmonics.eval_matrix(X.coords(), P);
  mat_.topRightCorner(n_, k_) = P;
  mat_.bottomLeftCorner(k_, n_) = P.transpose();
  mat_.bottomRightCorner(k_, k_).setZero();

  lu_ = std::make_unique<Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>>>(mat_);

  const Eigen::VectorXd d = lu_->matrixLU().diagonal().cwiseAbs();
  const double dmax = d.maxCoeff();
  Eigen::Index worst;
  const double dmin = d.minCoeff(&worst);
  if (!(dmax > 0.0) || dmin <= 1e-14 * dmax)
    throw DegenerateGeometryError(
        "bordered kernel system is numerically singular (pivot " + std::to_string(worst) +
        " of " + std::to_string(dim) + ")");
}

Eigen::MatrixXd BorderedSystem::solve(const Eigen::Ref<const Eigen::MatrixXd>& top,
                                      const Eigen::Ref<const Eigen::MatrixXd>& bottom) const {
  if (top.rows() != n_ || bottom.rows() != k_ || top.cols() != bottom.cols())
    throw std::invalid_argument("BorderedSystem::solve: rhs shape mismatch");
  Eigen::MatrixXd rhs(n_ + k_, top.cols());
  rhs.topRows(n_) = top;
  rhs.bottomRows(k_) = bottom;
  return lu_->solve(rhs);
}

// ---------------------------------------------------------------------------
// LagrangeBasis

LagrangeBasis::LagrangeBasis(PointSet X, int m, Variant variant)
    : X_(std::move(X)), m_(m), kernel_(m), harmonics_(m - 1), variant_(variant) {}

LagrangeBasis LagrangeBasis::build_global(const PointSet& X, int m) {
  check_build_args(X, m);
  LagrangeBasis basis(X, m, Variant::global);
  const Eigen::Index n = static_cast<Eigen::Index>(X.size());
  const Eigen::Index k = basis.harmonics_.size();

  BorderedSystem sys(X, basis.kernel_, basis.harmonics_);
  basis.alpha_dense_.resize(n, n);
  basis.beta_.resize(k, n);
  const Eigen::Index blk = kTableBlock;
  for (Eigen::Index c = 0; c < n; c += blk) {
    const Eigen::Index nc = std::min(blk, n - c);
    Eigen::MatrixXd top = Eigen::MatrixXd::Zero(n, nc);
    for (Eigen::Index j = 0; j < nc; ++j) top(c + j, j) = 1.0;
    const Eigen::MatrixXd sol = sys.solve(top, Eigen::MatrixXd::Zero(k, nc));
    basis.alpha_dense_.middleCols(c, nc) = sol.topRows(n);
    basis.beta_.middleCols(c, nc) = sol.bottomRows(k);
  }
  const auto metrics = compute_metrics(X);
  basis.h_ = metrics.mesh_norm;
  return basis;
}

LagrangeBasis LagrangeBasis::build_local(const PointSet& X, int m, double K) {
  check_build_args(X, m);
  if (!(K > 0.0)) throw std::invalid_argument("build_local: K must be positive");
  LagrangeBasis basis(X, m, Variant::local);
  basis.K_ = K;
  const Eigen::Index n = static_cast<Eigen::Index>(X.size());
  const Eigen::Index k = basis.harmonics_.size();

  const auto metrics = compute_metrics(X);
  basis.h_ = metrics.mesh_norm;
  const double h = metrics.mesh_norm;
  // Radius floor keeps small desk-scale footprints solvable.
  const double radius =
      std::max(K * h * std::abs(std::log(h)), 3.0 * metrics.separation_radius * m * m);

  SphereGrid grid(X);
  std::vector<std::vector<std::size_t>> footprints(static_cast<std::size_t>(n));
  std::string too_small;
  int n_bad = 0;
  for (Eigen::Index xi = 0; xi < n; ++xi) {
    footprints[static_cast<std::size_t>(xi)] =
        grid.ball(X.point(static_cast<std::size_t>(xi)), radius);
    const std::size_t sz = footprints[static_cast<std::size_t>(xi)].size();
    if (sz < static_cast<std::size_t>(m) * m) {
      if (++n_bad <= 10)
        too_small += " (center " + std::to_string(xi) + ": |Y|=" + std::to_string(sz) + ")";
    }
  }
  if (n_bad > 0)
    throw DegenerateGeometryError("build_local: footprint too small for " +
                                  std::to_string(n_bad) + " centers:" + too_small);

  basis.supports_.resize(static_cast<std::size_t>(n));
  basis.beta_.resize(k, n);
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index xi = 0; xi < n; ++xi) {
    const auto& idx = footprints[static_cast<std::size_t>(xi)];
    const Eigen::Index nl = static_cast<Eigen::Index>(idx.size());
    Eigen::Matrix3Xd pts(3, nl);
    Eigen::Index self = -1;
    for (Eigen::Index j = 0; j < nl; ++j) {
      pts.col(j) = X.coords().col(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
      if (idx[static_cast<std::size_t>(j)] == static_cast<std::size_t>(xi)) self = j;
    }

    Eigen::MatrixXd A(nl + k, nl + k);
    Eigen::MatrixXd phi(nl, nl);
    phi.noalias() = pts.transpose() * pts;
    basis.kernel_.eval_inplace(phi);
    A.topLeftCorner(nl, nl) = phi;
    Eigen::MatrixXd P;
    basis.harmonics_.eval_matrix(pts, P);
    A.topRightCorner(nl, k) = P;
    A.bottomLeftCorner(k, nl) = P.transpose();
    A.bottomRightCorner(k, k).setZero();

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nl + k);
    rhs(self) = 1.0;
    Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(A);
    const Eigen::VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
    if (d.minCoeff() <= 1e-14 * d.maxCoeff())
      throw DegenerateGeometryError("build_local: singular footprint system at center " +
                                    std::to_string(xi));
    const Eigen::VectorXd sol = lu.solve(rhs);

    auto& sup = basis.supports_[static_cast<std::size_t>(xi)];
    sup.reserve(static_cast<std::size_t>(nl));
    for (Eigen::Index j = 0; j < nl; ++j) {
      sup.push_back(static_cast<int>(idx[static_cast<std::size_t>(j)]));
      trips.emplace_back(static_cast<int>(idx[static_cast<std::size_t>(j)]),
                         static_cast<int>(xi), sol(j));
    }
    basis.beta_.col(xi) = sol.tail(k);
  }
  basis.alpha_sparse_.resize(n, n);
  basis.alpha_sparse_.setFromTriplets(trips.begin(), trips.end());
  basis.alpha_sparse_.makeCompressed();
  return basis;
}

double LagrangeBasis::value(int xi, const SpherePoint& x) const {
  const Eigen::Index n = static_cast<Eigen::Index>(size());
  if (xi < 0 || xi >= n) throw std::invalid_argument("LagrangeBasis::value: bad center");
  const Eigen::Vector3d xv = x.vec();
  double acc = 0.0;
  if (variant_ == Variant::global) {
    for (Eigen::Index j = 0; j < n; ++j)
      acc += alpha_dense_(j, xi) * kernel_.eval(X_.coords().col(j).dot(xv));
  } else {
    for (Eigen::SparseMatrix<double>::InnerIterator it(alpha_sparse_, xi); it; ++it)
      acc += it.value() * kernel_.eval(X_.coords().col(it.row()).dot(xv));
  }
  for (int f = 0; f < harmonics_.size(); ++f) {
    const int l = static_cast<int>(std::sqrt(static_cast<double>(f)));
    acc += beta_(f, xi) * harmonics_.eval(l, f - l * l + 1, x);
  }
  return acc;
}

TangentVector LagrangeBasis::gradient(int xi, const SpherePoint& x) const {
  const Eigen::Index n = static_cast<Eigen::Index>(size());
  if (xi < 0 || xi >= n) throw std::invalid_argument("LagrangeBasis::gradient: bad center");
  TangentVector g;
  g.base = x;
  auto add_kernel = [&](Eigen::Index j, double a) {
    const SpherePoint tau = X_.point(static_cast<std::size_t>(j));
    g.components += a * kernel_.surface_gradient(x, tau).components;
  };
  if (variant_ == Variant::global) {
    for (Eigen::Index j = 0; j < n; ++j) add_kernel(j, alpha_dense_(j, xi));
  } else {
    for (Eigen::SparseMatrix<double>::InnerIterator it(alpha_sparse_, xi); it; ++it)
      add_kernel(it.row(), it.value());
  }
  for (int f = 0; f < harmonics_.size(); ++f) {
    const int l = static_cast<int>(std::sqrt(static_cast<double>(f)));
    g.components += beta_(f, xi) * harmonics_.surface_gradient(l, f - l * l + 1, x).components;
  }
  return g;
}

void LagrangeBasis::tables(const Eigen::Ref<const Eigen::Matrix3Xd>& pts, Eigen::MatrixXd* V,
                           Eigen::MatrixXd* Gx, Eigen::MatrixXd* Gy,
                           Eigen::MatrixXd* Gz) const {
  const Eigen::Index np = pts.cols();
  const Eigen::Index n = static_cast<Eigen::Index>(size());
  const bool want_grad = Gx != nullptr;
  if (want_grad && (Gy == nullptr || Gz == nullptr))
    throw std::invalid_argument("LagrangeBasis::tables: need all three gradient outputs");
  if (V) V->resize(np, n);
  if (want_grad) {
    Gx->resize(np, n);
    Gy->resize(np, n);
    Gz->resize(np, n);
  }

  Eigen::MatrixXd T, F, U, W, H, HgX, HgY, HgZ;
  auto apply_alpha = [&](const Eigen::MatrixXd& lhs, Eigen::MatrixXd& out) {
    if (variant_ == Variant::global)
      out.noalias() = lhs * alpha_dense_;
    else
      out = lhs * alpha_sparse_;
  };

  for (Eigen::Index p0 = 0; p0 < np; p0 += kTableBlock) {
    const Eigen::Index nb = std::min(kTableBlock, np - p0);
    const auto blk = pts.middleCols(p0, nb);
    T.resize(nb, n);
    T.noalias() = blk.transpose() * X_.coords();

    if (V) {
      F = T;
      kernel_.eval_inplace(F);
      Eigen::MatrixXd out;
      apply_alpha(F, out);
      harmonics_.eval_matrix(blk, H);
      out.noalias() += H * beta_;
      V->middleRows(p0, nb) = out;
    }
    if (want_grad) {
      F = T;
      kernel_.deriv_inplace(F);  // F = phi'(t)
      Eigen::MatrixXd out;
      W = F.cwiseProduct(T);     // phi'(t) t
      apply_alpha(W, U);         // U = (phi' . t) alpha
      harmonics_.gradient_matrices(blk, HgX, HgY, HgZ);
      Eigen::MatrixXd* outs[3] = {Gx, Gy, Gz};
      const Eigen::MatrixXd* hg[3] = {&HgX, &HgY, &HgZ};
      for (int c = 0; c < 3; ++c) {
        W = (F.array().rowwise() * X_.coords().row(c).array()).matrix();
        apply_alpha(W, out);
        out.noalias() -= blk.row(c).transpose().asDiagonal() * U;
        out.noalias() += (*hg[c]) * beta_;
        outs[c]->middleRows(p0, nb) = out;
      }
    }
  }
}

std::vector<std::pair<double, double>> LagrangeBasis::decay_profile(
    int xi, const PointSet& probes) const {
  const SpherePoint c = X_.point(static_cast<std::size_t>(xi));
  Eigen::MatrixXd V;
  tables(probes.coords(), &V, nullptr, nullptr, nullptr);
  std::vector<std::pair<double, double>> out;
  out.reserve(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i)
    out.emplace_back(geodesic_distance(probes.point(i), c),
                     std::abs(V(static_cast<Eigen::Index>(i), xi)));
  std::sort(out.begin(), out.end());
  return out;
}

LagrangeFunction LagrangeBasis::function(int xi) const {
  const Eigen::Index n = static_cast<Eigen::Index>(size());
  if (xi < 0 || xi >= n) throw std::invalid_argument("LagrangeBasis::function: bad center");
  LagrangeFunction f;
  f.center = xi;
  f.variant = variant_;
  f.beta = beta_.col(xi);
  if (variant_ == Variant::global) {
    f.alpha = alpha_dense_.col(xi);
  } else {
    f.support = supports_[static_cast<std::size_t>(xi)];
    f.alpha.resize(static_cast<Eigen::Index>(f.support.size()));
    Eigen::Index j = 0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(alpha_sparse_, xi); it; ++it)
      f.alpha(j++) = it.value();
  }
  return f;
}

std::size_t LagrangeBasis::support_size(int xi) const {
  if (variant_ == Variant::global) return size();
  return supports_[static_cast<std::size_t>(xi)].size();
}

void LagrangeBasis::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write basis file: " + path.string());
  out << "# sphgal lagrange basis\n";
  out << size() << " " << m_ << " " << K_ << " "
      << (variant_ == Variant::global ? "global" : "local") << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ", " << buf;
  };
  for (std::size_t xi = 0; xi < size(); ++xi) {
    const LagrangeFunction f = function(static_cast<int>(xi));
    out << f.center << ", " << (variant_ == Variant::global ? size() : f.support.size());
    for (int s : f.support) out << ", " << s;
    for (Eigen::Index i = 0; i < f.alpha.size(); ++i) put(f.alpha(i));
    for (Eigen::Index i = 0; i < f.beta.size(); ++i) put(f.beta(i));
    out << "\n";
  }
}

LagrangeBasis LagrangeBasis::load(const std::filesystem::path& path, const PointSet& X) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open basis file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r,") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError(path.string() + ": missing header");
  std::istringstream hs(line);
  std::size_t n;
  int m;
  double K;
  std::string variant_name;
  if (!(hs >> n >> m >> K >> variant_name))
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad header");
  if (n != X.size())
    throw DataError(path.string() + ": basis has " + std::to_string(n) +
                    " centers but point set has " + std::to_string(X.size()));
  const bool global = variant_name == "global";

  LagrangeBasis basis(X, m, global ? Variant::global : Variant::local);
  basis.K_ = K;
  const Eigen::Index N = static_cast<Eigen::Index>(n);
  const Eigen::Index k = basis.harmonics_.size();
  basis.beta_.resize(k, N);
  if (global) basis.alpha_dense_.resize(N, N);
  if (!global) basis.supports_.resize(n);
  std::vector<Eigen::Triplet<double>> trips;

  for (std::size_t rec = 0; rec < n; ++rec) {
    if (!next_line())
      throw FormatError(path.string() + ": expected " + std::to_string(n) + " records, got " +
                        std::to_string(rec));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    long center, count;
    if (!(ls >> center >> count) || center < 0 || center >= static_cast<long>(n))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad record head");
    std::vector<int> sup;
    if (!global) {
      sup.resize(static_cast<std::size_t>(count));
      for (auto& s : sup)
        if (!(ls >> s))
          throw FormatError(path.string() + ":" + std::to_string(lineno) +
                            ": truncated support list");
    }
    Eigen::VectorXd alpha(count), beta(k);
    for (Eigen::Index i = 0; i < count; ++i)
      if (!(ls >> alpha(i)))
        throw FormatError(path.string() + ":" + std::to_string(lineno) +
                          ": truncated alpha list");
    for (Eigen::Index i = 0; i < k; ++i)
      if (!(ls >> beta(i)))
        throw FormatError(path.string() + ":" + std::to_string(lineno) +
                          ": truncated beta list");
    basis.beta_.col(center) = beta;
    if (global) {
      if (count != static_cast<long>(n))
        throw FormatError(path.string() + ":" + std::to_string(lineno) +
                          ": global record must list all centers");
      basis.alpha_dense_.col(center) = alpha;
    } else {
      basis.supports_[static_cast<std::size_t>(center)] = sup;
      for (Eigen::Index i = 0; i < count; ++i)
        trips.emplace_back(sup[static_cast<std::size_t>(i)], static_cast<int>(center),
                           alpha(i));
    }
  }
  if (!global) {
    basis.alpha_sparse_.resize(N, N);
    basis.alpha_sparse_.setFromTriplets(trips.begin(), trips.end());
    basis.alpha_sparse_.makeCompressed();
  }
  const auto metrics = compute_metrics(X);
  basis.h_ = metrics.mesh_norm;
  return basis;
}

// ---------------------------------------------------------------------------
// Interpolant

Interpolant::Interpolant(PointSet X, int m, Eigen::VectorXd alpha, Eigen::VectorXd beta)
    : X_(std::move(X)), m_(m), kernel_(m), harmonics_(m - 1), alpha_(std::move(alpha)),
      beta_(std::move(beta)) {}

double Interpolant::value(const SpherePoint& x) const {
  const Eigen::Vector3d xv = x.vec();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < alpha_.size(); ++j)
    acc += alpha_(j) * kernel_.eval(X_.coords().col(j).dot(xv));
  for (int f = 0; f < harmonics_.size(); ++f) {
    const int l = static_cast<int>(std::sqrt(static_cast<double>(f)));
    acc += beta_(f) * harmonics_.eval(l, f - l * l + 1, x);
  }
  return acc;
}

TangentVector Interpolant::gradient(const SpherePoint& x) const {
  TangentVector g;
  g.base = x;
  for (Eigen::Index j = 0; j < alpha_.size(); ++j)
    g.components +=
        alpha_(j) * kernel_.surface_gradient(x, X_.point(static_cast<std::size_t>(j))).components;
  for (int f = 0; f < harmonics_.size(); ++f) {
    const int l = static_cast<int>(std::sqrt(static_cast<double>(f)));
    g.components += beta_(f) * harmonics_.surface_gradient(l, f - l * l + 1, x).components;
  }
  return g;
}

Eigen::VectorXd Interpolant::values(const Eigen::Ref<const Eigen::Matrix3Xd>& pts) const {
  const Eigen::Index np = pts.cols();
  Eigen::VectorXd out(np);
  Eigen::MatrixXd T, H;
  for (Eigen::Index p0 = 0; p0 < np; p0 += kTableBlock) {
    const Eigen::Index nb = std::min(kTableBlock, np - p0);
    T.resize(nb, alpha_.size());
    T.noalias() = pts.middleCols(p0, nb).transpose() * X_.coords();
    kernel_.eval_inplace(T);
    out.segment(p0, nb).noalias() = T * alpha_;
    harmonics_.eval_matrix(pts.middleCols(p0, nb), H);
    out.segment(p0, nb).noalias() += H * beta_;
  }
  return out;
}

Interpolant interpolate(const PointSet& X, int m, const Eigen::VectorXd& samples) {
  check_build_args(X, m);
  if (samples.size() != static_cast<Eigen::Index>(X.size()))
    throw std::invalid_argument("interpolate: one sample per center required");
  SurfaceSplineKernel kernel(m);
  HarmonicBasis harmonics(m - 1);
  BorderedSystem sys(X, kernel, harmonics);
  const Eigen::MatrixXd sol =
      sys.solve(samples, Eigen::MatrixXd::Zero(harmonics.size(), 1));
  return Interpolant(X, m, sol.topRows(sys.n()), sol.bottomRows(sys.poly_dim()));
}

}  // namespace sphgal
