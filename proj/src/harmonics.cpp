#include "sphgal/harmonics.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sphgal {

namespace {

constexpr double kPi = std::numbers::pi;

using TermList = std::vector<HarmonicBasis::Term>;

// Homogeneous harmonic polynomial representatives of the real orthonormal
// spherical harmonics, one term list per flat index l^2 + k - 1.
const std::array<TermList, 25>& table() {
  static const std::array<TermList, 25> t = [] {
    std::array<TermList, 25> a;
    const double c00 = 0.5 * std::sqrt(1.0 / kPi);
    const double c1 = std::sqrt(3.0 / (4.0 * kPi));
    const double c2a = 0.5 * std::sqrt(15.0 / kPi);
    const double c20 = 0.25 * std::sqrt(5.0 / kPi);
    const double c22 = 0.25 * std::sqrt(15.0 / kPi);
    const double c3a = 0.25 * std::sqrt(35.0 / (2.0 * kPi));
    const double c3b = 0.5 * std::sqrt(105.0 / kPi);
    const double c3c = 0.25 * std::sqrt(21.0 / (2.0 * kPi));
    const double c30 = 0.25 * std::sqrt(7.0 / kPi);
    const double c32 = 0.25 * std::sqrt(105.0 / kPi);
    const double c4a = 0.75 * std::sqrt(35.0 / kPi);
    const double c4b = 0.75 * std::sqrt(35.0 / (2.0 * kPi));
    const double c4c = 0.75 * std::sqrt(5.0 / kPi);
    const double c4d = 0.75 * std::sqrt(5.0 / (2.0 * kPi));
    const double c40 = (3.0 / 16.0) * std::sqrt(1.0 / kPi);
    const double c42 = (3.0 / 8.0) * std::sqrt(5.0 / kPi);
    const double c44 = (3.0 / 16.0) * std::sqrt(35.0 / kPi);

    a[0] = {{c00, 0, 0, 0}};

    a[1] = {{c1, 0, 1, 0}};  // y
    a[2] = {{c1, 0, 0, 1}};  // z
    a[3] = {{c1, 1, 0, 0}};  // x

    a[4] = {{c2a, 1, 1, 0}};                                       // xy
    a[5] = {{c2a, 0, 1, 1}};                                       // yz
    a[6] = {{2 * c20, 0, 0, 2}, {-c20, 2, 0, 0}, {-c20, 0, 2, 0}}; // 2z^2-x^2-y^2
    a[7] = {{c2a, 1, 0, 1}};                                       // xz
    a[8] = {{c22, 2, 0, 0}, {-c22, 0, 2, 0}};                      // x^2-y^2

    a[9] = {{3 * c3a, 2, 1, 0}, {-c3a, 0, 3, 0}};                   // y(3x^2-y^2)
    a[10] = {{c3b, 1, 1, 1}};                                       // xyz
    a[11] = {{4 * c3c, 0, 1, 2}, {-c3c, 2, 1, 0}, {-c3c, 0, 3, 0}}; // y(4z^2-x^2-y^2)
    a[12] = {{2 * c30, 0, 0, 3}, {-3 * c30, 2, 0, 1}, {-3 * c30, 0, 2, 1}};
    a[13] = {{4 * c3c, 1, 0, 2}, {-c3c, 3, 0, 0}, {-c3c, 1, 2, 0}}; // x(4z^2-x^2-y^2)
    a[14] = {{c32, 2, 0, 1}, {-c32, 0, 2, 1}};                      // z(x^2-y^2)
    a[15] = {{c3a, 3, 0, 0}, {-3 * c3a, 1, 2, 0}};                  // x(x^2-3y^2)

    a[16] = {{c4a, 3, 1, 0}, {-c4a, 1, 3, 0}};                      // xy(x^2-y^2)
    a[17] = {{3 * c4b, 2, 1, 1}, {-c4b, 0, 3, 1}};                  // yz(3x^2-y^2)
    a[18] = {{6 * c4c, 1, 1, 2}, {-c4c, 3, 1, 0}, {-c4c, 1, 3, 0}}; // xy(6z^2-x^2-y^2)
    a[19] = {{4 * c4d, 0, 1, 3}, {-3 * c4d, 2, 1, 1}, {-3 * c4d, 0, 3, 1}};
    a[20] = {{3 * c40, 4, 0, 0}, {3 * c40, 0, 4, 0},  {8 * c40, 0, 0, 4},
             {6 * c40, 2, 2, 0}, {-24 * c40, 2, 0, 2}, {-24 * c40, 0, 2, 2}};
    a[21] = {{4 * c4d, 1, 0, 3}, {-3 * c4d, 3, 0, 1}, {-3 * c4d, 1, 2, 1}};
    a[22] = {{6 * c42, 2, 0, 2}, {-6 * c42, 0, 2, 2}, {-c42, 4, 0, 0}, {c42, 0, 4, 0}};
    a[23] = {{c4b, 3, 0, 1}, {-3 * c4b, 1, 2, 1}};                  // xz(x^2-3y^2)
    a[24] = {{c44, 4, 0, 0}, {-6 * c44, 2, 2, 0}, {c44, 0, 4, 0}};
    return a;
  }();
  return t;
}

double mono(double x, double y, double z, int ex, int ey, int ez) {
  double r = 1.0;
  for (int i = 0; i < ex; ++i) r *= x;
  for (int i = 0; i < ey; ++i) r *= y;
  for (int i = 0; i < ez; ++i) r *= z;
  return r;
}

}  // namespace

HarmonicBasis::HarmonicBasis(int max_degree) : degree_(max_degree) {
  if (max_degree < 0 || max_degree > kMaxSupportedDegree)
    throw std::invalid_argument("HarmonicBasis: degrees 0.." +
                                std::to_string(kMaxSupportedDegree) + " supported");
}

void HarmonicBasis::check_index(int l, int k) const {
  if (l < 0 || l > degree_ || k < 1 || k > 2 * l + 1)
    throw std::invalid_argument("HarmonicBasis: index (l=" + std::to_string(l) +
                                ", k=" + std::to_string(k) + ") out of range");
}

const std::vector<HarmonicBasis::Term>& HarmonicBasis::terms(int flat) const {
  return table()[static_cast<std::size_t>(flat)];
}

double HarmonicBasis::eval(int l, int k, const SpherePoint& p) const {
  check_index(l, k);
  double v = 0.0;
  for (const auto& t : terms(flat_index(l, k)))
    v += t.coef * mono(p.x, p.y, p.z, t.ex, t.ey, t.ez);
  return v;
}

TangentVector HarmonicBasis::surface_gradient(int l, int k, const SpherePoint& p) const {
  check_index(l, k);
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (const auto& t : terms(flat_index(l, k))) {
    if (t.ex > 0) g.x() += t.coef * t.ex * mono(p.x, p.y, p.z, t.ex - 1, t.ey, t.ez);
    if (t.ey > 0) g.y() += t.coef * t.ey * mono(p.x, p.y, p.z, t.ex, t.ey - 1, t.ez);
    if (t.ez > 0) g.z() += t.coef * t.ez * mono(p.x, p.y, p.z, t.ex, t.ey, t.ez - 1);
  }
  TangentVector out;
  out.base = p;
  const Eigen::Vector3d pv = p.vec();
  out.components = g - pv.dot(g) * pv;
  return out;
}

double HarmonicBasis::moment(int l, int k) const {
  check_index(l, k);
  return l == 0 ? std::sqrt(4.0 * kPi) : 0.0;
}

void HarmonicBasis::eval_matrix(const Eigen::Ref<const Eigen::Matrix3Xd>& pts,
                                Eigen::MatrixXd& out) const {
  const Eigen::Index n = pts.cols();
  out.setZero(n, size());
  Eigen::ArrayXd x = pts.row(0).transpose(), y = pts.row(1).transpose(),
                 z = pts.row(2).transpose();
  auto powcol = [&](const Eigen::ArrayXd& v, int e) -> Eigen::ArrayXd {
    Eigen::ArrayXd r = Eigen::ArrayXd::Ones(v.size());
    for (int i = 0; i < e; ++i) r *= v;
    return r;
  };
  for (int f = 0; f < size(); ++f)
    for (const auto& t : terms(f))
      out.col(f).array() += t.coef * powcol(x, t.ex) * powcol(y, t.ey) * powcol(z, t.ez);
}

void HarmonicBasis::gradient_matrices(const Eigen::Ref<const Eigen::Matrix3Xd>& pts,
                                      Eigen::MatrixXd& gx, Eigen::MatrixXd& gy,
                                      Eigen::MatrixXd& gz) const {
  const Eigen::Index n = pts.cols();
  gx.setZero(n, size());
  gy.setZero(n, size());
  gz.setZero(n, size());
  Eigen::ArrayXd x = pts.row(0).transpose(), y = pts.row(1).transpose(),
                 z = pts.row(2).transpose();
  auto powcol = [&](const Eigen::ArrayXd& v, int e) -> Eigen::ArrayXd {
    Eigen::ArrayXd r = Eigen::ArrayXd::Ones(v.size());
    for (int i = 0; i < e; ++i) r *= v;
    return r;
  };
  for (int f = 0; f < size(); ++f) {
    for (const auto& t : terms(f)) {
      if (t.ex > 0)
        gx.col(f).array() +=
            t.coef * t.ex * powcol(x, t.ex - 1) * powcol(y, t.ey) * powcol(z, t.ez);
      if (t.ey > 0)
        gy.col(f).array() +=
            t.coef * t.ey * powcol(x, t.ex) * powcol(y, t.ey - 1) * powcol(z, t.ez);
      if (t.ez > 0)
        gz.col(f).array() +=
            t.coef * t.ez * powcol(x, t.ex) * powcol(y, t.ey) * powcol(z, t.ez - 1);
    }
  }
  // Tangential projection: g <- g - (g . p) p, rowwise.
  Eigen::ArrayXd dot(n);
  for (int f = 0; f < size(); ++f) {
    dot = gx.col(f).array() * x + gy.col(f).array() * y + gz.col(f).array() * z;
    gx.col(f).array() -= dot * x;
    gy.col(f).array() -= dot * y;
    gz.col(f).array() -= dot * z;
  }
}

}  // namespace sphgal
