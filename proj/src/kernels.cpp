#include "sphgal/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sphgal {

namespace {

double int_pow(double u, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= u;
  return r;
}

}  // namespace

SurfaceSplineKernel::SurfaceSplineKernel(int order, double singular_clamp)
    : m_(order), eps_(singular_clamp) {
  if (order < 2) throw std::invalid_argument("SurfaceSplineKernel: order must be >= 2");
  if (!(singular_clamp > 0.0))
    throw std::invalid_argument("SurfaceSplineKernel: clamp must be positive");
}

double SurfaceSplineKernel::eval(double t) const {
  if (!std::isfinite(t)) throw std::invalid_argument("kernel eval: non-finite argument");
  t = std::clamp(t, -1.0, 1.0);
  const double u = 1.0 - t;
  if (u < eps_) return 0.0;
  const double sign = (m_ % 2 == 0) ? 1.0 : -1.0;
  return sign * int_pow(u, m_ - 1) * std::log(u);
}

double SurfaceSplineKernel::deriv(double t) const {
  if (!std::isfinite(t)) throw std::invalid_argument("kernel deriv: non-finite argument");
  t = std::clamp(t, -1.0, 1.0);
  const double u = 1.0 - t;
  if (u < eps_) return 0.0;
  const double sign = (m_ % 2 == 0) ? -1.0 : 1.0;  // (-1)^(m+1)
  return sign * int_pow(u, m_ - 2) * ((m_ - 1) * std::log(u) + 1.0);
}

TangentVector SurfaceSplineKernel::surface_gradient(const SpherePoint& zeta,
                                                    const SpherePoint& tau) const {
  TangentVector g;
  g.base = zeta;
  const Eigen::Vector3d zv = zeta.vec(), tv = tau.vec();
  const double t = zv.dot(tv);
  if (1.0 - t < eps_) return g;  // coincident points: the projected limit is 0
  g.components = deriv(t) * (tv - t * zv);
  return g;
}

double SurfaceSplineKernel::moment() const {
  // 2 pi int_{-1}^{1} phi_m(t) dt with the substitution s = 1 - t:
  // int_0^2 s^(m-1) log s ds = (2^m / m)(log 2 - 1/m).
  const double sign = (m_ % 2 == 0) ? 1.0 : -1.0;
  const double p2m = std::ldexp(1.0, m_);
  return 2.0 * std::numbers::pi * sign * (p2m / m_) * (std::numbers::ln2 - 1.0 / m_);
}

// Inside the clamp window u^(m-1) log(max(u, eps)) already vanishes to
// rounding, so the elementwise forms need no branch; they stay single-pass
// and vectorize.
void SurfaceSplineKernel::eval_inplace(Eigen::MatrixXd& t) const {
  auto u = (1.0 - t.array()).max(0.0);
  auto lg = u.max(eps_).log();
  switch (m_) {
    case 2: t = u * lg; break;
    case 3: t = -(u * u) * lg; break;
    case 4: t = (u * u * u) * lg; break;
    case 5: t = -(u * u * u * u) * lg; break;
    default: {
      const double sign = (m_ % 2 == 0) ? 1.0 : -1.0;
      t = sign * u.pow(m_ - 1) * lg;
    }
  }
}

void SurfaceSplineKernel::deriv_inplace(Eigen::MatrixXd& t) const {
  auto u = (1.0 - t.array()).max(0.0);
  auto lg = u.max(eps_).log();
  const double c = static_cast<double>(m_ - 1);
  switch (m_) {
    case 2: t = (u < eps_).select(0.0, -(c * lg + 1.0)); break;
    case 3: t = u * (c * lg + 1.0); break;
    case 4: t = -(u * u) * (c * lg + 1.0); break;
    case 5: t = (u * u * u) * (c * lg + 1.0); break;
    default: {
      const double sign = (m_ % 2 == 0) ? -1.0 : 1.0;
      t = sign * u.pow(m_ - 2) * (c * lg + 1.0);
    }
  }
}

}  // namespace sphgal
