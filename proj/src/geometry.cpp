#include "sphgal/geometry.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "sphgal/errors.hpp"

namespace sphgal {

namespace {

constexpr double kDuplicateTol = 1e-10;  // geodesic radians

double chord_from_geodesic(double r) {
  if (r >= std::numbers::pi) return 2.0;
  return 2.0 * std::sin(0.5 * r);
}

}  // namespace

SpherePoint::SpherePoint(double px, double py, double pz) {
  if (!std::isfinite(px) || !std::isfinite(py) || !std::isfinite(pz))
    throw DataError("SpherePoint: non-finite coordinate");
  const double n = std::sqrt(px * px + py * py + pz * pz);
  if (n < 1e-300) throw DataError("SpherePoint: zero-length vector");
  x = px / n;
  y = py / n;
  z = pz / n;
}

double geodesic_distance(const SpherePoint& p, const SpherePoint& q) {
  // Canonical operand order keeps the result exactly symmetric even when the
  // compiler contracts the cross product into fused multiply-adds.
  if (p.x == q.x && p.y == q.y && p.z == q.z) return 0.0;
  const SpherePoint* a = &p;
  const SpherePoint* b = &q;
  if (std::tie(b->x, b->y, b->z) < std::tie(a->x, a->y, a->z)) std::swap(a, b);
  // atan2 of the cross-product norm and the dot product stays accurate
  // near 0 and pi, unlike acos of the dot product.
  const double cx = a->y * b->z - a->z * b->y;
  const double cy = a->z * b->x - a->x * b->z;
  const double cz = a->x * b->y - a->y * b->x;
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  const double dot = a->x * b->x + a->y * b->y + a->z * b->z;
  return std::atan2(cross, dot);
}

PointSet::PointSet(std::vector<SpherePoint> points, std::string label) {
  if (points.empty()) throw std::invalid_argument("PointSet: empty point list");
  coords_.resize(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i)
    coords_.col(static_cast<Eigen::Index>(i)) = points[i].vec();
  label_ = std::move(label);

  if (size() < 2) return;
  SphereGrid grid(*this);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto near = grid.k_nearest(point(i), 2);
    if (near.size() < 2) continue;
    const std::size_t other = near[0] == i ? near[1] : near[0];
    if (geodesic_distance(point(i), point(other)) < kDuplicateTol)
      throw DataError("PointSet '" + label_ + "': duplicate points at indices " +
                      std::to_string(std::min(i, other)) + " and " +
                      std::to_string(std::max(i, other)));
  }
}

SpherePoint PointSet::point(std::size_t i) const {
  const auto c = coords_.col(static_cast<Eigen::Index>(i));
  SpherePoint p;
  p.x = c.x();
  p.y = c.y();
  p.z = c.z();
  return p;
}

PointSet PointSet::fibonacci(std::size_t n) {
  if (n == 0) throw std::invalid_argument("fibonacci: need n >= 1");
  PointSet out;
  out.label_ = "fibonacci-" + std::to_string(n);
  out.coords_.resize(3, static_cast<Eigen::Index>(n));
  if (n == 1) {
    out.coords_.col(0) << 0.0, 0.0, 1.0;
    return out;
  }
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    out.coords_.col(static_cast<Eigen::Index>(i)) << r * std::cos(phi), r * std::sin(phi), z;
  }
  return out;
}

PointSet PointSet::icosahedral(int level) {
  if (level < 0) throw std::invalid_argument("icosahedral: need level >= 0");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g},  {0, 1, g},
      {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Eigen::Vector3d m = (verts[static_cast<std::size_t>(a)] +
                           verts[static_cast<std::size_t>(b)]).normalized();
      verts.push_back(m);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }

  PointSet out;
  out.label_ = "icosahedral-" + std::to_string(level);
  out.coords_.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i)
    out.coords_.col(static_cast<Eigen::Index>(i)) = verts[i];
  return out;
}

PointSet PointSet::icosahedral_frequency(int nu) {
  if (nu < 1) throw std::invalid_argument("icosahedral_frequency: need nu >= 1");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  const std::vector<Eigen::Vector3d> base = {
      {-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0}, {0, -1, g},  {0, 1, g},
      {0, -1, -g}, {0, 1, -g}, {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1}};
  const std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  std::vector<Eigen::Vector3d> verts;
  verts.reserve(static_cast<std::size_t>(10 * nu * nu + 2));
  for (const auto& v : base) verts.push_back(v.normalized());
  std::map<std::pair<int, int>, std::vector<int>> edge_points;

  auto edge_index = [&](int u, int v, int t_from_u) {
    const int p = std::min(u, v), q = std::max(u, v);
    const int t = (u == p) ? t_from_u : nu - t_from_u;
    auto& pts = edge_points[{p, q}];
    if (pts.empty()) pts.assign(static_cast<std::size_t>(nu - 1), -1);
    int& idx = pts[static_cast<std::size_t>(t - 1)];
    if (idx < 0) {
      const Eigen::Vector3d m =
          ((static_cast<double>(nu - t) * verts[static_cast<std::size_t>(p)] +
            static_cast<double>(t) * verts[static_cast<std::size_t>(q)]) /
           nu).normalized();
      verts.push_back(m);
      idx = static_cast<int>(verts.size()) - 1;
    }
    return idx;
  };

  for (const auto& f : faces) {
    const Eigen::Vector3d A = verts[static_cast<std::size_t>(f[0])],
                          B = verts[static_cast<std::size_t>(f[1])],
                          C = verts[static_cast<std::size_t>(f[2])];
    for (int i = 0; i <= nu; ++i)
      for (int j = 0; j <= nu - i; ++j) {
        const int k = nu - i - j;
        const int zeros = (i == 0) + (j == 0) + (k == 0);
        if (zeros == 2) continue;  // corner, already present
        if (zeros == 1) {
          if (k == 0) edge_index(f[0], f[1], j);
          else if (j == 0) edge_index(f[0], f[2], k);
          else edge_index(f[1], f[2], k);
          continue;
        }
        verts.push_back(((i * A + j * B + k * C) / nu).normalized());
      }
  }

  PointSet out;
  out.label_ = "icosahedral-freq-" + std::to_string(nu);
  out.coords_.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i)
    out.coords_.col(static_cast<Eigen::Index>(i)) = verts[i];
  return out;
}

PointSet PointSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open point file: " + path.string());
  std::vector<SpherePoint> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;  // blank or comment-only line
    if (tokens.size() != 3)
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 3 whitespace-separated reals, got " +
                        std::to_string(tokens.size()) + " tokens");
    double vals[3];
    for (int i = 0; i < 3; ++i) {
      char* end = nullptr;
      vals[i] = std::strtod(tokens[static_cast<std::size_t>(i)].c_str(), &end);
      if (end == nullptr || *end != '\0')
        throw FormatError(path.string() + ":" + std::to_string(lineno) +
                          ": cannot parse '" + tokens[static_cast<std::size_t>(i)] + "'");
      if (!std::isfinite(vals[i]))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
    }
    try {
      pts.emplace_back(vals[0], vals[1], vals[2]);
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (pts.empty()) throw FormatError(path.string() + ": no points");
  return PointSet(std::move(pts), path.stem().string());
}

void PointSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write point file: " + path.string());
  out << "# " << label_ << " N=" << size() << "\n";
  char buf[96];
  for (std::size_t i = 0; i < size(); ++i) {
    const auto c = coords_.col(static_cast<Eigen::Index>(i));
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", c.x(), c.y(), c.z());
    out << buf;
  }
}

PointSetMetrics compute_metrics(const PointSet& X, std::size_t candidate_density) {
  const std::size_t n = X.size();
  if (n < 2) throw std::invalid_argument("compute_metrics: need at least 2 points");
  if (candidate_density == 0) throw std::invalid_argument("compute_metrics: zero density");

  // Separation radius: half the minimum pairwise distance, i.e. the maximum
  // off-diagonal dot product. Blocked so large sets stay in cache.
  const auto& C = X.coords();
  const Eigen::Index N = C.cols();
  const Eigen::Index blk = 1024;
  double best_dot = -2.0;
  Eigen::Index bi = 0, bj = 1;
  Eigen::MatrixXd D;
  for (Eigen::Index r = 0; r < N; r += blk) {
    const Eigen::Index nr = std::min(blk, N - r);
    for (Eigen::Index c = r; c < N; c += blk) {
      const Eigen::Index nc = std::min(blk, N - c);
      D.noalias() = C.middleCols(r, nr).transpose() * C.middleCols(c, nc);
      if (r == c)
        for (Eigen::Index k = 0; k < nr; ++k) D(k, k) = -2.0;
      Eigen::Index lr, lc;
      const double m = D.maxCoeff(&lr, &lc);
      if (m > best_dot) {
        best_dot = m;
        bi = r + lr;
        bj = c + lc;
      }
    }
  }
  const double min_dist = geodesic_distance(X.point(static_cast<std::size_t>(bi)),
                                            X.point(static_cast<std::size_t>(bj)));

  const PointSet cand = PointSet::fibonacci(candidate_density * n);
  SphereGrid grid(X);
  double h = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i)
    h = std::max(h, grid.nearest_distance(cand.point(i)));

  PointSetMetrics m;
  m.separation_radius = 0.5 * min_dist;
  m.mesh_norm = h;
  m.mesh_ratio = h / m.separation_radius;
  m.cardinality = n;
  return m;
}

std::vector<std::size_t> ball_query(const PointSet& X, const SpherePoint& center,
                                    double radius) {
  if (radius < 0.0) throw std::invalid_argument("ball_query: negative radius");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < X.size(); ++i)
    if (geodesic_distance(X.point(i), center) <= radius) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// SphereGrid

SphereGrid::SphereGrid(const PointSet& X) : points_(&X) {
  const std::size_t N = X.size();
  const double target = std::sqrt(8.0 * std::numbers::pi / static_cast<double>(N));
  n_ = std::clamp(static_cast<int>(std::ceil(2.0 / target)), 4, 126);
  cell_size_ = 2.0 / n_;

  const std::size_t ncells = static_cast<std::size_t>(n_) * n_ * n_;
  std::vector<std::size_t> count(ncells, 0);
  const auto& C = X.coords();
  auto cell_index = [&](Eigen::Index i) {
    const auto c = C.col(i);
    return flat(cell_of(c.x()), cell_of(c.y()), cell_of(c.z()));
  };
  for (Eigen::Index i = 0; i < C.cols(); ++i) ++count[static_cast<std::size_t>(cell_index(i))];
  offsets_.assign(ncells + 1, 0);
  for (std::size_t c = 0; c < ncells; ++c) offsets_[c + 1] = offsets_[c] + count[c];
  items_.resize(N);
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (Eigen::Index i = 0; i < C.cols(); ++i)
    items_[cursor[static_cast<std::size_t>(cell_index(i))]++] = static_cast<std::size_t>(i);
}

int SphereGrid::cell_of(double v) const {
  int c = static_cast<int>(std::floor((v + 1.0) / cell_size_));
  return std::clamp(c, 0, n_ - 1);
}

int SphereGrid::flat(int ix, int iy, int iz) const { return (ix * n_ + iy) * n_ + iz; }

// Visits cells in expanding Chebyshev shells around q. The visitor receives
// (item begin, item end, shell lower bound on chord distance) and returns the
// current search bound; enumeration stops once the shell bound exceeds it.
template <typename Visitor>
void SphereGrid::scan_shells(const Eigen::Vector3d& q, Visitor&& visit) const {
  const int cx = cell_of(q.x()), cy = cell_of(q.y()), cz = cell_of(q.z());
  double bound = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 2 * n_; ++s) {
    const double shell_lb = (s - 1) * cell_size_;
    if (shell_lb > bound) break;
    bool any = false;
    auto visit_cell = [&](int ix, int iy, int iz) {
      if (ix < 0 || iy < 0 || iz < 0 || ix >= n_ || iy >= n_ || iz >= n_) return;
      any = true;
      const std::size_t f = static_cast<std::size_t>(flat(ix, iy, iz));
      bound = visit(offsets_[f], offsets_[f + 1]);
    };
    if (s == 0) {
      visit_cell(cx, cy, cz);
    } else {
      for (int dx = -s; dx <= s; ++dx)
        for (int dy = -s; dy <= s; ++dy) {
          const bool face_x = std::abs(dx) == s, face_y = std::abs(dy) == s;
          if (face_x || face_y) {
            for (int dz = -s; dz <= s; ++dz) visit_cell(cx + dx, cy + dy, cz + dz);
          } else {
            visit_cell(cx + dx, cy + dy, cz - s);
            visit_cell(cx + dx, cy + dy, cz + s);
          }
        }
    }
    if (!any && s >= n_) break;
  }
}

std::size_t SphereGrid::nearest(const SpherePoint& q) const {
  const Eigen::Vector3d v = q.vec();
  const auto& C = points_->coords();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  scan_shells(v, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = items_[k];
      const double d2 = (C.col(static_cast<Eigen::Index>(i)) - v).squaredNorm();
      const double d = std::sqrt(d2);
      if (d < best || (d == best && i < best_i)) {
        best = d;
        best_i = i;
      }
    }
    return best;
  });
  return best_i;
}

double SphereGrid::nearest_distance(const SpherePoint& q) const {
  return geodesic_distance(q, points_->point(nearest(q)));
}

std::vector<std::size_t> SphereGrid::k_nearest(const SpherePoint& q, std::size_t k) const {
  const Eigen::Vector3d v = q.vec();
  const auto& C = points_->coords();
  // Max-heap of (chord distance, index) pairs of the k best so far.
  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(k + 1);
  scan_shells(v, [&](std::size_t b, std::size_t e) {
    for (std::size_t kk = b; kk < e; ++kk) {
      const std::size_t i = items_[kk];
      const double d = (C.col(static_cast<Eigen::Index>(i)) - v).norm();
      if (best.size() == k && std::make_pair(d, i) >= best.front()) continue;
      best.emplace_back(d, i);
      std::push_heap(best.begin(), best.end());
      if (best.size() > k) {
        std::pop_heap(best.begin(), best.end());
        best.pop_back();
      }
    }
    return best.size() == k ? best.front().first
                            : std::numeric_limits<double>::infinity();
  });
  std::sort_heap(best.begin(), best.end());
  std::vector<std::size_t> out;
  out.reserve(best.size());
  for (const auto& [d, i] : best) out.push_back(i);
  return out;
}

std::vector<std::size_t> SphereGrid::ball(const SpherePoint& center, double radius) const {
  if (radius < 0.0) throw std::invalid_argument("SphereGrid::ball: negative radius");
  const Eigen::Vector3d v = center.vec();
  const auto& C = points_->coords();
  // Collect with an inflated chord bound, then apply the exact geodesic
  // predicate so membership matches ball_query bit for bit.
  const double chord = chord_from_geodesic(radius) * (1.0 + 1e-12) + 1e-12;
  std::vector<std::size_t> out;
  scan_shells(v, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t i = items_[k];
      if ((C.col(static_cast<Eigen::Index>(i)) - v).norm() <= chord &&
          geodesic_distance(points_->point(i), center) <= radius)
        out.push_back(i);
    }
    return chord;
  });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace sphgal
