#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace sphgal {

/// A point on the unit sphere. Coordinates are renormalized on construction.
struct SpherePoint {
  double x = 0.0, y = 0.0, z = 1.0;

  SpherePoint() = default;
  SpherePoint(double px, double py, double pz);
  explicit SpherePoint(const Eigen::Vector3d& v) : SpherePoint(v.x(), v.y(), v.z()) {}

  Eigen::Vector3d vec() const { return {x, y, z}; }
};

/// Great-circle distance in radians, in [0, pi].
double geodesic_distance(const SpherePoint& p, const SpherePoint& q);

struct PointSetMetrics {
  double separation_radius = 0.0;  // q_X
  double mesh_norm = 0.0;          // h_X, estimated on a candidate grid
  double mesh_ratio = 0.0;         // h_X / q_X
  std::size_t cardinality = 0;
};

/// An ordered set of distinct centers on S^2. Index identifies a center
/// throughout the pipeline, so the order never changes after construction.
class PointSet {
 public:
  PointSet(std::vector<SpherePoint> points, std::string label);

  static PointSet fibonacci(std::size_t n);
  static PointSet icosahedral(int level);
  /// Class-I geodesic lattice: each icosahedron edge split into nu segments,
  /// N = 10 nu^2 + 2. Covers node counts the dyadic subdivision cannot.
  static PointSet icosahedral_frequency(int nu);
  static PointSet load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return static_cast<std::size_t>(coords_.cols()); }
  SpherePoint point(std::size_t i) const;
  const Eigen::Matrix3Xd& coords() const { return coords_; }
  const std::string& label() const { return label_; }

 private:
  PointSet() = default;
  Eigen::Matrix3Xd coords_;
  std::string label_;
};

/// q_X from exact pairwise distances, h_X estimated over a Fibonacci
/// candidate set of size candidate_density * N.
PointSetMetrics compute_metrics(const PointSet& X, std::size_t candidate_density = 100);

/// Indices of all points of X within geodesic `radius` of `center`,
/// ascending. Plain linear scan; the reference every spatial index must match.
std::vector<std::size_t> ball_query(const PointSet& X, const SpherePoint& center,
                                    double radius);

/// Uniform grid over the embedding cube, for nearest-neighbor and ball
/// queries in chord space. Membership agrees with ball_query exactly.
class SphereGrid {
 public:
  explicit SphereGrid(const PointSet& X);

  std::size_t nearest(const SpherePoint& q) const;
  double nearest_distance(const SpherePoint& q) const;
  std::vector<std::size_t> k_nearest(const SpherePoint& q, std::size_t k) const;
  std::vector<std::size_t> ball(const SpherePoint& center, double radius) const;

 private:
  struct CellRange;
  int cell_of(double v) const;
  int flat(int ix, int iy, int iz) const;
  template <typename Visitor>
  void scan_shells(const Eigen::Vector3d& q, Visitor&& visit) const;

  const PointSet* points_;
  double cell_size_;
  int n_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> items_;
};

}  // namespace sphgal
