#pragma once

#include <cstdint>
#include <vector>

#include "voxc/geometry.hpp"

namespace voxc {

/// Exact closest point on a closed triangle (face, edge and vertex regions).
/// Degenerate triangles (area <= 1e-12) fall back to their longest edge.
Vec3 closest_point_on_triangle(const Vec3& p, const Triangle& t);

/// Euclidean distance from p to the closed triangle, meters.
double point_triangle_distance(const Vec3& p, const Triangle& t);

struct RayHit {
  double t = -1.0;     // parameter along the (unnormalized) direction
  int triangle = -1;
  bool valid() const { return triangle >= 0; }
};

struct ClosestHit {
  double distance = 0.0;
  int triangle = -1;
  bool valid() const { return triangle >= 0; }
};

/// Static bounding-volume tree over a triangle soup. Built once per scene and
/// shared read-only: supports nearest-hit ray casts and closest-triangle
/// queries. Both are deterministic; ties resolve the same way regardless of
/// traversal order (rays prefer the lower triangle index, distance queries
/// the lower label, then index).
class AabbTree {
 public:
  AabbTree() = default;
  AabbTree(std::vector<Triangle> triangles, std::vector<uint8_t> labels);

  size_t triangle_count() const { return triangles_.size(); }
  const Triangle& triangle(int i) const { return triangles_[i]; }
  uint8_t label(int i) const { return labels_[i]; }

  /// Nearest intersection with t in [t_min, t_max].
  RayHit raycast(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

  /// Closest triangle to p; distance clipped at max_dist (returns an invalid
  /// hit when nothing is closer).
  ClosestHit closest(const Vec3& p, double max_dist) const;

 private:
  struct Node {
    Aabb box;
    int left = -1;    // internal: child indices; leaf: left == -1
    int right = -1;
    int first = 0;    // leaf: range into order_
    int count = 0;
  };

  int build(int first, int count, std::vector<Vec3>& centroids);

  std::vector<Triangle> triangles_;
  std::vector<uint8_t> labels_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace voxc
