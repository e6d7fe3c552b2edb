#include "voxc/ground_truth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace voxc {

// -- point/triangle ----------------------------------------------------------

namespace {

Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 d = b - a;
  double dd = dot(d, d);
  if (dd <= 0.0) return a;
  double t = std::clamp(dot(p - a, d) / dd, 0.0, 1.0);
  return a + d * t;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Triangle& t) {
  if (t.area() <= 1e-12) {
    // Degenerate: use the longest edge.
    double lab = norm2(t.b - t.a), lbc = norm2(t.c - t.b), lca = norm2(t.a - t.c);
    if (lab >= lbc && lab >= lca) return closest_point_on_segment(p, t.a, t.b);
    if (lbc >= lca) return closest_point_on_segment(p, t.b, t.c);
    return closest_point_on_segment(p, t.c, t.a);
  }

  // Region classification after Ericson, Real-Time Collision Detection.
  const Vec3 &a = t.a, &b = t.b, &c = t.c;
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  Vec3 bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

  Vec3 cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_triangle_distance(const Vec3& p, const Triangle& t) {
  return norm(p - closest_point_on_triangle(p, t));
}

// -- tree --------------------------------------------------------------------

AabbTree::AabbTree(std::vector<Triangle> triangles, std::vector<uint8_t> labels)
    : triangles_(std::move(triangles)), labels_(std::move(labels)) {
  if (triangles_.size() != labels_.size())
    throw std::invalid_argument("AabbTree: triangle/label count mismatch");
  order_.resize(triangles_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
  if (!triangles_.empty()) {
    std::vector<Vec3> centroids(triangles_.size());
    for (size_t i = 0; i < triangles_.size(); ++i) centroids[i] = triangles_[i].centroid();
    nodes_.reserve(2 * triangles_.size());
    root_ = build(0, int(triangles_.size()), centroids);
  }
}

int AabbTree::build(int first, int count, std::vector<Vec3>& centroids) {
  Node node;
  node.first = first;
  node.count = count;
  for (int i = first; i < first + count; ++i) node.box.expand(triangles_[order_[i]].bounds());

  constexpr int kLeafSize = 4;
  if (count > kLeafSize) {
    Aabb cb;
    for (int i = first; i < first + count; ++i) cb.expand(centroids[order_[i]]);
    Vec3 ext = cb.extent();
    int axis = (ext.x >= ext.y && ext.x >= ext.z) ? 0 : (ext.y >= ext.z ? 1 : 2);
    int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid,
                     order_.begin() + first + count, [&](int lhs, int rhs) {
                       return centroids[lhs][axis] < centroids[rhs][axis];
                     });
    int node_index = int(nodes_.size());
    nodes_.push_back(node);
    int left = build(first, mid - first, centroids);
    int right = build(mid, first + count - mid, centroids);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
  }
  nodes_.push_back(node);
  return int(nodes_.size()) - 1;
}

namespace {

bool ray_triangle(const Vec3& o, const Vec3& d, const Triangle& tri, double& t_out) {
  constexpr double kEps = 1e-12;
  Vec3 e1 = tri.b - tri.a, e2 = tri.c - tri.a;
  Vec3 pvec = cross(d, e2);
  double det = dot(e1, pvec);
  if (std::abs(det) < 1e-14) return false;
  double inv = 1.0 / det;
  Vec3 tvec = o - tri.a;
  double u = dot(tvec, pvec) * inv;
  if (u < -kEps || u > 1.0 + kEps) return false;
  Vec3 qvec = cross(tvec, e1);
  double v = dot(d, qvec) * inv;
  if (v < -kEps || u + v > 1.0 + kEps) return false;
  t_out = dot(e2, qvec) * inv;
  return true;
}

/// Entry parameter of the ray into the box, or +inf if it misses [t0, t1].
double ray_box_entry(const Vec3& o, const Vec3& inv_d, const Aabb& box, double t0, double t1) {
  double tmin = t0, tmax = t1;
  for (int i = 0; i < 3; ++i) {
    double a = (box.lo[i] - o[i]) * inv_d[i];
    double b = (box.hi[i] - o[i]) * inv_d[i];
    if (a > b) std::swap(a, b);
    tmin = std::max(tmin, a);
    tmax = std::min(tmax, b);
    if (tmin > tmax) return std::numeric_limits<double>::infinity();
  }
  return tmin;
}

}  // namespace

RayHit AabbTree::raycast(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  RayHit best;
  if (root_ < 0) return best;
  double best_t = t_max;
  Vec3 inv_d{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};

  int stack[64];
  int top = 0;
  stack[top++] = root_;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (ray_box_entry(origin, inv_d, node.box, t_min, best_t) ==
        std::numeric_limits<double>::infinity())
      continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        int tri = order_[i];
        double t;
        if (ray_triangle(origin, dir, triangles_[tri], t) && t >= t_min &&
            (t < best_t || (t == best_t && (best.triangle < 0 || tri < best.triangle)))) {
          best_t = t;
          best.t = t;
          best.triangle = tri;
        }
      }
    } else {
      // Near child first so best_t tightens early.
      double dl = ray_box_entry(origin, inv_d, nodes_[node.left].box, t_min, best_t);
      double dr = ray_box_entry(origin, inv_d, nodes_[node.right].box, t_min, best_t);
      if (dl <= dr) {
        if (dr != std::numeric_limits<double>::infinity()) stack[top++] = node.right;
        if (dl != std::numeric_limits<double>::infinity()) stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
  }
  return best;
}

ClosestHit AabbTree::closest(const Vec3& p, double max_dist) const {
  ClosestHit best;
  if (root_ < 0) return best;
  double best_d2 = max_dist * max_dist;
  uint8_t best_label = 255;

  int stack[64];
  int top = 0;
  stack[top++] = root_;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.dist2(p) > best_d2) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        int tri = order_[i];
        double d2 = norm2(p - closest_point_on_triangle(p, triangles_[tri]));
        uint8_t lab = labels_[tri];
        bool better = d2 < best_d2 ||
                      (d2 == best_d2 && best.triangle >= 0 &&
                       (lab < best_label || (lab == best_label && tri < best.triangle)));
        if (better) {
          best_d2 = d2;
          best_label = lab;
          best.triangle = tri;
          best.distance = std::sqrt(d2);
        }
      }
    } else {
      double dl = nodes_[node.left].box.dist2(p);
      double dr = nodes_[node.right].box.dist2(p);
      // Near child popped first.
      if (dl <= dr) {
        if (dr <= best_d2) stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        if (dl <= best_d2) stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
  }
  return best;
}

// -- distance field generation ----------------------------------------------

AabbTree scene_tree(const Scene& scene) {
  std::vector<Triangle> tris(scene.triangles.size());
  std::vector<uint8_t> labels(scene.triangles.size());
  for (size_t i = 0; i < tris.size(); ++i) {
    tris[i] = scene.triangles[i].tri;
    labels[i] = scene.triangles[i].label;
  }
  return AabbTree(std::move(tris), std::move(labels));
}

GroundTruthGrids mesh_to_tdf(const Scene& scene, const HierarchyLevelSpec& level,
                             const GridPlacement& placement) {
  if (scene.triangles.empty()) throw std::invalid_argument("mesh_to_tdf: empty scene");
  AabbTree tree = scene_tree(scene);

  GroundTruthGrids out{
      VoxelVolume(placement.dims, level.voxel_size, placement.origin, VolumeKind::TDF,
                  kTruncationVoxels),
      LabelVolume(placement.dims, level.voxel_size, placement.origin, kEmpty)};

  const double trunc_m = kTruncationVoxels * level.voxel_size;
  const GridDims d = placement.dims;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        Vec3 center = out.tdf.voxel_center(x, y, z);
        ClosestHit hit = tree.closest(center, trunc_m);
        if (hit.valid()) {
          out.tdf.at(x, y, z) = float(hit.distance / level.voxel_size);
          out.labels.at(x, y, z) = tree.label(hit.triangle);
        }
      }
  return out;
}

}  // namespace voxc
