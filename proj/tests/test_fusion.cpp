#include <cmath>

#include "doctest.h"
#include "voxc/fusion.hpp"

using namespace voxc;

namespace {

AabbTree wall_tree(double z0, double half) {
  std::vector<Triangle> tris;
  Vec3 a{-half, -half, z0}, b{half, -half, z0}, c{half, half, z0}, d{-half, half, z0};
  tris.push_back({a, b, c});
  tris.push_back({a, c, d});
  return AabbTree(tris, {kWall, kWall});
}

/// Analytic in-frustum test mirroring the projective update's conditions.
bool in_frustum(const Camera& cam, const Vec3& p) {
  Vec3 pc = cam.rotation.tmul(p - cam.position);
  if (pc.z < cam.near || pc.z > cam.far) return false;
  double u = cam.fx * pc.x / pc.z + cam.cx;
  double v = cam.fy * pc.y / pc.z + cam.cy;
  return u >= 0 && u < cam.width && v >= 0 && v < cam.height;
}

}  // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("fused plane matches the analytic signed distance") {
  const double z0 = 2.0;
  AabbTree tree = wall_tree(z0, 50.0);
  Camera cam = Camera::facing({0, 0, 0}, {0, 0, 1}, Camera{});

  HierarchyLevelSpec level = HierarchyLevelSpec::standard(2);
  GridPlacement placement;
  placement.dims = {24, 24, 48};
  placement.origin = Vec3{-12 * level.voxel_size, -12 * level.voxel_size, 0.8};

  VoxelVolume tsdf = fuse_trajectory(tree, {cam}, level, placement, 255.0f);
  CHECK(tsdf.kind == VolumeKind::TSDF);

  const double trunc = 3.0 * level.voxel_size;
  size_t in_view = 0, ok = 0;
  for (int z = 0; z < placement.dims.z; ++z)
    for (int y = 0; y < placement.dims.y; ++y)
      for (int x = 0; x < placement.dims.x; ++x) {
        Vec3 p = tsdf.voxel_center(x, y, z);
        if (!in_frustum(cam, p)) {
          continue;
        }
        // For a fronto-parallel plane the projective depth is z0 exactly, so
        // the update reduces to a point-to-plane signed distance.
        double sdf = z0 - p.z;
        ++in_view;
        float expected = sdf < -trunc
                             ? -3.0f  // beyond the back truncation: never updated
                             : float(std::clamp(sdf, -trunc, trunc) / level.voxel_size);
        if (std::abs(tsdf.at(x, y, z) - expected) <= 0.5f) ++ok;
      }
  REQUIRE(in_view > 1000);
  CHECK(double(ok) / double(in_view) >= 0.99);
}

TEST_CASE("voxels outside every frustum stay unknown") {
  AabbTree tree = wall_tree(2.0, 50.0);
  Camera cam = Camera::facing({0, 0, 0}, {0, 0, 1}, Camera{});
  HierarchyLevelSpec level = HierarchyLevelSpec::standard(2);
  GridPlacement placement;
  placement.dims = {8, 8, 8};
  placement.origin = Vec3{0, 0, -4.0};  // entirely behind the camera

  VoxelVolume tsdf = fuse_trajectory(tree, {cam}, level, placement);
  for (float v : tsdf.data) CHECK(v == -3.0f);
}

TEST_CASE("integration order does not matter") {
  AabbTree tree = wall_tree(2.2, 50.0);
  Camera a = Camera::facing({0.1, 0, 0}, {0, 0, 1}, Camera{});
  Camera b = Camera::facing({-0.2, 0.1, 0.2}, {0.05, 0, 1}, Camera{});
  HierarchyLevelSpec level = HierarchyLevelSpec::standard(1);
  GridPlacement placement;
  placement.dims = {16, 16, 24};
  placement.origin = Vec3{-0.8, -0.8, 0.6};

  VoxelVolume ab = fuse_trajectory(tree, {a, b}, level, placement);
  VoxelVolume ba = fuse_trajectory(tree, {b, a}, level, placement);
  REQUIRE(ab.data.size() == ba.data.size());
  for (size_t i = 0; i < ab.data.size(); ++i) CHECK(std::abs(ab.data[i] - ba.data[i]) < 1e-5f);
}

TEST_CASE("weight cap saturates the running average") {
  AabbTree tree = wall_tree(2.0, 50.0);
  Camera cam = Camera::facing({0, 0, 0}, {0, 0, 1}, Camera{});
  FusionConfig cfg;
  cfg.voxel_size = HierarchyLevelSpec::standard(2).voxel_size;
  cfg.weight_cap = 2.0f;
  GridPlacement placement;
  placement.dims = {8, 8, 16};
  placement.origin = Vec3{-0.2, -0.2, 1.6};

  FusionState state(placement, cfg.voxel_size);
  DepthImage img = render_depth(tree, cam);
  integrate_frame(state, img, cam, cfg);
  VoxelVolume once = state.tsdf;
  for (int i = 0; i < 50; ++i) integrate_frame(state, img, cam, cfg);
  // Same observation repeated: the average is fixed at the observation, and
  // weights stop growing at the cap.
  for (size_t i = 0; i < once.data.size(); ++i)
    CHECK(std::abs(state.tsdf.data[i] - once.data[i]) < 1e-4f);
  for (float w : state.weights) CHECK(w <= cfg.weight_cap + 1e-6f);
}

TEST_CASE("fusion config derives truncation from the voxel size") {
  FusionConfig cfg;
  cfg.voxel_size = 0.094;
  CHECK(cfg.truncation() == doctest::Approx(0.282));
  cfg.voxel_size = 0.0;
  CHECK_THROWS(cfg.validate());
}

TEST_SUITE_END();
