#pragma once

#include <vector>

#include "voxc/aabb_tree.hpp"
#include "voxc/virtual_scan.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

struct FusionConfig {
  double voxel_size = 0.047;  // meters
  float weight_cap = 255.0f;  // running-average saturation

  /// Fixed at 3 voxels; derived so the ratio cannot drift.
  double truncation() const { return 3.0 * voxel_size; }
  void validate() const;
};

/// TSDF under construction plus per-voxel integration weights. Voxels start
/// at -3 (unknown) with weight 0; values stay in [-3, 3] of this grid's own
/// voxel units.
struct FusionState {
  VoxelVolume tsdf;
  std::vector<float> weights;

  FusionState(const GridPlacement& placement, double voxel_size);
};

/// Projective update: each voxel that lands on a valid depth pixel with
/// sdf = pixel_depth - voxel_cam_depth >= -truncation folds
/// clamp(sdf, +-truncation)/voxel_size into its running average; the weight
/// increments, saturating at the cap. Cameras that see no voxel are a no-op.
void integrate_frame(FusionState& state, const DepthImage& depth, const Camera& cam,
                     const FusionConfig& cfg);

/// Renders every camera against the scene tree and integrates the frames in
/// order at the level's resolution. Negative output marks unknown or
/// behind-surface space.
VoxelVolume fuse_trajectory(const AabbTree& tree, const std::vector<Camera>& cams,
                            const HierarchyLevelSpec& level, const GridPlacement& placement,
                            float weight_cap = 255.0f);

}  // namespace voxc
