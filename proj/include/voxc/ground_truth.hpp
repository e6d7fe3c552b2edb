#pragma once

#include "voxc/aabb_tree.hpp"
#include "voxc/scene_gen.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

/// Query tree over the scene's labeled triangles; built once per scene and
/// shared across rendering, fusion and distance-field generation.
AabbTree scene_tree(const Scene& scene);

struct GroundTruthGrids {
  VoxelVolume tdf;     // unsigned distance, [0, 3] voxel units
  LabelVolume labels;  // class of the nearest surface; empty past truncation
};

/// Exact point-to-mesh distance field sampled at voxel centers, clamped at the
/// truncation distance. Each voxel is labeled with the class of its nearest
/// triangle (ties go to the lower class id); voxels at or past truncation stay
/// empty.
GroundTruthGrids mesh_to_tdf(const Scene& scene, const HierarchyLevelSpec& level,
                             const GridPlacement& placement);

}  // namespace voxc
