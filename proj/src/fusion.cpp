#include "voxc/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace voxc {

void FusionConfig::validate() const {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("FusionConfig: voxel_size must be > 0");
  if (!(weight_cap >= 1.0f)) throw std::invalid_argument("FusionConfig: weight_cap must be >= 1");
}

FusionState::FusionState(const GridPlacement& placement, double voxel_size)
    : tsdf(placement.dims, voxel_size, placement.origin, VolumeKind::TSDF, -kTruncationVoxels),
      weights(placement.dims.count(), 0.0f) {}

void integrate_frame(FusionState& state, const DepthImage& depth, const Camera& cam,
                     const FusionConfig& cfg) {
  cfg.validate();
  cam.validate();
  if (std::abs(state.tsdf.voxel_size - cfg.voxel_size) > 1e-12)
    throw std::invalid_argument("integrate_frame: config voxel size differs from the grid");
  if (depth.width != cam.width || depth.height != cam.height)
    throw std::invalid_argument("integrate_frame: depth image does not match the camera");
  if (state.weights.size() != state.tsdf.data.size())
    throw std::invalid_argument("integrate_frame: weight grid size mismatch");

  const double trunc_m = cfg.truncation();
  const GridDims d = state.tsdf.dims;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        Vec3 pc = cam.rotation.tmul(state.tsdf.voxel_center(x, y, z) - cam.position);
        if (pc.z <= 0.0) continue;
        int u = int(std::floor(cam.fx * pc.x / pc.z + cam.cx));
        int v = int(std::floor(cam.fy * pc.y / pc.z + cam.cy));
        if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
        float dpx = depth.depth_at(u, v);
        if (dpx <= 0.0f) continue;
        double sdf = double(dpx) - pc.z;
        if (sdf < -trunc_m) continue;  // hidden well behind the observed surface
        float sample = float(std::clamp(sdf, -trunc_m, trunc_m) / cfg.voxel_size);
        size_t i = state.tsdf.index(x, y, z);
        float w = state.weights[i];
        state.tsdf.data[i] = w > 0.0f ? (state.tsdf.data[i] * w + sample) / (w + 1.0f) : sample;
        state.weights[i] = std::min(w + 1.0f, cfg.weight_cap);
      }
}

VoxelVolume fuse_trajectory(const AabbTree& tree, const std::vector<Camera>& cams,
                            const HierarchyLevelSpec& level, const GridPlacement& placement,
                            float weight_cap) {
  if (cams.empty()) throw std::invalid_argument("fuse_trajectory: camera list is empty");
  FusionConfig cfg{level.voxel_size, weight_cap};
  FusionState state(placement, level.voxel_size);
  for (const Camera& cam : cams) integrate_frame(state, render_depth(tree, cam), cam, cfg);
  return std::move(state.tsdf);
}

}  // namespace voxc
