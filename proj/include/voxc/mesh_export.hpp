#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxc/voxel_volume.hpp"

namespace voxc {

struct Mesh {
  std::vector<Vec3> vertices;  // world coordinates
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<uint8_t, 3>> colors;  // per vertex; empty = uncolored

  size_t vertex_count() const { return vertices.size(); }
  size_t face_count() const { return faces.size(); }
  /// Edges referenced by exactly one face. 0 on a watertight surface.
  size_t boundary_edge_count() const;
};

/// Marching cubes over voxel-center samples at `iso` (voxel units). On an
/// unsigned TDF the result is the thin double-sided shell at distance iso
/// from the surface, which is the expected artifact of unsigned fields.
/// Shared cube-edge vertices are merged, so closed isosurfaces come out
/// watertight.
Mesh marching_cubes(const VoxelVolume& volume, double iso);

/// Fixed render palette per class id.
std::array<uint8_t, 3> class_color(uint8_t class_id);

/// Colors every vertex by the class of its nearest voxel.
void color_by_labels(Mesh& mesh, const LabelVolume& labels);

void save_ply(const Mesh& mesh, const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);

}  // namespace voxc
