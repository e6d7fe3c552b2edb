#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxc/geometry.hpp"

namespace voxc {

// ---------------------------------------------------------------------------
// Semantic classes. 11 scene classes plus `empty`; ids are frozen because they
// appear in grid files and checkpoints.
// ---------------------------------------------------------------------------

enum ClassId : uint8_t {
  kBed = 0,
  kCeil = 1,
  kChair = 2,
  kFloor = 3,
  kFurn = 4,
  kObj = 5,
  kSofa = 6,
  kTable = 7,
  kTv = 8,
  kWall = 9,
  kWind = 10,
  kEmpty = 11,
};

inline constexpr int kNumClasses = 12;

const char* class_name(uint8_t id);
int class_from_name(const std::string& name);  // -1 if unknown

/// Structural classes carry weight 1 in the semantic loss; everything else 10.
/// Empty space is treated as structural: it dominates the grids even more than
/// walls do.
inline bool is_structural(uint8_t id) {
  return id == kWall || id == kFloor || id == kCeil || id == kEmpty;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Truncation distance in voxel units, shared by every distance grid.
inline constexpr float kTruncationVoxels = 3.0f;

struct GridDims {
  int x = 0, y = 0, z = 0;  // y is the vertical axis

  GridDims() = default;
  GridDims(int x_, int y_, int z_);

  size_t count() const { return size_t(x) * size_t(y) * size_t(z); }
  bool operator==(const GridDims&) const = default;

  /// Upper bound on voxels per grid; guards against runaway allocations.
  static void set_memory_cap(size_t voxels);
  static size_t memory_cap();
};

enum class VolumeKind : uint8_t { TSDF = 0, TDF = 1 };

/// Dense scalar grid with world placement. Distances are stored in voxel
/// units of this grid's own level; cross-level transfers rescale explicitly.
/// Storage is x-fastest: index = x + dims.x * (y + dims.y * z).
struct VoxelVolume {
  GridDims dims;
  double voxel_size = 1.0;     // meters
  Vec3 origin;                 // world position of the (0,0,0) voxel corner
  VolumeKind kind = VolumeKind::TDF;
  std::vector<float> data;

  VoxelVolume() = default;
  VoxelVolume(GridDims d, double vs, Vec3 org, VolumeKind k, float fill);

  size_t index(int x, int y, int z) const {
    return size_t(x) + size_t(dims.x) * (size_t(y) + size_t(dims.y) * size_t(z));
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims.x && y < dims.y && z < dims.z;
  }

  float min_value() const { return kind == VolumeKind::TSDF ? -kTruncationVoxels : 0.0f; }
  float max_value() const { return kTruncationVoxels; }

  Vec3 voxel_center(int x, int y, int z) const {
    return origin + Vec3{(x + 0.5) * voxel_size, (y + 0.5) * voxel_size, (z + 0.5) * voxel_size};
  }

  /// Trilinear sample at a world point, interpolating between voxel centers
  /// and clamping at the border. Returns values in this grid's voxel units.
  float sample_world(const Vec3& p) const;

  /// Throws if any value is outside the kind's legal range.
  void validate() const;
};

struct LabelVolume {
  GridDims dims;
  double voxel_size = 1.0;
  Vec3 origin;
  std::vector<uint8_t> labels;

  LabelVolume() = default;
  LabelVolume(GridDims d, double vs, Vec3 org, uint8_t fill);

  size_t index(int x, int y, int z) const {
    return size_t(x) + size_t(dims.x) * (size_t(y) + size_t(dims.y) * size_t(z));
  }
  uint8_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
  uint8_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }

  void validate() const;  // every id < kNumClasses
};

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

/// 0 = coarse (18.8cm), 1 = mid (9.4cm), 2 = fine (4.7cm). The voxel size
/// halves at each finer level and every training crop spans 3m vertically.
struct HierarchyLevelSpec {
  int level = 0;
  double voxel_size = 0.188;
  GridDims train_crop{32, 16, 32};

  static HierarchyLevelSpec standard(int level);
};

inline constexpr int kNumLevels = 3;

/// Where one level's grid sits in the world.
struct GridPlacement {
  GridDims dims;
  Vec3 origin;
};

/// Grids for all three levels over a world box, sharing one origin. Fine dims
/// are rounded up to a multiple of 4 so the coarse, mid and fine grids cover
/// identical extents at exactly 1:2:4 voxels per axis.
std::array<GridPlacement, kNumLevels> plan_grids(const Aabb& bounds, double margin);

// ---------------------------------------------------------------------------
// Coordinate mapping
// ---------------------------------------------------------------------------

/// Fractional voxel coordinate of a world point: (p - origin) / voxel_size.
/// Out-of-bounds coordinates are returned as-is; callers clamp.
Vec3 world_to_voxel(const VoxelVolume& v, const Vec3& p);
Vec3 voxel_to_world(const VoxelVolume& v, const Vec3& voxel_coord);

// ---------------------------------------------------------------------------
// Resampling and cropping
// ---------------------------------------------------------------------------

/// Doubles the resolution. Distances are interpolated trilinearly and
/// rescaled by 2 (a metric distance covers twice as many of the finer
/// voxels), then clamped back to the legal range. Only factor 2 is supported.
VoxelVolume upsample(const VoxelVolume& v, int factor);

/// Nearest-neighbor upsample for labels.
LabelVolume upsample(const LabelVolume& v, int factor);

/// Nearest-neighbor downsample by 2 (picks the even-index voxel of each
/// block). Inverse of label upsampling.
LabelVolume downsample_labels(const LabelVolume& v, int factor);

enum class PadMode { None, Pad };

/// Crop `dims` voxels starting at voxel offset `offset` (may be negative in
/// Pad mode). The origin shifts so world positions are preserved. Without
/// padding, out-of-bounds crops throw. `pad_value` defaults to the truncation
/// distance; callers that want unknown-space padding pass -3 explicitly.
VoxelVolume crop(const VoxelVolume& v, int ox, int oy, int oz, GridDims dims,
                 PadMode mode = PadMode::None, float pad_value = kTruncationVoxels);

LabelVolume crop(const LabelVolume& v, int ox, int oy, int oz, GridDims dims,
                 PadMode mode = PadMode::None, uint8_t pad_label = kEmpty);

// ---------------------------------------------------------------------------
// Binary grid format "VXC1" (little-endian)
//   offset size  field
//   0      4     magic "VXC1"
//   4      1     kind byte: 0 = TSDF, 1 = TDF, 2 = labels
//   5      1     channel tag: 0 = f32 distances, 1 = u8 labels
//   6      12    dims x, y, z (3 x u32)
//   18     8     voxel_size, meters (f64)
//   26     24    origin x, y, z (3 x f64)
//   50     ...   payload, x-fastest ordering
// ---------------------------------------------------------------------------

void save_grid(const VoxelVolume& v, const std::string& path);
void save_grid(const LabelVolume& v, const std::string& path);
VoxelVolume load_volume(const std::string& path);
LabelVolume load_labels(const std::string& path);

}  // namespace voxc
