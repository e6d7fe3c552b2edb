#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxc/rng.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

/// One training subvolume. Previous-level channels are stored already
/// upsampled to this level's resolution so augmentation shifts every channel
/// by the same whole rows.
struct TrainSample {
  VoxelVolume input_tsdf;   // fused partial scan, train_crop dims
  VoxelVolume target_tdf;   // complete-geometry distance field
  LabelVolume target_labels;
  std::vector<float> loss_weights;  // per voxel: 1 structural/empty, 10 objects

  bool has_prev = false;
  VoxelVolume prev_tdf;  // previous (coarser) level, upsampled 2x
  LabelVolume prev_labels;

  void validate() const;
};

/// Per-voxel semantic loss weights: 1 for wall/floor/ceiling/empty, 10 for
/// every object class.
std::vector<float> semantic_weights(const LabelVolume& labels);

/// Whole-scene grids one level of the hierarchy trains against. prev_* come
/// from the previous level's predictions at that level's (coarser) resolution
/// and are optional at the coarsest level.
struct SceneVolumes {
  const VoxelVolume* input_tsdf = nullptr;
  const VoxelVolume* target_tdf = nullptr;
  const LabelVolume* target_labels = nullptr;
  const VoxelVolume* prev_tdf = nullptr;
  const LabelVolume* prev_labels = nullptr;
};

/// Crops on a 3m lattice (in whole voxels of this level) across the scene
/// grid. Crops holding at least one object voxel are always kept; crops of
/// pure structure/empty survive with probability 0.1. A scene smaller than
/// one crop yields a single centered padded crop. Deterministic in rng state.
std::vector<TrainSample> sample_subvolumes(const SceneVolumes& vols,
                                           const HierarchyLevelSpec& level, Rng& rng);

/// Vertical augmentation: u ~ Uniform[0, 0.1875] m, rounded to whole rows of
/// this sample's grid. Content moves up; exposed bottom rows read as unseen
/// space (TSDF -3, TDF 3, labels empty). All channels shift together.
TrainSample height_jitter(const TrainSample& sample, Rng& rng);

inline constexpr double kMaxJitterMeters = 0.1875;

// ---------------------------------------------------------------------------
// Corpus manifest: JSON list of sample records pointing at grid files
// (paths relative to the manifest's directory).
// ---------------------------------------------------------------------------

struct SampleRecord {
  int level = 0;
  std::string scene;
  std::array<int, 3> crop_origin{0, 0, 0};  // voxel offset in the scene grid
  std::string input_tsdf, target_tdf, target_labels;
  std::string prev_tdf, prev_labels;  // empty when the level has no prior
};

/// Writes the sample's grids under root (creating directories) and returns a
/// record with paths "<stem>_<channel>.vxc" relative to root.
SampleRecord save_sample(const TrainSample& sample, const std::string& root,
                         const std::string& stem, int level, const std::string& scene,
                         const std::array<int, 3>& crop_origin);

TrainSample load_sample(const SampleRecord& record, const std::string& root);

void save_manifest(const std::vector<SampleRecord>& records, const std::string& path);
std::vector<SampleRecord> load_manifest(const std::string& path);

}  // namespace voxc
