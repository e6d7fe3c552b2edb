#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxc/voxel_volume.hpp"

namespace voxc {

/// Mean over a voxel mask; defined is false when the mask is empty (the
/// metric is reported as n/a, never as 0).
struct MaskedError {
  double value = 0.0;
  size_t count = 0;
  bool defined = false;
};

/// L1 distance-field error (voxel units) over four voxel regions: all voxels,
/// near the predicted surface, near the target surface, and the input's
/// unknown space (negative TSDF).
struct CompletionErrors {
  MaskedError entire, pred_surf, target_surf, unk_space;
};

CompletionErrors l1_completion_errors(const VoxelVolume& pred_tdf, const VoxelVolume& target_tdf,
                                      const VoxelVolume& input_tsdf,
                                      double surface_threshold = 1.0);

/// Voxels visible in the partial input: observed (TSDF >= 0) and on the
/// ground-truth surface (TDF <= threshold).
std::vector<uint8_t> vis_mask(const VoxelVolume& input_tsdf, const VoxelVolume& target_tdf,
                              double surface_threshold = 1.0);

/// Intersection of the predicted and ground-truth surfaces.
std::vector<uint8_t> surface_intersection_mask(const VoxelVolume& pred_tdf,
                                               const VoxelVolume& target_tdf,
                                               double surface_threshold = 1.0);

struct ClassStat {
  size_t correct = 0;
  size_t total = 0;  // 0 = class absent from the mask (excluded from the average)
};

struct SemanticAccuracy {
  std::array<ClassStat, kNumClasses> per_class;
  double average = 0.0;  // unweighted mean over present classes
  int present_classes = 0;
  size_t mask_count = 0;
};

SemanticAccuracy semantic_accuracy(const LabelVolume& pred, const LabelVolume& gt,
                                   const std::vector<uint8_t>& mask);

struct ClassIou {
  double iou = 0.0;
  bool defined = false;  // union empty -> n/a
};

std::array<ClassIou, kNumClasses> semantic_iou(const LabelVolume& pred, const LabelVolume& gt,
                                               const std::vector<uint8_t>& mask);

/// Mean |TDF jump| across voxel-face pairs straddling x/z block-boundary
/// planes (multiples of `block` voxels). The independent-block baseline shows
/// large jumps here; whole-volume inference should not.
double seam_score(const VoxelVolume& tdf, int block);

// ---------------------------------------------------------------------------
// Pass ledger: forward-pass counts and wall time per run, for the O(1)
// passes-vs-footprint comparison.
// ---------------------------------------------------------------------------

struct PassLedgerEntry {
  std::string run;  // e.g. "hierarchy 128x64x128" or "blocked 128x64x128"
  GridDims fine_dims;
  int forward_passes = 0;
  int blocks = 0;  // 0 for whole-volume runs
  double seconds = 0.0;
};

struct PassLedger {
  std::vector<PassLedgerEntry> entries;

  void add(PassLedgerEntry e) { entries.push_back(std::move(e)); }
  int total_passes() const;
  std::string text() const;
};

// ---------------------------------------------------------------------------
// Flat key/value report, emitted as text and JSON.
// ---------------------------------------------------------------------------

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> kv;

  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  void add(const std::string& key, const MaskedError& e);  // n/a when undefined
  std::string text() const;
  void save(const std::string& txt_path, const std::string& json_path) const;
};

}  // namespace voxc
