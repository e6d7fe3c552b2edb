#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voxc/sampler.hpp"
#include "voxc/tensor_nn.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

// ---------------------------------------------------------------------------
// Voxel groups
// ---------------------------------------------------------------------------

/// Group id 1..8 from parity (x mod 2, y mod 2, z mod 2), lexicographic:
/// (0,0,0)->1, (0,0,1)->2, (0,1,0)->3, ..., (1,1,1)->8. Same-group voxels are
/// never Chebyshev-adjacent.
inline int group_of(int x, int y, int z) {
  return 1 + ((x & 1) << 2) + ((y & 1) << 1) + (z & 1);
}

inline constexpr int kNumGroups = 8;

/// Linear voxel indices (x-fastest) of each group; disjoint and covering.
std::array<std::vector<size_t>, kNumGroups> partition_groups(GridDims dims);

// ---------------------------------------------------------------------------
// Network configuration
// ---------------------------------------------------------------------------

enum class HeadMode { Joint, CompletionOnly, SemanticOnly };
enum class CompletionHead { Deterministic, Probabilistic };

const char* head_mode_name(HeadMode m);
HeadMode head_mode_from_name(const std::string& s);
const char* completion_head_name(CompletionHead c);
CompletionHead completion_head_from_name(const std::string& s);

/// One group network: per-input branches of residual units (3^3 conv plus a
/// 1^1 shortcut, relu), feature concatenation, a trunk of units, and 1-2
/// output heads (a unit plus a 1^1 projection each). Joint-head totals: 32
/// convolutions at the coarsest level, 42 when the previous-level branch is
/// present.
struct NetConfig {
  int level = 0;  // 0 = no previous-level conditioning branch
  int branch_width = 16;
  int trunk_width = 64;
  HeadMode head_mode = HeadMode::Joint;
  CompletionHead completion = CompletionHead::Deterministic;
  int quant_bins = 32;  // probabilistic head bin count over [0, 3]

  bool has_completion_head() const { return head_mode != HeadMode::SemanticOnly; }
  bool has_semantic_head() const { return head_mode != HeadMode::CompletionOnly; }
  int completion_channels() const {
    return completion == CompletionHead::Deterministic ? 1 : quant_bins;
  }
  int conv_count() const;        // every conv layer, shortcuts and heads included
  int receptive_radius() const;  // voxels; 3^3 convs on the deepest path
  void validate() const;
};

inline constexpr int kTsdfUnits = 3;
inline constexpr int kPrevGroupUnits = 3;
inline constexpr int kPrevLevelUnits = 5;
inline constexpr int kTrunkUnits = 7;

/// Channel layouts of the encoded conditioning tensors.
inline constexpr int kPrevGroupChannels = 1 + kNumClasses + 1;  // TDF, one-hot, mask
inline constexpr int kPrevLevelChannels = 1 + kNumClasses;      // TDF, one-hot

// ---------------------------------------------------------------------------
// Input encodings
// ---------------------------------------------------------------------------

/// Autoregressive running state over one grid: values and labels where
/// earlier groups have been predicted, neutral elsewhere (TDF 3, label empty,
/// mask 0).
struct PrevGroupState {
  VoxelVolume tdf;
  LabelVolume labels;
  std::vector<uint8_t> mask;  // 1 = already predicted

  PrevGroupState() = default;
  PrevGroupState(GridDims dims, double voxel_size, const Vec3& origin);
};

/// Ground-truth conditioning for training group `group`: voxels of groups
/// 1..group-1 carry the target values, everything else stays neutral.
PrevGroupState gt_prev_group(const VoxelVolume& target_tdf, const LabelVolume& target_labels,
                             int group);

Tensor5<float> encode_tsdf_batch(const std::vector<const VoxelVolume*>& vols);
Tensor5<float> encode_prev_group_batch(const std::vector<const PrevGroupState*>& states);
Tensor5<float> encode_prev_level_batch(const std::vector<const VoxelVolume*>& tdfs,
                                       const std::vector<const LabelVolume*>& labels);

// ---------------------------------------------------------------------------
// Head decode
// ---------------------------------------------------------------------------

/// Bin index of a TDF value under Q uniform bins over [0, 3].
int tdf_bin(float d, int quant_bins);
/// Center of bin b: (b + 0.5) * 3 / Q.
float bin_center(int b, int quant_bins);
/// Cross-entropy magnitude weight: 3 at the surface, 1 at truncation.
inline float magnitude_weight(float d) { return 1.0f + 2.0f * (1.0f - d / 3.0f); }

/// Deterministic head: clamp to [0, 3]. Probabilistic head: argmax bin's
/// center, ties to the lowest bin. Batch must be 1.
VoxelVolume decode_completion(const Tensor5<float>& head, const NetConfig& cfg, double voxel_size,
                              const Vec3& origin);
/// Channel argmax, ties to the lowest class id. Batch must be 1.
LabelVolume decode_labels(const Tensor5<float>& logits, double voxel_size, const Vec3& origin);

// ---------------------------------------------------------------------------
// Group network
// ---------------------------------------------------------------------------

struct GroupOutput {
  bool has_completion = false, has_semantics = false;
  Tensor5<float> completion;  // (n, 1 or Q, d, h, w): regression or bin logits
  Tensor5<float> semantics;   // (n, 12, d, h, w)
};

/// Loss targets for one training batch, already masked to the group being
/// trained (mask/weights are zero elsewhere).
struct TrainTargets {
  Tensor5<float> target_tdf;       // (n, 1, d, h, w)
  Tensor5<float> completion_mask;  // 1 on the group's voxels
  std::vector<uint8_t> labels;     // per voxel, (n, d, h, w) order
  std::vector<float> semantic_weights;
  std::vector<uint8_t> bin_labels;  // probabilistic head only
  std::vector<float> bin_weights;
};

class GroupNetwork {
 public:
  GroupNetwork() = default;
  GroupNetwork(const NetConfig& cfg, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  size_t layer_count() const { return layers_.size(); }

  /// Fully convolutional: output spatial dims equal input spatial dims for
  /// any extent. prev_level is required iff config().level > 0.
  GroupOutput forward(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                      const Tensor5<float>* prev_level) const;

  /// One optimizer step on a batch; returns the loss. Adam state lives in the
  /// network between calls.
  double train_step(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                    const Tensor5<float>* prev_level, const TrainTargets& targets, double lr);

  void save(const std::string& path) const;
  void load(const std::string& path);  // shapes must match this config

 private:
  struct Cache;
  GroupOutput run(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                  const Tensor5<float>* prev_level, Cache* cache) const;

  NetConfig cfg_;
  std::vector<Conv3dLayer<float>> layers_;
  std::vector<std::string> layer_names_;
  std::vector<AdamState<float>> opt_w_, opt_b_;
};

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

/// Coarse-to-fine stack of trained stages. The standard model runs stages at
/// levels {0,1,2}; a single-stage variant (e.g. {2}) supports the
/// fine-resolution-only ablation. Multi-stage levels must be consecutive.
struct ModelHierarchy {
  std::vector<int> stage_levels;
  std::vector<std::array<GroupNetwork, kNumGroups>> stages;  // trained stages so far
  NetConfig base;  // widths and head setup; level is set per stage

  /// Architecture of stage i: the first stage has no previous-level branch.
  NetConfig stage_config(size_t stage) const;
  void validate() const;
};

void save_hierarchy(const ModelHierarchy& h, const std::string& dir);
ModelHierarchy load_hierarchy(const std::string& dir);

struct StageOutput {
  VoxelVolume tdf;
  LabelVolume labels;
};

struct InferHooks {
  /// Runs after each group's voxels are written into the running state;
  /// mutating the state feeds the perturbation to later groups only.
  std::function<void(int stage, int group, PrevGroupState& state)> after_group;
};

/// Eight sequential group passes over one whole grid. prev is the previous
/// stage's output at half resolution (null for the first stage). pass_counter
/// increments once per network forward pass.
StageOutput infer_stage(const std::array<GroupNetwork, kNumGroups>& nets, const NetConfig& cfg,
                        const VoxelVolume& tsdf, const StageOutput* prev, int stage_index,
                        int* pass_counter, const InferHooks& hooks = {});

struct InferenceResult {
  VoxelVolume tdf;  // finest stage resolution
  LabelVolume labels;
  int forward_passes = 0;
  std::vector<int> passes_per_stage;
};

/// Full coarse-to-fine inference. stage_tsdfs pairs with stage_levels; grids
/// must share a world origin with exact power-of-two dim ratios. The pass
/// count is 8 x stages (24 for the standard model) regardless of extent.
InferenceResult infer_scene(const ModelHierarchy& h,
                            const std::vector<const VoxelVolume*>& stage_tsdfs,
                            const InferHooks& hooks = {});

struct BlockedResult {
  VoxelVolume tdf;
  LabelVolume labels;
  int forward_passes = 0;
  int blocks = 0;  // footprint tiles, each predicted independently
};

/// Baseline that tiles the scene footprint into fixed-size blocks (x/z extent
/// `block_fine_voxels` at the finest stage, full height) and predicts each
/// block independently; pass counts grow with footprint area and block
/// boundaries show seams.
BlockedResult infer_scene_blocked(const ModelHierarchy& h,
                                  const std::vector<const VoxelVolume*>& stage_tsdfs,
                                  int block_fine_voxels = 32);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct SceneLevelData {
  VoxelVolume input_tsdf;  // fused partial scan
  VoxelVolume target_tdf;
  LabelVolume target_labels;
};

struct SceneData {
  std::string name;
  std::array<SceneLevelData, kNumLevels> levels;
};

using SceneCorpus = std::vector<SceneData>;

struct TrainConfig {
  std::vector<int> stage_levels = {0, 1, 2};
  int branch_width = 16;
  int trunk_width = 64;
  HeadMode head_mode = HeadMode::Joint;
  CompletionHead completion_head = CompletionHead::Deterministic;
  int quant_bins = 32;

  int steps_per_net = 300;
  int batch = 2;
  int decay_step = -1;  // -1: halfway through steps_per_net
  double lr = 1e-3;
  double lr_decayed = 1e-4;
  uint64_t seed = 0;
  bool jitter = true;

  /// Condition levels > 0 on ground-truth coarser volumes instead of the
  /// previous stage's predictions. Affects training inputs only.
  bool gt_train = false;

  std::function<void(int stage, int group, int step, double loss)> on_step;

  NetConfig net_config(int stage_index) const;
  void validate() const;
};

/// Trains stage `stage` in place; h.stages must hold exactly the stages
/// before it. Within a stage the 8 nets train independently on ground-truth
/// previous-group conditioning; conditioning across stages follows
/// cfg.gt_train.
void train_stage(ModelHierarchy& h, const SceneCorpus& corpus, size_t stage,
                 const TrainConfig& cfg);

/// All stages in order.
ModelHierarchy train_hierarchy(const SceneCorpus& corpus, const TrainConfig& cfg);

}  // namespace voxc
