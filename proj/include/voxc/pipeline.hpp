#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxc/completion_model.hpp"
#include "voxc/fusion.hpp"
#include "voxc/scene_gen.hpp"
#include "voxc/virtual_scan.hpp"

namespace voxc {

/// Everything the pipeline stages need, loadable from a JSON config file.
/// Field defaults are the reference values; a config file overrides only the
/// keys it names.
struct PipelineConfig {
  uint64_t seed = 0;
  std::string out_dir = "out";

  int scene_count = 50;
  int heldout = 5;  // trailing scenes excluded from training
  SceneParams scene;

  TrajectoryParams trajectory;
  TrajectoryStats stats;
  bool bootstrap_emd_stats = true;  // fit emd mean/var from candidate scans

  float weight_cap = 255.0f;
  double grid_margin = 0.15;  // world padding around scene bounds, meters

  TrainConfig train;

  double surface_threshold = 1.0;
  double mesh_iso = 1.0;  // voxel units
  int seam_block = 32;    // fine voxels

  int train_scene_count() const { return scene_count - heldout; }
  void validate() const;

  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig from_json_file(const std::string& path);
  /// Canonical serialized form; stage caching hashes subsets of this.
  std::string canonical() const;
};

/// Training variants the ablation criteria compare.
enum class ModelVariant { Full, FineOnly, SemOnly };
const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& s);
TrainConfig variant_train_config(const PipelineConfig& cfg, ModelVariant v);

// ---------------------------------------------------------------------------
// Artifact paths under cfg.out_dir.
// ---------------------------------------------------------------------------

std::string scene_stem(int index);  // "scene_000"
std::string scenes_dir(const PipelineConfig&);
std::string scans_dir(const PipelineConfig&);
std::string fused_dir(const PipelineConfig&);
std::string gt_dir(const PipelineConfig&);
std::string corpus_manifest_path(const PipelineConfig&);
std::string model_dir(const PipelineConfig&, ModelVariant);
std::string pred_dir(const PipelineConfig&, ModelVariant);
std::string eval_dir(const PipelineConfig&);
std::string seam_dir(const PipelineConfig&);

/// Deterministic scene i of this config (procedural, so stages regenerate
/// geometry instead of parsing mesh files back in).
Scene pipeline_scene(const PipelineConfig& cfg, int index);

// ---------------------------------------------------------------------------
// Stages. Each stage writes a .done marker keyed by a hash of its config
// slice plus its upstream markers, and returns immediately when the marker
// already matches (re-runs skip completed work). Missing upstream artifacts
// raise errors naming the file and the subcommand that makes it.
// ---------------------------------------------------------------------------

void stage_gen_scenes(const PipelineConfig&);
void stage_scan(const PipelineConfig&);
void stage_fuse(const PipelineConfig&);
void stage_make_gt(const PipelineConfig&);
void stage_build_corpus(const PipelineConfig&);

/// level -1 trains every stage; level >= 0 trains that hierarchy level only
/// and requires the earlier levels' checkpoints in the model directory.
void stage_train(const PipelineConfig&, ModelVariant v, int level = -1);

void stage_infer(const PipelineConfig&, ModelVariant v);
void stage_eval(const PipelineConfig&);
void stage_seam_demo(const PipelineConfig&);

/// Wall-clock seconds a completed stage recorded in its marker, or -1 when
/// the marker is missing or predates duration recording.
double stage_seconds(const PipelineConfig&, const std::string& stage);

/// Isosurface of a TDF grid file; labels_path may be empty (uncolored).
/// Writes PLY or OBJ depending on the output extension.
void export_mesh_file(const std::string& tdf_path, const std::string& labels_path,
                      const std::string& out_path, double iso);

/// Runs gen-scenes through eval (plus seam-demo) in order.
void run_full_pipeline(const PipelineConfig&);

}  // namespace voxc
