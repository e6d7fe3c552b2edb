#include "voxc/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "voxc/evaluation.hpp"
#include "voxc/ground_truth.hpp"
#include "voxc/mesh_export.hpp"
#include "voxc/sampler.hpp"

namespace voxc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::runtime_error err(const std::string& msg) {
  return std::runtime_error("pipeline: " + msg);
}

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw err("missing " + path + "; run `voxc " + producer + "` first");
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

std::string done_path(const PipelineConfig& cfg, const std::string& stage) {
  return cfg.out_dir + "/" + stage + ".done";
}

bool stage_is_done(const PipelineConfig& cfg, const std::string& stage, uint64_t hash) {
  std::ifstream f(done_path(cfg, stage));
  if (!f) return false;
  std::string stored;
  f >> stored;
  return stored == hex64(hash);
}

}  // namespace

double stage_seconds(const PipelineConfig& cfg, const std::string& stage) {
  std::ifstream f(done_path(cfg, stage));
  std::string hash;
  double s;
  if (!(f >> hash) || !(f >> s)) return -1.0;
  return s;
}

namespace {

void mark_done(const PipelineConfig& cfg, const std::string& stage, uint64_t hash,
               double seconds = -1.0) {
  fs::create_directories(cfg.out_dir);
  std::ofstream f(done_path(cfg, stage));
  f << hex64(hash);
  if (seconds >= 0.0) f << " " << seconds;
  f << "\n";
}

/// Hash of a completed stage, mixing in upstream hashes so invalidation
/// cascades. Throws when the upstream stage has not completed.
uint64_t done_hash(const PipelineConfig& cfg, const std::string& stage,
                   const std::string& producer) {
  std::ifstream f(done_path(cfg, stage));
  if (!f) throw err("stage '" + stage + "' has not run; run `voxc " + producer + "` first");
  std::string stored;
  f >> stored;
  return fnv1a(stage + ":" + stored);
}

// --- config (de)serialization ----------------------------------------------

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw err("config: expected a 3-element array");
  return Vec3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json config_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenes"] = {
      {"count", c.scene_count},
      {"heldout", c.heldout},
      {"room_min", vec3_json(c.scene.room_min)},
      {"room_max", vec3_json(c.scene.room_max)},
      {"furniture_min", c.scene.furniture_min},
      {"furniture_max", c.scene.furniture_max},
      {"windows_min", c.scene.windows_min},
      {"windows_max", c.scene.windows_max},
      {"place_retries", c.scene.place_retries},
      {"wall_margin", c.scene.wall_margin},
  };
  const Camera& cam = c.trajectory.proto;
  j["scan"] = {
      {"width", cam.width},        {"height", cam.height},
      {"fx", cam.fx},              {"fy", cam.fy},
      {"cx", cam.cx},              {"cy", cam.cy},
      {"near", cam.near},          {"far", cam.far},
      {"region_size", c.trajectory.region_size},
      {"lambda", c.trajectory.lambda},
      {"candidates", c.trajectory.candidates},
      {"height_tries", c.trajectory.height_tries},
      {"height_mean", c.stats.height_mean},
      {"height_var", c.stats.height_var},
      {"angle_mean_deg", c.stats.angle_mean * 180.0 / M_PI},
      {"angle_var", c.stats.angle_var},
      {"emd_mean", c.stats.emd_mean},
      {"emd_var", c.stats.emd_var},
      {"hist_lo", c.stats.reference.spec.lo},
      {"hist_hi", c.stats.reference.spec.hi},
      {"hist_bins", c.stats.reference.spec.bins},
      {"bootstrap_emd_stats", c.bootstrap_emd_stats},
  };
  j["fusion"] = {{"weight_cap", c.weight_cap}, {"margin", c.grid_margin}};
  j["train"] = {
      {"stage_levels", c.train.stage_levels},
      {"branch_width", c.train.branch_width},
      {"trunk_width", c.train.trunk_width},
      {"head_mode", head_mode_name(c.train.head_mode)},
      {"completion_head", completion_head_name(c.train.completion_head)},
      {"quant_bins", c.train.quant_bins},
      {"steps_per_net", c.train.steps_per_net},
      {"batch", c.train.batch},
      {"decay_step", c.train.decay_step},
      {"lr", c.train.lr},
      {"lr_decayed", c.train.lr_decayed},
      {"jitter", c.train.jitter},
      {"gt_train", c.train.gt_train},
  };
  j["eval"] = {{"surface_threshold", c.surface_threshold}};
  j["mesh"] = {{"iso", c.mesh_iso}};
  j["seam"] = {{"block", c.seam_block}};
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
  if (scene_count < 1) throw err("config: scenes.count must be positive");
  if (heldout < 1 || heldout >= scene_count)
    throw err("config: scenes.heldout must leave at least one training scene");
  if (grid_margin < 0) throw err("config: fusion.margin must be nonnegative");
  if (seam_block < 4) throw err("config: seam.block too small");
  trajectory.proto.validate();
  stats.validate();
  train.validate();
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  PipelineConfig c;
  c.stats.reference = reference_histogram(c.stats.reference.spec);
  maybe(j, "seed", c.seed);
  if (j.contains("scenes")) {
    const json& s = j["scenes"];
    maybe(s, "count", c.scene_count);
    maybe(s, "heldout", c.heldout);
    if (s.contains("room_min")) c.scene.room_min = vec3_from(s["room_min"]);
    if (s.contains("room_max")) c.scene.room_max = vec3_from(s["room_max"]);
    maybe(s, "furniture_min", c.scene.furniture_min);
    maybe(s, "furniture_max", c.scene.furniture_max);
    maybe(s, "windows_min", c.scene.windows_min);
    maybe(s, "windows_max", c.scene.windows_max);
    maybe(s, "place_retries", c.scene.place_retries);
    maybe(s, "wall_margin", c.scene.wall_margin);
  }
  if (j.contains("scan")) {
    const json& s = j["scan"];
    Camera& cam = c.trajectory.proto;
    maybe(s, "width", cam.width);
    maybe(s, "height", cam.height);
    maybe(s, "fx", cam.fx);
    maybe(s, "fy", cam.fy);
    maybe(s, "cx", cam.cx);
    maybe(s, "cy", cam.cy);
    maybe(s, "near", cam.near);
    maybe(s, "far", cam.far);
    maybe(s, "region_size", c.trajectory.region_size);
    maybe(s, "lambda", c.trajectory.lambda);
    maybe(s, "candidates", c.trajectory.candidates);
    maybe(s, "height_tries", c.trajectory.height_tries);
    maybe(s, "height_mean", c.stats.height_mean);
    maybe(s, "height_var", c.stats.height_var);
    if (s.contains("angle_mean_deg"))
      c.stats.angle_mean = s["angle_mean_deg"].get<double>() * M_PI / 180.0;
    maybe(s, "angle_var", c.stats.angle_var);
    maybe(s, "emd_mean", c.stats.emd_mean);
    maybe(s, "emd_var", c.stats.emd_var);
    HistSpec spec = c.stats.reference.spec;
    maybe(s, "hist_lo", spec.lo);
    maybe(s, "hist_hi", spec.hi);
    maybe(s, "hist_bins", spec.bins);
    c.stats.reference = reference_histogram(spec);
    maybe(s, "bootstrap_emd_stats", c.bootstrap_emd_stats);
  }
  if (j.contains("fusion")) {
    maybe(j["fusion"], "weight_cap", c.weight_cap);
    maybe(j["fusion"], "margin", c.grid_margin);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    maybe(t, "stage_levels", c.train.stage_levels);
    maybe(t, "branch_width", c.train.branch_width);
    maybe(t, "trunk_width", c.train.trunk_width);
    if (t.contains("head_mode"))
      c.train.head_mode = head_mode_from_name(t["head_mode"].get<std::string>());
    if (t.contains("completion_head"))
      c.train.completion_head = completion_head_from_name(t["completion_head"].get<std::string>());
    maybe(t, "quant_bins", c.train.quant_bins);
    maybe(t, "steps_per_net", c.train.steps_per_net);
    maybe(t, "batch", c.train.batch);
    maybe(t, "decay_step", c.train.decay_step);
    maybe(t, "lr", c.train.lr);
    maybe(t, "lr_decayed", c.train.lr_decayed);
    maybe(t, "jitter", c.train.jitter);
    maybe(t, "gt_train", c.train.gt_train);
  }
  if (j.contains("eval")) maybe(j["eval"], "surface_threshold", c.surface_threshold);
  if (j.contains("mesh")) maybe(j["mesh"], "iso", c.mesh_iso);
  if (j.contains("seam")) maybe(j["seam"], "block", c.seam_block);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw err("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string PipelineConfig::canonical() const { return config_json(*this).dump(); }

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::Full: return "full";
    case ModelVariant::FineOnly: return "fine_only";
    case ModelVariant::SemOnly: return "sem_only";
  }
  throw err("bad variant");
}

ModelVariant variant_from_name(const std::string& s) {
  if (s == "full") return ModelVariant::Full;
  if (s == "fine_only") return ModelVariant::FineOnly;
  if (s == "sem_only") return ModelVariant::SemOnly;
  throw err("unknown model variant '" + s + "' (full, fine_only, sem_only)");
}

TrainConfig variant_train_config(const PipelineConfig& cfg, ModelVariant v) {
  TrainConfig t = cfg.train;
  switch (v) {
    case ModelVariant::Full:
      break;
    case ModelVariant::FineOnly:
      t.stage_levels = {kNumLevels - 1};
      break;
    case ModelVariant::SemOnly:
      t.head_mode = HeadMode::SemanticOnly;
      break;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

std::string scene_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03d", index);
  return buf;
}

std::string scenes_dir(const PipelineConfig& c) { return c.out_dir + "/scenes"; }
std::string scans_dir(const PipelineConfig& c) { return c.out_dir + "/scans"; }
std::string fused_dir(const PipelineConfig& c) { return c.out_dir + "/fused"; }
std::string gt_dir(const PipelineConfig& c) { return c.out_dir + "/gt"; }
std::string corpus_manifest_path(const PipelineConfig& c) {
  return c.out_dir + "/corpus/manifest.json";
}
std::string model_dir(const PipelineConfig& c, ModelVariant v) {
  return c.out_dir + "/models/" + variant_name(v);
}
std::string pred_dir(const PipelineConfig& c, ModelVariant v) {
  return c.out_dir + "/pred/" + variant_name(v);
}
std::string eval_dir(const PipelineConfig& c) { return c.out_dir + "/eval"; }
std::string seam_dir(const PipelineConfig& c) { return c.out_dir + "/seam"; }

Scene pipeline_scene(const PipelineConfig& cfg, int index) {
  SceneParams p = cfg.scene;
  // Placement is rejection-sampled and an unlucky draw (say, two maximum-size
  // beds in a small room) can be infeasible outright, so a corpus-scale run
  // falls back to sibling seeds instead of dying on one bad scene. The retry
  // sequence is derived, keeping scene `index` deterministic in cfg.seed.
  for (int attempt = 0;; ++attempt) {
    p.seed = Rng::derive(cfg.seed, 100000 + uint64_t(index) + 1000000 * uint64_t(attempt));
    try {
      return generate_scene(p);
    } catch (const std::runtime_error&) {
      if (attempt >= 31) throw;
    }
  }
}

namespace {

std::string fused_level_path(const PipelineConfig& c, int scene, int level) {
  return fused_dir(c) + "/" + scene_stem(scene) + "/level" + std::to_string(level) + ".vxc";
}
std::string gt_tdf_path(const PipelineConfig& c, int scene, int level) {
  return gt_dir(c) + "/" + scene_stem(scene) + "/level" + std::to_string(level) + "_tdf.vxc";
}
std::string gt_lab_path(const PipelineConfig& c, int scene, int level) {
  return gt_dir(c) + "/" + scene_stem(scene) + "/level" + std::to_string(level) + "_lab.vxc";
}
std::string traj_path(const PipelineConfig& c, int scene) {
  return scans_dir(c) + "/" + scene_stem(scene) + "/trajectory.vxtraj";
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_gen_scenes(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t h = fnv1a("gen:" + config_json(cfg)["scenes"].dump() +
                           std::to_string(cfg.seed));
  if (stage_is_done(cfg, "gen-scenes", h)) return;
  const double t0 = now_seconds();
  fs::create_directories(scenes_dir(cfg));
  for (int i = 0; i < cfg.scene_count; ++i) {
    Scene s = pipeline_scene(cfg, i);
    const std::string stem = scenes_dir(cfg) + "/" + scene_stem(i);
    export_scene_obj(s, stem + ".obj");
    export_scene_json(s, stem + ".json");
  }
  mark_done(cfg, "gen-scenes", h, now_seconds() - t0);
}

void stage_scan(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t up = done_hash(cfg, "gen-scenes", "gen-scenes");
  const uint64_t h = fnv1a("scan:" + hex64(up) + config_json(cfg)["scan"].dump());
  if (stage_is_done(cfg, "scan", h)) return;
  const double t0 = now_seconds();

  TrajectoryStats stats = cfg.stats;
  if (cfg.bootstrap_emd_stats) {
    // Fit the EMD acceptance Gaussian from the pooled candidate EMDs of every
    // training scene, mirroring how the statistics would come from real scans.
    std::vector<double> all;
    for (int i = 0; i < cfg.train_scene_count(); ++i) {
      Scene s = pipeline_scene(cfg, i);
      AabbTree tree = scene_tree(s);
      TrajectoryParams params = cfg.trajectory;
      params.seed = Rng::derive(cfg.seed, 200000 + uint64_t(i));
      std::vector<double> e = candidate_emds(tree, s.bounds, stats, params);
      all.insert(all.end(), e.begin(), e.end());
    }
    if (all.size() >= 2) {
      const double mean = std::accumulate(all.begin(), all.end(), 0.0) / double(all.size());
      double var = 0.0;
      for (double v : all) var += (v - mean) * (v - mean);
      var /= double(all.size() - 1);
      stats.emd_mean = mean;
      stats.emd_var = std::max(var, 1e-8);
    }
  }
  {
    fs::create_directories(scans_dir(cfg));
    json j = {{"emd_mean", stats.emd_mean}, {"emd_var", stats.emd_var}};
    std::ofstream f(scans_dir(cfg) + "/stats.json");
    f << j.dump(2) << "\n";
  }

  for (int i = 0; i < cfg.scene_count; ++i) {
    Scene s = pipeline_scene(cfg, i);
    AabbTree tree = scene_tree(s);
    TrajectoryParams params = cfg.trajectory;
    params.seed = Rng::derive(cfg.seed, 200000 + uint64_t(i));
    Trajectory traj = build_trajectory(tree, s.bounds, stats, params);
    if (traj.cameras.empty())
      throw err("scan: no viable cameras for " + scene_stem(i) +
                "; loosen the trajectory config");
    const std::string dir = scans_dir(cfg) + "/" + scene_stem(i);
    fs::create_directories(dir);
    save_trajectory(traj.cameras, traj_path(cfg, i));
    for (size_t k = 0; k < traj.cameras.size(); ++k) {
      DepthImage img = render_depth(tree, traj.cameras[k]);
      char buf[32];
      std::snprintf(buf, sizeof buf, "/depth_%03zu.vxd", k);
      save_depth(img, dir + buf);
    }
  }
  mark_done(cfg, "scan", h, now_seconds() - t0);
}

void stage_fuse(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t up = done_hash(cfg, "scan", "scan");
  const uint64_t h = fnv1a("fuse:" + hex64(up) + config_json(cfg)["fusion"].dump());
  if (stage_is_done(cfg, "fuse", h)) return;
  const double t0 = now_seconds();

  for (int i = 0; i < cfg.scene_count; ++i) {
    require_artifact(traj_path(cfg, i), "scan");
    Scene s = pipeline_scene(cfg, i);
    AabbTree tree = scene_tree(s);
    std::vector<Camera> cams = load_trajectory(traj_path(cfg, i));
    const auto placements = plan_grids(s.bounds, cfg.grid_margin);
    fs::create_directories(fused_dir(cfg) + "/" + scene_stem(i));
    for (int level = 0; level < kNumLevels; ++level) {
      VoxelVolume tsdf = fuse_trajectory(tree, cams, HierarchyLevelSpec::standard(level),
                                         placements[level], cfg.weight_cap);
      save_grid(tsdf, fused_level_path(cfg, i, level));
    }
  }
  mark_done(cfg, "fuse", h, now_seconds() - t0);
}

void stage_make_gt(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t up = done_hash(cfg, "gen-scenes", "gen-scenes");
  const uint64_t h =
      fnv1a("gt:" + hex64(up) + std::to_string(cfg.grid_margin));
  if (stage_is_done(cfg, "make-gt", h)) return;
  const double t0 = now_seconds();

  for (int i = 0; i < cfg.scene_count; ++i) {
    Scene s = pipeline_scene(cfg, i);
    const auto placements = plan_grids(s.bounds, cfg.grid_margin);
    fs::create_directories(gt_dir(cfg) + "/" + scene_stem(i));
    for (int level = 0; level < kNumLevels; ++level) {
      GroundTruthGrids g = mesh_to_tdf(s, HierarchyLevelSpec::standard(level),
                                       placements[level]);
      save_grid(g.tdf, gt_tdf_path(cfg, i, level));
      save_grid(g.labels, gt_lab_path(cfg, i, level));
    }
  }
  mark_done(cfg, "make-gt", h, now_seconds() - t0);
}

void stage_build_corpus(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t fuse_h = done_hash(cfg, "fuse", "fuse");
  const uint64_t gt_h = done_hash(cfg, "make-gt", "make-gt");
  const uint64_t h = fnv1a("corpus:" + hex64(fuse_h) + hex64(gt_h) +
                           std::to_string(cfg.train_scene_count()));
  if (stage_is_done(cfg, "build-corpus", h)) return;
  const double t0 = now_seconds();

  // Whole-scene records; the train stage crops subvolumes from them per step
  // because levels past the first condition on the freshly trained coarser
  // stage's predictions, which cannot be materialized up front.
  std::vector<SampleRecord> records;
  for (int i = 0; i < cfg.train_scene_count(); ++i) {
    for (int level = 0; level < kNumLevels; ++level) {
      require_artifact(fused_level_path(cfg, i, level), "fuse");
      require_artifact(gt_tdf_path(cfg, i, level), "make-gt");
      require_artifact(gt_lab_path(cfg, i, level), "make-gt");
      const std::string root = cfg.out_dir + "/corpus";
      SampleRecord r;
      r.level = level;
      r.scene = scene_stem(i);
      r.crop_origin = {0, 0, 0};
      r.input_tsdf = fs::relative(fused_level_path(cfg, i, level), root).string();
      r.target_tdf = fs::relative(gt_tdf_path(cfg, i, level), root).string();
      r.target_labels = fs::relative(gt_lab_path(cfg, i, level), root).string();
      records.push_back(std::move(r));
    }
  }
  fs::create_directories(cfg.out_dir + "/corpus");
  save_manifest(records, corpus_manifest_path(cfg));
  mark_done(cfg, "build-corpus", h, now_seconds() - t0);
}

namespace {

SceneCorpus load_corpus(const PipelineConfig& cfg) {
  require_artifact(corpus_manifest_path(cfg), "build-corpus");
  const auto records = load_manifest(corpus_manifest_path(cfg));
  const std::string root = cfg.out_dir + "/corpus";
  SceneCorpus corpus;
  for (const SampleRecord& r : records) {
    if (corpus.empty() || corpus.back().name != r.scene) {
      corpus.emplace_back();
      corpus.back().name = r.scene;
    }
    if (r.level < 0 || r.level >= kNumLevels) throw err("corpus: bad level in manifest");
    SceneLevelData& lvl = corpus.back().levels[r.level];
    lvl.input_tsdf = load_volume(root + "/" + r.input_tsdf);
    lvl.target_tdf = load_volume(root + "/" + r.target_tdf);
    lvl.target_labels = load_labels(root + "/" + r.target_labels);
  }
  if (corpus.empty()) throw err("corpus: manifest holds no scenes");
  return corpus;
}

}  // namespace

void stage_train(const PipelineConfig& cfg, ModelVariant v, int level) {
  cfg.validate();
  const uint64_t up = done_hash(cfg, "build-corpus", "build-corpus");
  const std::string stage_name = std::string("train-") + variant_name(v);
  const uint64_t h = fnv1a(stage_name + ":" + hex64(up) + config_json(cfg)["train"].dump());
  if (level < 0 && stage_is_done(cfg, stage_name, h)) return;
  const double t0 = now_seconds();

  const TrainConfig tc = variant_train_config(cfg, v);
  const std::string dir = model_dir(cfg, v);
  SceneCorpus corpus = load_corpus(cfg);

  if (level < 0) {
    ModelHierarchy hier = train_hierarchy(corpus, tc);
    save_hierarchy(hier, dir);
    mark_done(cfg, stage_name, h, now_seconds() - t0);
    return;
  }

  auto it = std::find(tc.stage_levels.begin(), tc.stage_levels.end(), level);
  if (it == tc.stage_levels.end())
    throw err("train: level " + std::to_string(level) + " is not part of the " +
              variant_name(v) + " variant");
  const size_t stage = size_t(it - tc.stage_levels.begin());

  ModelHierarchy hier;
  if (stage == 0) {
    hier.stage_levels = tc.stage_levels;
    hier.base = tc.net_config(0);
  } else {
    if (!fs::exists(dir + "/hierarchy.json"))
      throw err("train: level " + std::to_string(level) + " requires earlier levels; run " +
                "`voxc train --level " + std::to_string(tc.stage_levels[stage - 1]) + "` first");
    hier = load_hierarchy(dir);
    if (hier.stages.size() != stage)
      throw err("train: model has " + std::to_string(hier.stages.size()) +
                " trained stage(s); level " + std::to_string(level) + " needs exactly " +
                std::to_string(stage));
  }
  train_stage(hier, corpus, stage, tc);
  save_hierarchy(hier, dir);
  if (hier.stages.size() == tc.stage_levels.size()) mark_done(cfg, stage_name, h, now_seconds() - t0);
}

void stage_infer(const PipelineConfig& cfg, ModelVariant v) {
  cfg.validate();
  const std::string train_stage_name = std::string("train-") + variant_name(v);
  const uint64_t up = done_hash(cfg, train_stage_name, "train");
  const std::string stage_name = std::string("infer-") + variant_name(v);
  const uint64_t h = fnv1a(stage_name + ":" + hex64(up) + std::to_string(cfg.heldout));
  if (stage_is_done(cfg, stage_name, h)) return;
  const double t0 = now_seconds();

  require_artifact(model_dir(cfg, v) + "/hierarchy.json", "train");
  ModelHierarchy hier = load_hierarchy(model_dir(cfg, v));
  const std::string dir = pred_dir(cfg, v);
  fs::create_directories(dir);

  json ledger = json::array();
  for (int i = cfg.train_scene_count(); i < cfg.scene_count; ++i) {
    std::vector<VoxelVolume> tsdfs;
    for (int level : hier.stage_levels) {
      require_artifact(fused_level_path(cfg, i, level), "fuse");
      tsdfs.push_back(load_volume(fused_level_path(cfg, i, level)));
    }
    std::vector<const VoxelVolume*> ptrs;
    for (const auto& t : tsdfs) ptrs.push_back(&t);
    const double t0 = now_seconds();
    InferenceResult r = infer_scene(hier, ptrs);
    const double dt = now_seconds() - t0;
    save_grid(r.tdf, dir + "/" + scene_stem(i) + "_tdf.vxc");
    save_grid(r.labels, dir + "/" + scene_stem(i) + "_lab.vxc");
    const GridDims d = r.tdf.dims;
    ledger.push_back({{"scene", scene_stem(i)},
                      {"dims", {d.x, d.y, d.z}},
                      {"forward_passes", r.forward_passes},
                      {"passes_per_stage", r.passes_per_stage},
                      {"seconds", dt}});
  }
  std::ofstream f(dir + "/ledger.json");
  f << ledger.dump(2) << "\n";
  mark_done(cfg, stage_name, h, now_seconds() - t0);
}

namespace {

struct VariantEval {
  bool present = false;
  double l1_entire = 0, l1_pred_surf = 0, l1_target_surf = 0, l1_unk = 0;
  double acc_vis = 0, acc_int = 0, iou_mean = 0;
  int scenes = 0;
};

}  // namespace

void stage_eval(const PipelineConfig& cfg) {
  cfg.validate();
  const uint64_t up = done_hash(cfg, "infer-full", "infer");
  const uint64_t h = fnv1a("eval:" + hex64(up) + std::to_string(cfg.surface_threshold));
  // Re-evaluates even when done; metrics are cheap and variants may appear.
  const double t0 = now_seconds();

  const int fine = kNumLevels - 1;
  EvalReport report;
  double copy_l1 = 0;
  int copy_n = 0;

  VariantEval evals[3];
  for (int vi = 0; vi < 3; ++vi) {
    const ModelVariant v = ModelVariant(vi);
    const std::string dir = pred_dir(cfg, v);
    if (!fs::exists(dir)) continue;
    VariantEval& e = evals[vi];
    e.present = true;

    for (int i = cfg.train_scene_count(); i < cfg.scene_count; ++i) {
      const std::string tdf_path = dir + "/" + scene_stem(i) + "_tdf.vxc";
      require_artifact(tdf_path, "infer");
      require_artifact(gt_tdf_path(cfg, i, fine), "make-gt");
      VoxelVolume pred_tdf = load_volume(tdf_path);
      LabelVolume pred_lab = load_labels(dir + "/" + scene_stem(i) + "_lab.vxc");
      VoxelVolume gt_tdf = load_volume(gt_tdf_path(cfg, i, fine));
      LabelVolume gt_lab = load_labels(gt_lab_path(cfg, i, fine));
      VoxelVolume input = load_volume(fused_level_path(cfg, i, fine));

      CompletionErrors ce =
          l1_completion_errors(pred_tdf, gt_tdf, input, cfg.surface_threshold);
      e.l1_entire += ce.entire.value;
      if (ce.pred_surf.defined) e.l1_pred_surf += ce.pred_surf.value;
      if (ce.target_surf.defined) e.l1_target_surf += ce.target_surf.value;
      if (ce.unk_space.defined) e.l1_unk += ce.unk_space.value;

      const auto vis = vis_mask(input, gt_tdf, cfg.surface_threshold);
      const auto inter = surface_intersection_mask(pred_tdf, gt_tdf, cfg.surface_threshold);
      e.acc_vis += semantic_accuracy(pred_lab, gt_lab, vis).average;
      e.acc_int += semantic_accuracy(pred_lab, gt_lab, inter).average;
      const auto iou = semantic_iou(pred_lab, gt_lab, vis);
      double iou_sum = 0;
      int iou_n = 0;
      for (const auto& c : iou)
        if (c.defined) iou_sum += c.iou, ++iou_n;
      e.iou_mean += iou_n ? iou_sum / iou_n : 0.0;
      ++e.scenes;

      if (vi == 0) {
        // Trivial completion baseline: the input scan's own unsigned distance.
        VoxelVolume copy(input.dims, input.voxel_size, input.origin, VolumeKind::TDF, 3.0f);
        for (size_t k = 0; k < input.data.size(); ++k)
          copy.data[k] = std::clamp(std::fabs(input.data[k]), 0.0f, kTruncationVoxels);
        copy_l1 += l1_completion_errors(copy, gt_tdf, input, cfg.surface_threshold).entire.value;
        ++copy_n;
      }
    }
    if (e.scenes > 0) {
      const double n = e.scenes;
      e.l1_entire /= n;
      e.l1_pred_surf /= n;
      e.l1_target_surf /= n;
      e.l1_unk /= n;
      e.acc_vis /= n;
      e.acc_int /= n;
      e.iou_mean /= n;
    }
  }

  if (copy_n > 0) report.add("copy_baseline.l1_entire", copy_l1 / copy_n);
  for (int vi = 0; vi < 3; ++vi) {
    if (!evals[vi].present || evals[vi].scenes == 0) continue;
    const std::string p = variant_name(ModelVariant(vi));
    report.add(p + ".scenes", double(evals[vi].scenes));
    report.add(p + ".l1_entire", evals[vi].l1_entire);
    report.add(p + ".l1_pred_surf", evals[vi].l1_pred_surf);
    report.add(p + ".l1_target_surf", evals[vi].l1_target_surf);
    report.add(p + ".l1_unknown_space", evals[vi].l1_unk);
    report.add(p + ".sem_acc_vis", evals[vi].acc_vis);
    report.add(p + ".sem_acc_int", evals[vi].acc_int);
    report.add(p + ".iou_mean_vis", evals[vi].iou_mean);
  }

  fs::create_directories(eval_dir(cfg));
  report.save(eval_dir(cfg) + "/report.txt", eval_dir(cfg) + "/report.json");
  mark_done(cfg, "eval", h, now_seconds() - t0);
}

void stage_seam_demo(const PipelineConfig& cfg) {
  cfg.validate();
  done_hash(cfg, "train-full", "train");
  require_artifact(model_dir(cfg, ModelVariant::Full) + "/hierarchy.json", "train");
  ModelHierarchy hier = load_hierarchy(model_dir(cfg, ModelVariant::Full));

  const int i = cfg.train_scene_count();  // first held-out scene
  std::vector<VoxelVolume> tsdfs;
  for (int level : hier.stage_levels) {
    require_artifact(fused_level_path(cfg, i, level), "fuse");
    tsdfs.push_back(load_volume(fused_level_path(cfg, i, level)));
  }
  std::vector<const VoxelVolume*> ptrs;
  for (const auto& t : tsdfs) ptrs.push_back(&t);

  const double t0 = now_seconds();
  InferenceResult ours = infer_scene(hier, ptrs);
  const double t_ours = now_seconds() - t0;
  BlockedResult blocked = infer_scene_blocked(hier, ptrs, cfg.seam_block);
  const double t_blocked = now_seconds() - t0 - t_ours;

  const double score_ours = seam_score(ours.tdf, cfg.seam_block);
  const double score_blocked = seam_score(blocked.tdf, cfg.seam_block);

  fs::create_directories(seam_dir(cfg));
  Mesh m1 = marching_cubes(ours.tdf, cfg.mesh_iso);
  color_by_labels(m1, ours.labels);
  save_ply(m1, seam_dir(cfg) + "/ours.ply");
  Mesh m2 = marching_cubes(blocked.tdf, cfg.mesh_iso);
  color_by_labels(m2, blocked.labels);
  save_ply(m2, seam_dir(cfg) + "/blocked.ply");

  json j = {{"scene", scene_stem(i)},
            {"seam_score_ours", score_ours},
            {"seam_score_blocked", score_blocked},
            {"ratio", score_ours > 0 ? score_blocked / score_ours : 0.0},
            {"forward_passes_ours", ours.forward_passes},
            {"forward_passes_blocked", blocked.forward_passes},
            {"blocks", blocked.blocks},
            {"seconds_ours", t_ours},
            {"seconds_blocked", t_blocked}};
  std::ofstream f(seam_dir(cfg) + "/report.json");
  f << j.dump(2) << "\n";
  std::printf("seam score: ours %.4f, blocked %.4f (x%.2f); passes %d vs %d\n", score_ours,
              score_blocked, score_ours > 0 ? score_blocked / score_ours : 0.0,
              ours.forward_passes, blocked.forward_passes);
}

void export_mesh_file(const std::string& tdf_path, const std::string& labels_path,
                      const std::string& out_path, double iso) {
  require_artifact(tdf_path, "infer (or make-gt)");
  VoxelVolume tdf = load_volume(tdf_path);
  Mesh mesh = marching_cubes(tdf, iso);
  if (!labels_path.empty()) {
    LabelVolume labels = load_labels(labels_path);
    color_by_labels(mesh, labels);
  }
  if (out_path.size() >= 4 && out_path.substr(out_path.size() - 4) == ".obj")
    save_obj(mesh, out_path);
  else
    save_ply(mesh, out_path);
}

void run_full_pipeline(const PipelineConfig& cfg) {
  stage_gen_scenes(cfg);
  stage_scan(cfg);
  stage_fuse(cfg);
  stage_make_gt(cfg);
  stage_build_corpus(cfg);
  stage_train(cfg, ModelVariant::Full);
  stage_infer(cfg, ModelVariant::Full);
  stage_eval(cfg);
  stage_seam_demo(cfg);
}

}  // namespace voxc
