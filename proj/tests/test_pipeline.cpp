#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "voxc/pipeline.hpp"

using namespace voxc;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("voxc_pipe_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

/// Small enough to run the whole pipeline in well under a minute.
PipelineConfig toy_config(const std::string& out_dir) {
  PipelineConfig cfg = PipelineConfig::from_json_text(R"({
    "seed": 7,
    "scenes": {"count": 3, "heldout": 1,
               "room_min": [3.0, 2.4, 3.0], "room_max": [3.6, 2.7, 3.6],
               "furniture_min": 2, "furniture_max": 3},
    "scan": {"candidates": 6, "height_tries": 16},
    "train": {"branch_width": 2, "trunk_width": 4, "steps_per_net": 2, "batch": 1},
    "seam": {"block": 32}
  })");
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("defaults validate and json overrides land where they should") {
  PipelineConfig def;
  def.stats.reference = reference_histogram(def.stats.reference.spec);
  def.validate();
  CHECK(def.train_scene_count() == def.scene_count - def.heldout);

  PipelineConfig cfg = PipelineConfig::from_json_text(R"({
    "seed": 42,
    "scenes": {"count": 10, "heldout": 2, "room_min": [3.0, 2.5, 3.0]},
    "scan": {"fx": 300.0, "angle_mean_deg": 45.0},
    "fusion": {"weight_cap": 64.0},
    "train": {"stage_levels": [2], "quant_bins": 16},
    "seam": {"block": 16}
  })");
  CHECK(cfg.seed == 42);
  CHECK(cfg.scene_count == 10);
  CHECK(cfg.heldout == 2);
  CHECK(cfg.scene.room_min.y == 2.5);
  CHECK(cfg.trajectory.proto.fx == 300.0);
  CHECK(cfg.stats.angle_mean == doctest::Approx(45.0 * M_PI / 180.0));
  CHECK(cfg.weight_cap == 64.0f);
  CHECK(cfg.train.stage_levels == std::vector<int>{2});
  CHECK(cfg.train.quant_bins == 16);
  CHECK(cfg.seam_block == 16);

  // Untouched keys keep their defaults.
  PipelineConfig d2;
  CHECK(cfg.trajectory.proto.fy == d2.trajectory.proto.fy);
  CHECK(cfg.mesh_iso == d2.mesh_iso);

  // The canonical form parses back to the same canonical form.
  PipelineConfig round = PipelineConfig::from_json_text(cfg.canonical());
  CHECK(round.canonical() == cfg.canonical());
}

TEST_CASE("config validation rejects inconsistent settings") {
  CHECK_THROWS(PipelineConfig::from_json_text(R"({"scenes": {"count": 0}})"));
  CHECK_THROWS(PipelineConfig::from_json_text(R"({"scenes": {"count": 5, "heldout": 5}})"));
  CHECK_THROWS(PipelineConfig::from_json_text(R"({"seam": {"block": 2}})"));
  CHECK_THROWS(PipelineConfig::from_json_text(R"({"train": {"batch": 0}})"));
  CHECK_THROWS(PipelineConfig::from_json_text("not json"));
}

TEST_CASE("names and stems") {
  CHECK(scene_stem(0) == "scene_000");
  CHECK(scene_stem(42) == "scene_042");
  for (ModelVariant v : {ModelVariant::Full, ModelVariant::FineOnly, ModelVariant::SemOnly})
    CHECK(variant_from_name(variant_name(v)) == v);
  CHECK_THROWS(variant_from_name("quux"));

  PipelineConfig cfg;
  cfg.out_dir = "base";
  CHECK(scenes_dir(cfg).rfind("base", 0) == 0);
  CHECK(model_dir(cfg, ModelVariant::FineOnly).find("fine_only") != std::string::npos);
}

TEST_CASE("pipeline scenes are deterministic per index") {
  PipelineConfig cfg = toy_config(fresh_dir("scenes"));
  Scene a = pipeline_scene(cfg, 0);
  Scene b = pipeline_scene(cfg, 0);
  Scene c = pipeline_scene(cfg, 1);
  REQUIRE(a.triangles.size() == b.triangles.size());
  CHECK(a.bounds.hi.x == b.bounds.hi.x);
  CHECK(a.furniture.size() == b.furniture.size());
  const bool differs = a.triangles.size() != c.triangles.size() ||
                       a.bounds.hi.x != c.bounds.hi.x || a.bounds.hi.z != c.bounds.hi.z;
  CHECK(differs);
}

TEST_CASE("missing upstream artifacts name the producing subcommand") {
  PipelineConfig cfg = toy_config(fresh_dir("missing"));
  CHECK_THROWS_WITH_AS(stage_scan(cfg), doctest::Contains("gen-scenes"), std::runtime_error);
  CHECK_THROWS_WITH_AS(stage_train(cfg, ModelVariant::Full), doctest::Contains("build-corpus"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(stage_eval(cfg), doctest::Contains("infer"), std::runtime_error);
  CHECK_THROWS_WITH_AS(stage_seam_demo(cfg), doctest::Contains("train"), std::runtime_error);
}

TEST_CASE("variant train configs") {
  PipelineConfig cfg;
  TrainConfig fine = variant_train_config(cfg, ModelVariant::FineOnly);
  CHECK(fine.stage_levels == std::vector<int>{2});
  TrainConfig sem = variant_train_config(cfg, ModelVariant::SemOnly);
  CHECK(sem.head_mode == HeadMode::SemanticOnly);
  TrainConfig full = variant_train_config(cfg, ModelVariant::Full);
  CHECK(full.stage_levels == cfg.train.stage_levels);
  CHECK(full.head_mode == HeadMode::Joint);
}

TEST_CASE("end-to-end toy pipeline produces every artifact") {
  const std::string out = fresh_dir("e2e");
  PipelineConfig cfg = toy_config(out);
  run_full_pipeline(cfg);

  // Scene, scan, fusion, gt and corpus artifacts for every scene.
  for (int i = 0; i < cfg.scene_count; ++i) {
    CHECK(fs::exists(scenes_dir(cfg) + "/" + scene_stem(i) + ".obj"));
    CHECK(fs::exists(scans_dir(cfg) + "/" + scene_stem(i) + "/trajectory.vxtraj"));
    for (int level = 0; level < 3; ++level) {
      CHECK(fs::exists(fused_dir(cfg) + "/" + scene_stem(i) + "/level" + std::to_string(level) +
                       ".vxc"));
      CHECK(fs::exists(gt_dir(cfg) + "/" + scene_stem(i) + "/level" + std::to_string(level) +
                       "_tdf.vxc"));
    }
  }
  CHECK(fs::exists(corpus_manifest_path(cfg)));
  CHECK(fs::exists(model_dir(cfg, ModelVariant::Full) + "/hierarchy.json"));

  // Held-out predictions with the O(1) pass count per scene.
  const std::string pd = pred_dir(cfg, ModelVariant::Full);
  std::ifstream lf(pd + "/ledger.json");
  REQUIRE(lf.good());
  nlohmann::json ledger = nlohmann::json::parse(lf);
  REQUIRE(ledger.size() == size_t(cfg.heldout));
  for (const auto& entry : ledger) {
    CHECK(entry["forward_passes"].get<int>() == 24);
    CHECK(entry["passes_per_stage"] == nlohmann::json({8, 8, 8}));
    CHECK(fs::exists(pd + "/" + entry["scene"].get<std::string>() + "_tdf.vxc"));
  }

  // Evaluation report with the copy baseline and the trained variant.
  std::ifstream rf(eval_dir(cfg) + "/report.json");
  REQUIRE(rf.good());
  nlohmann::json rep = nlohmann::json::parse(rf);
  CHECK(rep.contains("copy_baseline.l1_entire"));
  CHECK(rep.contains("full.l1_entire"));
  CHECK(rep.contains("full.sem_acc_vis"));
  CHECK(rep["full.scenes"].get<std::string>() == "1");

  // Seam comparison on the first held-out scene.
  std::ifstream sf(seam_dir(cfg) + "/report.json");
  REQUIRE(sf.good());
  nlohmann::json seam = nlohmann::json::parse(sf);
  CHECK(seam["forward_passes_ours"].get<int>() == 24);
  CHECK(seam["blocks"].get<int>() >= 1);
  CHECK(seam["forward_passes_blocked"].get<int>() ==
        24 * seam["blocks"].get<int>());
  CHECK(seam["seam_score_blocked"].get<double>() >= 0.0);
  CHECK(fs::exists(seam_dir(cfg) + "/ours.ply"));
  CHECK(fs::exists(seam_dir(cfg) + "/blocked.ply"));

  // Completed stages are cached: re-running does not rewrite artifacts.
  const std::string obj0 = scenes_dir(cfg) + "/scene_000.obj";
  const auto stamp = fs::last_write_time(obj0);
  stage_gen_scenes(cfg);
  stage_scan(cfg);
  stage_fuse(cfg);
  CHECK(fs::last_write_time(obj0) == stamp);

  // Mesh export straight from a produced grid.
  const std::string mesh_path = out + "/pred.obj";
  export_mesh_file(pd + "/" + scene_stem(cfg.scene_count - 1) + "_tdf.vxc",
                   pd + "/" + scene_stem(cfg.scene_count - 1) + "_lab.vxc", mesh_path,
                   cfg.mesh_iso);
  CHECK(fs::exists(mesh_path));

  fs::remove_all(out);
}

TEST_SUITE_END();
