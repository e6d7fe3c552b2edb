#include <filesystem>

#include "doctest.h"
#include "voxc/rng.hpp"
#include "voxc/voxel_volume.hpp"

using namespace voxc;

TEST_SUITE_BEGIN("voxel_volume");

TEST_CASE("class names roundtrip and structural weighting") {
  for (int c = 0; c < kNumClasses; ++c)
    CHECK(class_from_name(class_name(uint8_t(c))) == c);
  CHECK(class_from_name("no-such-class") == -1);
  CHECK(is_structural(kWall));
  CHECK(is_structural(kFloor));
  CHECK(is_structural(kCeil));
  CHECK(is_structural(kEmpty));
  CHECK_FALSE(is_structural(kBed));
  CHECK_FALSE(is_structural(kTv));
}

TEST_CASE("standard hierarchy levels") {
  auto l0 = HierarchyLevelSpec::standard(0);
  auto l1 = HierarchyLevelSpec::standard(1);
  auto l2 = HierarchyLevelSpec::standard(2);
  CHECK(l0.voxel_size == doctest::Approx(0.188));
  CHECK(l1.voxel_size == doctest::Approx(0.094));
  CHECK(l2.voxel_size == doctest::Approx(0.047));
  CHECK(l0.voxel_size == doctest::Approx(4 * l2.voxel_size));
  CHECK(l0.train_crop == GridDims{32, 16, 32});
  CHECK(l1.train_crop == GridDims{32, 32, 32});
  CHECK(l2.train_crop == GridDims{32, 64, 32});
  // Every crop spans the same 3m of height in its own voxels.
  CHECK(l0.train_crop.y * l0.voxel_size == doctest::Approx(l2.train_crop.y * l2.voxel_size));
  CHECK_THROWS(HierarchyLevelSpec::standard(3));
}

TEST_CASE("plan_grids aligns three levels at 1:2:4") {
  Aabb box;
  box.expand({0.3, 0.0, -1.2});
  box.expand({4.1, 2.6, 2.9});
  auto g = plan_grids(box, 0.15);

  CHECK(g[2].dims.x % 4 == 0);
  CHECK(g[2].dims.y % 4 == 0);
  CHECK(g[2].dims.z % 4 == 0);
  CHECK(g[1].dims.x * 2 == g[2].dims.x);
  CHECK(g[0].dims.x * 4 == g[2].dims.x);
  CHECK(g[1].dims.y * 2 == g[2].dims.y);
  CHECK(g[0].dims.z * 4 == g[2].dims.z);
  for (int l = 0; l < 3; ++l) {
    CHECK(g[l].origin.x == doctest::Approx(g[0].origin.x));
    CHECK(g[l].origin.y == doctest::Approx(g[0].origin.y));
    CHECK(g[l].origin.z == doctest::Approx(g[0].origin.z));
  }
  // Margins covered: the grid must contain the padded box.
  const double fine = HierarchyLevelSpec::standard(2).voxel_size;
  CHECK(g[2].origin.x <= box.lo.x - 0.15 + 1e-9);
  CHECK(g[2].origin.x + g[2].dims.x * fine >= box.hi.x + 0.15 - 1e-9);
  CHECK(g[2].origin.y + g[2].dims.y * fine >= box.hi.y + 0.15 - 1e-9);
}

TEST_CASE("crop preserves world placement") {
  VoxelVolume v(GridDims{6, 5, 4}, 0.1, Vec3{1, 2, 3}, VolumeKind::TDF, 0.0f);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) v.at(x, y, z) = float(x + 10 * y + 100 * z) / 200.0f;

  auto c = crop(v, 2, 1, 1, GridDims{3, 3, 2});
  CHECK(c.at(0, 0, 0) == v.at(2, 1, 1));
  Vec3 w0 = c.voxel_center(0, 0, 0), w1 = v.voxel_center(2, 1, 1);
  CHECK(w0.x == doctest::Approx(w1.x));
  CHECK(w0.y == doctest::Approx(w1.y));
  CHECK(w0.z == doctest::Approx(w1.z));

  CHECK_THROWS(crop(v, 4, 0, 0, GridDims{3, 3, 3}));
  CHECK_THROWS(crop(v, -1, 0, 0, GridDims{3, 3, 3}));

  auto padded = crop(v, -2, 0, 0, GridDims{3, 3, 3}, PadMode::Pad, -3.0f);
  CHECK(padded.at(0, 0, 0) == -3.0f);
  CHECK(padded.at(2, 0, 0) == v.at(0, 0, 0));
}

TEST_CASE("label crop pads with empty") {
  LabelVolume v(GridDims{4, 4, 4}, 0.1, Vec3{}, kWall);
  auto c = crop(v, 2, 2, 2, GridDims{4, 4, 4}, PadMode::Pad);
  CHECK(c.at(0, 0, 0) == kWall);
  CHECK(c.at(3, 3, 3) == kEmpty);
}

TEST_CASE("upsample doubles resolution and rescales distances") {
  VoxelVolume v(GridDims{4, 4, 4}, 0.2, Vec3{0.5, 0, 0}, VolumeKind::TDF, 1.2f);
  auto u = upsample(v, 2);
  CHECK(u.dims == GridDims{8, 8, 8});
  CHECK(u.voxel_size == doctest::Approx(0.1));
  CHECK(u.origin.x == doctest::Approx(0.5));
  // A constant field interpolates to itself, then distances double in the
  // finer units and clamp at truncation.
  for (float x : u.data) CHECK(x == doctest::Approx(2.4f));

  VoxelVolume big(GridDims{2, 2, 2}, 0.2, Vec3{}, VolumeKind::TDF, 2.9f);
  auto clamped = upsample(big, 2);
  for (float x : clamped.data) CHECK(x == doctest::Approx(3.0f));
  CHECK_THROWS(upsample(v, 3));
}

TEST_CASE("label upsample and downsample invert") {
  Rng rng(41);
  LabelVolume v(GridDims{5, 3, 4}, 0.2, Vec3{}, kEmpty);
  for (auto& l : v.labels) l = uint8_t(rng.uniform_int(0, kNumClasses - 1));
  auto up = upsample(v, 2);
  CHECK(up.dims == GridDims{10, 6, 8});
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 10; ++x) CHECK(up.at(x, y, z) == v.at(x / 2, y / 2, z / 2));
  auto down = downsample_labels(up, 2);
  CHECK(down.dims == v.dims);
  CHECK(down.labels == v.labels);
}

TEST_CASE("grid file roundtrip") {
  namespace fs = std::filesystem;
  Rng rng(43);
  VoxelVolume v(GridDims{3, 4, 5}, 0.047, Vec3{-1.5, 0.25, 9}, VolumeKind::TSDF, 0.0f);
  for (auto& x : v.data) x = float(rng.uniform(-3, 3));
  const std::string p1 = (fs::temp_directory_path() / "voxc_grid_test.vxc").string();
  save_grid(v, p1);
  auto v2 = load_volume(p1);
  CHECK(v2.kind == VolumeKind::TSDF);
  CHECK(v2.dims == v.dims);
  CHECK(v2.voxel_size == v.voxel_size);
  CHECK(v2.origin.x == v.origin.x);
  CHECK(v2.data == v.data);

  LabelVolume lab(GridDims{3, 4, 5}, 0.047, Vec3{-1.5, 0.25, 9}, kEmpty);
  for (auto& l : lab.labels) l = uint8_t(rng.uniform_int(0, kNumClasses - 1));
  save_grid(lab, p1);
  auto lab2 = load_labels(p1);
  CHECK(lab2.labels == lab.labels);
  CHECK_THROWS(load_volume(p1));  // kind byte says labels
  fs::remove(p1);
}

TEST_CASE("sample_world interpolates between centers") {
  VoxelVolume v(GridDims{2, 1, 1}, 1.0, Vec3{}, VolumeKind::TDF, 0.0f);
  v.at(0, 0, 0) = 1.0f;
  v.at(1, 0, 0) = 3.0f;
  CHECK(v.sample_world({0.5, 0.5, 0.5}) == doctest::Approx(1.0));
  CHECK(v.sample_world({1.0, 0.5, 0.5}) == doctest::Approx(2.0));
  CHECK(v.sample_world({1.5, 0.5, 0.5}) == doctest::Approx(3.0));
  CHECK(v.sample_world({-5.0, 0.5, 0.5}) == doctest::Approx(1.0));  // border clamp
}

TEST_CASE("validate enforces the kind's range") {
  VoxelVolume tdf(GridDims{2, 2, 2}, 0.1, Vec3{}, VolumeKind::TDF, 1.0f);
  tdf.validate();
  tdf.data[0] = -0.5f;
  CHECK_THROWS(tdf.validate());

  VoxelVolume tsdf(GridDims{2, 2, 2}, 0.1, Vec3{}, VolumeKind::TSDF, -3.0f);
  tsdf.validate();
  tsdf.data[0] = 3.5f;
  CHECK_THROWS(tsdf.validate());

  LabelVolume lab(GridDims{2, 2, 2}, 0.1, Vec3{}, kEmpty);
  lab.validate();
  lab.labels[0] = kNumClasses;
  CHECK_THROWS(lab.validate());
}

TEST_CASE("memory cap rejects runaway grids") {
  const size_t keep = GridDims::memory_cap();
  GridDims::set_memory_cap(1000);
  CHECK_THROWS(VoxelVolume(GridDims{20, 20, 20}, 0.1, Vec3{}, VolumeKind::TDF, 0.0f));
  GridDims::set_memory_cap(keep);
}

TEST_SUITE_END();
