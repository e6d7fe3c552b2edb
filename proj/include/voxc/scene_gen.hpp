#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxc/geometry.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

struct LabeledTriangle {
  Triangle tri;
  uint8_t label = kEmpty;
};

struct LabeledBox {
  Aabb box;
  uint8_t label = kEmpty;
};

/// Triangle soup with per-triangle class labels. Not watertight by design;
/// walls and furniture are open boxes of rectangles.
struct Scene {
  std::vector<LabeledTriangle> triangles;
  Aabb bounds;                      // room interior
  std::vector<LabeledBox> furniture;
  std::vector<LabeledBox> windows;  // flat cutout rectangles, label kWind
};

/// Furniture classes the generator draws from, in class-mix order.
inline constexpr std::array<uint8_t, 7> kFurnitureClasses = {kBed,  kChair, kSofa, kTable,
                                                             kFurn, kObj,   kTv};

struct SceneParams {
  uint64_t seed = 0;
  Vec3 room_min{3.5, 2.4, 3.5};  // extent ranges, meters
  Vec3 room_max{7.0, 3.2, 7.0};
  int furniture_min = 3;
  int furniture_max = 8;
  int windows_min = 1;
  int windows_max = 2;
  std::array<double, 7> class_mix = {1, 1, 1, 1, 1, 1, 1};
  int place_retries = 100;
  double wall_margin = 0.05;  // clearance between furniture and walls
};

/// Procedural room: floor at y=0, ceiling, four walls with optional window
/// cutouts, and labeled furniture boxes. Deterministic in params.seed.
/// Throws if a furniture box cannot be placed within the retry budget.
Scene generate_scene(const SceneParams& params);

/// OBJ with one `usemtl <class>` group per class, plus a JSON sidecar listing
/// room bounds, furniture boxes and windows.
void export_scene_obj(const Scene& scene, const std::string& obj_path);
void export_scene_json(const Scene& scene, const std::string& json_path);

}  // namespace voxc
