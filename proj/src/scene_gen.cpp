#include "voxc/scene_gen.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "voxc/rng.hpp"

namespace voxc {

namespace {

void add_rect(std::vector<LabeledTriangle>& tris, const Vec3& p00, const Vec3& p10,
              const Vec3& p11, const Vec3& p01, uint8_t label) {
  tris.push_back({{p00, p10, p11}, label});
  tris.push_back({{p00, p11, p01}, label});
}

/// Rectangle in a wall plane. axis: 0 = wall spans x (fixed z), 2 = wall
/// spans z (fixed x). u is the in-plane horizontal coordinate.
void add_wall_rect(std::vector<LabeledTriangle>& tris, int axis, double fixed, double u0,
                   double u1, double y0, double y1, uint8_t label) {
  if (u1 <= u0 || y1 <= y0) return;
  auto at = [&](double u, double y) {
    return axis == 0 ? Vec3{u, y, fixed} : Vec3{fixed, y, u};
  };
  add_rect(tris, at(u0, y0), at(u1, y0), at(u1, y1), at(u0, y1), label);
}

struct BoxSize {
  double lo[3], hi[3];
};

BoxSize furniture_size_range(uint8_t cls) {
  switch (cls) {
    case kBed:   return {{1.4, 0.4, 1.9}, {2.0, 0.6, 2.1}};
    case kChair: return {{0.4, 0.8, 0.4}, {0.6, 1.0, 0.6}};
    case kSofa:  return {{1.6, 0.7, 0.8}, {2.2, 0.9, 1.0}};
    case kTable: return {{0.8, 0.7, 0.6}, {1.6, 0.8, 1.0}};
    case kFurn:  return {{0.8, 1.2, 0.3}, {1.6, 2.0, 0.6}};
    case kObj:   return {{0.2, 0.2, 0.2}, {0.5, 0.5, 0.5}};
    case kTv:    return {{0.9, 0.5, 0.08}, {1.4, 0.8, 0.12}};
    default: throw std::invalid_argument("not a furniture class");
  }
}

void add_box(std::vector<LabeledTriangle>& tris, const Aabb& b, uint8_t label) {
  const Vec3& l = b.lo;
  const Vec3& h = b.hi;
  // -y, +y
  add_rect(tris, {l.x, l.y, l.z}, {h.x, l.y, l.z}, {h.x, l.y, h.z}, {l.x, l.y, h.z}, label);
  add_rect(tris, {l.x, h.y, l.z}, {h.x, h.y, l.z}, {h.x, h.y, h.z}, {l.x, h.y, h.z}, label);
  // -z, +z
  add_rect(tris, {l.x, l.y, l.z}, {h.x, l.y, l.z}, {h.x, h.y, l.z}, {l.x, h.y, l.z}, label);
  add_rect(tris, {l.x, l.y, h.z}, {h.x, l.y, h.z}, {h.x, h.y, h.z}, {l.x, h.y, h.z}, label);
  // -x, +x
  add_rect(tris, {l.x, l.y, l.z}, {l.x, l.y, h.z}, {l.x, h.y, h.z}, {l.x, h.y, l.z}, label);
  add_rect(tris, {h.x, l.y, l.z}, {h.x, l.y, h.z}, {h.x, h.y, h.z}, {h.x, h.y, l.z}, label);
}

struct WindowCut {
  double u0, u1, y0, y1;
};

}  // namespace

Scene generate_scene(const SceneParams& params) {
  Rng rng(params.seed);
  Scene scene;

  const double W = rng.uniform(params.room_min.x, params.room_max.x);
  const double H = rng.uniform(params.room_min.y, params.room_max.y);
  const double D = rng.uniform(params.room_min.z, params.room_max.z);
  scene.bounds.expand({0, 0, 0});
  scene.bounds.expand({W, H, D});

  // Floor and ceiling.
  add_rect(scene.triangles, {0, 0, 0}, {W, 0, 0}, {W, 0, D}, {0, 0, D}, kFloor);
  add_rect(scene.triangles, {0, H, 0}, {W, H, 0}, {W, H, D}, {0, H, D}, kCeil);

  // Walls 0..3: z=0, z=D, x=0, x=W. At most one window cutout per wall.
  int n_windows = int(rng.uniform_int(params.windows_min, params.windows_max));
  n_windows = std::min(n_windows, 4);
  std::array<bool, 4> has_window = {false, false, false, false};
  std::array<WindowCut, 4> cuts{};
  for (int w = 0; w < n_windows; ++w) {
    int wall = int(rng.uniform_int(0, 3));
    while (has_window[wall]) wall = (wall + 1) % 4;
    double span = (wall < 2) ? W : D;
    double ww = rng.uniform(0.6, std::min(1.5, span - 0.6));
    double wh = rng.uniform(0.8, std::min(1.4, H - 1.2));
    double u0 = rng.uniform(0.3, span - ww - 0.3);
    double y0 = rng.uniform(0.9, std::min(1.2, H - wh - 0.1));
    has_window[wall] = true;
    cuts[wall] = {u0, u0 + ww, y0, y0 + wh};
  }
  for (int wall = 0; wall < 4; ++wall) {
    int axis = wall < 2 ? 0 : 2;
    double fixed = (wall == 0) ? 0 : (wall == 1 ? D : (wall == 2 ? 0 : W));
    double span = (wall < 2) ? W : D;
    if (!has_window[wall]) {
      add_wall_rect(scene.triangles, axis, fixed, 0, span, 0, H, kWall);
      continue;
    }
    const WindowCut& c = cuts[wall];
    add_wall_rect(scene.triangles, axis, fixed, 0, c.u0, 0, H, kWall);
    add_wall_rect(scene.triangles, axis, fixed, c.u1, span, 0, H, kWall);
    add_wall_rect(scene.triangles, axis, fixed, c.u0, c.u1, 0, c.y0, kWall);
    add_wall_rect(scene.triangles, axis, fixed, c.u0, c.u1, c.y1, H, kWall);
    add_wall_rect(scene.triangles, axis, fixed, c.u0, c.u1, c.y0, c.y1, kWind);
    Aabb wbox;
    if (axis == 0) {
      wbox.expand({c.u0, c.y0, fixed});
      wbox.expand({c.u1, c.y1, fixed});
    } else {
      wbox.expand({fixed, c.y0, c.u0});
      wbox.expand({fixed, c.y1, c.u1});
    }
    scene.windows.push_back({wbox, kWind});
  }

  // Furniture boxes, rejection-placed to avoid overlap.
  int count = int(rng.uniform_int(params.furniture_min, params.furniture_max));
  double mix_total = 0.0;
  for (double m : params.class_mix) mix_total += m;
  if (count > 0 && mix_total <= 0.0)
    throw std::runtime_error("generate_scene: class mix has no positive weight");

  for (int i = 0; i < count; ++i) {
    double pick = rng.uniform() * mix_total;
    uint8_t cls = kFurnitureClasses.back();
    for (size_t k = 0; k < kFurnitureClasses.size(); ++k) {
      pick -= params.class_mix[k];
      if (pick <= 0.0) {
        cls = kFurnitureClasses[k];
        break;
      }
    }
    BoxSize r = furniture_size_range(cls);
    double sx = rng.uniform(r.lo[0], r.hi[0]);
    double sy = rng.uniform(r.lo[1], r.hi[1]);
    double sz = rng.uniform(r.lo[2], r.hi[2]);
    if (rng.uniform() < 0.5) std::swap(sx, sz);

    const double m = params.wall_margin;
    if (sx > W - 2 * m || sz > D - 2 * m || sy > H)
      throw std::runtime_error(std::string("generate_scene: ") + class_name(cls) +
                               " does not fit inside the room");
    bool placed = false;
    for (int attempt = 0; attempt < params.place_retries && !placed; ++attempt) {
      double x = rng.uniform(m, W - sx - m);
      double z = rng.uniform(m, D - sz - m);
      double y = 0.0;
      if (cls == kTv) y = rng.uniform(0.7, std::min(1.2, H - sy - 0.1));
      Aabb box;
      box.expand({x, y, z});
      box.expand({x + sx, y + sy, z + sz});
      bool overlap = false;
      for (const auto& f : scene.furniture)
        if (f.box.overlaps(box)) {
          overlap = true;
          break;
        }
      if (!overlap) {
        scene.furniture.push_back({box, cls});
        add_box(scene.triangles, box, cls);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error(
          std::string("generate_scene: no non-overlapping position for ") + class_name(cls) +
          " after " + std::to_string(params.place_retries) + " retries");
  }

  return scene;
}

void export_scene_obj(const Scene& scene, const std::string& obj_path) {
  std::ofstream os(obj_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + obj_path);
  os << "# room scene, " << scene.triangles.size() << " triangles\n";
  // Group triangles by class so each gets one usemtl block.
  std::map<uint8_t, std::vector<const LabeledTriangle*>> by_class;
  for (const auto& t : scene.triangles) by_class[t.label].push_back(&t);
  size_t vert_index = 1;
  for (const auto& [cls, tris] : by_class) {
    os << "usemtl " << class_name(cls) << "\n";
    for (const auto* t : tris) {
      for (const Vec3& p : {t->tri.a, t->tri.b, t->tri.c})
        os << "v " << p.x << " " << p.y << " " << p.z << "\n";
      os << "f " << vert_index << " " << vert_index + 1 << " " << vert_index + 2 << "\n";
      vert_index += 3;
    }
  }
}

void export_scene_json(const Scene& scene, const std::string& json_path) {
  nlohmann::json j;
  j["bounds"] = {{"lo", {scene.bounds.lo.x, scene.bounds.lo.y, scene.bounds.lo.z}},
                 {"hi", {scene.bounds.hi.x, scene.bounds.hi.y, scene.bounds.hi.z}}};
  auto box_json = [](const LabeledBox& b) {
    return nlohmann::json{{"class", class_name(b.label)},
                          {"lo", {b.box.lo.x, b.box.lo.y, b.box.lo.z}},
                          {"hi", {b.box.hi.x, b.box.hi.y, b.box.hi.z}}};
  };
  j["furniture"] = nlohmann::json::array();
  for (const auto& b : scene.furniture) j["furniture"].push_back(box_json(b));
  j["windows"] = nlohmann::json::array();
  for (const auto& b : scene.windows) j["windows"].push_back(box_json(b));
  j["triangle_count"] = scene.triangles.size();
  std::ofstream os(json_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + json_path);
  os << j.dump(2) << "\n";
}

}  // namespace voxc
