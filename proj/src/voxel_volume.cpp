#include "voxc/voxel_volume.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxc {

namespace {

const char* kClassNames[kNumClasses] = {"bed",  "ceil",  "chair", "floor", "furn", "obj",
                                        "sofa", "table", "tv",    "wall",  "wind", "empty"};

std::atomic<size_t> g_memory_cap{size_t(1) << 29};  // 512M voxels == 2 GiB of f32

}  // namespace

const char* class_name(uint8_t id) {
  return id < kNumClasses ? kClassNames[id] : "?";
}

int class_from_name(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kClassNames[i]) return i;
  return -1;
}

GridDims::GridDims(int x_, int y_, int z_) : x(x_), y(y_), z(z_) {
  if (x < 1 || y < 1 || z < 1) throw std::invalid_argument("GridDims: all components must be >= 1");
  if (count() > memory_cap()) throw std::invalid_argument("GridDims: grid exceeds the memory cap");
}

void GridDims::set_memory_cap(size_t voxels) { g_memory_cap = voxels; }
size_t GridDims::memory_cap() { return g_memory_cap; }

VoxelVolume::VoxelVolume(GridDims d, double vs, Vec3 org, VolumeKind k, float fill)
    : dims(d), voxel_size(vs), origin(org), kind(k), data(d.count(), fill) {
  if (vs <= 0.0) throw std::invalid_argument("VoxelVolume: voxel_size must be positive");
}

LabelVolume::LabelVolume(GridDims d, double vs, Vec3 org, uint8_t fill)
    : dims(d), voxel_size(vs), origin(org), labels(d.count(), fill) {}

void VoxelVolume::validate() const {
  if (data.size() != dims.count()) throw std::runtime_error("VoxelVolume: data size mismatch");
  const float lo = min_value(), hi = max_value();
  for (float v : data)
    if (!(v >= lo && v <= hi)) throw std::runtime_error("VoxelVolume: value out of range");
}

void LabelVolume::validate() const {
  if (labels.size() != dims.count()) throw std::runtime_error("LabelVolume: size mismatch");
  for (uint8_t l : labels)
    if (l >= kNumClasses) throw std::runtime_error("LabelVolume: label id out of range");
}

HierarchyLevelSpec HierarchyLevelSpec::standard(int level) {
  switch (level) {
    case 0: return {0, 0.188, GridDims{32, 16, 32}};
    case 1: return {1, 0.094, GridDims{32, 32, 32}};
    case 2: return {2, 0.047, GridDims{32, 64, 32}};
    default: throw std::invalid_argument("HierarchyLevelSpec: level must be 0, 1 or 2");
  }
}

std::array<GridPlacement, kNumLevels> plan_grids(const Aabb& bounds, double margin) {
  const double fine = HierarchyLevelSpec::standard(2).voxel_size;
  Vec3 lo = bounds.lo - Vec3{margin, margin, margin};
  Vec3 span = (bounds.hi + Vec3{margin, margin, margin}) - lo;
  auto cells = [&](double s) {
    int n = std::max(1, int(std::ceil(s / fine)));
    return (n + 3) / 4 * 4;  // multiple of 4 keeps every level integral
  };
  GridDims fd(cells(span.x), cells(span.y), cells(span.z));
  std::array<GridPlacement, kNumLevels> out;
  for (int l = 0; l < kNumLevels; ++l) {
    int div = 1 << (2 - l);
    out[l] = {GridDims(fd.x / div, fd.y / div, fd.z / div), lo};
  }
  return out;
}

Vec3 world_to_voxel(const VoxelVolume& v, const Vec3& p) {
  return (p - v.origin) / v.voxel_size;
}

Vec3 voxel_to_world(const VoxelVolume& v, const Vec3& voxel_coord) {
  return v.origin + voxel_coord * v.voxel_size;
}

float VoxelVolume::sample_world(const Vec3& p) const {
  // Continuous coordinate relative to voxel centers.
  Vec3 c = world_to_voxel(*this, p) - Vec3{0.5, 0.5, 0.5};
  auto clampi = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  int x0 = int(std::floor(c.x)), y0 = int(std::floor(c.y)), z0 = int(std::floor(c.z));
  double fx = c.x - x0, fy = c.y - y0, fz = c.z - z0;
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz)
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        acc += w * at(clampi(x0 + dx, dims.x), clampi(y0 + dy, dims.y), clampi(z0 + dz, dims.z));
      }
  return float(acc);
}

VoxelVolume upsample(const VoxelVolume& v, int factor) {
  if (factor != 2) throw std::invalid_argument("upsample: only factor 2 is supported");
  GridDims od{v.dims.x * 2, v.dims.y * 2, v.dims.z * 2};
  VoxelVolume out(od, v.voxel_size * 0.5, v.origin, v.kind, 0.0f);
  const float lo = out.min_value(), hi = out.max_value();
  for (int z = 0; z < od.z; ++z)
    for (int y = 0; y < od.y; ++y)
      for (int x = 0; x < od.x; ++x) {
        Vec3 p = out.voxel_center(x, y, z);
        float val = 2.0f * v.sample_world(p);
        out.at(x, y, z) = std::clamp(val, lo, hi);
      }
  return out;
}

LabelVolume upsample(const LabelVolume& v, int factor) {
  if (factor != 2) throw std::invalid_argument("upsample: only factor 2 is supported");
  GridDims od{v.dims.x * 2, v.dims.y * 2, v.dims.z * 2};
  LabelVolume out(od, v.voxel_size * 0.5, v.origin, kEmpty);
  for (int z = 0; z < od.z; ++z)
    for (int y = 0; y < od.y; ++y)
      for (int x = 0; x < od.x; ++x) out.at(x, y, z) = v.at(x / 2, y / 2, z / 2);
  return out;
}

LabelVolume downsample_labels(const LabelVolume& v, int factor) {
  if (factor != 2) throw std::invalid_argument("downsample_labels: only factor 2 is supported");
  if (v.dims.x % 2 || v.dims.y % 2 || v.dims.z % 2)
    throw std::invalid_argument("downsample_labels: dims must be even");
  GridDims od{v.dims.x / 2, v.dims.y / 2, v.dims.z / 2};
  LabelVolume out(od, v.voxel_size * 2.0, v.origin, kEmpty);
  for (int z = 0; z < od.z; ++z)
    for (int y = 0; y < od.y; ++y)
      for (int x = 0; x < od.x; ++x) out.at(x, y, z) = v.at(2 * x, 2 * y, 2 * z);
  return out;
}

namespace {

void check_crop_bounds(const GridDims& src, int ox, int oy, int oz, const GridDims& dims,
                       PadMode mode) {
  if (mode == PadMode::Pad) return;
  if (ox < 0 || oy < 0 || oz < 0 || ox + dims.x > src.x || oy + dims.y > src.y ||
      oz + dims.z > src.z)
    throw std::out_of_range("crop: out of bounds without padding mode");
}

}  // namespace

VoxelVolume crop(const VoxelVolume& v, int ox, int oy, int oz, GridDims dims, PadMode mode,
                 float pad_value) {
  check_crop_bounds(v.dims, ox, oy, oz, dims, mode);
  Vec3 new_origin = v.origin + Vec3{ox * v.voxel_size, oy * v.voxel_size, oz * v.voxel_size};
  VoxelVolume out(dims, v.voxel_size, new_origin, v.kind, pad_value);
  for (int z = 0; z < dims.z; ++z) {
    int sz = z + oz;
    if (sz < 0 || sz >= v.dims.z) continue;
    for (int y = 0; y < dims.y; ++y) {
      int sy = y + oy;
      if (sy < 0 || sy >= v.dims.y) continue;
      for (int x = 0; x < dims.x; ++x) {
        int sx = x + ox;
        if (sx >= 0 && sx < v.dims.x) out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  }
  return out;
}

LabelVolume crop(const LabelVolume& v, int ox, int oy, int oz, GridDims dims, PadMode mode,
                 uint8_t pad_label) {
  check_crop_bounds(v.dims, ox, oy, oz, dims, mode);
  Vec3 new_origin = v.origin + Vec3{ox * v.voxel_size, oy * v.voxel_size, oz * v.voxel_size};
  LabelVolume out(dims, v.voxel_size, new_origin, pad_label);
  for (int z = 0; z < dims.z; ++z) {
    int sz = z + oz;
    if (sz < 0 || sz >= v.dims.z) continue;
    for (int y = 0; y < dims.y; ++y) {
      int sy = y + oy;
      if (sy < 0 || sy >= v.dims.y) continue;
      for (int x = 0; x < dims.x; ++x) {
        int sx = x + ox;
        if (sx >= 0 && sx < v.dims.x) out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  }
  return out;
}

// -- binary I/O --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'V', 'X', 'C', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

struct Header {
  uint8_t kind = 0;
  uint8_t channel = 0;
  GridDims dims;
  double voxel_size = 1.0;
  Vec3 origin;
};

void write_header(std::ostream& os, const Header& h) {
  os.write(kMagic, 4);
  write_pod(os, h.kind);
  write_pod(os, h.channel);
  write_pod(os, uint32_t(h.dims.x));
  write_pod(os, uint32_t(h.dims.y));
  write_pod(os, uint32_t(h.dims.z));
  write_pod(os, h.voxel_size);
  write_pod(os, h.origin.x);
  write_pod(os, h.origin.y);
  write_pod(os, h.origin.z);
}

Header read_header(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a VXC1 grid file: " + path);
  Header h;
  h.kind = read_pod<uint8_t>(is);
  h.channel = read_pod<uint8_t>(is);
  uint32_t x = read_pod<uint32_t>(is), y = read_pod<uint32_t>(is), z = read_pod<uint32_t>(is);
  h.voxel_size = read_pod<double>(is);
  h.origin.x = read_pod<double>(is);
  h.origin.y = read_pod<double>(is);
  h.origin.z = read_pod<double>(is);
  if (!is) throw std::runtime_error("truncated VXC1 header: " + path);
  h.dims = GridDims(int(x), int(y), int(z));
  return h;
}

}  // namespace

void save_grid(const VoxelVolume& v, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_header(os, {uint8_t(v.kind), 0, v.dims, v.voxel_size, v.origin});
  os.write(reinterpret_cast<const char*>(v.data.data()),
           std::streamsize(v.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

void save_grid(const LabelVolume& v, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_header(os, {2, 1, v.dims, v.voxel_size, v.origin});
  os.write(reinterpret_cast<const char*>(v.labels.data()), std::streamsize(v.labels.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

VoxelVolume load_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Header h = read_header(is, path);
  if (h.channel != 0) throw std::runtime_error("expected a distance grid: " + path);
  VoxelVolume v(h.dims, h.voxel_size, h.origin, VolumeKind(h.kind), 0.0f);
  is.read(reinterpret_cast<char*>(v.data.data()), std::streamsize(v.data.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated grid payload: " + path);
  return v;
}

LabelVolume load_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Header h = read_header(is, path);
  if (h.channel != 1) throw std::runtime_error("expected a label grid: " + path);
  LabelVolume v(h.dims, h.voxel_size, h.origin, kEmpty);
  is.read(reinterpret_cast<char*>(v.labels.data()), std::streamsize(v.labels.size()));
  if (!is) throw std::runtime_error("truncated grid payload: " + path);
  return v;
}

}  // namespace voxc
