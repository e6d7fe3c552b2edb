#include "voxc/virtual_scan.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "voxc/rng.hpp"

namespace voxc {

// -- camera -------------------------------------------------------------------

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal lengths must be > 0");
  if (!(near > 0.0) || !(near < far))
    throw std::invalid_argument("Camera: need 0 < near < far");
  if (width < 1 || height < 1) throw std::invalid_argument("Camera: image dims must be >= 1");
}

Camera Camera::facing(const Vec3& position, const Vec3& look, const Camera& proto) {
  Camera cam = proto;
  cam.position = position;
  Vec3 zc = normalized(look);
  Vec3 xc = cross(Vec3{0, 1, 0}, zc);
  if (norm2(xc) < 1e-12) xc = cross(Vec3{1, 0, 0}, zc);  // vertical view
  xc = normalized(xc);
  Vec3 yc = cross(zc, xc);
  cam.rotation = Mat3::from_columns(xc, yc, zc);
  return cam;
}

Vec3 Camera::pixel_ray(int u, int v) const {
  Vec3 dir_cam{(u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0};
  return rotation * dir_cam;
}

DepthImage::DepthImage(int w, int h)
    : width(w), height(h), depth(size_t(w) * size_t(h), 0.0f),
      label(size_t(w) * size_t(h), kEmpty) {}

size_t DepthImage::hit_count() const {
  size_t n = 0;
  for (float d : depth) n += d > 0.0f;
  return n;
}

DepthImage render_depth(const AabbTree& tree, const Camera& cam) {
  cam.validate();
  DepthImage img(cam.width, cam.height);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      // pixel_ray has camera-space z == 1, so the hit parameter is the depth.
      RayHit hit = tree.raycast(cam.position, cam.pixel_ray(u, v), cam.near, cam.far);
      if (hit.valid()) {
        img.depth[img.index(u, v)] = float(hit.t);
        img.label[img.index(u, v)] = tree.label(hit.triangle);
      }
    }
  return img;
}

// -- histograms ---------------------------------------------------------------

void HistSpec::validate() const {
  if (bins < 1) throw std::invalid_argument("HistSpec: bins must be >= 1");
  if (!(hi > lo)) throw std::invalid_argument("HistSpec: hi must exceed lo");
}

double Histogram::sum() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

Histogram depth_histogram(const DepthImage& img, const HistSpec& spec) {
  spec.validate();
  Histogram h{spec, std::vector<double>(spec.bins, 0.0)};
  const double bw = spec.bin_width();
  size_t hits = 0;
  for (float d : img.depth) {
    if (d <= 0.0f) continue;
    int b = std::clamp(int(std::floor((d - spec.lo) / bw)), 0, spec.bins - 1);
    h.p[b] += 1.0;
    ++hits;
  }
  if (hits == 0) throw std::runtime_error("depth_histogram: image has no surface hits");
  for (double& v : h.p) v /= double(hits);
  return h;
}

double emd_1d(const Histogram& a, const Histogram& b) {
  if (a.p.size() != b.p.size()) throw std::invalid_argument("emd_1d: bin count mismatch");
  if (std::abs(a.spec.bin_width() - b.spec.bin_width()) > 1e-12)
    throw std::invalid_argument("emd_1d: bin width mismatch");
  if (std::abs(a.sum() - 1.0) > 1e-6 || std::abs(b.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("emd_1d: histograms must sum to 1");
  double cdfa = 0.0, cdfb = 0.0, total = 0.0;
  for (size_t i = 0; i < a.p.size(); ++i) {
    cdfa += a.p[i];
    cdfb += b.p[i];
    total += std::abs(cdfa - cdfb);
  }
  return total * a.spec.bin_width();
}

// -- scoring ------------------------------------------------------------------

void TrajectoryStats::validate() const {
  if (height_var < 0.0 || angle_var < 0.0 || emd_var < 0.0)
    throw std::invalid_argument("TrajectoryStats: variances must be >= 0");
  if (reference.p.empty())
    throw std::invalid_argument("TrajectoryStats: reference histogram is empty");
  if (std::abs(reference.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("TrajectoryStats: reference histogram must sum to 1");
}

Histogram reference_histogram(const HistSpec& spec) {
  spec.validate();
  Histogram h{spec, std::vector<double>(spec.bins, 0.0)};
  double total = 0.0;
  for (int b = 0; b < spec.bins; ++b) {
    double d = spec.lo + (b + 0.5) * spec.bin_width();
    // Gamma(4, 0.5) shape: peaks at 1.5 m, tails off by ~5 m.
    h.p[b] = d > 0.0 ? d * d * d * std::exp(-d / 0.5) : 0.0;
    total += h.p[b];
  }
  if (total <= 0.0)
    throw std::invalid_argument("reference_histogram: range must include positive depths");
  for (double& v : h.p) v /= total;
  return h;
}

double object_fraction(const DepthImage& img) {
  size_t hits = 0, objects = 0;
  for (size_t i = 0; i < img.depth.size(); ++i) {
    if (img.depth[i] <= 0.0f) continue;
    ++hits;
    uint8_t c = img.label[i];
    objects += c != kFloor && c != kCeil && c != kWall;
  }
  return hits == 0 ? 0.0 : double(objects) / double(hits);
}

double score_camera(const AabbTree& tree, const Camera& cam, const TrajectoryStats& stats,
                    double lambda) {
  if (!(stats.emd_var > 0.0)) throw std::invalid_argument("score_camera: emd_var must be > 0");
  stats.validate();
  DepthImage img = render_depth(tree, cam);
  if (img.hit_count() == 0) return 0.0;
  double e = emd_1d(depth_histogram(img, stats.reference.spec), stats.reference);
  double sigma = std::sqrt(stats.emd_var);
  double z = (e - stats.emd_mean) / sigma;
  double density = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
  return lambda * density + (1.0 - lambda) * object_fraction(img);
}

// -- trajectory synthesis -----------------------------------------------------

namespace {

struct Lattice {
  int nx = 1, ny = 1, nz = 1;
  Vec3 lo;
  double size = 1.5;
};

Lattice make_lattice(const Aabb& room, double region_size) {
  Vec3 ext = room.extent();
  auto n = [&](double e) { return std::max(1, int(std::ceil(e / region_size - 1e-9))); };
  return {n(ext.x), n(ext.y), n(ext.z), room.lo, region_size};
}

/// Candidates for one region; empty with a reason when the region cannot host
/// any. Consumes a dedicated rng stream so every caller sees the same set.
std::vector<Camera> region_candidates(const Lattice& lat, const Aabb& room, int ix, int iy, int iz,
                                      const TrajectoryStats& stats,
                                      const TrajectoryParams& params, std::string& reason) {
  double xlo = lat.lo.x + ix * lat.size, xhi = std::min(xlo + lat.size, room.hi.x);
  double ylo = lat.lo.y + iy * lat.size, yhi = std::min(ylo + lat.size, room.hi.y);
  double zlo = lat.lo.z + iz * lat.size, zhi = std::min(zlo + lat.size, room.hi.z);

  double hsig = std::sqrt(stats.height_var);
  double h_lo = std::max(ylo, stats.height_mean - 4.0 * hsig);
  double h_hi = std::min(yhi, stats.height_mean + 4.0 * hsig);
  if (!(h_lo <= h_hi)) {
    reason = "height window does not intersect the region";
    return {};
  }

  double asig = std::sqrt(stats.angle_var);
  double a_lo = std::max(1e-3, stats.angle_mean - 4.0 * asig);
  double a_hi = std::min(M_PI - 1e-3, stats.angle_mean + 4.0 * asig);
  if (!(a_lo <= a_hi)) {
    reason = "pitch window empty";
    return {};
  }

  uint64_t region_index =
      uint64_t(ix) + uint64_t(lat.nx) * (uint64_t(iy) + uint64_t(lat.ny) * uint64_t(iz));
  Rng rng(Rng::derive(params.seed, region_index));
  std::vector<Camera> out;
  for (int k = 0; k < params.candidates; ++k) {
    Vec3 pos{rng.uniform(xlo, xhi), 0.0, rng.uniform(zlo, zhi)};
    bool placed = false;
    for (int t = 0; t < params.height_tries && !placed; ++t) {
      double h = rng.normal(stats.height_mean, hsig);
      if (h >= h_lo && h <= h_hi) {
        pos.y = h;
        placed = true;
      }
    }
    if (!placed) continue;
    double angle = stats.angle_mean;
    bool pitched = false;
    for (int t = 0; t < params.height_tries && !pitched; ++t) {
      angle = rng.normal(stats.angle_mean, asig);
      pitched = angle >= a_lo && angle <= a_hi;
    }
    if (!pitched) continue;
    double yaw = rng.uniform(0.0, 2.0 * M_PI);
    Vec3 look{std::sin(angle) * std::cos(yaw), std::cos(angle), std::sin(angle) * std::sin(yaw)};
    out.push_back(Camera::facing(pos, look, params.proto));
  }
  if (out.empty()) reason = "no candidate passed rejection sampling";
  return out;
}

void check_trajectory_params(const Aabb& room, const TrajectoryParams& params) {
  if (room.empty()) throw std::invalid_argument("build_trajectory: empty room bounds");
  if (params.candidates < 1)
    throw std::invalid_argument("build_trajectory: need at least one candidate per region");
  if (!(params.region_size > 0.0))
    throw std::invalid_argument("build_trajectory: region_size must be > 0");
  params.proto.validate();
}

}  // namespace

Trajectory build_trajectory(const AabbTree& tree, const Aabb& room, const TrajectoryStats& stats,
                            const TrajectoryParams& params) {
  stats.validate();
  check_trajectory_params(room, params);
  Lattice lat = make_lattice(room, params.region_size);
  Trajectory traj;
  for (int iz = 0; iz < lat.nz; ++iz)
    for (int iy = 0; iy < lat.ny; ++iy)
      for (int ix = 0; ix < lat.nx; ++ix) {
        std::string reason;
        std::vector<Camera> cands =
            region_candidates(lat, room, ix, iy, iz, stats, params, reason);
        if (cands.empty()) {
          traj.skipped.push_back({ix, iy, iz, reason});
          continue;
        }
        size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < cands.size(); ++i) {
          double s = score_camera(tree, cands[i], stats, params.lambda);
          if (s > best_score) {
            best_score = s;
            best = i;
          }
        }
        traj.cameras.push_back(cands[best]);
      }
  return traj;
}

std::vector<double> candidate_emds(const AabbTree& tree, const Aabb& room,
                                   const TrajectoryStats& stats, const TrajectoryParams& params) {
  stats.validate();
  check_trajectory_params(room, params);
  Lattice lat = make_lattice(room, params.region_size);
  std::vector<double> emds;
  for (int iz = 0; iz < lat.nz; ++iz)
    for (int iy = 0; iy < lat.ny; ++iy)
      for (int ix = 0; ix < lat.nx; ++ix) {
        std::string reason;
        for (const Camera& cam : region_candidates(lat, room, ix, iy, iz, stats, params, reason)) {
          DepthImage img = render_depth(tree, cam);
          if (img.hit_count() == 0) continue;
          emds.push_back(emd_1d(depth_histogram(img, stats.reference.spec), stats.reference));
        }
      }
  return emds;
}

std::vector<std::vector<Camera>> trajectory_candidates(const Aabb& room,
                                                       const TrajectoryStats& stats,
                                                       const TrajectoryParams& params) {
  stats.validate();
  check_trajectory_params(room, params);
  Lattice lat = make_lattice(room, params.region_size);
  std::vector<std::vector<Camera>> out;
  for (int iz = 0; iz < lat.nz; ++iz)
    for (int iy = 0; iy < lat.ny; ++iy)
      for (int ix = 0; ix < lat.nx; ++ix) {
        std::string reason;
        out.push_back(region_candidates(lat, room, ix, iy, iz, stats, params, reason));
      }
  return out;
}

// -- serialization ------------------------------------------------------------

void save_depth(const DepthImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("VXD1", 4);
  uint32_t w = uint32_t(img.width), h = uint32_t(img.height);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  os.write(reinterpret_cast<const char*>(img.depth.data()),
           std::streamsize(img.depth.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(img.label.data()), std::streamsize(img.label.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

DepthImage load_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VXD1", 4) != 0)
    throw std::runtime_error("not a VXD1 depth file: " + path);
  uint32_t w = 0, h = 0;
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&h), 4);
  if (!is || w == 0 || h == 0) throw std::runtime_error("bad depth header: " + path);
  DepthImage img{int(w), int(h)};
  is.read(reinterpret_cast<char*>(img.depth.data()),
          std::streamsize(img.depth.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(img.label.data()), std::streamsize(img.label.size()));
  if (!is) throw std::runtime_error("truncated depth payload: " + path);
  return img;
}

void save_trajectory(const std::vector<Camera>& cams, const std::string& path) {
  for (size_t i = 1; i < cams.size(); ++i) {
    const Camera &a = cams[0], &b = cams[i];
    if (a.fx != b.fx || a.fy != b.fy || a.cx != b.cx || a.cy != b.cy || a.width != b.width ||
        a.height != b.height || a.near != b.near || a.far != b.far)
      throw std::invalid_argument("save_trajectory: cameras must share intrinsics");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "VXTRAJ 1\n";
  os << std::setprecision(17);
  Camera proto = cams.empty() ? Camera{} : cams[0];
  os << "intrinsics " << proto.fx << ' ' << proto.fy << ' ' << proto.cx << ' ' << proto.cy << ' '
     << proto.width << ' ' << proto.height << ' ' << proto.near << ' ' << proto.far << '\n';
  os << "cameras " << cams.size() << '\n';
  for (const Camera& c : cams) {
    for (int r = 0; r < 3; ++r)
      os << c.rotation.m[r][0] << ' ' << c.rotation.m[r][1] << ' ' << c.rotation.m[r][2] << ' '
         << (r == 0 ? c.position.x : (r == 1 ? c.position.y : c.position.z)) << ' ';
    os << "0 0 0 1\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Camera> load_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string tag, version;
  is >> tag >> version;
  if (tag != "VXTRAJ" || version != "1")
    throw std::runtime_error("not a VXTRAJ manifest: " + path);
  Camera proto;
  is >> tag >> proto.fx >> proto.fy >> proto.cx >> proto.cy >> proto.width >> proto.height >>
      proto.near >> proto.far;
  if (!is || tag != "intrinsics") throw std::runtime_error("bad intrinsics line: " + path);
  size_t n = 0;
  is >> tag >> n;
  if (!is || tag != "cameras") throw std::runtime_error("bad camera count line: " + path);
  std::vector<Camera> cams(n, proto);
  for (Camera& c : cams) {
    double row[4];
    for (int r = 0; r < 3; ++r) {
      is >> row[0] >> row[1] >> row[2] >> row[3];
      c.rotation.m[r][0] = row[0];
      c.rotation.m[r][1] = row[1];
      c.rotation.m[r][2] = row[2];
      (r == 0 ? c.position.x : (r == 1 ? c.position.y : c.position.z)) = row[3];
    }
    is >> row[0] >> row[1] >> row[2] >> row[3];
    if (!is || row[0] != 0 || row[1] != 0 || row[2] != 0 || row[3] != 1)
      throw std::runtime_error("bad pose row in: " + path);
  }
  return cams;
}

}  // namespace voxc
