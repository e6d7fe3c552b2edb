#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxc/aabb_tree.hpp"
#include "voxc/geometry.hpp"
#include "voxc/voxel_volume.hpp"

namespace voxc {

// ---------------------------------------------------------------------------
// Camera and depth rendering
// ---------------------------------------------------------------------------

struct Camera {
  double fx = 288.0, fy = 288.0;  // pixels
  double cx = 160.0, cy = 120.0;
  int width = 320, height = 240;
  double near = 0.3, far = 8.0;  // meters
  Mat3 rotation;                 // camera -> world
  Vec3 position;                 // world, meters

  void validate() const;  // fx, fy > 0; 0 < near < far; dims >= 1

  /// Copies intrinsics/clips from `proto` and orients camera z along `look`
  /// with world-up roll (falls back to world-x when look is vertical).
  static Camera facing(const Vec3& position, const Vec3& look, const Camera& proto);

  /// World direction through pixel (u, v), scaled so camera-space z == 1;
  /// the ray parameter then equals depth along the view axis.
  Vec3 pixel_ray(int u, int v) const;
};

struct DepthImage {
  int width = 0, height = 0;
  std::vector<float> depth;    // meters, 0 = no hit
  std::vector<uint8_t> label;  // class of the hit triangle, kEmpty on miss

  DepthImage() = default;
  DepthImage(int w, int h);

  size_t index(int u, int v) const { return size_t(v) * size_t(width) + size_t(u); }
  float depth_at(int u, int v) const { return depth[index(u, v)]; }
  uint8_t label_at(int u, int v) const { return label[index(u, v)]; }
  size_t hit_count() const;
};

/// Nearest-hit depth per pixel, measured along the camera z-axis and clipped
/// to [near, far]. Misses are 0. Deterministic in (tree, cam).
DepthImage render_depth(const AabbTree& tree, const Camera& cam);

// ---------------------------------------------------------------------------
// Depth histograms and EMD
// ---------------------------------------------------------------------------

struct HistSpec {
  double lo = 0.0, hi = 8.0;  // meters
  int bins = 32;

  double bin_width() const { return (hi - lo) / bins; }
  void validate() const;
};

struct Histogram {
  HistSpec spec;
  std::vector<double> p;  // sums to 1

  double sum() const;
};

/// Normalized histogram over hit pixels; depths outside [lo, hi) land in the
/// boundary bins. Throws when the image has no hits.
Histogram depth_histogram(const DepthImage& img, const HistSpec& spec);

/// 1-D earth mover's distance: sum over bins of |CDF1 - CDF2| * bin_width.
/// Requires matching bin layout and unit mass (tolerance 1e-6).
double emd_1d(const Histogram& a, const Histogram& b);

// ---------------------------------------------------------------------------
// Camera scoring and trajectory synthesis
// ---------------------------------------------------------------------------

/// Target scanning statistics. All quantities are configuration: the height
/// and pitch distributions shape candidate sampling, and candidate renders
/// are scored against the reference depth histogram through a Gaussian over
/// their EMD. emd_mean/emd_var are normally bootstrapped from candidate
/// renders of the training scenes (see candidate_emds).
struct TrajectoryStats {
  double height_mean = 1.5;                   // meters above the floor
  double height_var = 0.01;                   // (0.1 m)^2
  double angle_mean = 100.0 * M_PI / 180.0;   // look direction vs world-up
  double angle_var = 0.030461741978670857;    // (10 deg)^2 in rad^2
  double emd_mean = 0.0;
  double emd_var = 1.0;
  Histogram reference;  // expected depth distribution over the same bins

  void validate() const;  // variances >= 0, reference sums to 1
};

/// A smooth unimodal depth distribution peaking around 1.5 m, for configs
/// that do not supply measured statistics.
Histogram reference_histogram(const HistSpec& spec);

/// Fraction of hit pixels whose class is not floor, ceiling or wall.
double object_fraction(const DepthImage& img);

/// lambda * gaussian(emd(H(D), reference); emd_mean, sqrt(emd_var))
///   + (1 - lambda) * object_fraction(D).
/// All-miss renders score 0. Throws when emd_var <= 0.
double score_camera(const AabbTree& tree, const Camera& cam, const TrajectoryStats& stats,
                    double lambda);

struct TrajectoryParams {
  double region_size = 1.5;  // meters, cubic selection regions
  double lambda = 0.5;
  int candidates = 32;  // per region
  int height_tries = 64;
  uint64_t seed = 0;
  Camera proto;  // intrinsics/clip template for every candidate
};

struct SkippedRegion {
  int ix = 0, iy = 0, iz = 0;
  std::string reason;
};

struct Trajectory {
  std::vector<Camera> cameras;
  std::vector<SkippedRegion> skipped;
};

/// One camera per region of a region_size lattice over `room`: K candidates
/// are sampled (x/z uniform in the region, height from the stats Gaussian
/// restricted to the region slab and +-4 sigma, pitch from the angle Gaussian
/// within +-4 sigma, yaw uniform) and the highest-scoring one wins; ties keep
/// the earliest candidate. Regions whose height window is infeasible are
/// recorded and skipped. Deterministic in params.seed.
Trajectory build_trajectory(const AabbTree& tree, const Aabb& room, const TrajectoryStats& stats,
                            const TrajectoryParams& params);

/// EMD of every renderable candidate against stats.reference, in the exact
/// candidate order build_trajectory would visit. Mean/variance of the result
/// seed stats.emd_mean/emd_var before selection.
std::vector<double> candidate_emds(const AabbTree& tree, const Aabb& room,
                                   const TrajectoryStats& stats, const TrajectoryParams& params);

/// The candidate cameras build_trajectory scores, one list per region in
/// visit order (empty where the region was skipped). Lets callers rescore
/// selections independently.
std::vector<std::vector<Camera>> trajectory_candidates(const Aabb& room,
                                                       const TrajectoryStats& stats,
                                                       const TrajectoryParams& params);

// ---------------------------------------------------------------------------
// Serialization. Depth: "VXD1" header + f32 depths + u8 labels. Trajectory:
// text manifest with shared intrinsics and one 4x4 camera-to-world matrix per
// camera.
// ---------------------------------------------------------------------------

void save_depth(const DepthImage& img, const std::string& path);
DepthImage load_depth(const std::string& path);

void save_trajectory(const std::vector<Camera>& cams, const std::string& path);
std::vector<Camera> load_trajectory(const std::string& path);

}  // namespace voxc
