#include "voxc/sampler.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace voxc {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::runtime_error(std::string("TrainSample: ") + what);
}

}  // namespace

void TrainSample::validate() const {
  input_tsdf.validate();
  target_tdf.validate();
  target_labels.validate();
  require(input_tsdf.kind == VolumeKind::TSDF, "input must be a TSDF");
  require(target_tdf.kind == VolumeKind::TDF, "target must be a TDF");
  require(target_tdf.dims == input_tsdf.dims, "target dims differ from input");
  require(target_labels.dims == input_tsdf.dims, "label dims differ from input");
  require(loss_weights.size() == input_tsdf.data.size(), "loss weight count mismatch");
  for (float w : loss_weights) require(w == 1.0f || w == 10.0f, "loss weight outside {1, 10}");
  if (has_prev) {
    prev_tdf.validate();
    prev_labels.validate();
    require(prev_tdf.kind == VolumeKind::TDF, "previous-level channel must be a TDF");
    require(prev_tdf.dims == input_tsdf.dims, "previous-level dims differ from input");
    require(prev_labels.dims == input_tsdf.dims, "previous-level label dims differ from input");
  }
}

std::vector<float> semantic_weights(const LabelVolume& labels) {
  std::vector<float> w(labels.labels.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = is_structural(labels.labels[i]) ? 1.0f : 10.0f;
  return w;
}

namespace {

bool has_object_voxel(const LabelVolume& labels) {
  for (uint8_t l : labels.labels)
    if (!is_structural(l)) return true;
  return false;
}

TrainSample cut_sample(const SceneVolumes& vols, const VoxelVolume* prev_tdf_up,
                       const LabelVolume* prev_labels_up, int ox, int oy, int oz, GridDims crop,
                       PadMode mode) {
  TrainSample s;
  s.input_tsdf = voxc::crop(*vols.input_tsdf, ox, oy, oz, crop, mode, -kTruncationVoxels);
  s.target_tdf = voxc::crop(*vols.target_tdf, ox, oy, oz, crop, mode, kTruncationVoxels);
  s.target_labels = voxc::crop(*vols.target_labels, ox, oy, oz, crop, mode, kEmpty);
  if (prev_tdf_up) {
    s.has_prev = true;
    s.prev_tdf = voxc::crop(*prev_tdf_up, ox, oy, oz, crop, mode, kTruncationVoxels);
    s.prev_labels = voxc::crop(*prev_labels_up, ox, oy, oz, crop, mode, kEmpty);
  }
  s.loss_weights = semantic_weights(s.target_labels);
  return s;
}

}  // namespace

std::vector<TrainSample> sample_subvolumes(const SceneVolumes& vols,
                                           const HierarchyLevelSpec& level, Rng& rng) {
  if (!vols.input_tsdf || !vols.target_tdf || !vols.target_labels)
    throw std::invalid_argument("sample_subvolumes: input, target and labels are required");
  if ((vols.prev_tdf == nullptr) != (vols.prev_labels == nullptr))
    throw std::invalid_argument("sample_subvolumes: previous-level channels come in pairs");
  const GridDims dims = vols.input_tsdf->dims;
  if (vols.target_tdf->dims != dims || vols.target_labels->dims != dims)
    throw std::invalid_argument("sample_subvolumes: scene grids disagree on dims");

  // Previous-level channels arrive at half resolution; align them once.
  VoxelVolume prev_tdf_up;
  LabelVolume prev_labels_up;
  bool has_prev = vols.prev_tdf != nullptr;
  if (has_prev) {
    prev_tdf_up = upsample(*vols.prev_tdf, 2);
    prev_labels_up = upsample(*vols.prev_labels, 2);
    if (prev_tdf_up.dims != dims)
      throw std::invalid_argument("sample_subvolumes: previous level is not the 2x-coarser grid");
  }
  const VoxelVolume* ptu = has_prev ? &prev_tdf_up : nullptr;
  const LabelVolume* plu = has_prev ? &prev_labels_up : nullptr;

  const GridDims crop = level.train_crop;
  std::vector<TrainSample> out;

  if (dims.x < crop.x || dims.y < crop.y || dims.z < crop.z) {
    out.push_back(cut_sample(vols, ptu, plu, (dims.x - crop.x) / 2, (dims.y - crop.y) / 2,
                             (dims.z - crop.z) / 2, crop, PadMode::Pad));
    return out;
  }

  const int step = std::max(1, int(std::lround(3.0 / level.voxel_size)));
  for (int oz = 0; oz + crop.z <= dims.z; oz += step)
    for (int oy = 0; oy + crop.y <= dims.y; oy += step)
      for (int ox = 0; ox + crop.x <= dims.x; ox += step) {
        TrainSample s = cut_sample(vols, ptu, plu, ox, oy, oz, crop, PadMode::None);
        if (!has_object_voxel(s.target_labels) && rng.uniform() >= 0.1) continue;
        out.push_back(std::move(s));
      }
  // The keep-rate filter can reject everything in a sparse scene; always hand
  // back at least the centered crop so the scene still contributes.
  if (out.empty())
    out.push_back(cut_sample(vols, ptu, plu, (dims.x - crop.x) / 2, (dims.y - crop.y) / 2,
                             (dims.z - crop.z) / 2, crop, PadMode::None));
  return out;
}

namespace {

VoxelVolume shift_rows_up(const VoxelVolume& v, int rows, float pad) {
  VoxelVolume out(v.dims, v.voxel_size, v.origin, v.kind, pad);
  for (int z = 0; z < v.dims.z; ++z)
    for (int y = rows; y < v.dims.y; ++y)
      for (int x = 0; x < v.dims.x; ++x) out.at(x, y, z) = v.at(x, y - rows, z);
  return out;
}

LabelVolume shift_rows_up(const LabelVolume& v, int rows, uint8_t pad) {
  LabelVolume out(v.dims, v.voxel_size, v.origin, pad);
  for (int z = 0; z < v.dims.z; ++z)
    for (int y = rows; y < v.dims.y; ++y)
      for (int x = 0; x < v.dims.x; ++x) out.at(x, y, z) = v.at(x, y - rows, z);
  return out;
}

}  // namespace

TrainSample height_jitter(const TrainSample& sample, Rng& rng) {
  double u = rng.uniform(0.0, kMaxJitterMeters);
  int rows = int(std::lround(u / sample.input_tsdf.voxel_size));
  if (rows == 0) return sample;

  TrainSample s;
  s.input_tsdf = shift_rows_up(sample.input_tsdf, rows, -kTruncationVoxels);
  s.target_tdf = shift_rows_up(sample.target_tdf, rows, kTruncationVoxels);
  s.target_labels = shift_rows_up(sample.target_labels, rows, kEmpty);
  s.has_prev = sample.has_prev;
  if (sample.has_prev) {
    s.prev_tdf = shift_rows_up(sample.prev_tdf, rows, kTruncationVoxels);
    s.prev_labels = shift_rows_up(sample.prev_labels, rows, kEmpty);
  }
  s.loss_weights = semantic_weights(s.target_labels);
  return s;
}

// -- corpus manifest ----------------------------------------------------------

namespace fs = std::filesystem;
using nlohmann::json;

SampleRecord save_sample(const TrainSample& sample, const std::string& root,
                         const std::string& stem, int level, const std::string& scene,
                         const std::array<int, 3>& crop_origin) {
  fs::path base = fs::path(root) / stem;
  fs::create_directories(base.parent_path());

  SampleRecord r;
  r.level = level;
  r.scene = scene;
  r.crop_origin = crop_origin;
  r.input_tsdf = stem + "_in.vxc";
  r.target_tdf = stem + "_tdf.vxc";
  r.target_labels = stem + "_lab.vxc";
  save_grid(sample.input_tsdf, (fs::path(root) / r.input_tsdf).string());
  save_grid(sample.target_tdf, (fs::path(root) / r.target_tdf).string());
  save_grid(sample.target_labels, (fs::path(root) / r.target_labels).string());
  if (sample.has_prev) {
    r.prev_tdf = stem + "_ptdf.vxc";
    r.prev_labels = stem + "_plab.vxc";
    save_grid(sample.prev_tdf, (fs::path(root) / r.prev_tdf).string());
    save_grid(sample.prev_labels, (fs::path(root) / r.prev_labels).string());
  }
  return r;
}

TrainSample load_sample(const SampleRecord& record, const std::string& root) {
  TrainSample s;
  s.input_tsdf = load_volume((fs::path(root) / record.input_tsdf).string());
  s.target_tdf = load_volume((fs::path(root) / record.target_tdf).string());
  s.target_labels = load_labels((fs::path(root) / record.target_labels).string());
  if (!record.prev_tdf.empty()) {
    s.has_prev = true;
    s.prev_tdf = load_volume((fs::path(root) / record.prev_tdf).string());
    s.prev_labels = load_labels((fs::path(root) / record.prev_labels).string());
  }
  s.loss_weights = semantic_weights(s.target_labels);
  return s;
}

void save_manifest(const std::vector<SampleRecord>& records, const std::string& path) {
  json arr = json::array();
  for (const SampleRecord& r : records) {
    json j{{"level", r.level},
           {"scene", r.scene},
           {"crop_origin", r.crop_origin},
           {"input_tsdf", r.input_tsdf},
           {"target_tdf", r.target_tdf},
           {"target_labels", r.target_labels}};
    if (!r.prev_tdf.empty()) {
      j["prev_tdf"] = r.prev_tdf;
      j["prev_labels"] = r.prev_labels;
    }
    arr.push_back(std::move(j));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << json{{"format", "voxc-corpus-1"}, {"samples", std::move(arr)}}.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  json j = json::parse(is);
  if (j.value("format", "") != "voxc-corpus-1")
    throw std::runtime_error("not a corpus manifest: " + path);
  std::vector<SampleRecord> out;
  for (const json& e : j.at("samples")) {
    SampleRecord r;
    r.level = e.at("level").get<int>();
    r.scene = e.at("scene").get<std::string>();
    auto co = e.at("crop_origin");
    r.crop_origin = {co.at(0).get<int>(), co.at(1).get<int>(), co.at(2).get<int>()};
    r.input_tsdf = e.at("input_tsdf").get<std::string>();
    r.target_tdf = e.at("target_tdf").get<std::string>();
    r.target_labels = e.at("target_labels").get<std::string>();
    r.prev_tdf = e.value("prev_tdf", "");
    r.prev_labels = e.value("prev_labels", "");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace voxc
