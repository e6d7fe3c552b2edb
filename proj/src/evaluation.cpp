#include "voxc/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace voxc {

namespace {

std::runtime_error err(const std::string& msg) {
  return std::runtime_error("evaluation: " + msg);
}

void check_dims(const GridDims& a, const GridDims& b, const char* what) {
  if (!(a == b)) throw err(std::string(what) + ": dims mismatch");
}

}  // namespace

CompletionErrors l1_completion_errors(const VoxelVolume& pred_tdf, const VoxelVolume& target_tdf,
                                      const VoxelVolume& input_tsdf, double surface_threshold) {
  check_dims(pred_tdf.dims, target_tdf.dims, "l1_completion_errors");
  check_dims(pred_tdf.dims, input_tsdf.dims, "l1_completion_errors");
  if (pred_tdf.kind != VolumeKind::TDF || target_tdf.kind != VolumeKind::TDF)
    throw err("l1_completion_errors: pred/target must be TDF grids");
  if (input_tsdf.kind != VolumeKind::TSDF)
    throw err("l1_completion_errors: input must be a TSDF grid");

  struct Acc {
    double sum = 0.0;
    size_t n = 0;
    void add(double e) { sum += e, ++n; }
    MaskedError done() const { return n ? MaskedError{sum / double(n), n, true} : MaskedError{}; }
  } entire, pred_surf, target_surf, unk;

  const size_t count = pred_tdf.dims.count();
  for (size_t i = 0; i < count; ++i) {
    const double e = std::fabs(double(pred_tdf.data[i]) - double(target_tdf.data[i]));
    entire.add(e);
    if (pred_tdf.data[i] <= surface_threshold) pred_surf.add(e);
    if (target_tdf.data[i] <= surface_threshold) target_surf.add(e);
    if (input_tsdf.data[i] < 0.0f) unk.add(e);
  }
  return {entire.done(), pred_surf.done(), target_surf.done(), unk.done()};
}

std::vector<uint8_t> vis_mask(const VoxelVolume& input_tsdf, const VoxelVolume& target_tdf,
                              double surface_threshold) {
  check_dims(input_tsdf.dims, target_tdf.dims, "vis_mask");
  const size_t count = input_tsdf.dims.count();
  std::vector<uint8_t> m(count, 0);
  for (size_t i = 0; i < count; ++i)
    m[i] = input_tsdf.data[i] >= 0.0f && target_tdf.data[i] <= surface_threshold;
  return m;
}

std::vector<uint8_t> surface_intersection_mask(const VoxelVolume& pred_tdf,
                                               const VoxelVolume& target_tdf,
                                               double surface_threshold) {
  check_dims(pred_tdf.dims, target_tdf.dims, "surface_intersection_mask");
  const size_t count = pred_tdf.dims.count();
  std::vector<uint8_t> m(count, 0);
  for (size_t i = 0; i < count; ++i)
    m[i] = pred_tdf.data[i] <= surface_threshold && target_tdf.data[i] <= surface_threshold;
  return m;
}

SemanticAccuracy semantic_accuracy(const LabelVolume& pred, const LabelVolume& gt,
                                   const std::vector<uint8_t>& mask) {
  check_dims(pred.dims, gt.dims, "semantic_accuracy");
  if (mask.size() != pred.dims.count()) throw err("semantic_accuracy: mask size mismatch");
  SemanticAccuracy r;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++r.mask_count;
    ClassStat& s = r.per_class[gt.labels[i]];
    ++s.total;
    if (pred.labels[i] == gt.labels[i]) ++s.correct;
  }
  double sum = 0.0;
  for (const ClassStat& s : r.per_class) {
    if (s.total == 0) continue;
    sum += double(s.correct) / double(s.total);
    ++r.present_classes;
  }
  r.average = r.present_classes ? sum / r.present_classes : 0.0;
  return r;
}

std::array<ClassIou, kNumClasses> semantic_iou(const LabelVolume& pred, const LabelVolume& gt,
                                               const std::vector<uint8_t>& mask) {
  check_dims(pred.dims, gt.dims, "semantic_iou");
  if (mask.size() != pred.dims.count()) throw err("semantic_iou: mask size mismatch");
  std::array<size_t, kNumClasses> inter{}, uni{};
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const uint8_t p = pred.labels[i], g = gt.labels[i];
    if (p == g) {
      ++inter[p], ++uni[p];
    } else {
      ++uni[p], ++uni[g];
    }
  }
  std::array<ClassIou, kNumClasses> out{};
  for (int c = 0; c < kNumClasses; ++c)
    if (uni[c] > 0) out[c] = {double(inter[c]) / double(uni[c]), true};
  return out;
}

double seam_score(const VoxelVolume& tdf, int block) {
  if (block < 1) throw err("seam_score: block must be positive");
  const GridDims d = tdf.dims;
  double sum = 0.0;
  size_t n = 0;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y) {
      for (int x = block; x < d.x; x += block) {
        sum += std::fabs(double(tdf.at(x, y, z)) - double(tdf.at(x - 1, y, z)));
        ++n;
      }
    }
  for (int z = block; z < d.z; z += block)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        sum += std::fabs(double(tdf.at(x, y, z)) - double(tdf.at(x, y, z - 1)));
        ++n;
      }
  if (n == 0) throw err("seam_score: grid has no interior block boundaries");
  return sum / double(n);
}

int PassLedger::total_passes() const {
  int t = 0;
  for (const auto& e : entries) t += e.forward_passes;
  return t;
}

std::string PassLedger::text() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << e.run << ": dims " << e.fine_dims.x << "x" << e.fine_dims.y << "x" << e.fine_dims.z
       << ", passes " << e.forward_passes;
    if (e.blocks > 0) os << ", blocks " << e.blocks;
    os << ", " << e.seconds << " s\n";
  }
  return os.str();
}

void EvalReport::add(const std::string& key, const std::string& value) {
  kv.emplace_back(key, value);
}

void EvalReport::add(const std::string& key, double value) {
  std::ostringstream os;
  os.precision(6);
  os << value;
  kv.emplace_back(key, os.str());
}

void EvalReport::add(const std::string& key, const MaskedError& e) {
  if (e.defined)
    add(key, e.value);
  else
    add(key, std::string("n/a"));
}

std::string EvalReport::text() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

void EvalReport::save(const std::string& txt_path, const std::string& json_path) const {
  {
    std::ofstream f(txt_path);
    if (!f) throw err("cannot write " + txt_path);
    f << text();
  }
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  std::ofstream f(json_path);
  if (!f) throw err("cannot write " + json_path);
  f << j.dump(2) << "\n";
}

}  // namespace voxc
