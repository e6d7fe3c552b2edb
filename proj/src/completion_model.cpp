#include "voxc/completion_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace voxc {

namespace {

std::runtime_error err(const std::string& msg) {
  return std::runtime_error("completion_model: " + msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Groups
// ---------------------------------------------------------------------------

std::array<std::vector<size_t>, kNumGroups> partition_groups(GridDims dims) {
  std::array<std::vector<size_t>, kNumGroups> out;
  for (auto& g : out) g.reserve(dims.count() / kNumGroups + 1);
  size_t i = 0;
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x, ++i) out[group_of(x, y, z) - 1].push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// NetConfig
// ---------------------------------------------------------------------------

const char* head_mode_name(HeadMode m) {
  switch (m) {
    case HeadMode::Joint: return "joint";
    case HeadMode::CompletionOnly: return "completion_only";
    case HeadMode::SemanticOnly: return "semantic_only";
  }
  throw err("bad head mode");
}

HeadMode head_mode_from_name(const std::string& s) {
  if (s == "joint") return HeadMode::Joint;
  if (s == "completion_only") return HeadMode::CompletionOnly;
  if (s == "semantic_only") return HeadMode::SemanticOnly;
  throw err("unknown head mode '" + s + "'");
}

const char* completion_head_name(CompletionHead c) {
  return c == CompletionHead::Deterministic ? "deterministic" : "probabilistic";
}

CompletionHead completion_head_from_name(const std::string& s) {
  if (s == "deterministic") return CompletionHead::Deterministic;
  if (s == "probabilistic") return CompletionHead::Probabilistic;
  throw err("unknown completion head '" + s + "'");
}

namespace {

// Flat index of every conv layer, in construction/traversal order. Units own
// two layers (3^3 conv then 1^1 shortcut); heads add a 1^1 projection.
struct Layout {
  int tsdf = 0, group = 0, plevel = -1, trunk = 0;
  int comp_unit = -1, comp_proj = -1, sem_unit = -1, sem_proj = -1;
  int total = 0;
  // unit ordinals for activation caching
  int u_tsdf = 0, u_group = 0, u_plevel = -1, u_trunk = 0, u_comp = -1, u_sem = -1;
  int n_units = 0;
};

Layout make_layout(const NetConfig& cfg) {
  Layout L;
  int li = 0, u = 0;
  L.tsdf = li, L.u_tsdf = u;
  li += 2 * kTsdfUnits, u += kTsdfUnits;
  L.group = li, L.u_group = u;
  li += 2 * kPrevGroupUnits, u += kPrevGroupUnits;
  if (cfg.level > 0) {
    L.plevel = li, L.u_plevel = u;
    li += 2 * kPrevLevelUnits, u += kPrevLevelUnits;
  }
  L.trunk = li, L.u_trunk = u;
  li += 2 * kTrunkUnits, u += kTrunkUnits;
  if (cfg.has_completion_head()) {
    L.comp_unit = li, L.u_comp = u;
    li += 2, u += 1;
    L.comp_proj = li++;
  }
  if (cfg.has_semantic_head()) {
    L.sem_unit = li, L.u_sem = u;
    li += 2, u += 1;
    L.sem_proj = li++;
  }
  L.total = li;
  L.n_units = u;
  return L;
}

const int kQuantChoices[] = {8, 16, 32, 256};

}  // namespace

int NetConfig::conv_count() const { return make_layout(*this).total; }

int NetConfig::receptive_radius() const {
  int branch = std::max(kTsdfUnits, level > 0 ? kPrevLevelUnits : 0);
  branch = std::max(branch, kPrevGroupUnits);
  return branch + kTrunkUnits + 1;  // one 3^3 conv per unit on the path, plus the head unit
}

void NetConfig::validate() const {
  if (level < 0 || level >= kNumLevels) throw err("net level out of range");
  if (branch_width < 1 || trunk_width < 1) throw err("channel widths must be positive");
  if (completion == CompletionHead::Probabilistic &&
      std::count(std::begin(kQuantChoices), std::end(kQuantChoices), quant_bins) == 0)
    throw err("quant_bins must be one of 8/16/32/256");
}

// ---------------------------------------------------------------------------
// Encodings
// ---------------------------------------------------------------------------

PrevGroupState::PrevGroupState(GridDims dims, double voxel_size, const Vec3& origin)
    : tdf(dims, voxel_size, origin, VolumeKind::TDF, kTruncationVoxels),
      labels(dims, voxel_size, origin, kEmpty),
      mask(dims.count(), 0) {}

PrevGroupState gt_prev_group(const VoxelVolume& target_tdf, const LabelVolume& target_labels,
                             int group) {
  if (group < 1 || group > kNumGroups) throw err("group id out of range");
  if (!(target_tdf.dims == target_labels.dims)) throw err("gt_prev_group: dim mismatch");
  PrevGroupState st(target_tdf.dims, target_tdf.voxel_size, target_tdf.origin);
  const GridDims d = target_tdf.dims;
  size_t i = 0;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x, ++i) {
        if (group_of(x, y, z) >= group) continue;
        st.tdf.data[i] = target_tdf.data[i];
        st.labels.labels[i] = target_labels.labels[i];
        st.mask[i] = 1;
      }
  return st;
}

namespace {

// Grid (x,y,z) and tensor (d=z, h=y, w=x) share the x-fastest layout, so a
// whole channel copies as one block.
void copy_channel(Tensor5<float>& t, int n, int c, const std::vector<float>& src) {
  std::memcpy(&t.v[t.index(n, c, 0, 0, 0)], src.data(), src.size() * sizeof(float));
}

GridDims tensor_dims(const Tensor5<float>& t) { return GridDims(t.w, t.h, t.d); }

}  // namespace

Tensor5<float> encode_tsdf_batch(const std::vector<const VoxelVolume*>& vols) {
  if (vols.empty()) throw err("encode_tsdf_batch: empty batch");
  const VoxelVolume& v0 = *vols.front();
  if (v0.kind != VolumeKind::TSDF) throw err("encode_tsdf_batch: input grid is not a TSDF");
  Tensor5<float> t(int(vols.size()), 1, v0.dims.z, v0.dims.y, v0.dims.x);
  for (size_t n = 0; n < vols.size(); ++n) {
    const VoxelVolume& v = *vols[n];
    if (!(v.dims == v0.dims) || v.kind != VolumeKind::TSDF)
      throw err("encode_tsdf_batch: mismatched batch entry");
    copy_channel(t, int(n), 0, v.data);
  }
  return t;
}

Tensor5<float> encode_prev_group_batch(const std::vector<const PrevGroupState*>& states) {
  if (states.empty()) throw err("encode_prev_group_batch: empty batch");
  const GridDims d = states.front()->tdf.dims;
  Tensor5<float> t(int(states.size()), kPrevGroupChannels, d.z, d.y, d.x);
  std::fill(t.v.begin(), t.v.end(), 0.0f);
  const size_t count = d.count();
  for (size_t n = 0; n < states.size(); ++n) {
    const PrevGroupState& st = *states[n];
    if (!(st.tdf.dims == d) || !(st.labels.dims == d) || st.mask.size() != count)
      throw err("encode_prev_group_batch: mismatched batch entry");
    copy_channel(t, int(n), 0, st.tdf.data);
    float* base = &t.v[t.index(int(n), 0, 0, 0, 0)];
    for (size_t i = 0; i < count; ++i) {
      if (!st.mask[i]) continue;  // unpredicted voxels keep an all-zero one-hot
      base[(1 + st.labels.labels[i]) * count + i] = 1.0f;
      base[(1 + kNumClasses) * count + i] = 1.0f;
    }
  }
  return t;
}

Tensor5<float> encode_prev_level_batch(const std::vector<const VoxelVolume*>& tdfs,
                                       const std::vector<const LabelVolume*>& labels) {
  if (tdfs.empty() || tdfs.size() != labels.size())
    throw err("encode_prev_level_batch: bad batch");
  const GridDims d = tdfs.front()->dims;
  Tensor5<float> t(int(tdfs.size()), kPrevLevelChannels, d.z, d.y, d.x);
  std::fill(t.v.begin(), t.v.end(), 0.0f);
  const size_t count = d.count();
  for (size_t n = 0; n < tdfs.size(); ++n) {
    const VoxelVolume& v = *tdfs[n];
    const LabelVolume& l = *labels[n];
    if (!(v.dims == d) || !(l.dims == d)) throw err("encode_prev_level_batch: dim mismatch");
    if (v.kind != VolumeKind::TDF) throw err("encode_prev_level_batch: expected a TDF grid");
    copy_channel(t, int(n), 0, v.data);
    float* base = &t.v[t.index(int(n), 0, 0, 0, 0)];
    for (size_t i = 0; i < count; ++i) base[(1 + l.labels[i]) * count + i] = 1.0f;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Decode
// ---------------------------------------------------------------------------

int tdf_bin(float d, int quant_bins) {
  int b = int(std::floor(double(d) / kTruncationVoxels * quant_bins));
  return std::clamp(b, 0, quant_bins - 1);
}

float bin_center(int b, int quant_bins) {
  return (float(b) + 0.5f) * kTruncationVoxels / float(quant_bins);
}

VoxelVolume decode_completion(const Tensor5<float>& head, const NetConfig& cfg, double voxel_size,
                              const Vec3& origin) {
  if (head.n != 1) throw err("decode_completion: batch must be 1");
  if (head.c != cfg.completion_channels()) throw err("decode_completion: channel mismatch");
  VoxelVolume out(tensor_dims(head), voxel_size, origin, VolumeKind::TDF, kTruncationVoxels);
  const size_t count = out.dims.count();
  if (cfg.completion == CompletionHead::Deterministic) {
    for (size_t i = 0; i < count; ++i)
      out.data[i] = std::clamp(head.v[i], 0.0f, kTruncationVoxels);
    return out;
  }
  const int q = cfg.quant_bins;
  for (size_t i = 0; i < count; ++i) {
    int best = 0;
    float best_v = head.v[i];
    for (int b = 1; b < q; ++b) {
      float v = head.v[size_t(b) * count + i];
      if (v > best_v) best = b, best_v = v;  // ties keep the lowest bin
    }
    out.data[i] = bin_center(best, q);
  }
  return out;
}

LabelVolume decode_labels(const Tensor5<float>& logits, double voxel_size, const Vec3& origin) {
  if (logits.n != 1) throw err("decode_labels: batch must be 1");
  if (logits.c != kNumClasses) throw err("decode_labels: channel mismatch");
  LabelVolume out(tensor_dims(logits), voxel_size, origin, kEmpty);
  const size_t count = out.dims.count();
  for (size_t i = 0; i < count; ++i) {
    int best = 0;
    float best_v = logits.v[i];
    for (int c = 1; c < kNumClasses; ++c) {
      float v = logits.v[size_t(c) * count + i];
      if (v > best_v) best = c, best_v = v;  // ties keep the lowest class id
    }
    out.labels[i] = uint8_t(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GroupNetwork
// ---------------------------------------------------------------------------

struct GroupNetwork::Cache {
  struct Unit {
    Tensor5<float> x;    // unit input
    Tensor5<float> pre;  // conv + shortcut, before relu
  };
  std::vector<Unit> units;
};

namespace {

void add_unit(std::vector<Conv3dLayer<float>>& layers, std::vector<std::string>& names,
              const std::string& name, int cin, int cout, Rng& rng) {
  layers.emplace_back(cin, cout, 3);
  layers.back().init_he(rng);
  names.push_back(name + ".conv");
  layers.emplace_back(cin, cout, 1);
  layers.back().init_he(rng);
  names.push_back(name + ".skip");
}

void add_proj(std::vector<Conv3dLayer<float>>& layers, std::vector<std::string>& names,
              const std::string& name, int cin, int cout, Rng& rng) {
  layers.emplace_back(cin, cout, 1);
  layers.back().init_he(rng);
  names.push_back(name);
}

void add_inplace(Tensor5<float>& a, const Tensor5<float>& b) {
  if (!a.same_shape(b)) throw err("internal: shape mismatch in add");
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

Tensor5<float> concat_channels(const std::vector<const Tensor5<float>*>& parts) {
  int c = 0;
  for (const auto* p : parts) c += p->c;
  const Tensor5<float>& f = *parts.front();
  Tensor5<float> out(f.n, c, f.d, f.h, f.w);
  const size_t sp = f.spatial();
  for (int n = 0; n < f.n; ++n) {
    size_t off = out.index(n, 0, 0, 0, 0);
    for (const auto* p : parts) {
      std::memcpy(&out.v[off], &p->v[p->index(n, 0, 0, 0, 0)], size_t(p->c) * sp * sizeof(float));
      off += size_t(p->c) * sp;
    }
  }
  return out;
}

Tensor5<float> slice_channels(const Tensor5<float>& t, int c0, int c) {
  Tensor5<float> out(t.n, c, t.d, t.h, t.w);
  const size_t sp = t.spatial();
  for (int n = 0; n < t.n; ++n)
    std::memcpy(&out.v[out.index(n, 0, 0, 0, 0)], &t.v[t.index(n, c0, 0, 0, 0)],
                size_t(c) * sp * sizeof(float));
  return out;
}

}  // namespace

GroupNetwork::GroupNetwork(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int B = cfg_.branch_width, W = cfg_.trunk_width;
  auto stack = [&](const std::string& prefix, int units, int cin) {
    for (int i = 0; i < units; ++i)
      add_unit(layers_, layer_names_, prefix + std::to_string(i), i == 0 ? cin : B, B, rng);
  };
  stack("tsdf", kTsdfUnits, 1);
  stack("group", kPrevGroupUnits, kPrevGroupChannels);
  if (cfg_.level > 0) stack("plevel", kPrevLevelUnits, kPrevLevelChannels);
  const int trunk_in = cfg_.level > 0 ? 3 * B : 2 * B;
  for (int i = 0; i < kTrunkUnits; ++i)
    add_unit(layers_, layer_names_, "trunk" + std::to_string(i), i == 0 ? trunk_in : W, W, rng);
  if (cfg_.has_completion_head()) {
    add_unit(layers_, layer_names_, "comp.unit", W, W, rng);
    add_proj(layers_, layer_names_, "comp.proj", W, cfg_.completion_channels(), rng);
  }
  if (cfg_.has_semantic_head()) {
    add_unit(layers_, layer_names_, "sem.unit", W, W, rng);
    add_proj(layers_, layer_names_, "sem.proj", W, kNumClasses, rng);
  }
  if (int(layers_.size()) != cfg_.conv_count()) throw err("internal: layer layout mismatch");
  opt_w_.assign(layers_.size(), {});
  opt_b_.assign(layers_.size(), {});
}

GroupOutput GroupNetwork::run(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                              const Tensor5<float>* prev_level, Cache* cache) const {
  if (layers_.empty()) throw err("network is uninitialized");
  if (tsdf.c != 1) throw err("tsdf input must have 1 channel");
  if (prev_group.c != kPrevGroupChannels) throw err("previous-group input must have 14 channels");
  if (prev_group.n != tsdf.n || prev_group.d != tsdf.d || prev_group.h != tsdf.h ||
      prev_group.w != tsdf.w)
    throw err("conditioning inputs disagree with the tsdf extent");
  if (cfg_.level > 0) {
    if (!prev_level) throw err("previous-level conditioning is required at this level");
    if (prev_level->c != kPrevLevelChannels)
      throw err("previous-level input must have 13 channels");
    if (prev_level->n != tsdf.n || prev_level->d != tsdf.d || prev_level->h != tsdf.h ||
        prev_level->w != tsdf.w)
      throw err("previous-level input disagrees with the tsdf extent");
  } else if (prev_level) {
    throw err("this network takes no previous-level input");
  }

  const Layout L = make_layout(cfg_);
  if (cache) cache->units.resize(L.n_units);

  auto unit = [&](int li, int ord, const Tensor5<float>& x) {
    Tensor5<float> pre = conv3d_forward(x, layers_[li]);
    add_inplace(pre, conv3d_forward(x, layers_[li + 1]));
    Tensor5<float> y = relu(pre);
    if (cache) cache->units[ord] = {x, std::move(pre)};
    return y;
  };
  auto branch = [&](int li0, int ord0, int units, Tensor5<float> x) {
    for (int i = 0; i < units; ++i) x = unit(li0 + 2 * i, ord0 + i, x);
    return x;
  };

  Tensor5<float> a = branch(L.tsdf, L.u_tsdf, kTsdfUnits, tsdf);
  Tensor5<float> b = branch(L.group, L.u_group, kPrevGroupUnits, prev_group);
  Tensor5<float> t;
  if (cfg_.level > 0) {
    Tensor5<float> c = branch(L.plevel, L.u_plevel, kPrevLevelUnits, *prev_level);
    t = concat_channels({&a, &b, &c});
  } else {
    t = concat_channels({&a, &b});
  }
  t = branch(L.trunk, L.u_trunk, kTrunkUnits, std::move(t));

  GroupOutput out;
  if (cfg_.has_completion_head()) {
    out.has_completion = true;
    out.completion = conv3d_forward(unit(L.comp_unit, L.u_comp, t), layers_[L.comp_proj]);
  }
  if (cfg_.has_semantic_head()) {
    out.has_semantics = true;
    out.semantics = conv3d_forward(unit(L.sem_unit, L.u_sem, t), layers_[L.sem_proj]);
  }
  return out;
}

GroupOutput GroupNetwork::forward(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                                  const Tensor5<float>* prev_level) const {
  return run(tsdf, prev_group, prev_level, nullptr);
}

double GroupNetwork::train_step(const Tensor5<float>& tsdf, const Tensor5<float>& prev_group,
                                const Tensor5<float>* prev_level, const TrainTargets& targets,
                                double lr) {
  const Layout L = make_layout(cfg_);
  Cache cache;
  GroupOutput out = run(tsdf, prev_group, prev_level, &cache);

  double total = 0.0;
  Tensor5<float> dcomp, dsem;
  if (cfg_.has_completion_head()) {
    LossResult<float> r;
    if (cfg_.completion == CompletionHead::Deterministic)
      r = l1_masked(out.completion, targets.target_tdf, targets.completion_mask);
    else
      r = weighted_softmax_ce(out.completion, targets.bin_labels, targets.bin_weights);
    total += r.value;
    dcomp = std::move(r.grad);
  }
  if (cfg_.has_semantic_head()) {
    auto r = weighted_softmax_ce(out.semantics, targets.labels, targets.semantic_weights);
    total += r.value;
    dsem = std::move(r.grad);
  }

  std::vector<std::vector<float>> gw(layers_.size()), gb(layers_.size());
  auto unit_backward = [&](int li, int ord, const Tensor5<float>& dy) {
    const Cache::Unit& uc = cache.units[ord];
    Tensor5<float> dpre = relu_backward(uc.pre, dy);
    auto g3 = conv3d_backward(uc.x, layers_[li], dpre);
    auto g1 = conv3d_backward(uc.x, layers_[li + 1], dpre);
    gw[li] = std::move(g3.weight), gb[li] = std::move(g3.bias);
    gw[li + 1] = std::move(g1.weight), gb[li + 1] = std::move(g1.bias);
    add_inplace(g3.x, g1.x);
    return std::move(g3.x);
  };
  auto branch_backward = [&](int li0, int ord0, int units, Tensor5<float> dy) {
    for (int i = units - 1; i >= 0; --i) dy = unit_backward(li0 + 2 * i, ord0 + i, dy);
    return dy;
  };
  auto head_backward = [&](int li_unit, int ord, int li_proj, const Tensor5<float>& dlogits) {
    Tensor5<float> head_in = relu(cache.units[ord].pre);
    auto gp = conv3d_backward(head_in, layers_[li_proj], dlogits);
    gw[li_proj] = std::move(gp.weight), gb[li_proj] = std::move(gp.bias);
    return unit_backward(li_unit, ord, gp.x);
  };

  Tensor5<float> dtrunk;
  if (cfg_.has_completion_head()) dtrunk = head_backward(L.comp_unit, L.u_comp, L.comp_proj, dcomp);
  if (cfg_.has_semantic_head()) {
    Tensor5<float> d = head_backward(L.sem_unit, L.u_sem, L.sem_proj, dsem);
    if (dtrunk.v.empty())
      dtrunk = std::move(d);
    else
      add_inplace(dtrunk, d);
  }

  Tensor5<float> dconcat = branch_backward(L.trunk, L.u_trunk, kTrunkUnits, std::move(dtrunk));
  const int B = cfg_.branch_width;
  branch_backward(L.tsdf, L.u_tsdf, kTsdfUnits, slice_channels(dconcat, 0, B));
  branch_backward(L.group, L.u_group, kPrevGroupUnits, slice_channels(dconcat, B, B));
  if (cfg_.level > 0)
    branch_backward(L.plevel, L.u_plevel, kPrevLevelUnits, slice_channels(dconcat, 2 * B, B));

  for (size_t i = 0; i < layers_.size(); ++i) {
    adam_step(layers_[i].weight, gw[i], opt_w_[i], lr);
    adam_step(layers_[i].bias, gb[i], opt_b_[i], lr);
  }
  return total;
}

void GroupNetwork::save(const std::string& path) const {
  std::vector<std::pair<std::string, const Conv3dLayer<float>*>> named;
  for (size_t i = 0; i < layers_.size(); ++i) named.emplace_back(layer_names_[i], &layers_[i]);
  save_checkpoint(path, named);
}

void GroupNetwork::load(const std::string& path) {
  if (layers_.empty()) throw err("construct the network with its config before loading");
  std::vector<std::pair<std::string, Conv3dLayer<float>*>> named;
  for (size_t i = 0; i < layers_.size(); ++i) named.emplace_back(layer_names_[i], &layers_[i]);
  load_checkpoint(path, named);
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

NetConfig ModelHierarchy::stage_config(size_t stage) const {
  if (stage >= stage_levels.size()) throw err("stage index out of range");
  NetConfig nc = base;
  nc.level = stage == 0 ? 0 : stage_levels[stage];
  return nc;
}

void ModelHierarchy::validate() const {
  if (stage_levels.empty()) throw err("hierarchy has no stages");
  for (size_t i = 0; i < stage_levels.size(); ++i) {
    if (stage_levels[i] < 0 || stage_levels[i] >= kNumLevels)
      throw err("stage level out of range");
    if (i > 0 && stage_levels[i] != stage_levels[i - 1] + 1)
      throw err("stage levels must be consecutive");
  }
  if (stages.size() > stage_levels.size()) throw err("more trained stages than stage levels");
}

void save_hierarchy(const ModelHierarchy& h, const std::string& dir) {
  h.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["format"] = "voxc-hierarchy-1";
  j["stage_levels"] = h.stage_levels;
  j["branch_width"] = h.base.branch_width;
  j["trunk_width"] = h.base.trunk_width;
  j["head_mode"] = head_mode_name(h.base.head_mode);
  j["completion_head"] = completion_head_name(h.base.completion);
  j["quant_bins"] = h.base.quant_bins;
  j["stages_trained"] = h.stages.size();
  std::ofstream f(dir + "/hierarchy.json");
  if (!f) throw err("cannot write " + dir + "/hierarchy.json");
  f << j.dump(2) << "\n";
  f.close();
  for (size_t s = 0; s < h.stages.size(); ++s) {
    const std::string ldir = dir + "/level" + std::to_string(h.stage_levels[s]);
    fs::create_directories(ldir);
    for (int g = 1; g <= kNumGroups; ++g)
      h.stages[s][g - 1].save(ldir + "/group" + std::to_string(g) + ".ckpt");
  }
}

ModelHierarchy load_hierarchy(const std::string& dir) {
  std::ifstream f(dir + "/hierarchy.json");
  if (!f) throw err("cannot open " + dir + "/hierarchy.json (train writes it)");
  nlohmann::json j;
  f >> j;
  if (j.value("format", "") != "voxc-hierarchy-1") throw err("unrecognized hierarchy format");
  ModelHierarchy h;
  h.stage_levels = j.at("stage_levels").get<std::vector<int>>();
  h.base.branch_width = j.at("branch_width").get<int>();
  h.base.trunk_width = j.at("trunk_width").get<int>();
  h.base.head_mode = head_mode_from_name(j.at("head_mode").get<std::string>());
  h.base.completion = completion_head_from_name(j.at("completion_head").get<std::string>());
  h.base.quant_bins = j.at("quant_bins").get<int>();
  const size_t trained = j.at("stages_trained").get<size_t>();
  if (trained > h.stage_levels.size()) throw err("hierarchy.json: too many trained stages");
  for (size_t s = 0; s < trained; ++s) {
    std::array<GroupNetwork, kNumGroups> nets;
    const std::string ldir = dir + "/level" + std::to_string(h.stage_levels[s]);
    for (int g = 1; g <= kNumGroups; ++g) {
      nets[g - 1] = GroupNetwork(h.stage_config(s), 0);
      nets[g - 1].load(ldir + "/group" + std::to_string(g) + ".ckpt");
    }
    h.stages.push_back(std::move(nets));
  }
  h.validate();
  return h;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace {

// Geometry stand-in when the completion head is disabled: the input scan's
// unsigned distance, so conditioning and output stay well-defined.
VoxelVolume input_as_tdf(const VoxelVolume& tsdf) {
  VoxelVolume out(tsdf.dims, tsdf.voxel_size, tsdf.origin, VolumeKind::TDF, kTruncationVoxels);
  for (size_t i = 0; i < tsdf.data.size(); ++i)
    out.data[i] = std::clamp(std::fabs(tsdf.data[i]), 0.0f, kTruncationVoxels);
  return out;
}

}  // namespace

StageOutput infer_stage(const std::array<GroupNetwork, kNumGroups>& nets, const NetConfig& cfg,
                        const VoxelVolume& tsdf, const StageOutput* prev, int stage_index,
                        int* pass_counter, const InferHooks& hooks) {
  if (tsdf.kind != VolumeKind::TSDF) throw err("infer_stage: input grid is not a TSDF");
  for (const auto& n : nets)
    if (n.layer_count() == 0) throw err("infer_stage: untrained network");

  Tensor5<float> x_tsdf = encode_tsdf_batch({&tsdf});
  Tensor5<float> x_plevel;
  if (cfg.level > 0) {
    if (!prev) throw err("infer_stage: missing previous-level volumes");
    VoxelVolume up_tdf = upsample(prev->tdf, 2);
    LabelVolume up_lab = upsample(prev->labels, 2);
    if (!(up_tdf.dims == tsdf.dims))
      throw err("infer_stage: previous level bounds do not match (expected exact 2x dims)");
    x_plevel = encode_prev_level_batch({&up_tdf}, {&up_lab});
  } else if (prev) {
    throw err("infer_stage: this stage takes no previous-level volumes");
  }

  const auto groups = partition_groups(tsdf.dims);
  PrevGroupState state(tsdf.dims, tsdf.voxel_size, tsdf.origin);
  for (int g = 1; g <= kNumGroups; ++g) {
    Tensor5<float> x_group = encode_prev_group_batch({&state});
    GroupOutput out =
        nets[g - 1].forward(x_tsdf, x_group, cfg.level > 0 ? &x_plevel : nullptr);
    if (pass_counter) ++*pass_counter;

    VoxelVolume vals = out.has_completion
                           ? decode_completion(out.completion, cfg, tsdf.voxel_size, tsdf.origin)
                           : input_as_tdf(tsdf);
    LabelVolume labs =
        out.has_semantics
            ? decode_labels(out.semantics, tsdf.voxel_size, tsdf.origin)
            : LabelVolume(tsdf.dims, tsdf.voxel_size, tsdf.origin, kEmpty);
    for (size_t i : groups[g - 1]) {
      state.tdf.data[i] = vals.data[i];
      state.labels.labels[i] = labs.labels[i];
      state.mask[i] = 1;
    }
    if (hooks.after_group) hooks.after_group(stage_index, g, state);
  }
  return {std::move(state.tdf), std::move(state.labels)};
}

InferenceResult infer_scene(const ModelHierarchy& h,
                            const std::vector<const VoxelVolume*>& stage_tsdfs,
                            const InferHooks& hooks) {
  h.validate();
  if (h.stages.size() != h.stage_levels.size())
    throw err("infer_scene: hierarchy is only partially trained");
  if (stage_tsdfs.size() != h.stage_levels.size())
    throw err("infer_scene: need one input TSDF per stage");
  for (size_t s = 0; s < stage_tsdfs.size(); ++s) {
    const VoxelVolume& v = *stage_tsdfs[s];
    const double want = HierarchyLevelSpec::standard(h.stage_levels[s]).voxel_size;
    if (std::fabs(v.voxel_size - want) > 1e-9)
      throw err("infer_scene: stage input voxel size does not match its level");
    const Vec3 d = v.origin - stage_tsdfs[0]->origin;
    if (std::fabs(d.x) + std::fabs(d.y) + std::fabs(d.z) > 1e-9)
      throw err("infer_scene: stage grids must share a world origin");
    if (s > 0) {
      const GridDims c = stage_tsdfs[s - 1]->dims, f = v.dims;
      if (f.x != 2 * c.x || f.y != 2 * c.y || f.z != 2 * c.z)
        throw err("infer_scene: stage grid dims must double level to level");
    }
  }

  InferenceResult r;
  StageOutput out;
  for (size_t s = 0; s < h.stages.size(); ++s) {
    int passes = 0;
    out = infer_stage(h.stages[s], h.stage_config(s), *stage_tsdfs[s], s > 0 ? &out : nullptr,
                      int(s), &passes, hooks);
    r.passes_per_stage.push_back(passes);
    r.forward_passes += passes;
  }
  r.tdf = std::move(out.tdf);
  r.labels = std::move(out.labels);
  return r;
}

BlockedResult infer_scene_blocked(const ModelHierarchy& h,
                                  const std::vector<const VoxelVolume*>& stage_tsdfs,
                                  int block_fine_voxels) {
  h.validate();
  if (stage_tsdfs.size() != h.stage_levels.size())
    throw err("blocked inference: need one input TSDF per stage");
  const int factor = 1 << (h.stage_levels.back() - h.stage_levels.front());
  if (block_fine_voxels < factor || block_fine_voxels % factor != 0)
    throw err("blocked inference: block size must be a positive multiple of the level ratio");

  const VoxelVolume& fine = *stage_tsdfs.back();
  const GridDims fd = fine.dims;
  BlockedResult r;
  r.tdf = VoxelVolume(fd, fine.voxel_size, fine.origin, VolumeKind::TDF, kTruncationVoxels);
  r.labels = LabelVolume(fd, fine.voxel_size, fine.origin, kEmpty);

  const int bs = block_fine_voxels;
  for (int oz = 0; oz < fd.z; oz += bs)
    for (int ox = 0; ox < fd.x; ox += bs) {
      std::vector<VoxelVolume> crops;
      crops.reserve(stage_tsdfs.size());
      for (size_t s = 0; s < stage_tsdfs.size(); ++s) {
        const int div = 1 << (h.stage_levels.back() - h.stage_levels[s]);
        const VoxelVolume& v = *stage_tsdfs[s];
        crops.push_back(crop(v, ox / div, 0, oz / div, GridDims(bs / div, v.dims.y, bs / div),
                             PadMode::Pad, -kTruncationVoxels));
      }
      std::vector<const VoxelVolume*> ptrs;
      for (const auto& c : crops) ptrs.push_back(&c);
      InferenceResult block = infer_scene(h, ptrs);
      r.forward_passes += block.forward_passes;
      ++r.blocks;

      const int nx = std::min(bs, fd.x - ox), nz = std::min(bs, fd.z - oz);
      for (int z = 0; z < nz; ++z)
        for (int y = 0; y < fd.y; ++y)
          for (int x = 0; x < nx; ++x) {
            r.tdf.at(ox + x, y, oz + z) = block.tdf.at(x, y, z);
            r.labels.at(ox + x, y, oz + z) = block.labels.at(x, y, z);
          }
    }
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

NetConfig TrainConfig::net_config(int stage_index) const {
  NetConfig nc;
  nc.level = stage_index == 0 ? 0 : stage_levels[stage_index];
  nc.branch_width = branch_width;
  nc.trunk_width = trunk_width;
  nc.head_mode = head_mode;
  nc.completion = completion_head;
  nc.quant_bins = quant_bins;
  return nc;
}

void TrainConfig::validate() const {
  if (stage_levels.empty()) throw err("train config: no stage levels");
  for (size_t i = 0; i < stage_levels.size(); ++i) {
    if (stage_levels[i] < 0 || stage_levels[i] >= kNumLevels)
      throw err("train config: stage level out of range");
    if (i > 0 && stage_levels[i] != stage_levels[i - 1] + 1)
      throw err("train config: stage levels must be consecutive");
  }
  if (steps_per_net < 1) throw err("train config: steps_per_net must be positive");
  if (batch < 1) throw err("train config: batch must be positive");
  if (lr <= 0 || lr_decayed <= 0) throw err("train config: learning rates must be positive");
  net_config(0).validate();
}

namespace {

TrainTargets make_targets(const std::vector<TrainSample>& batch, int group,
                          const NetConfig& cfg) {
  const GridDims d = batch.front().target_tdf.dims;
  const size_t count = d.count();
  const int n = int(batch.size());
  TrainTargets t;
  t.target_tdf = Tensor5<float>(n, 1, d.z, d.y, d.x);
  t.completion_mask = Tensor5<float>(n, 1, d.z, d.y, d.x);
  t.labels.resize(size_t(n) * count);
  t.semantic_weights.resize(size_t(n) * count);
  const bool prob = cfg.completion == CompletionHead::Probabilistic;
  if (prob) {
    t.bin_labels.resize(size_t(n) * count);
    t.bin_weights.resize(size_t(n) * count);
  }

  std::vector<float> gmask(count, 0.0f);
  {
    size_t i = 0;
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x, ++i) gmask[i] = group_of(x, y, z) == group ? 1.0f : 0.0f;
  }

  for (int s = 0; s < n; ++s) {
    const TrainSample& smp = batch[s];
    if (!(smp.target_tdf.dims == d)) throw err("train batch mixes crop sizes");
    std::memcpy(&t.target_tdf.v[size_t(s) * count], smp.target_tdf.data.data(),
                count * sizeof(float));
    std::memcpy(&t.completion_mask.v[size_t(s) * count], gmask.data(), count * sizeof(float));
    std::memcpy(&t.labels[size_t(s) * count], smp.target_labels.labels.data(), count);
    for (size_t i = 0; i < count; ++i) {
      const size_t o = size_t(s) * count + i;
      t.semantic_weights[o] = gmask[i] != 0.0f ? smp.loss_weights[i] : 0.0f;
      if (prob) {
        const float td = smp.target_tdf.data[i];
        t.bin_labels[o] = uint8_t(tdf_bin(td, cfg.quant_bins));
        t.bin_weights[o] = gmask[i] != 0.0f ? magnitude_weight(td) : 0.0f;
      }
    }
  }
  return t;
}

}  // namespace

void train_stage(ModelHierarchy& h, const SceneCorpus& corpus, size_t stage,
                 const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw err("train: empty corpus");
  if (stage >= cfg.stage_levels.size()) throw err("train: stage index out of range");
  if (h.stages.size() != stage)
    throw err("train: stage " + std::to_string(stage) + " needs exactly the earlier stages " +
              "trained first (have " + std::to_string(h.stages.size()) + ")");
  if (h.stages.empty()) {
    h.stage_levels = cfg.stage_levels;
    h.base = cfg.net_config(0);
  } else if (h.stage_levels != cfg.stage_levels) {
    throw err("train: config stage levels disagree with the hierarchy");
  }

  const int level = cfg.stage_levels[stage];
  const auto spec = HierarchyLevelSpec::standard(level);

  // Conditioning grids for this stage: the previous stage's predictions, or
  // the coarser ground truth under gt_train.
  std::vector<StageOutput> prev(corpus.size());
  if (stage > 0) {
    for (size_t i = 0; i < corpus.size(); ++i) {
      if (cfg.gt_train) {
        const SceneLevelData& c = corpus[i].levels[level - 1];
        prev[i] = {c.target_tdf, c.target_labels};
      } else {
        StageOutput out;
        for (size_t s = 0; s < stage; ++s)
          out = infer_stage(h.stages[s], h.stage_config(s),
                            corpus[i].levels[cfg.stage_levels[s]].input_tsdf,
                            s > 0 ? &out : nullptr, int(s), nullptr);
        prev[i] = std::move(out);
      }
    }
  }

  std::vector<TrainSample> pool;
  Rng srng(Rng::derive(cfg.seed, 0x5A17 + stage));
  for (size_t i = 0; i < corpus.size(); ++i) {
    const SceneLevelData& lvl = corpus[i].levels[level];
    SceneVolumes sv;
    sv.input_tsdf = &lvl.input_tsdf;
    sv.target_tdf = &lvl.target_tdf;
    sv.target_labels = &lvl.target_labels;
    if (stage > 0) {
      sv.prev_tdf = &prev[i].tdf;
      sv.prev_labels = &prev[i].labels;
    }
    auto samples = sample_subvolumes(sv, spec, srng);
    for (auto& s : samples) pool.push_back(std::move(s));
  }
  if (pool.empty()) throw err("train: sampler produced no crops at level " + std::to_string(level));

  const int decay = cfg.decay_step >= 0 ? cfg.decay_step : cfg.steps_per_net / 2;
  const NetConfig nc = cfg.net_config(int(stage));
  std::array<GroupNetwork, kNumGroups> nets;
  for (int g = 1; g <= kNumGroups; ++g) {
    GroupNetwork net(nc, Rng::derive(cfg.seed, 0x100 * (stage + 1) + g));
    Rng rng(Rng::derive(cfg.seed, 0x9000 + 0x100 * stage + g));
    for (int step = 0; step < cfg.steps_per_net; ++step) {
      std::vector<TrainSample> batch;
      batch.reserve(cfg.batch);
      std::vector<const VoxelVolume*> in_tsdf, in_ptdf;
      std::vector<const LabelVolume*> in_plab;
      for (int b = 0; b < cfg.batch; ++b) {
        const TrainSample& base = pool[rng.uniform_int(0, int(pool.size()) - 1)];
        batch.push_back(cfg.jitter ? height_jitter(base, rng) : base);
      }
      std::vector<PrevGroupState> states;
      states.reserve(batch.size());
      for (const TrainSample& s : batch) {
        in_tsdf.push_back(&s.input_tsdf);
        states.push_back(gt_prev_group(s.target_tdf, s.target_labels, g));
        if (stage > 0) {
          if (!s.has_prev) throw err("train: sample lacks previous-level channels");
          in_ptdf.push_back(&s.prev_tdf);
          in_plab.push_back(&s.prev_labels);
        }
      }
      std::vector<const PrevGroupState*> state_ptrs;
      for (const auto& st : states) state_ptrs.push_back(&st);

      Tensor5<float> x_tsdf = encode_tsdf_batch(in_tsdf);
      Tensor5<float> x_group = encode_prev_group_batch(state_ptrs);
      Tensor5<float> x_plevel;
      if (stage > 0) x_plevel = encode_prev_level_batch(in_ptdf, in_plab);

      TrainTargets targets = make_targets(batch, g, nc);
      const double lr = scheduled_lr(step, decay, cfg.lr, cfg.lr_decayed);
      const double loss = net.train_step(x_tsdf, x_group, stage > 0 ? &x_plevel : nullptr,
                                         targets, lr);
      if (cfg.on_step) cfg.on_step(int(stage), g, step, loss);
    }
    nets[g - 1] = std::move(net);
  }
  h.stages.push_back(std::move(nets));
}

ModelHierarchy train_hierarchy(const SceneCorpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  ModelHierarchy h;
  for (size_t s = 0; s < cfg.stage_levels.size(); ++s) train_stage(h, corpus, s, cfg);
  return h;
}

}  // namespace voxc
