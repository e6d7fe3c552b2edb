#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxc/rng.hpp"

namespace voxc {

/// Dense (batch, channels, depth, height, width) tensor, width fastest.
/// f32 in production; the f64 instantiation exists for gradient checking.
template <typename T>
struct Tensor5 {
  int n = 0, c = 0, d = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor5() = default;
  Tensor5(int n_, int c_, int d_, int h_, int w_);

  size_t size() const { return v.size(); }
  size_t spatial() const { return size_t(d) * size_t(h) * size_t(w); }
  size_t index(int in, int ic, int id, int ih, int iw) const {
    return ((((size_t(in) * c + ic) * d + id) * h + ih) * size_t(w)) + iw;
  }
  T at(int in, int ic, int id, int ih, int iw) const { return v[index(in, ic, id, ih, iw)]; }
  T& at(int in, int ic, int id, int ih, int iw) { return v[index(in, ic, id, ih, iw)]; }

  bool same_shape(const Tensor5& o) const {
    return n == o.n && c == o.c && d == o.d && h == o.h && w == o.w;
  }

  /// Throws naming `who` when any value is NaN/Inf.
  void check_finite(const char* who) const;
};

/// 3D convolution, stride 1, zero padding k/2 (same-size output). k is odd,
/// in practice 1 or 3.
template <typename T>
struct Conv3dLayer {
  int in_ch = 0, out_ch = 0, k = 3;
  std::vector<T> weight;  // (out_ch, in_ch, k, k, k), x fastest
  std::vector<T> bias;    // (out_ch)

  Conv3dLayer() = default;
  Conv3dLayer(int in, int out, int k_);

  size_t weight_index(int oc, int ic, int kz, int ky, int kx) const {
    return ((((size_t(oc) * in_ch + ic) * k + kz) * k + ky) * size_t(k)) + kx;
  }

  /// He-normal weights, zero bias.
  void init_he(Rng& rng);
};

template <typename T>
Tensor5<T> conv3d_forward(const Tensor5<T>& x, const Conv3dLayer<T>& layer);

template <typename T>
struct Conv3dGrads {
  Tensor5<T> x;
  std::vector<T> weight;
  std::vector<T> bias;
};

/// Exact gradients of conv3d_forward with respect to input, weights and bias.
template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor5<T>& x, const Conv3dLayer<T>& layer,
                               const Tensor5<T>& grad_out);

template <typename T>
Tensor5<T> relu(const Tensor5<T>& x);

/// Gradient through relu given the forward input.
template <typename T>
Tensor5<T> relu_backward(const Tensor5<T>& x, const Tensor5<T>& grad_out);

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor5<T> grad;  // d value / d first argument
};

/// Weighted mean absolute error: sum(mask .* |pred - target|) / sum(mask).
/// Shapes must match; mask entries are nonnegative and must not all be zero.
template <typename T>
LossResult<T> l1_masked(const Tensor5<T>& pred, const Tensor5<T>& target, const Tensor5<T>& mask);

/// Per-voxel softmax cross entropy over the channel axis, averaged with the
/// given per-voxel weights: sum(w .* ce) / sum(w). labels/weights run over
/// (batch, depth, height, width) in tensor order; every label < logits.c.
template <typename T>
LossResult<T> weighted_softmax_ce(const Tensor5<T>& logits, const std::vector<uint8_t>& labels,
                                  const std::vector<T>& weights);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t t = 0;
};

/// Standard Adam with bias correction. State is sized lazily on first use.
template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// Two-phase schedule: base rate, dropping to `decayed` once step reaches
/// decay_step (steps are 0-based).
inline double scheduled_lr(int64_t step, int64_t decay_step, double base = 1e-3,
                           double decayed = 1e-4) {
  return step < decay_step ? base : decayed;
}

// ---------------------------------------------------------------------------
// Checkpoints: "VXW1" magic, u32 JSON header length, JSON layer list
// ({name, in, out, k} per layer), then per layer f32 weights and bias.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Conv3dLayer<float>*>>& layers);

/// Shapes and names in the file must match the passed layers exactly.
void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Conv3dLayer<float>*>>& layers);

}  // namespace voxc
