#include "voxc/tensor_nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <Eigen/Core>

#include "json.hpp"

namespace voxc {

template <typename T>
Tensor5<T>::Tensor5(int n_, int c_, int d_, int h_, int w_) : n(n_), c(c_), d(d_), h(h_), w(w_) {
  if (n < 1 || c < 1 || d < 1 || h < 1 || w < 1)
    throw std::invalid_argument("Tensor5: all dims must be >= 1");
  unsigned long long total = 1ULL * n * c * d * h * w;
  if (total > (1ULL << 33)) throw std::invalid_argument("Tensor5: tensor too large");
  v.assign(size_t(total), T(0));
}

template <typename T>
void Tensor5<T>::check_finite(const char* who) const {
  for (T x : v)
    if (!std::isfinite(double(x)))
      throw std::runtime_error(std::string(who) + ": non-finite value");
}

template <typename T>
Conv3dLayer<T>::Conv3dLayer(int in, int out, int k_) : in_ch(in), out_ch(out), k(k_) {
  if (in < 1 || out < 1) throw std::invalid_argument("Conv3dLayer: channels must be >= 1");
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("Conv3dLayer: kernel must be odd");
  weight.assign(size_t(out) * in * k * k * k, T(0));
  bias.assign(size_t(out), T(0));
}

template <typename T>
void Conv3dLayer<T>::init_he(Rng& rng) {
  double stddev = std::sqrt(2.0 / (double(in_ch) * k * k * k));
  for (T& w : weight) w = T(rng.normal(0.0, stddev));
  for (T& b : bias) b = T(0);
}

// -- conv3d via per-slab im2col + GEMM ----------------------------------------

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Patch matrix for one output z-plane: row (ic, kz, ky, kx), column (y, x).
template <typename T>
void im2col_slab(const Tensor5<T>& x, int n, int z_out, int k, int pad, MatRM<T>& col) {
  const int H = x.h, W = x.w;
  int r = 0;
  for (int ic = 0; ic < x.c; ++ic)
    for (int kz = 0; kz < k; ++kz) {
      const int z_in = z_out + kz - pad;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++r) {
          T* dst = col.data() + size_t(r) * H * W;
          if (z_in < 0 || z_in >= x.d) {
            std::fill(dst, dst + size_t(H) * W, T(0));
            continue;
          }
          const int sx = kx - pad;
          const int lo = std::max(0, -sx), hi = std::min(W, W - sx);
          for (int y = 0; y < H; ++y) {
            const int y_in = y + ky - pad;
            T* drow = dst + size_t(y) * W;
            if (y_in < 0 || y_in >= H) {
              std::fill(drow, drow + W, T(0));
              continue;
            }
            const T* srow = &x.v[x.index(n, ic, z_in, y_in, 0)];
            std::fill(drow, drow + lo, T(0));
            if (hi > lo) std::memcpy(drow + lo, srow + lo + sx, size_t(hi - lo) * sizeof(T));
            std::fill(drow + hi, drow + W, T(0));
          }
        }
    }
}

/// Transpose of im2col_slab: scatter-adds patch gradients back to the input.
template <typename T>
void col2im_slab_add(const MatRM<T>& colgrad, int n, int z_out, int k, int pad, Tensor5<T>& gx) {
  const int H = gx.h, W = gx.w;
  int r = 0;
  for (int ic = 0; ic < gx.c; ++ic)
    for (int kz = 0; kz < k; ++kz) {
      const int z_in = z_out + kz - pad;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx, ++r) {
          if (z_in < 0 || z_in >= gx.d) continue;
          const T* src = colgrad.data() + size_t(r) * H * W;
          const int sx = kx - pad;
          const int lo = std::max(0, -sx), hi = std::min(W, W - sx);
          for (int y = 0; y < H; ++y) {
            const int y_in = y + ky - pad;
            if (y_in < 0 || y_in >= H) continue;
            const T* srow = src + size_t(y) * W;
            T* drow = &gx.v[gx.index(n, ic, z_in, y_in, 0)];
            for (int xo = lo; xo < hi; ++xo) drow[xo + sx] += srow[xo];
          }
        }
    }
}

}  // namespace

template <typename T>
Tensor5<T> conv3d_forward(const Tensor5<T>& x, const Conv3dLayer<T>& layer) {
  if (x.c != layer.in_ch) throw std::invalid_argument("conv3d_forward: channel mismatch");
  x.check_finite("conv3d_forward input");

  const int K = layer.in_ch * layer.k * layer.k * layer.k;
  const int pad = layer.k / 2;
  const size_t hw = size_t(x.h) * x.w;
  Tensor5<T> out(x.n, layer.out_ch, x.d, x.h, x.w);

  Eigen::Map<const MatRM<T>> wm(layer.weight.data(), layer.out_ch, K);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bm(layer.bias.data(), layer.out_ch);
  MatRM<T> col(K, Eigen::Index(hw));
  MatRM<T> slab(layer.out_ch, Eigen::Index(hw));

  for (int n = 0; n < x.n; ++n)
    for (int z = 0; z < x.d; ++z) {
      im2col_slab(x, n, z, layer.k, pad, col);
      slab.noalias() = wm * col;
      slab.colwise() += bm;
      for (int oc = 0; oc < layer.out_ch; ++oc)
        std::memcpy(&out.v[out.index(n, oc, z, 0, 0)], slab.data() + size_t(oc) * hw,
                    hw * sizeof(T));
    }
  return out;
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Tensor5<T>& x, const Conv3dLayer<T>& layer,
                               const Tensor5<T>& grad_out) {
  if (x.c != layer.in_ch) throw std::invalid_argument("conv3d_backward: channel mismatch");
  if (grad_out.c != layer.out_ch || grad_out.n != x.n || grad_out.d != x.d ||
      grad_out.h != x.h || grad_out.w != x.w)
    throw std::invalid_argument("conv3d_backward: grad_out shape mismatch");
  grad_out.check_finite("conv3d_backward grad_out");

  const int K = layer.in_ch * layer.k * layer.k * layer.k;
  const int pad = layer.k / 2;
  const size_t hw = size_t(x.h) * x.w;

  Conv3dGrads<T> g;
  g.x = Tensor5<T>(x.n, x.c, x.d, x.h, x.w);
  g.weight.assign(layer.weight.size(), T(0));
  g.bias.assign(layer.bias.size(), T(0));

  Eigen::Map<const MatRM<T>> wm(layer.weight.data(), layer.out_ch, K);
  Eigen::Map<MatRM<T>> gwm(g.weight.data(), layer.out_ch, K);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbm(g.bias.data(), layer.out_ch);
  MatRM<T> col(K, Eigen::Index(hw));
  MatRM<T> gslab(layer.out_ch, Eigen::Index(hw));
  MatRM<T> colgrad(K, Eigen::Index(hw));

  for (int n = 0; n < x.n; ++n)
    for (int z = 0; z < x.d; ++z) {
      for (int oc = 0; oc < layer.out_ch; ++oc)
        std::memcpy(gslab.data() + size_t(oc) * hw, &grad_out.v[grad_out.index(n, oc, z, 0, 0)],
                    hw * sizeof(T));
      im2col_slab(x, n, z, layer.k, pad, col);
      gwm.noalias() += gslab * col.transpose();
      gbm += gslab.rowwise().sum();
      colgrad.noalias() = wm.transpose() * gslab;
      col2im_slab_add(colgrad, n, z, layer.k, pad, g.x);
    }
  return g;
}

// -- elementwise --------------------------------------------------------------

template <typename T>
Tensor5<T> relu(const Tensor5<T>& x) {
  Tensor5<T> out(x.n, x.c, x.d, x.h, x.w);
  for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  return out;
}

template <typename T>
Tensor5<T> relu_backward(const Tensor5<T>& x, const Tensor5<T>& grad_out) {
  if (!x.same_shape(grad_out)) throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor5<T> g(x.n, x.c, x.d, x.h, x.w);
  for (size_t i = 0; i < x.v.size(); ++i) g.v[i] = x.v[i] > T(0) ? grad_out.v[i] : T(0);
  return g;
}

// -- losses -------------------------------------------------------------------

template <typename T>
LossResult<T> l1_masked(const Tensor5<T>& pred, const Tensor5<T>& target, const Tensor5<T>& mask) {
  if (!pred.same_shape(target) || !pred.same_shape(mask))
    throw std::invalid_argument("l1_masked: shape mismatch");
  double total = 0.0;
  for (T m : mask.v) {
    if (m < T(0)) throw std::invalid_argument("l1_masked: negative mask entry");
    total += double(m);
  }
  if (total <= 0.0) throw std::runtime_error("l1_masked: mask selects no voxels");

  LossResult<T> r;
  r.grad = Tensor5<T>(pred.n, pred.c, pred.d, pred.h, pred.w);
  double acc = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    double diff = double(pred.v[i]) - double(target.v[i]);
    acc += double(mask.v[i]) * std::abs(diff);
    double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    r.grad.v[i] = T(double(mask.v[i]) * s / total);
  }
  r.value = acc / total;
  return r;
}

template <typename T>
LossResult<T> weighted_softmax_ce(const Tensor5<T>& logits, const std::vector<uint8_t>& labels,
                                  const std::vector<T>& weights) {
  const size_t voxels = size_t(logits.n) * logits.spatial();
  if (labels.size() != voxels || weights.size() != voxels)
    throw std::invalid_argument("weighted_softmax_ce: label/weight count mismatch");
  double total = 0.0;
  for (T w : weights) {
    if (w < T(0)) throw std::invalid_argument("weighted_softmax_ce: negative weight");
    total += double(w);
  }
  if (total <= 0.0) throw std::runtime_error("weighted_softmax_ce: weights select no voxels");

  const int C = logits.c;
  const size_t sp = logits.spatial();
  LossResult<T> r;
  r.grad = Tensor5<T>(logits.n, C, logits.d, logits.h, logits.w);
  double acc = 0.0;
  std::vector<double> p(C);

  for (int n = 0; n < logits.n; ++n) {
    const size_t base = size_t(n) * C * sp;
    for (size_t s = 0; s < sp; ++s) {
      const size_t vi = size_t(n) * sp + s;
      const uint8_t label = labels[vi];
      if (label >= C) throw std::invalid_argument("weighted_softmax_ce: label out of range");
      const double wv = double(weights[vi]);
      if (wv == 0.0) continue;  // zero weight contributes nothing either way

      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < C; ++c) mx = std::max(mx, double(logits.v[base + size_t(c) * sp + s]));
      double denom = 0.0;
      for (int c = 0; c < C; ++c) {
        p[c] = std::exp(double(logits.v[base + size_t(c) * sp + s]) - mx);
        denom += p[c];
      }
      acc -= wv * std::log(p[label] / denom);
      for (int c = 0; c < C; ++c) {
        double soft = p[c] / denom;
        r.grad.v[base + size_t(c) * sp + s] = T(wv * (soft - (c == label ? 1.0 : 0.0)) / total);
      }
    }
  }
  r.value = acc / total;
  return r;
}

// -- optimizer ----------------------------------------------------------------

template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, AdamState<T>& state,
               double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: stale state");

  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(beta2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    double g = double(grads[i]);
    double m = beta1 * double(state.m[i]) + (1.0 - beta1) * g;
    double v = beta2 * double(state.v[i]) + (1.0 - beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    params[i] -= T(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
  }
}

// -- checkpoints --------------------------------------------------------------

using nlohmann::json;

void save_checkpoint(
    const std::string& path,
    const std::vector<std::pair<std::string, const Conv3dLayer<float>*>>& layers) {
  json list = json::array();
  for (const auto& [name, layer] : layers)
    list.push_back({{"name", name}, {"in", layer->in_ch}, {"out", layer->out_ch}, {"k", layer->k}});
  std::string header = json{{"layers", std::move(list)}}.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("VXW1", 4);
  uint32_t len = uint32_t(header.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(header.data(), std::streamsize(header.size()));
  for (const auto& [name, layer] : layers) {
    os.write(reinterpret_cast<const char*>(layer->weight.data()),
             std::streamsize(layer->weight.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(layer->bias.data()),
             std::streamsize(layer->bias.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Conv3dLayer<float>*>>& layers) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VXW1", 4) != 0)
    throw std::runtime_error("not a VXW1 checkpoint: " + path);
  uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 4);
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path);

  json j = json::parse(header);
  const json& list = j.at("layers");
  if (list.size() != layers.size())
    throw std::runtime_error("checkpoint layer count mismatch: " + path);
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& [name, layer] = layers[i];
    const json& e = list.at(i);
    if (e.at("name").get<std::string>() != name || e.at("in").get<int>() != layer->in_ch ||
        e.at("out").get<int>() != layer->out_ch || e.at("k").get<int>() != layer->k)
      throw std::runtime_error("checkpoint layer '" + name + "' does not match: " + path);
    is.read(reinterpret_cast<char*>(layer->weight.data()),
            std::streamsize(layer->weight.size() * sizeof(float)));
    is.read(reinterpret_cast<char*>(layer->bias.data()),
            std::streamsize(layer->bias.size() * sizeof(float)));
  }
  if (!is) throw std::runtime_error("truncated checkpoint payload: " + path);
}

// -- instantiations -----------------------------------------------------------

template struct Tensor5<float>;
template struct Tensor5<double>;
template struct Conv3dLayer<float>;
template struct Conv3dLayer<double>;

template Tensor5<float> conv3d_forward<float>(const Tensor5<float>&, const Conv3dLayer<float>&);
template Tensor5<double> conv3d_forward<double>(const Tensor5<double>&,
                                                const Conv3dLayer<double>&);
template Conv3dGrads<float> conv3d_backward<float>(const Tensor5<float>&,
                                                   const Conv3dLayer<float>&,
                                                   const Tensor5<float>&);
template Conv3dGrads<double> conv3d_backward<double>(const Tensor5<double>&,
                                                     const Conv3dLayer<double>&,
                                                     const Tensor5<double>&);
template Tensor5<float> relu<float>(const Tensor5<float>&);
template Tensor5<double> relu<double>(const Tensor5<double>&);
template Tensor5<float> relu_backward<float>(const Tensor5<float>&, const Tensor5<float>&);
template Tensor5<double> relu_backward<double>(const Tensor5<double>&, const Tensor5<double>&);
template LossResult<float> l1_masked<float>(const Tensor5<float>&, const Tensor5<float>&,
                                            const Tensor5<float>&);
template LossResult<double> l1_masked<double>(const Tensor5<double>&, const Tensor5<double>&,
                                              const Tensor5<double>&);
template LossResult<float> weighted_softmax_ce<float>(const Tensor5<float>&,
                                                      const std::vector<uint8_t>&,
                                                      const std::vector<float>&);
template LossResult<double> weighted_softmax_ce<double>(const Tensor5<double>&,
                                                        const std::vector<uint8_t>&,
                                                        const std::vector<double>&);
template void adam_step<float>(std::vector<float>&, const std::vector<float>&, AdamState<float>&,
                               double, double, double, double);
template void adam_step<double>(std::vector<double>&, const std::vector<double>&,
                                AdamState<double>&, double, double, double, double);

}  // namespace voxc
