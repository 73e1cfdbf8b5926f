#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "avsa/autodiff.hpp"
#include "avsa/error.hpp"
#include "avsa/rng.hpp"

namespace avsa {

// Named parameter registry. Modules register their tensors here; the
// optimizer walks trainable entries, the checkpointer walks all of them
// (batch-norm running stats are non-trainable entries).
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T> create(const std::string& name, std::vector<int> shape, bool trainable = true) {
    for (const auto& e : entries_)
      if (e.name == name) throw ConfigError("ParamStore: duplicate parameter " + name);
    Tensor<T> t = Tensor<T>::leaf(std::move(shape), trainable);
    entries_.push_back({name, t, trainable});
    return t;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Tensor<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.tensor;
    return nullptr;
  }

  void zero_grad() {
    for (auto& e : entries_)
      if (e.trainable) e.tensor.zero_grad();
  }

  size_t total_count() const {
    size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.tensor.numel();
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

// He-style fan-in uniform for convolutions, Xavier uniform for linear maps.
template <typename T>
void init_he_uniform(Tensor<T>& t, size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : t.value()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_xavier_uniform(Tensor<T>& t, size_t fan_in, size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (T& v : t.value()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // optional

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& prefix, int in, int out, bool with_bias,
         Rng& rng) {
    weight = store.create(prefix + ".weight", {in, out});
    init_xavier_uniform(weight, in, out, rng);
    if (with_bias) bias = store.create(prefix + ".bias", {out});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, weight);
    return bias.defined() ? add_rowwise(y, bias) : y;
  }
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out, in, kh, kw]
  Tensor<T> bias;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& prefix, int in, int out, int kh, int kw,
         int sh, int sw, int ph, int pw, bool with_bias, Rng& rng)
      : stride_h(sh), stride_w(sw), pad_h(ph), pad_w(pw) {
    weight = store.create(prefix + ".weight", {out, in, kh, kw});
    init_he_uniform(weight, static_cast<size_t>(in) * kh * kw, rng);
    if (with_bias) bias = store.create(prefix + ".bias", {out});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride_h, stride_w, pad_h, pad_w);
  }
};

template <typename T>
struct Conv1d {
  Tensor<T> weight;  // [out, in, k]
  Tensor<T> bias;
  int stride = 1, pad = 0;

  Conv1d() = default;
  Conv1d(ParamStore<T>& store, const std::string& prefix, int in, int out, int k, int s,
         int p, bool with_bias, Rng& rng)
      : stride(s), pad(p) {
    weight = store.create(prefix + ".weight", {out, in, k});
    init_he_uniform(weight, static_cast<size_t>(in) * k, rng);
    if (with_bias) bias = store.create(prefix + ".bias", {out});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv1d(x, weight, bias, stride, pad);
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;  // non-trainable, checkpointed
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm() = default;
  BatchNorm(ParamStore<T>& store, const std::string& prefix, int channels) {
    gamma = store.create(prefix + ".gamma", {channels});
    beta = store.create(prefix + ".beta", {channels});
    running_mean = store.create(prefix + ".running_mean", {channels}, false);
    running_var = store.create(prefix + ".running_var", {channels}, false);
    for (T& v : gamma.value()) v = T(1);
    for (T& v : running_var.value()) v = T(1);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) const {
    return batch_norm(x, gamma, beta, const_cast<std::vector<T>&>(running_mean.value()),
                      const_cast<std::vector<T>&>(running_var.value()), momentum, eps,
                      training);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain, bias;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& prefix, int dim) {
    gain = store.create(prefix + ".gain", {dim});
    bias = store.create(prefix + ".bias", {dim});
    for (T& v : gain.value()) v = T(1);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return layer_norm_lastdim(x, gain, bias);
  }
};

// Intermediate width of the factored (2+1)D convolution, chosen so the
// spatial+temporal pair has the parameter count of the full 3D kernel.
inline int conv2plus1d_mid_channels(int in, int out, int kt, int ks) {
  const long long num = static_cast<long long>(kt) * ks * ks * in * out;
  const long long den = static_cast<long long>(ks) * ks * in + static_cast<long long>(kt) * out;
  const int mid = static_cast<int>(num / den);
  return mid < 1 ? 1 : mid;
}

// Factored spatiotemporal convolution on [b, c, t, h, w]: a 2D spatial
// conv per frame, batch norm + ReLU, then a 1D temporal conv per pixel.
template <typename T>
struct Conv2Plus1d {
  Conv2d<T> spatial;
  BatchNorm<T> bn_mid;
  Conv2d<T> temporal;  // 1 x kt kernel applied over a [b, mid, h*w, t] view

  Conv2Plus1d() = default;
  Conv2Plus1d(ParamStore<T>& store, const std::string& prefix, int in, int out, int ks,
              int kt, int ss, int st, Rng& rng) {
    const int mid = conv2plus1d_mid_channels(in, out, kt, ks);
    spatial = Conv2d<T>(store, prefix + ".spatial", in, mid, ks, ks, ss, ss, ks / 2,
                        ks / 2, false, rng);
    bn_mid = BatchNorm<T>(store, prefix + ".bn_mid", mid);
    temporal = Conv2d<T>(store, prefix + ".temporal", mid, out, 1, kt, 1, st, 0, kt / 2,
                         false, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) const {
    const int b = x.dim(0), t = x.dim(2);
    // spatial pass over frames
    Tensor<T> y = permute(x, {0, 2, 1, 3, 4});  // [b, t, c, h, w]
    y = reshape(y, {b * t, x.dim(1), x.dim(3), x.dim(4)});
    y = spatial.forward(y);
    y = relu(bn_mid.forward(y, training));
    const int m = y.dim(1), h = y.dim(2), w = y.dim(3);
    // temporal pass: all pixels form the height axis of one wide image
    y = reshape(y, {b, t, m, h, w});
    y = permute(y, {0, 2, 3, 4, 1});  // [b, m, h, w, t]
    y = reshape(y, {b, m, h * w, t});
    y = temporal.forward(y);
    const int o = y.dim(1), t2 = y.dim(3);
    y = reshape(y, {b, o, h, w, t2});
    return permute(y, {0, 1, 4, 2, 3});  // [b, o, t', h, w]
  }
};

}  // namespace avsa
