#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "avsa/autodiff.hpp"
#include "avsa/error.hpp"
#include "avsa/nn.hpp"
#include "avsa/rng.hpp"

namespace avsa {

// Activation shapes recorded layer by layer during a forward pass.
using ShapeTrace = std::vector<std::pair<std::string, std::vector<int>>>;

struct EncoderConfig {
  double width_multiplier = 1.0;

  int ch(int base) const {
    const int c = static_cast<int>(std::lround(base * width_multiplier));
    if (c < 1) throw ConfigError("EncoderConfig: width multiplier collapses a layer");
    return c;
  }
  int feature_dim() const { return ch(512); }
};

inline EncoderConfig desk_encoder_config() { return {1.0 / 8.0}; }

namespace detail {

// keep frames 0, stride, 2*stride, ... of a [b, c, t, h, w] tensor
template <typename T>
Tensor<T> temporal_decimate(const Tensor<T>& x, int stride) {
  if (stride == 1) return x;
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const int t2 = (t - 1) / stride + 1;
  Tensor<T> y = permute(x, {0, 2, 1, 3, 4});  // [b, t, c, h, w]
  y = reshape(y, {b * t, c * h * w});
  std::vector<int> keep;
  keep.reserve(static_cast<size_t>(b) * t2);
  for (int bi = 0; bi < b; ++bi)
    for (int ti = 0; ti < t; ti += stride) keep.push_back(bi * t + ti);
  y = rows(y, keep);
  y = reshape(y, {b, t2, c, h, w});
  return permute(y, {0, 2, 1, 3, 4});
}

// run a 2D module frame by frame on [b, c, t, h, w]
template <typename T, typename Fn>
Tensor<T> per_frame(const Tensor<T>& x, Fn&& fn) {
  const int b = x.dim(0), c = x.dim(1), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  Tensor<T> y = permute(x, {0, 2, 1, 3, 4});
  y = reshape(y, {b * t, c, h, w});
  y = fn(y);
  y = reshape(y, {b, t, y.dim(1), y.dim(2), y.dim(3)});
  return permute(y, {0, 2, 1, 3, 4});
}

}  // namespace detail

// Batch norm over [b, c, t, h, w]: channel axis is already axis 1, so the
// plain op applies; kept as a helper for symmetry with the 2D path.
template <typename T>
Tensor<T> bn_relu(const BatchNorm<T>& bn, const Tensor<T>& x, bool training) {
  return relu(bn.forward(x, training));
}

// One residual stage of the factored-3D network: two (2+1)D convolutions
// with batch norm, and a strided pointwise projection shortcut whenever the
// shape changes.
template <typename T>
struct VideoResidualBlock {
  Conv2Plus1d<T> conv_a, conv_b;
  BatchNorm<T> bn_a, bn_b;
  Conv2d<T> shortcut;  // pointwise, defined only when projecting
  BatchNorm<T> bn_short;
  int stride_s = 1, stride_t = 1;
  bool project = false;

  VideoResidualBlock() = default;
  VideoResidualBlock(ParamStore<T>& store, const std::string& prefix, int in, int out,
                     int ss, int st, Rng& rng)
      : stride_s(ss), stride_t(st), project(in != out || ss != 1 || st != 1) {
    conv_a = Conv2Plus1d<T>(store, prefix + ".conv_a", in, out, 3, 3, ss, st, rng);
    bn_a = BatchNorm<T>(store, prefix + ".bn_a", out);
    conv_b = Conv2Plus1d<T>(store, prefix + ".conv_b", out, out, 3, 3, 1, 1, rng);
    bn_b = BatchNorm<T>(store, prefix + ".bn_b", out);
    if (project) {
      shortcut = Conv2d<T>(store, prefix + ".shortcut", in, out, 1, 1, ss, ss, 0, 0,
                           false, rng);
      bn_short = BatchNorm<T>(store, prefix + ".bn_short", out);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) const {
    Tensor<T> h = bn_relu(bn_a, conv_a.forward(x, training), training);
    h = bn_b.forward(conv_b.forward(h, training), training);
    Tensor<T> skip = x;
    if (project) {
      skip = detail::per_frame(x, [&](const Tensor<T>& f) { return shortcut.forward(f); });
      skip = detail::temporal_decimate(skip, stride_t);
      skip = bn_short.forward(skip, training);
    }
    return relu(add(h, skip));
  }
};

// Factored-3D video encoder: a strided (2+1)D stem and four two-block
// residual stages, ending in a global spatiotemporal max pool.
template <typename T>
class VideoEncoder {
 public:
  VideoEncoder() = default;
  VideoEncoder(ParamStore<T>& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int c1 = cfg.ch(64), c2 = cfg.ch(64), c3 = cfg.ch(128), c4 = cfg.ch(256),
              c5 = cfg.ch(512);
    stem_ = Conv2Plus1d<T>(store, "video.conv1", 3, c1, 7, 3, 2, 1, rng);
    stem_bn_ = BatchNorm<T>(store, "video.bn1", c1);
    blocks_.emplace_back(store, "video.block2.1", c1, c2, 1, 1, rng);
    blocks_.emplace_back(store, "video.block2.2", c2, c2, 1, 1, rng);
    blocks_.emplace_back(store, "video.block3.1", c2, c3, 2, 2, rng);
    blocks_.emplace_back(store, "video.block3.2", c3, c3, 1, 1, rng);
    blocks_.emplace_back(store, "video.block4.1", c3, c4, 2, 2, rng);
    blocks_.emplace_back(store, "video.block4.2", c4, c4, 1, 1, rng);
    blocks_.emplace_back(store, "video.block5.1", c4, c5, 2, 2, rng);
    blocks_.emplace_back(store, "video.block5.2", c5, c5, 1, 1, rng);
  }

  // x: [b, 3, t, h, w] -> [b, feature_dim]
  Tensor<T> forward(const Tensor<T>& x, bool training, ShapeTrace* trace = nullptr) const {
    if (x.rank() != 5 || x.dim(1) != 3)
      throw ShapeError("VideoEncoder: expected [b, 3, t, h, w]");
    if (trace) trace->push_back({"video", x.shape()});
    Tensor<T> h = bn_relu(stem_bn_, stem_.forward(x, training), training);
    if (trace) trace->push_back({"conv1", h.shape()});
    static const char* names[] = {"block2.1", "block2.2", "block3.1", "block3.2",
                                  "block4.1", "block4.2", "block5.1", "block5.2"};
    for (size_t i = 0; i < blocks_.size(); ++i) {
      h = blocks_[i].forward(h, training);
      if (trace) trace->push_back({names[i], h.shape()});
    }
    h = global_max(h);
    if (trace) trace->push_back({"max pool", h.shape()});
    return h;
  }

  int feature_dim() const { return cfg_.feature_dim(); }

 private:
  EncoderConfig cfg_;
  Conv2Plus1d<T> stem_;
  BatchNorm<T> stem_bn_;
  std::vector<VideoResidualBlock<T>> blocks_;
};

// Plain nine-layer 2D convolutional audio encoder over [b, n, freq, time]
// spectrograms, ending in a global max pool.
template <typename T>
class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(ParamStore<T>& store, const EncoderConfig& cfg, int in_channels, Rng& rng)
      : cfg_(cfg), in_channels_(in_channels) {
    if (in_channels != 1 && in_channels != 2 && in_channels != 4)
      throw ConfigError("AudioEncoder: input channels must be 1, 2 or 4");
    const int c1 = cfg.ch(64), c3 = cfg.ch(128), c4 = cfg.ch(256), c5 = cfg.ch(512);
    struct Row { const char* name; int in, out, k, s; };
    const Row rows[] = {
        {"conv1", in_channels, c1, 7, 2},  {"block2.1", c1, c1, 3, 1},
        {"block2.2", c1, c1, 3, 1},        {"block3.1", c1, c3, 3, 2},
        {"block3.2", c3, c3, 3, 1},        {"block4.1", c3, c4, 3, 2},
        {"block4.2", c4, c4, 3, 1},        {"block5.1", c4, c5, 3, 1},
        {"block5.2", c5, c5, 3, 1},
    };
    for (const Row& r : rows) {
      const std::string prefix = std::string("audio.") + r.name;
      names_.push_back(r.name);
      convs_.emplace_back(store, prefix, r.in, r.out, r.k, r.k, r.s, r.s, r.k / 2,
                          r.k / 2, false, rng);
      bns_.emplace_back(store, prefix + ".bn", r.out);
    }
  }

  // x: [b, n, f, t] -> [b, feature_dim]
  Tensor<T> forward(const Tensor<T>& x, bool training, ShapeTrace* trace = nullptr) const {
    if (x.rank() != 4 || x.dim(1) != in_channels_)
      throw ShapeError("AudioEncoder: channel count mismatch");
    if (trace) trace->push_back({"audio", x.shape()});
    Tensor<T> h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = bn_relu(bns_[i], convs_[i].forward(h), training);
      if (trace) trace->push_back({names_[i], h.shape()});
    }
    h = global_max(h);
    if (trace) trace->push_back({"max pool", h.shape()});
    return h;
  }

  int feature_dim() const { return cfg_.feature_dim(); }
  int in_channels() const { return in_channels_; }

 private:
  EncoderConfig cfg_;
  int in_channels_ = 4;
  std::vector<const char*> names_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
};

}  // namespace avsa
