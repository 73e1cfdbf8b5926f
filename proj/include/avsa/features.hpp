#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "avsa/error.hpp"
#include "avsa/rng.hpp"
#include "avsa/sphere.hpp"

namespace avsa {

struct MelParams {
  double sample_rate = 24000.0;
  double window_ms = 21.0;
  double hop_ms = 10.0;
  int n_mels = 128;
  double log_eps = 1e-5;

  int window_samples() const {
    return static_cast<int>(std::floor(window_ms * sample_rate / 1000.0));
  }
  int hop_samples() const {
    return static_cast<int>(std::floor(hop_ms * sample_rate / 1000.0));
  }
  int nfft() const {
    int n = 1;
    while (n < window_samples()) n <<= 1;
    return n;
  }
};

// C x F x T log-mel array, z-normalized jointly across channels.
struct MelSpectrogram {
  int channels = 0, bins = 0, frames = 0;
  std::vector<float> values;  // channel-major

  float& at(int c, int f, int t) {
    return values[(static_cast<size_t>(c) * bins + f) * frames + t];
  }
  float at(int c, int f, int t) const {
    return values[(static_cast<size_t>(c) * bins + f) * frames + t];
  }
};

namespace detail {

// In-place iterative radix-2 FFT over interleaved (re, im) pairs.
inline void fft_pow2(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const double ur = re[i + k], ui = im[i + k];
        const double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
        const double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
        re[i + k] = ur + vr;
        im[i + k] = ui + vi;
        re[i + k + len / 2] = ur - vr;
        im[i + k + len / 2] = ui - vi;
        const double nr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = nr;
      }
    }
  }
}

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
  return w;
}

}  // namespace detail

// Hann-windowed magnitude spectrogram, F_lin = nfft/2 + 1 rows by
// floor((N - window)/hop) + 1 columns.
inline std::vector<std::vector<double>> stft_magnitude(const std::vector<double>& signal,
                                                       const MelParams& p) {
  const int win = p.window_samples();
  const int hop = p.hop_samples();
  const int nfft = p.nfft();
  if (static_cast<int>(signal.size()) < win)
    throw DataError("stft_magnitude: signal shorter than the analysis window");
  const int frames = static_cast<int>((signal.size() - win) / hop) + 1;
  const int f_lin = nfft / 2 + 1;
  const std::vector<double> window = detail::hann_window(win);
  std::vector<std::vector<double>> out(f_lin, std::vector<double>(frames));
  std::vector<double> re(nfft), im(nfft);
  for (int t = 0; t < frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const size_t off = static_cast<size_t>(t) * hop;
    for (int i = 0; i < win; ++i) re[i] = signal[off + i] * window[i];
    detail::fft_pow2(re, im);
    for (int f = 0; f < f_lin; ++f)
      out[f][t] = std::sqrt(re[f] * re[f] + im[f] * im[f]);
  }
  return out;
}

// Slaney-style mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  if (hz < 1000.0) return hz * 3.0 / 200.0;
  return 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

inline double mel_to_hz(double mel) {
  if (mel < 15.0) return mel * 200.0 / 3.0;
  return 1000.0 * std::exp((mel - 15.0) * std::log(6.4) / 27.0);
}

// Triangular filters over FFT bin frequencies, n_mels x (nfft/2 + 1).
inline std::vector<std::vector<double>> mel_filterbank(double sample_rate, int nfft,
                                                       int n_mels) {
  if (n_mels < 1) throw ConfigError("mel_filterbank: n_mels must be >= 1");
  const int f_lin = nfft / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(f_lin, 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int f = 0; f < f_lin; ++f) {
      const double hz = f * sample_rate / nfft;
      if (hz > lo && hz < mid)
        fb[m][f] = (hz - lo) / (mid - lo);
      else if (hz >= mid && hz < hi)
        fb[m][f] = (hi - hz) / (hi - mid);
    }
  }
  return fb;
}

// Per channel: mel . |STFT|, log(x + eps), then one z-normalization over
// the whole array. The signal is zero-padded at the tail so that exactly
// round(N / hop) frames come out (100 for 1 s at 24 kHz with a 10 ms hop).
inline MelSpectrogram log_mel(const std::vector<std::vector<double>>& channels,
                              const MelParams& p) {
  if (channels.empty()) throw DataError("log_mel: no channels");
  const size_t n = channels[0].size();
  for (const auto& c : channels)
    if (c.size() != n) throw ShapeError("log_mel: channel length mismatch");
  const int hop = p.hop_samples();
  const int win = p.window_samples();
  const int target_frames = static_cast<int>(std::llround(static_cast<double>(n) / hop));
  const size_t padded = static_cast<size_t>(win) + static_cast<size_t>(target_frames - 1) * hop;
  const auto fb = mel_filterbank(p.sample_rate, p.nfft(), p.n_mels);

  MelSpectrogram spec;
  spec.channels = static_cast<int>(channels.size());
  spec.bins = p.n_mels;
  spec.frames = target_frames;
  spec.values.resize(static_cast<size_t>(spec.channels) * spec.bins * spec.frames);

  std::vector<double> sig;
  for (int c = 0; c < spec.channels; ++c) {
    sig = channels[c];
    if (sig.size() < padded) sig.resize(padded, 0.0);
    const auto mag = stft_magnitude(sig, p);
    for (int m = 0; m < p.n_mels; ++m)
      for (int t = 0; t < target_frames; ++t) {
        double acc = 0.0;
        for (size_t f = 0; f < mag.size(); ++f) acc += fb[m][f] * mag[f][t];
        spec.at(c, m, t) = static_cast<float>(std::log(acc + p.log_eps));
      }
  }

  // joint z-normalization; constant input maps to zeros
  double mean = 0.0;
  for (float v : spec.values) mean += v;
  mean /= static_cast<double>(spec.values.size());
  double var = 0.0;
  for (float v : spec.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(spec.values.size());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    std::fill(spec.values.begin(), spec.values.end(), 0.0f);
  } else {
    for (float& v : spec.values) v = static_cast<float>((v - mean) / sd);
  }
  return spec;
}

struct VideoPreprocessParams {
  int out_size = 112;
  double jitter_lo = 0.8, jitter_hi = 1.2;
  double flip_prob = 0.5;
  double norm_mean = 0.45, norm_std = 0.225;
};

// Resize + augment + z-normalize an NFOV clip into T x S x S x 3,
// channel-last float storage.
struct VideoTensor {
  int frames = 0, size = 0;
  std::vector<float> data;  // t, r, c, ch

  float& at(int t, int r, int c, int ch) {
    return data[((static_cast<size_t>(t) * size + r) * size + c) * 3 + ch];
  }
  float at(int t, int r, int c, int ch) const {
    return data[((static_cast<size_t>(t) * size + r) * size + c) * 3 + ch];
  }
};

inline VideoTensor preprocess_video(const NfovClip& clip, bool augment, Rng& rng,
                                    const VideoPreprocessParams& p = {},
                                    int expected_frames = 0) {
  if (expected_frames > 0 && clip.frames != expected_frames)
    throw DataError("preprocess_video: wrong frame count");
  const int s = p.out_size;
  VideoTensor out;
  out.frames = clip.frames;
  out.size = s;
  out.data.resize(static_cast<size_t>(clip.frames) * s * s * 3);

  const bool flip = augment && rng.bernoulli(p.flip_prob);
  const double jb = augment ? rng.uniform(p.jitter_lo, p.jitter_hi) : 1.0;
  const double jc = augment ? rng.uniform(p.jitter_lo, p.jitter_hi) : 1.0;
  const double js = augment ? rng.uniform(p.jitter_lo, p.jitter_hi) : 1.0;

  // bilinear resize
  for (int t = 0; t < clip.frames; ++t)
    for (int r = 0; r < s; ++r)
      for (int c = 0; c < s; ++c) {
        const int cc = flip ? s - 1 - c : c;
        const double sr = (r + 0.5) * clip.height / s - 0.5;
        const double sc = (cc + 0.5) * clip.width / s - 0.5;
        const int r0 = std::clamp(static_cast<int>(std::floor(sr)), 0, clip.height - 1);
        const int r1 = std::min(r0 + 1, clip.height - 1);
        const int c0 = std::clamp(static_cast<int>(std::floor(sc)), 0, clip.width - 1);
        const int c1 = std::min(c0 + 1, clip.width - 1);
        const double fr = std::clamp(sr - r0, 0.0, 1.0);
        const double fc = std::clamp(sc - c0, 0.0, 1.0);
        for (int ch = 0; ch < 3; ++ch) {
          const double top = (1 - fc) * clip.at(t, r0, c0, ch) + fc * clip.at(t, r0, c1, ch);
          const double bot = (1 - fc) * clip.at(t, r1, c0, ch) + fc * clip.at(t, r1, c1, ch);
          out.at(t, r, c, ch) = static_cast<float>((1 - fr) * top + fr * bot);
        }
      }

  if (augment) {
    // brightness, then contrast about the clip mean, then saturation about luma
    double mean = 0.0;
    for (float v : out.data) mean += v;
    mean = mean * jb / static_cast<double>(out.data.size());
    for (size_t i = 0; i < out.data.size(); i += 3) {
      double rgb[3];
      for (int ch = 0; ch < 3; ++ch) {
        double v = out.data[i + ch] * jb;
        rgb[ch] = mean + (v - mean) * jc;
      }
      const double luma = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      for (int ch = 0; ch < 3; ++ch) {
        double v = luma + (rgb[ch] - luma) * js;
        out.data[i + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  for (float& v : out.data)
    v = static_cast<float>((v - p.norm_mean) / p.norm_std);
  return out;
}

}  // namespace avsa
