#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "avsa/features.hpp"

using namespace avsa;

namespace {

MelParams small_params() {
  MelParams p;
  p.sample_rate = 8000.0;
  p.window_ms = 4.0;  // 32 samples, nfft 32
  p.hop_ms = 2.0;     // 16 samples
  p.n_mels = 8;
  return p;
}

// O(n^2) DFT magnitude of one Hann-windowed frame
std::vector<double> naive_frame_magnitude(const std::vector<double>& signal, size_t off,
                                          int win, int nfft) {
  std::vector<double> mag(nfft / 2 + 1);
  for (int f = 0; f <= nfft / 2; ++f) {
    double re = 0, im = 0;
    for (int i = 0; i < win; ++i) {
      const double wv = 0.5 * (1.0 - std::cos(2.0 * kPi * i / win));
      const double x = signal[off + i] * wv;
      const double ang = -2.0 * kPi * f * i / nfft;
      re += x * std::cos(ang);
      im += x * std::sin(ang);
    }
    mag[f] = std::sqrt(re * re + im * im);
  }
  return mag;
}

}  // namespace

TEST_CASE("window, hop and fft sizes for the reference rates") {
  MelParams p;  // defaults: 24 kHz, 21 ms / 10 ms
  CHECK(p.window_samples() == 504);
  CHECK(p.hop_samples() == 240);
  CHECK(p.nfft() == 512);
  const MelParams q = small_params();
  CHECK(q.window_samples() == 32);
  CHECK(q.hop_samples() == 16);
  CHECK(q.nfft() == 32);
}

TEST_CASE("stft magnitude matches a naive DFT oracle") {
  const MelParams p = small_params();
  Rng rng(13);
  std::vector<double> signal(200);
  for (double& v : signal) v = rng.uniform(-1.0, 1.0);
  const auto mag = stft_magnitude(signal, p);
  const int frames = static_cast<int>((signal.size() - p.window_samples()) / p.hop_samples()) + 1;
  REQUIRE(static_cast<int>(mag.size()) == p.nfft() / 2 + 1);
  REQUIRE(static_cast<int>(mag[0].size()) == frames);
  for (int t = 0; t < frames; ++t) {
    const auto expect = naive_frame_magnitude(
        signal, static_cast<size_t>(t) * p.hop_samples(), p.window_samples(), p.nfft());
    for (size_t f = 0; f < expect.size(); ++f)
      CHECK(mag[f][t] == doctest::Approx(expect[f]).epsilon(1e-9));
  }
}

TEST_CASE("a bin-aligned sinusoid peaks at its bin") {
  const MelParams p = small_params();
  const int bin = 5;
  const double freq = bin * p.sample_rate / p.nfft();
  std::vector<double> signal(128);
  for (size_t i = 0; i < signal.size(); ++i)
    signal[i] = std::sin(2.0 * kPi * freq * static_cast<double>(i) / p.sample_rate);
  const auto mag = stft_magnitude(signal, p);
  for (size_t f = 0; f < mag.size(); ++f)
    if (static_cast<int>(f) != bin) CHECK(mag[bin][0] > mag[f][0]);
}

TEST_CASE("stft rejects signals shorter than the window") {
  const MelParams p = small_params();
  CHECK_THROWS_AS(stft_magnitude(std::vector<double>(10), p), DataError);
}

TEST_CASE("mel scale break point and round trip") {
  CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(hz_to_mel(500.0) == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(mel_to_hz(15.0) == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(hz_to_mel(6400.0) == doctest::Approx(42.0).epsilon(1e-12));
  for (double hz : {10.0, 150.0, 999.0, 1001.0, 4000.0, 11000.0})
    CHECK(mel_to_hz(hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-10));
  for (double mel : {0.5, 14.9, 15.1, 30.0, 44.0})
    CHECK(hz_to_mel(mel_to_hz(mel)) == doctest::Approx(mel).epsilon(1e-10));
}

TEST_CASE("mel filterbank geometry") {
  const int nfft = 64, n_mels = 10;
  const double sr = 16000.0;
  const auto fb = mel_filterbank(sr, nfft, n_mels);
  REQUIRE(static_cast<int>(fb.size()) == n_mels);
  REQUIRE(static_cast<int>(fb[0].size()) == nfft / 2 + 1);
  double peak = 0.0;
  for (const auto& row : fb) {
    double rowmax = 0.0;
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      rowmax = std::max(rowmax, v);
    }
    CHECK(rowmax > 0.0);  // every filter touches at least one bin
    peak = std::max(peak, rowmax);
  }
  // triangles rise to their centers and the full set tiles the band:
  // away from the edges each bin is covered with total weight near 1
  const double mel_max = hz_to_mel(sr / 2.0);
  const double first_center = mel_to_hz(mel_max / (n_mels + 1));
  const double last_center = mel_to_hz(mel_max * n_mels / (n_mels + 1));
  for (int f = 0; f <= nfft / 2; ++f) {
    const double hz = f * sr / nfft;
    if (hz <= first_center || hz >= last_center) continue;
    double total = 0.0;
    for (const auto& row : fb) total += row[f];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(mel_filterbank(sr, nfft, 0), ConfigError);
}

TEST_CASE("log-mel frame count comes out at round(N / hop)") {
  MelParams p;  // 24 kHz defaults
  p.n_mels = 16;
  Rng rng(21);
  std::vector<double> sig(24000);  // exactly 1 s
  for (double& v : sig) v = rng.uniform(-0.5, 0.5);
  const MelSpectrogram spec = log_mel({sig, sig}, p);
  CHECK(spec.channels == 2);
  CHECK(spec.bins == 16);
  CHECK(spec.frames == 100);
}

TEST_CASE("log-mel output is jointly z-normalized") {
  MelParams p = small_params();
  Rng rng(22);
  std::vector<double> a(4000), b(4000);
  for (double& v : a) v = rng.uniform(-1.0, 1.0);
  for (double& v : b) v = 0.2 * rng.uniform(-1.0, 1.0);
  const MelSpectrogram spec = log_mel({a, b}, p);
  double mean = 0.0;
  for (float v : spec.values) mean += v;
  mean /= static_cast<double>(spec.values.size());
  double var = 0.0;
  for (float v : spec.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(spec.values.size());
  CHECK(std::abs(mean) < 1e-5);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("log-mel of silence is all zeros") {
  const MelParams p = small_params();
  const MelSpectrogram spec = log_mel({std::vector<double>(1000, 0.0)}, p);
  for (float v : spec.values) CHECK(v == 0.0f);
}

TEST_CASE("log-mel validates its inputs") {
  const MelParams p = small_params();
  CHECK_THROWS_AS(log_mel({}, p), DataError);
  CHECK_THROWS_AS(log_mel({std::vector<double>(100), std::vector<double>(99)}, p),
                  ShapeError);
}

TEST_CASE("louder channels produce larger log-mel values") {
  MelParams p = small_params();
  Rng rng(23);
  std::vector<double> quiet(4000), loud(4000);
  for (size_t i = 0; i < quiet.size(); ++i) {
    quiet[i] = 0.01 * rng.uniform(-1.0, 1.0);
    loud[i] = quiet[i] * 50.0;
  }
  const MelSpectrogram spec = log_mel({quiet, loud}, p);
  double m0 = 0.0, m1 = 0.0;
  const size_t per = spec.values.size() / 2;
  for (size_t i = 0; i < per; ++i) {
    m0 += spec.values[i];
    m1 += spec.values[per + i];
  }
  CHECK(m1 > m0);
}

TEST_CASE("video preprocess resizes and normalizes without augmentation") {
  NfovClip clip;
  clip.frames = 2;
  clip.height = 20;
  clip.width = 30;
  clip.data.assign(static_cast<size_t>(2) * 20 * 30 * 3, 0.25f);
  Rng rng(1);
  VideoPreprocessParams p;
  p.out_size = 16;
  const VideoTensor out = preprocess_video(clip, false, rng, p);
  CHECK(out.frames == 2);
  CHECK(out.size == 16);
  const float expect = static_cast<float>((0.25 - p.norm_mean) / p.norm_std);
  for (float v : out.data) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("forced flip mirrors the columns") {
  NfovClip clip;
  clip.frames = 1;
  clip.height = 8;
  clip.width = 8;
  clip.data.resize(8 * 8 * 3);
  Rng fill(31);
  for (float& v : clip.data) v = static_cast<float>(fill.uniform());
  VideoPreprocessParams p;
  p.out_size = 8;
  p.jitter_lo = p.jitter_hi = 1.0;  // isolate the flip
  p.flip_prob = 1.0;
  Rng r1(5), r2(6);
  const VideoTensor flipped = preprocess_video(clip, true, r1, p);
  const VideoTensor plain = preprocess_video(clip, false, r2, p);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(flipped.at(0, r, c, ch) ==
              doctest::Approx(plain.at(0, r, 7 - c, ch)).epsilon(1e-6));
}

TEST_CASE("augmentation is reproducible for a fixed seed and varies across seeds") {
  NfovClip clip;
  clip.frames = 1;
  clip.height = 12;
  clip.width = 12;
  clip.data.resize(12 * 12 * 3);
  Rng fill(77);
  for (float& v : clip.data) v = static_cast<float>(fill.uniform());
  VideoPreprocessParams p;
  p.out_size = 8;
  Rng a(42), b(42), c(43);
  const VideoTensor t1 = preprocess_video(clip, true, a, p);
  const VideoTensor t2 = preprocess_video(clip, true, b, p);
  const VideoTensor t3 = preprocess_video(clip, true, c, p);
  CHECK(t1.data == t2.data);
  CHECK(t1.data != t3.data);
}

TEST_CASE("augmented values stay in the normalized range") {
  NfovClip clip;
  clip.frames = 1;
  clip.height = 10;
  clip.width = 10;
  clip.data.resize(10 * 10 * 3);
  Rng fill(9);
  for (float& v : clip.data) v = static_cast<float>(fill.uniform());
  VideoPreprocessParams p;
  p.out_size = 10;
  const float lo = static_cast<float>((0.0 - p.norm_mean) / p.norm_std);
  const float hi = static_cast<float>((1.0 - p.norm_mean) / p.norm_std);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const VideoTensor out = preprocess_video(clip, true, rng, p);
    for (float v : out.data) {
      CHECK(v >= lo - 1e-6f);
      CHECK(v <= hi + 1e-6f);
    }
  }
}

TEST_CASE("preprocess enforces the expected frame count") {
  NfovClip clip;
  clip.frames = 3;
  clip.height = 4;
  clip.width = 4;
  clip.data.resize(3 * 4 * 4 * 3);
  Rng rng(1);
  CHECK_THROWS_AS(preprocess_video(clip, false, rng, {}, 4), DataError);
}
