#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "avsa/encoders.hpp"

using namespace avsa;

namespace {

template <typename T>
Tensor<T> random_input(std::vector<int> shape, Rng& rng, double scl = 1.0) {
  Tensor<T> t = Tensor<T>::leaf(std::move(shape));
  for (T& v : t.value()) v = static_cast<T>(scl * rng.uniform(-1.0, 1.0));
  return t;
}

void check_trace(const ShapeTrace& trace, size_t i, const char* name,
                 std::vector<int> shape) {
  REQUIRE(i < trace.size());
  CHECK(trace[i].first == name);
  CHECK(trace[i].second == shape);
}

}  // namespace

TEST_CASE("video encoder shape trace at full width matches the reference table") {
  Rng rng(1);
  ParamStore<float> store;
  VideoEncoder<float> enc(store, EncoderConfig{1.0}, rng);
  Tensor<float> x = random_input<float>({1, 3, 8, 112, 112}, rng, 0.5);
  ShapeTrace trace;
  Tensor<float> f = enc.forward(x, false, &trace);
  CHECK(f.shape() == std::vector<int>{1, 512});
  check_trace(trace, 0, "video", {1, 3, 8, 112, 112});
  check_trace(trace, 1, "conv1", {1, 64, 8, 56, 56});
  check_trace(trace, 2, "block2.1", {1, 64, 8, 56, 56});
  check_trace(trace, 3, "block2.2", {1, 64, 8, 56, 56});
  check_trace(trace, 4, "block3.1", {1, 128, 4, 28, 28});
  check_trace(trace, 5, "block3.2", {1, 128, 4, 28, 28});
  check_trace(trace, 6, "block4.1", {1, 256, 2, 14, 14});
  check_trace(trace, 7, "block4.2", {1, 256, 2, 14, 14});
  check_trace(trace, 8, "block5.1", {1, 512, 1, 7, 7});
  check_trace(trace, 9, "block5.2", {1, 512, 1, 7, 7});
  check_trace(trace, 10, "max pool", {1, 512});
  for (float v : f.value()) CHECK(std::isfinite(v));
}

TEST_CASE("audio encoder shape trace at full width matches the reference table") {
  Rng rng(2);
  ParamStore<float> store;
  AudioEncoder<float> enc(store, EncoderConfig{1.0}, 4, rng);
  Tensor<float> x = random_input<float>({1, 4, 129, 100}, rng);
  ShapeTrace trace;
  Tensor<float> f = enc.forward(x, false, &trace);
  CHECK(f.shape() == std::vector<int>{1, 512});
  check_trace(trace, 0, "audio", {1, 4, 129, 100});
  check_trace(trace, 1, "conv1", {1, 64, 65, 50});
  check_trace(trace, 2, "block2.1", {1, 64, 65, 50});
  check_trace(trace, 3, "block2.2", {1, 64, 65, 50});
  check_trace(trace, 4, "block3.1", {1, 128, 33, 25});
  check_trace(trace, 5, "block3.2", {1, 128, 33, 25});
  check_trace(trace, 6, "block4.1", {1, 256, 17, 13});
  check_trace(trace, 7, "block4.2", {1, 256, 17, 13});
  check_trace(trace, 8, "block5.1", {1, 512, 17, 13});
  check_trace(trace, 9, "block5.2", {1, 512, 17, 13});
  check_trace(trace, 10, "max pool", {1, 512});
}

TEST_CASE("audio encoder accepts mono, stereo and four-channel input") {
  Rng rng(3);
  for (int n : {1, 2, 4}) {
    ParamStore<float> store;
    AudioEncoder<float> enc(store, desk_encoder_config(), n, rng);
    Tensor<float> x = random_input<float>({2, n, 64, 50}, rng);
    CHECK(enc.forward(x, false).shape() == std::vector<int>{2, 64});
  }
  ParamStore<float> store;
  CHECK_THROWS_AS(AudioEncoder<float>(store, desk_encoder_config(), 3, rng), ConfigError);
}

TEST_CASE("encoders reject mismatched inputs") {
  Rng rng(4);
  ParamStore<float> store;
  VideoEncoder<float> venc(store, desk_encoder_config(), rng);
  AudioEncoder<float> aenc(store, desk_encoder_config(), 1, rng);
  CHECK_THROWS_AS(venc.forward(random_input<float>({1, 4, 4, 56, 56}, rng), false),
                  ShapeError);
  CHECK_THROWS_AS(aenc.forward(random_input<float>({1, 2, 64, 50}, rng), false),
                  ShapeError);
}

TEST_CASE("desk preset produces 64-d features from desk-scale inputs") {
  Rng rng(5);
  ParamStore<float> store;
  VideoEncoder<float> venc(store, desk_encoder_config(), rng);
  AudioEncoder<float> aenc(store, desk_encoder_config(), 1, rng);
  CHECK(venc.feature_dim() == 64);
  Tensor<float> v = random_input<float>({2, 3, 4, 56, 56}, rng, 0.5);
  Tensor<float> a = random_input<float>({2, 1, 64, 50}, rng);
  CHECK(venc.forward(v, true).shape() == std::vector<int>{2, 64});
  CHECK(aenc.forward(a, true).shape() == std::vector<int>{2, 64});
}

TEST_CASE("features stay finite over 1000 random trials") {
  Rng rng(6);
  ParamStore<float> store;
  VideoEncoder<float> venc(store, desk_encoder_config(), rng);
  AudioEncoder<float> aenc(store, desk_encoder_config(), 1, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const double scl = std::pow(10.0, rng.uniform(-2.0, 1.0));
    Tensor<float> v = random_input<float>({1, 3, 1, 14, 14}, rng, scl);
    Tensor<float> a = random_input<float>({1, 1, 8, 6}, rng, scl);
    for (float f : venc.forward(v, false).value()) CHECK(std::isfinite(f));
    for (float f : aenc.forward(a, false).value()) CHECK(std::isfinite(f));
  }
}

TEST_CASE("all-zero input stays finite through the normalization stack") {
  Rng rng(7);
  ParamStore<float> store;
  VideoEncoder<float> enc(store, desk_encoder_config(), rng);
  Tensor<float> zeros = Tensor<float>::leaf({1, 3, 2, 28, 28});
  for (float v : enc.forward(zeros, true).value()) CHECK(std::isfinite(v));
}

TEST_CASE("train-mode normalization removes a positive input rescaling") {
  // bias-free convolutions are linear, so scaling the input scales every
  // pre-norm activation; per-channel normalization then cancels it exactly
  Rng rng(8);
  ParamStore<float> store;
  AudioEncoder<float> enc(store, desk_encoder_config(), 1, rng);
  Tensor<float> x = random_input<float>({2, 1, 32, 24}, rng);
  Tensor<float> scaled = Tensor<float>::leaf(x.shape());
  for (size_t i = 0; i < x.numel(); ++i) scaled.value()[i] = 3.7f * x.value()[i];
  const auto f1 = enc.forward(x, true).value();
  const auto f2 = enc.forward(scaled, true).value();
  for (size_t i = 0; i < f1.size(); ++i)
    CHECK(f1[i] == doctest::Approx(f2[i]).epsilon(1e-3));
}

TEST_CASE("desk-scale forward and backward fits the step budget") {
  Rng rng(9);
  ParamStore<float> store;
  VideoEncoder<float> venc(store, desk_encoder_config(), rng);
  AudioEncoder<float> aenc(store, desk_encoder_config(), 1, rng);
  Tensor<float> v = random_input<float>({1, 3, 4, 56, 56}, rng, 0.5);
  Tensor<float> a = random_input<float>({1, 1, 64, 50}, rng);
  // warm-up outside the timed region
  sum_all(venc.forward(v, true)).backward();
  const auto t0 = std::chrono::steady_clock::now();
  store.zero_grad();
  sum_all(add(sum_all(venc.forward(v, true)), sum_all(aenc.forward(a, true)))).backward();
  const auto t1 = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  MESSAGE("desk step: " << ms << " ms");
  CHECK(ms < 100.0);
}
