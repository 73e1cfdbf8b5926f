// Acceptance gate: eight verifiable properties, one PASS/FAIL line each.
// Runs end to end on one machine; exits nonzero if any criterion fails.
// Optional arguments select a subset of criteria, e.g. "acceptance 1 4 8".

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avsa/eval.hpp"
#include "avsa/gradcheck.hpp"
#include "avsa/trainer.hpp"

using namespace avsa;
namespace fs = std::filesystem;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path workspace() {
  static fs::path p = [] {
    fs::path dir = fs::temp_directory_path() / "avsa_acceptance";
    fs::create_directories(dir);
    return dir;
  }();
  return p;
}

template <typename T>
Tensor<T> rand_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0,
                    double hi = 1.0) {
  Tensor<T> t = Tensor<T>::leaf(std::move(shape), true);
  for (T& v : t.value()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient integrity
// ---------------------------------------------------------------------------

struct C1Result {
  double max_err = 0.0;
  std::vector<std::string> failures;
};

void c1_check(C1Result& res, const std::string& name, const GradCheckReport& report,
              double tol = 1e-3) {
  res.max_err = std::max(res.max_err, report.max_rel_err);
  if (!report.pass(tol)) res.failures.push_back(name);
}

std::string criterion1(bool& pass) {
  using T = double;
  const double t0 = now_seconds();
  Rng rng(101);
  C1Result res;
  using P = std::vector<std::pair<std::string, Tensor<T>>>;
  // deep relu stacks need a small step so finite differences cannot flip
  // activations sitting near the kink
  auto gc = [](std::function<Tensor<T>()> f, const P& params, int entries = 0) {
    return grad_check<T>(std::move(f), params, entries, 1e-7);
  };

  // element and matrix ops
  {
    Tensor<T> a = rand_leaf<T>({3, 4}, rng), b = rand_leaf<T>({3, 4}, rng);
    c1_check(res, "add", gc([&] { return sum_all(add(a, b)); },
                                       P{{"a", a}, {"b", b}}));
    c1_check(res, "sub", gc([&] { return sum_all(sub(a, b)); },
                                       P{{"a", a}, {"b", b}}));
    c1_check(res, "mul", gc([&] { return sum_all(mul(a, b)); },
                                       P{{"a", a}, {"b", b}}));
    c1_check(res, "scale", gc([&] { return sum_all(scale(a, T(1.7))); },
                                         P{{"a", a}}));
    c1_check(res, "mean_all", gc([&] { return mean_all(mul(a, a)); },
                                            P{{"a", a}}));
    c1_check(res, "elementwise_max",
             gc([&] { return sum_all(mul(elementwise_max(a, b), a)); },
                           P{{"a", a}, {"b", b}}));
    Tensor<T> r = rand_leaf<T>({3, 4}, rng, 0.2, 1.2);  // away from the relu kink
    c1_check(res, "relu", gc([&] { return sum_all(relu(sub(r, b))); },
                                        P{{"r", r}, {"b", b}}));
  }
  {
    Tensor<T> x = rand_leaf<T>({3, 5}, rng), w = rand_leaf<T>({5, 4}, rng);
    Tensor<T> bias = rand_leaf<T>({4}, rng);
    c1_check(res, "matmul",
             gc([&] { return sum_all(mul(matmul(x, w), matmul(x, w))); },
                           P{{"x", x}, {"w", w}}));
    Tensor<T> row = rand_leaf<T>({5}, rng);
    c1_check(res, "add_rowwise",
             gc([&] { return sum_all(mul(add_rowwise(x, row), x)); },
                           P{{"x", x}, {"row", row}}));
    c1_check(res, "linear_bias",
             gc([&] { return sum_all(add_rowwise(matmul(x, w), bias)); },
                           P{{"x", x}, {"w", w}, {"bias", bias}}));
  }
  {
    Tensor<T> x = rand_leaf<T>({2, 3, 4}, rng);
    c1_check(res, "reshape_permute",
             gc(
                 [&] {
                   Tensor<T> y = permute(reshape(x, {6, 4}), {1, 0});
                   return sum_all(mul(y, y));
                 },
                 P{{"x", x}}));
    c1_check(res, "softmax",
             gc([&] { return sum_all(mul(softmax_lastdim(x), x)); },
                           P{{"x", x}}));
    c1_check(res, "sum_lastdim",
             gc([&] { return sum_all(mul(sum_lastdim(x), sum_lastdim(x))); },
                           P{{"x", x}}));
  }
  {
    Tensor<T> a = rand_leaf<T>({2, 4}, rng), b = rand_leaf<T>({3, 4}, rng);
    c1_check(res, "rows_concat",
             gc(
                 [&] {
                   Tensor<T> c = concat_rows(rows(a, {1, 0}), b);
                   Tensor<T> d = concat_cols(c, c);
                   return sum_all(mul(d, d));
                 },
                 P{{"a", a}, {"b", b}}));
    c1_check(res, "stack_rows",
             gc(
                 [&] {
                   const std::vector<Tensor<T>> picked{rows(a, {0}), rows(b, {2}),
                                                       rows(b, {1})};
                   Tensor<T> s = stack_rows(picked);
                   return sum_all(mul(s, s));
                 },
                 P{{"a", a}, {"b", b}}));
    c1_check(res, "normalize_rows",
             gc([&] { return sum_all(mul(normalize_rows(a), rows(b, {0, 1}))); },
                           P{{"a", a}, {"b", b}}));
    c1_check(res, "cosine_similarity",
             gc([&] { return sum_all(cosine_similarity(a, rows(b, {2, 0}))); },
                           P{{"a", a}, {"b", b}}));
  }
  {
    Tensor<T> x = rand_leaf<T>({2, 3, 4}, rng);
    Tensor<T> gain = rand_leaf<T>({4}, rng, 0.5, 1.5), bias = rand_leaf<T>({4}, rng);
    c1_check(res, "layer_norm",
             gc(
                 [&] { return sum_all(mul(layer_norm_lastdim(x, gain, bias), x)); },
                 P{{"x", x}, {"gain", gain}, {"bias", bias}}));
  }
  {
    Tensor<T> x = rand_leaf<T>({2, 3, 4, 4}, rng);
    Tensor<T> gamma = rand_leaf<T>({3}, rng, 0.5, 1.5), beta = rand_leaf<T>({3}, rng);
    Tensor<T> t = rand_leaf<T>({2, 3, 4, 4}, rng);
    c1_check(res, "batch_norm",
             gc(
                 [&] {
                   std::vector<T> rm(3, T(0)), rv(3, T(1));
                   return sum_all(
                       mul(batch_norm(x, gamma, beta, rm, rv, T(0.1), T(1e-5), true), t));
                 },
                 P{{"x", x}, {"gamma", gamma}, {"beta", beta}}));
  }
  {
    Tensor<T> x = rand_leaf<T>({2, 2, 5, 5}, rng);
    Tensor<T> w = rand_leaf<T>({3, 2, 3, 3}, rng);
    Tensor<T> none;
    c1_check(res, "conv2d",
             gc(
                 [&] {
                   Tensor<T> y = conv2d(x, w, none, 2, 1, 1, 1);
                   return sum_all(mul(y, y));
                 },
                 P{{"x", x}, {"w", w}}));
    Tensor<T> x1 = rand_leaf<T>({2, 2, 7}, rng);
    Tensor<T> w1 = rand_leaf<T>({3, 2, 3}, rng);
    c1_check(res, "conv1d",
             gc(
                 [&] {
                   Tensor<T> y = conv1d(x1, w1, none, 2, 1);
                   return sum_all(mul(y, y));
                 },
                 P{{"x1", x1}, {"w1", w1}}));
    c1_check(res, "max_pool2d",
             gc(
                 [&] {
                   Tensor<T> y = max_pool2d(x, 2, 2);
                   return sum_all(mul(y, y));
                 },
                 P{{"x", x}}));
    c1_check(res, "global_max",
             gc([&] {
               Tensor<T> g = global_max(reshape(x, {2, 2, 25}));
               return sum_all(mul(g, g));
             }, P{{"x", x}}));
  }
  {
    Tensor<T> logits = rand_leaf<T>({3, 5}, rng);
    c1_check(res, "cross_entropy",
             gc(
                 [&] { return cross_entropy_from_logits(logits, {1, 4, 0}); },
                 P{{"logits", logits}}));
  }

  // full correspondence loss (Eq. 7 shape) through width-1/8 encoders, N=2
  {
    ParamStore<T> store;
    Rng mrng(7);
    const EncoderConfig enc{0.125};
    VideoEncoder<T> venc(store, enc, mrng);
    AudioEncoder<T> aenc(store, enc, 4, mrng);
    ProjectionHead<T> pv(store, "pv", enc.feature_dim(), 16, mrng);
    ProjectionHead<T> pa(store, "pa", enc.feature_dim(), 16, mrng);
    Tensor<T> video = rand_leaf<T>({2, 3, 2, 32, 32}, rng, -0.5, 0.5);
    Tensor<T> audio = rand_leaf<T>({2, 4, 16, 10}, rng, -0.5, 0.5);
    P params{{"video_in", video}, {"audio_in", audio}};
    for (auto& e : store.entries()) params.emplace_back(e.name, e.tensor);
    c1_check(res, "avc_full",
             gc(
                 [&] {
                   return avc_loss(venc.forward(video, true), aenc.forward(audio, true),
                                   pv, pa, T(0.1));
                 },
                 params, 1));
  }
  // full spatial-alignment loss (Eq. 9 shape) through the same encoders,
  // N=2, K=2, depth-1 transformer translators
  {
    ParamStore<T> store;
    Rng mrng(8);
    const EncoderConfig enc{0.125};
    const int d = enc.feature_dim();
    VideoEncoder<T> venc(store, enc, mrng);
    AudioEncoder<T> aenc(store, enc, 4, mrng);
    const TranslatorConfig tc{1, d, 2, TranslatorMode::kTransformer};
    Translator<T> g_v2a(store, "g_v2a", tc, mrng), g_a2v(store, "g_a2v", tc, mrng);
    ProjectionHead<T> pv(store, "pv", d, 16, mrng), pa(store, "pa", d, 16, mrng);
    Tensor<T> video = rand_leaf<T>({4, 3, 2, 16, 16}, rng, -0.5, 0.5);
    Tensor<T> audio = rand_leaf<T>({4, 4, 16, 10}, rng, -0.5, 0.5);
    P params{{"video_in", video}, {"audio_in", audio}};
    for (auto& e : store.entries()) params.emplace_back(e.name, e.tensor);
    c1_check(res, "avsa_full",
             gc(
                 [&] {
                   return avsa_loss(venc.forward(video, true), aenc.forward(audio, true),
                                    2, 2, g_v2a, g_a2v, pv, pa, T(0.1));
                 },
                 params, 1));
  }

  const double dt = now_seconds() - t0;
  pass = res.failures.empty() && dt < 60.0;
  std::ostringstream os;
  os << "max rel err " << res.max_err << ", " << dt << " s";
  for (const auto& f : res.failures) os << ", FAILED " << f;
  if (dt >= 60.0) os << ", over 60 s budget";
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 2: ambisonics algebra
// ---------------------------------------------------------------------------

std::string criterion2(bool& pass) {
  const double t0 = now_seconds();
  Rng rng(202);
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 32;
    AmbisonicClip c1 = make_silent_clip(n, 24000.0), c2 = make_silent_clip(n, 24000.0);
    std::vector<double> sig(n);
    for (size_t i = 0; i < n; ++i) {
      for (int ch = 0; ch < 4; ++ch) {
        c1.channel(ch)[i] = rng.uniform(-1.0, 1.0);
        c2.channel(ch)[i] = rng.uniform(-1.0, 1.0);
      }
      sig[i] = rng.uniform(-1.0, 1.0);
    }
    const Rotation3 r1 = rotation_yaw_pitch(rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5));
    const Rotation3 r2 = rotation_yaw_pitch(rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5));
    const Direction d(rng.uniform(-kPi, kPi), rng.uniform(-1.4, 1.4));

    // group action: rotating twice equals rotating by the product
    const AmbisonicClip seq = rotate_foa(rotate_foa(c1, r1), r2);
    const AmbisonicClip prod = rotate_foa(c1, r2 * r1);
    for (int ch = 0; ch < 4; ++ch)
      for (size_t i = 0; i < n; ++i)
        track(std::abs(seq.channel(ch)[i] - prod.channel(ch)[i]));

    // linearity of rotation
    const double alpha = rng.uniform(-2.0, 2.0), beta = rng.uniform(-2.0, 2.0);
    AmbisonicClip mix = make_silent_clip(n, 24000.0);
    for (int ch = 0; ch < 4; ++ch)
      for (size_t i = 0; i < n; ++i)
        mix.channel(ch)[i] = alpha * c1.channel(ch)[i] + beta * c2.channel(ch)[i];
    const AmbisonicClip rot_mix = rotate_foa(mix, r1);
    const AmbisonicClip rc1 = rotate_foa(c1, r1), rc2 = rotate_foa(c2, r1);
    for (int ch = 0; ch < 4; ++ch)
      for (size_t i = 0; i < n; ++i)
        track(std::abs(rot_mix.channel(ch)[i] -
                       (alpha * rc1.channel(ch)[i] + beta * rc2.channel(ch)[i])));

    // the omnidirectional channel is rotation invariant
    for (size_t i = 0; i < n; ++i) track(std::abs(rc1.w[i] - c1.w[i]));

    // encode -> realign -> decode commutation: a source at d becomes frontal
    const AmbisonicClip enc = foa_encode(sig, d, 24000.0);
    const AmbisonicClip realigned = realign_to_viewpoint(enc, d);
    const AmbisonicClip frontal = foa_encode(sig, Direction(0.0, 0.0), 24000.0);
    for (int ch = 0; ch < 4; ++ch)
      for (size_t i = 0; i < n; ++i)
        track(std::abs(realigned.channel(ch)[i] - frontal.channel(ch)[i]));

    // decoding commutes with rotation: listen along the rotated direction
    const Vec3 rd = r1.apply(direction_to_unit_vector(d));
    const std::vector<double> dec_rot =
        decode_mono(rotate_foa(enc, r1), unit_vector_to_direction(rd));
    const std::vector<double> dec = decode_mono(enc, d);
    for (size_t i = 0; i < n; ++i) track(std::abs(dec_rot[i] - dec[i]));
  }

  const double dt = now_seconds() - t0;
  pass = worst < 1e-12 && dt < 5.0;
  std::ostringstream os;
  os << "worst abs err " << worst << " over 1000 trials, " << dt << " s";
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 3: projection geometry
// ---------------------------------------------------------------------------

std::string criterion3(bool& pass) {
  Rng rng(303);
  pass = true;
  std::ostringstream os;

  // center-pixel fidelity: the optical-axis pixel direction deviates from
  // the requested center by less than half a pixel's angular pitch
  double worst_px = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Direction center(rng.uniform(-kPi, kPi), rng.uniform(-1.0, 1.0));
    const double hfov = rng.uniform(deg2rad(25.0), deg2rad(90.0));
    const int s = 15;
    const Direction mid =
        gnomonic_pixel_direction(center, hfov, s, s, (s - 1) / 2.0, (s - 1) / 2.0);
    worst_px = std::max(worst_px, angular_distance(mid, center) / (hfov / s));
  }
  if (worst_px > 0.5) pass = false;
  os << "center offset " << worst_px << " px";

  // yaw equivariance on a smooth image: shifting the panorama by an exact
  // pixel yaw and shifting the crop center must agree
  {
    const int h = 64;
    EquirectVideo v = make_equirect(1, h, 1.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < 2 * h; ++c) {
        const double theta = -kPi + 2 * kPi * (c + 0.5) / (2 * h);
        const double phi = kPi / 2 - kPi * (r + 0.5) / h;
        v.at(0, r, c, 0) = static_cast<float>(0.5 + 0.4 * std::sin(theta) * std::cos(phi));
        v.at(0, r, c, 1) = static_cast<float>(0.5 + 0.3 * std::cos(2 * theta));
        v.at(0, r, c, 2) = static_cast<float>(0.5 + 0.4 * std::sin(phi));
      }
    const int shift = 16;
    const double delta = 2 * kPi * shift / (2 * h);
    EquirectVideo rot = make_equirect(1, h, 1.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < 2 * h; ++c)
        for (int ch = 0; ch < 3; ++ch)
          rot.at(0, r, (c + shift) % (2 * h), ch) = v.at(0, r, c, ch);
    const Direction center(0.3, 0.2);
    const NfovClip a = gnomonic_project(rot, center, deg2rad(60), 32, 32, 0, 1);
    const NfovClip b = gnomonic_project(v, Direction(center.theta - delta, center.phi),
                                        deg2rad(60), 32, 32, 0, 1);
    double mean_abs = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
      mean_abs += std::abs(a.data[i] - b.data[i]);
    mean_abs /= static_cast<double>(a.data.size());
    if (!(mean_abs < 2.0 / 255.0)) pass = false;
    os << ", yaw equivariance " << mean_abs;
  }

  // viewpoint constraints over 10000 sampled sets
  {
    const double min_sep = deg2rad(36.0), band = deg2rad(60.0);
    double worst_sep = kPi, worst_phi = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
      const ViewpointSet vs = sample_viewpoints(4, min_sep, band, rng);
      for (size_t i = 0; i < vs.directions.size(); ++i) {
        worst_phi = std::max(worst_phi, std::abs(vs.directions[i].phi));
        for (size_t j = i + 1; j < vs.directions.size(); ++j)
          worst_sep = std::min(
              worst_sep, angular_distance(vs.directions[i], vs.directions[j]));
      }
    }
    if (worst_sep < min_sep - 1e-12 || worst_phi > band + 1e-12) pass = false;
    os << ", min sep " << rad2deg(worst_sep) << " deg, max |phi| "
       << rad2deg(worst_phi) << " deg";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 4: loss oracles
// ---------------------------------------------------------------------------

std::string criterion4(bool& pass) {
  using T = double;
  pass = true;
  std::ostringstream os;

  // uniform similarities: the loss must equal ln N bit-for-bit tightly
  double worst_ln = 0.0;
  for (int n : {2, 8, 28, 112}) {
    Tensor<T> sims = Tensor<T>::leaf({n});
    for (T& v : sims.value()) v = 0.37;
    const double got = info_nce_from_similarities(sims, n / 2, T(0.07)).item();
    worst_ln = std::max(worst_ln, std::abs(got - std::log(static_cast<double>(n))));
  }
  if (worst_ln > 1e-12) pass = false;
  os << "uniform-vs-lnN err " << worst_ln;

  // hand-specified N=2, K=2 batch with identity translators, evaluated by
  // plain scalar arithmetic
  {
    const int n = 2, k = 2, d = 3, pdim = 2;
    const std::vector<std::vector<double>> vf{
        {0.9, -0.2, 0.4}, {-0.5, 0.8, 0.1}, {0.3, 0.6, -0.7}, {-0.1, -0.4, 0.2}};
    const std::vector<std::vector<double>> af{
        {0.2, 0.7, -0.3}, {0.8, -0.6, 0.5}, {-0.9, 0.1, 0.6}, {0.4, 0.3, -0.2}};
    const std::vector<std::vector<double>> wv{{0.6, -0.3}, {0.2, 0.9}, {-0.5, 0.4}};
    const std::vector<std::vector<double>> wa{{-0.7, 0.5}, {0.3, 0.1}, {0.8, -0.2}};
    const double tau = 0.07;

    auto project = [&](const std::vector<std::vector<double>>& w,
                       const std::vector<double>& x) {
      std::vector<double> out(pdim, 0.0);
      for (int j = 0; j < pdim; ++j)
        for (int i = 0; i < d; ++i) out[j] += x[i] * w[i][j];
      double norm = 0.0;
      for (double v : out) norm += v * v;
      norm = std::sqrt(norm) + 1e-12;  // same epsilon as the row normalizer
      for (double& v : out) v /= norm;
      return out;
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
      double s = 0.0;
      for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    };

    double expected = 0.0;
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < k; ++l) {
        // identity translators: the query toward the audio bank is the
        // video feature and vice versa
        for (int dir = 0; dir < 2; ++dir) {
          const auto& bank = dir == 0 ? af : vf;
          const auto& w = dir == 0 ? wa : wv;
          const auto& query = dir == 0 ? vf[i * k + l] : af[i * k + l];
          const auto q = project(w, query);
          std::vector<double> logits;
          for (int p = 0; p < n * k; ++p)
            logits.push_back(dot(q, project(w, bank[p])) / tau);
          double mx = logits[0];
          for (double v : logits) mx = std::max(mx, v);
          double z = 0.0;
          for (double v : logits) z += std::exp(v - mx);
          expected += -(logits[i * k + l] - mx) + std::log(z);
        }
      }

    ParamStore<T> store;
    Rng rng(9);
    Tensor<T> video = Tensor<T>::leaf({4, 3}, true), audio = Tensor<T>::leaf({4, 3}, true);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c) {
        video.value()[r * 3 + c] = vf[r][c];
        audio.value()[r * 3 + c] = af[r][c];
      }
    ProjectionHead<T> pv(store, "pv", d, pdim, rng), pa(store, "pa", d, pdim, rng);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < pdim; ++c) {
        pv.weight.value()[r * pdim + c] = wv[r][c];
        pa.weight.value()[r * pdim + c] = wa[r][c];
      }
    const TranslatorConfig tc{1, d, 2, TranslatorMode::kIdentity};
    Translator<T> ident(store, "g", tc, rng);
    const double got =
        avsa_loss(video, audio, n, k, ident, ident, pv, pa, tau).item();
    const double err = std::abs(got - expected);
    if (err > 1e-9) pass = false;
    os << ", hand batch err " << err;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 5: architecture conformance
// ---------------------------------------------------------------------------

bool trace_matches(const ShapeTrace& trace, size_t i, const std::string& name,
                   const std::vector<int>& shape) {
  return i < trace.size() && trace[i].first == name && trace[i].second == shape;
}

std::string criterion5(bool& pass) {
  pass = true;
  std::ostringstream os;
  Rng rng(505);

  {
    ParamStore<float> store;
    const EncoderConfig enc{1.0};
    VideoEncoder<float> venc(store, enc, rng);
    Tensor<float> x = rand_leaf<float>({1, 3, 8, 112, 112}, rng, -0.5, 0.5);
    ShapeTrace trace;
    const Tensor<float> f = venc.forward(x, false, &trace);
    const std::vector<std::pair<std::string, std::vector<int>>> want{
        {"video", {1, 3, 8, 112, 112}}, {"conv1", {1, 64, 8, 56, 56}},
        {"block2.1", {1, 64, 8, 56, 56}}, {"block2.2", {1, 64, 8, 56, 56}},
        {"block3.1", {1, 128, 4, 28, 28}}, {"block3.2", {1, 128, 4, 28, 28}},
        {"block4.1", {1, 256, 2, 14, 14}}, {"block4.2", {1, 256, 2, 14, 14}},
        {"block5.1", {1, 512, 1, 7, 7}}, {"block5.2", {1, 512, 1, 7, 7}},
        {"max pool", {1, 512}}};
    bool ok = f.shape() == std::vector<int>{1, 512} && trace.size() == want.size();
    for (size_t i = 0; ok && i < want.size(); ++i)
      ok = trace_matches(trace, i, want[i].first, want[i].second);
    if (!ok) pass = false;
    os << "video trace " << (ok ? "ok" : "MISMATCH");
  }
  {
    ParamStore<float> store;
    const EncoderConfig enc{1.0};
    AudioEncoder<float> aenc(store, enc, 4, rng);
    Tensor<float> x = rand_leaf<float>({1, 4, 129, 100}, rng, -0.5, 0.5);
    ShapeTrace trace;
    const Tensor<float> f = aenc.forward(x, false, &trace);
    const std::vector<std::pair<std::string, std::vector<int>>> want{
        {"audio", {1, 4, 129, 100}}, {"conv1", {1, 64, 65, 50}},
        {"block2.1", {1, 64, 65, 50}}, {"block2.2", {1, 64, 65, 50}},
        {"block3.1", {1, 128, 33, 25}}, {"block3.2", {1, 128, 33, 25}},
        {"block4.1", {1, 256, 17, 13}}, {"block4.2", {1, 256, 17, 13}},
        {"block5.1", {1, 512, 17, 13}}, {"block5.2", {1, 512, 17, 13}},
        {"max pool", {1, 512}}};
    bool ok = f.shape() == std::vector<int>{1, 512} && trace.size() == want.size();
    for (size_t i = 0; ok && i < want.size(); ++i)
      ok = trace_matches(trace, i, want[i].first, want[i].second);
    if (!ok) pass = false;
    os << ", audio trace " << (ok ? "ok" : "MISMATCH");
  }
  {
    ParamStore<float> store;
    const TranslatorConfig tc{2, 512, 4, TranslatorMode::kTransformer};
    Translator<float> g(store, "g", tc, rng);
    bool ok = true;
    auto shape_of = [&](const std::string& name) -> std::vector<int> {
      const Tensor<float>* t = store.find(name);
      return t ? t->shape() : std::vector<int>{};
    };
    for (const char* layer : {"layer1", "layer2"}) {
      const std::string p = std::string("g.") + layer;
      ok = ok && shape_of(p + ".w_key") == std::vector<int>{512, 512};
      ok = ok && shape_of(p + ".w_qr") == std::vector<int>{512, 512};
      ok = ok && shape_of(p + ".w_val") == std::vector<int>{512, 512};
      ok = ok && shape_of(p + ".w_0") == std::vector<int>{512, 512};
      ok = ok && shape_of(p + ".w_1") == std::vector<int>{512, 2048};
      ok = ok && shape_of(p + ".w_2") == std::vector<int>{2048, 512};
    }
    Tensor<float> x = rand_leaf<float>({4, 512}, rng, -0.5, 0.5);
    ok = ok && g.forward(x).shape() == std::vector<int>{4, 512};
    if (!ok) pass = false;
    os << ", transformer 512/2048 depth 2 " << (ok ? "ok" : "MISMATCH");
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// criteria 6 and 7: end-to-end qualitative reproduction on synthetic scenes
// ---------------------------------------------------------------------------

// The desk-scale experiment shared by both criteria: one dataset, four
// pretraining runs, binary evaluations and the class transfer probe.
struct Experiment {
  double avsa_on_avsabin = 0.0, avc_on_avsabin = 0.0;
  double avsa_on_avcbin = 0.0, avc_on_avcbin = 0.0;
  double mono_on_avsabin = 0.0, hard_on_avsabin = 0.0;
  double probe_curriculum = 0.0, probe_hard = 0.0;
  double minutes = 0.0;
};

TrainConfig experiment_config(const std::string& mode) {
  KeyValueConfig kv;
  kv.set("mode", mode);
  kv.set("bs", "4");
  kv.set("lr", "1e-3");
  kv.set("hfov_min", "60");
  kv.set("hfov_max", "90");
  kv.set("lat_bound", "30");
  kv.set("epochs_phase1", "2");
  kv.set("epochs_phase2", "8");
  kv.set("seed", "1");
  return parse_train_config(kv);
}

const DatasetManifest& experiment_dataset() {
  static DatasetManifest manifest = [] {
    const fs::path dir = workspace() / "scenes";
    ScenePreset preset;
    preset.duration = 3.0;
    preset.disk_radius_deg = 25.0;
    if (!fs::exists(dir / "manifest.json"))
      return write_scene_dataset(dir.string(), 200, 50, preset, 1);
    return load_manifest(dir.string());
  }();
  return manifest;
}

double eval_task(PretextModel& model, BinaryTask task) {
  BinaryEvalConfig ecfg;
  ecfg.task = task;
  ecfg.n_viewpoints = 4;
  ecfg.seed = 1;
  return evaluate_binary(model, experiment_dataset(), ecfg, "test").accuracy;
}

PretextModel train_variant(const std::string& name, TrainConfig cfg) {
  const fs::path dir = workspace() / name;
  PretextModel model(cfg);
  if (fs::exists(dir / "final.ckpt")) {
    load_checkpoint((dir / "final.ckpt").string(), model.store);
    return model;
  }
  curriculum_train(model, experiment_dataset(), dir.string(), true, false);
  return model;
}

const Experiment& experiment() {
  static Experiment e = [] {
    const double t0 = now_seconds();
    Experiment x;
    {
      PretextModel avsa = train_variant("m_avsa", experiment_config("avsa"));
      x.avsa_on_avsabin = eval_task(avsa, BinaryTask::kAvsaBin);
      x.avsa_on_avcbin = eval_task(avsa, BinaryTask::kAvcBin);
      x.probe_curriculum =
          class_probe_accuracy(avsa, experiment_dataset(), 8, 10, 1e-2, 1);
    }
    {
      PretextModel avc = train_variant("m_avc", experiment_config("avc"));
      x.avc_on_avsabin = eval_task(avc, BinaryTask::kAvsaBin);
      x.avc_on_avcbin = eval_task(avc, BinaryTask::kAvcBin);
    }
    {
      TrainConfig cfg = experiment_config("avsa");
      cfg.audio = AudioFormat::kMono;
      PretextModel mono = train_variant("m_mono", cfg);
      x.mono_on_avsabin = eval_task(mono, BinaryTask::kAvsaBin);
    }
    {
      TrainConfig cfg = experiment_config("avsa");
      cfg.curriculum = Curriculum::kHardOnly;
      PretextModel hard = train_variant("m_hard", cfg);
      x.hard_on_avsabin = eval_task(hard, BinaryTask::kAvsaBin);
      x.probe_hard = class_probe_accuracy(hard, experiment_dataset(), 8, 10, 1e-2, 1);
    }
    x.minutes = (now_seconds() - t0) / 60.0;
    return x;
  }();
  return e;
}

std::string criterion6(bool& pass) {
  const Experiment& e = experiment();
  const bool avsa_strong = e.avsa_on_avsabin >= 0.85;
  const bool avc_weak = e.avc_on_avsabin <= 0.70;
  const bool avc_bin_order = e.avsa_on_avcbin >= e.avc_on_avcbin;
  pass = avsa_strong && avc_weak && avc_bin_order;
  std::ostringstream os;
  os << "avsa-bin@4: avsa " << e.avsa_on_avsabin << " (need >= 0.85), avc "
     << e.avc_on_avsabin << " (need <= 0.70); avc-bin: avsa " << e.avsa_on_avcbin
     << " vs avc " << e.avc_on_avcbin << "; " << e.minutes << " min";
  return os.str();
}

std::string criterion7(bool& pass) {
  const Experiment& e = experiment();
  const bool ambi_beats_mono = e.avsa_on_avsabin > e.mono_on_avsabin;
  const bool hard_highest = e.hard_on_avsabin >= e.avsa_on_avsabin &&
                            e.hard_on_avsabin >= e.avc_on_avsabin &&
                            e.hard_on_avsabin >= e.mono_on_avsabin;
  const bool hard_worse_transfer = e.probe_hard < e.probe_curriculum;
  pass = ambi_beats_mono && hard_highest && hard_worse_transfer;
  std::ostringstream os;
  os << "avsa-bin@4: ambisonics " << e.avsa_on_avsabin << " vs mono "
     << e.mono_on_avsabin << "; hard-only " << e.hard_on_avsabin
     << " (needs to be highest); probe: hard " << e.probe_hard << " vs curriculum "
     << e.probe_curriculum;
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 8: determinism
// ---------------------------------------------------------------------------

std::string criterion8(bool& pass) {
  const fs::path dir = workspace() / "determinism";
  fs::remove_all(dir);
  ScenePreset preset;
  preset.height = 32;
  preset.duration = 2.0;
  preset.max_sources = 2;
  const DatasetManifest manifest =
      write_scene_dataset((dir / "data").string(), 6, 2, preset, 11);

  KeyValueConfig kv;
  kv.set("mode", "avsa");
  kv.set("bs", "2");
  kv.set("nv", "2");
  kv.set("video_size", "28");
  kv.set("n_mels", "32");
  kv.set("epochs_phase1", "1");
  kv.set("epochs_phase2", "1");
  kv.set("seed", "5");
  const TrainConfig cfg = parse_train_config(kv);

  PretextModel m1(cfg), m2(cfg);
  const TrainOutcome o1 = curriculum_train(m1, manifest, (dir / "run1").string());
  const TrainOutcome o2 = curriculum_train(m2, manifest, (dir / "run2").string());
  const bool metrics_same = file_hash(o1.metrics_path) == file_hash(o2.metrics_path);
  const bool ckpt_same =
      file_hash(o1.final_checkpoint) == file_hash(o2.final_checkpoint);
  const bool epoch_same =
      file_hash((dir / "run1" / "epoch_000.ckpt").string()) ==
      file_hash((dir / "run2" / "epoch_000.ckpt").string());
  pass = metrics_same && ckpt_same && epoch_same;
  std::ostringstream os;
  os << "metrics " << (metrics_same ? "identical" : "DIFFER") << ", checkpoints "
     << (ckpt_same && epoch_same ? "identical" : "DIFFER");
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const std::vector<std::pair<const char*, std::string (*)(bool&)>> criteria{
      {"gradient integrity", criterion1},
      {"ambisonics algebra", criterion2},
      {"projection geometry", criterion3},
      {"loss oracles", criterion4},
      {"architecture conformance", criterion5},
      {"pretext ordering on synthetic scenes", criterion6},
      {"ablation directionality", criterion7},
      {"fixed-seed determinism", criterion8}};

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && selected.count(id) == 0) continue;
    bool pass = false;
    std::string detail;
    try {
      detail = criteria[i].second(pass);
    } catch (const std::exception& e) {
      pass = false;
      detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d (%s): %s (%s)\n", id, criteria[i].first,
                pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
