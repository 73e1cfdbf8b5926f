#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "avsa/config.hpp"
#include "avsa/error.hpp"
#include "avsa/serialize.hpp"
#include "avsa/synthscene.hpp"
#include "avsa/trainer.hpp"

namespace avsa {

// Binary probing protocols with frozen pretext features: a logistic head
// on concatenated (video, audio) features decides whether a pair matches
// (same scene for the correspondence task, spatially aligned for the
// alignment task), with logits optionally averaged over four viewpoints.

enum class BinaryTask { kAvcBin, kAvsaBin };

struct BinaryEvalConfig {
  BinaryTask task = BinaryTask::kAvsaBin;
  int n_viewpoints = 4;
  double min_yaw = deg2rad(36.0);
  int pairs_per_scene = 4;
  int head_epochs = 10;
  double head_lr = 1e-3;
  double train_fraction = 0.8;
  uint64_t seed = 0;
};

struct EvalPair {
  const SceneRecord* video_scene = nullptr;
  const SceneRecord* audio_scene = nullptr;
  double t0 = 0.0, t0_audio = 0.0;
  double yaw = 0.0;  // audio misalignment; nonzero only for alignment negatives
  int label = 1;
  uint64_t seed = 0;  // drives viewpoint sampling for this pair
};

// Correspondence pairs: half from the same scene, half with audio swapped
// in from a different scene.
inline std::vector<EvalPair> make_avc_pairs(const std::vector<const SceneRecord*>& scenes,
                                            double duration, double clip_seconds,
                                            int pairs_per_scene, Rng& rng) {
  if (scenes.size() < 2) throw DataError("make_avc_pairs: need at least two scenes");
  const double span = duration - clip_seconds;
  std::vector<EvalPair> pairs;
  for (size_t i = 0; i < scenes.size(); ++i)
    for (int j = 0; j < pairs_per_scene; ++j) {
      EvalPair p;
      p.video_scene = scenes[i];
      p.label = static_cast<int>((i * pairs_per_scene + j) % 2 == 0);
      p.t0 = rng.uniform(0.0, span);
      if (p.label) {
        p.audio_scene = scenes[i];
        p.t0_audio = p.t0;
      } else {
        size_t other = rng.uniform_index(scenes.size() - 1);
        if (other >= i) ++other;
        p.audio_scene = scenes[other];
        p.t0_audio = rng.uniform(0.0, span);
      }
      p.seed = rng.next_u64();
      pairs.push_back(p);
    }
  return pairs;
}

// Alignment pairs: always the matching scene, but negatives get their
// ambisonics rotated about the yaw axis by at least min_yaw.
inline std::vector<EvalPair> make_avsa_pairs(const std::vector<const SceneRecord*>& scenes,
                                             double duration, double clip_seconds,
                                             double min_yaw, int pairs_per_scene,
                                             Rng& rng) {
  if (scenes.empty()) throw DataError("make_avsa_pairs: no scenes");
  if (!(min_yaw > 0.0 && min_yaw < kPi))
    throw ConfigError("make_avsa_pairs: min_yaw must be in (0, pi)");
  const double span = duration - clip_seconds;
  std::vector<EvalPair> pairs;
  for (size_t i = 0; i < scenes.size(); ++i)
    for (int j = 0; j < pairs_per_scene; ++j) {
      EvalPair p;
      p.video_scene = scenes[i];
      p.audio_scene = scenes[i];
      p.label = static_cast<int>((i * pairs_per_scene + j) % 2 == 0);
      p.t0 = rng.uniform(0.0, span);
      p.t0_audio = p.t0;
      if (!p.label) {
        const double mag = rng.uniform(min_yaw, kPi);
        p.yaw = rng.bernoulli(0.5) ? mag : -mag;
      }
      p.seed = rng.next_u64();
      pairs.push_back(p);
    }
  return pairs;
}

// Per-viewpoint features for one labeled pair: raw (video, audio) encoder
// outputs plus the translated-and-projected interaction products. The
// products give the logistic head access to cross-modal agreement, which a
// purely concatenated feature cannot express linearly; their per-view sum
// is exactly the cosine score the alignment pretext optimizes.
struct LabeledFeatures {
  std::vector<std::vector<float>> views;
  int label = 0;
};

inline LabeledFeatures extract_pair_features(PretextModel& model,
                                             const DatasetManifest& manifest,
                                             const EvalPair& pair,
                                             const BinaryEvalConfig& ecfg) {
  const TrainConfig& cfg = model.cfg;
  const ScenePreset& preset = manifest.preset;
  Rng rng(Rng::mix(pair.seed ^ 0x65766132ULL));
  const ViewpointSet vs = sample_viewpoints(ecfg.n_viewpoints, deg2rad(cfg.min_sep_deg),
                                            deg2rad(cfg.lat_bound_deg), rng);
  const int k = ecfg.n_viewpoints;

  TrainConfig eval_cfg = cfg;  // no augmentation at evaluation time
  eval_cfg.cj = false;
  eval_cfg.hf = 0.0;
  const double hfov = (cfg.hfov_min_deg + cfg.hfov_max_deg) / 2.0;
  eval_cfg.hfov_min_deg = eval_cfg.hfov_max_deg = hfov;

  Batch batch;
  batch.n = 1;
  batch.k = k;
  const int mel_frames = static_cast<int>(std::llround(cfg.audio_seconds * 100.0));
  batch.video = Tensor<float>::leaf(
      {k, 3, cfg.video_frames, cfg.video_size, cfg.video_size});
  batch.audio = Tensor<float>::leaf({k, cfg.audio_channels(), cfg.n_mels, mel_frames});
  batch.metas.resize(k);

  const LoadedScene vscene = load_scene(manifest, *pair.video_scene);
  const LoadedScene ascene = pair.audio_scene == pair.video_scene
                                 ? vscene
                                 : load_scene(manifest, *pair.audio_scene);

  // video rows
  {
    LoadedScene video_only;
    video_only.video = vscene.video;
    video_only.audio = make_silent_clip(
        static_cast<size_t>(std::llround(preset.duration * preset.sample_rate)),
        preset.sample_rate);
    fill_scene_rows(batch, 0, eval_cfg, preset, video_only, vs.directions, pair.t0,
                    false, rng);
  }
  // audio rows overwrite the silent placeholder, from the paired clip
  {
    const detail::ClipWindows w = detail::pick_windows(eval_cfg, preset, pair.t0_audio);
    AmbisonicClip window = clip_window(ascene.audio, w.audio_start, w.audio_len);
    if (pair.yaw != 0.0) window = rotate_foa(window, rotation_yaw(pair.yaw));
    const MelParams mp = make_mel_params(eval_cfg, preset.sample_rate);
    for (int l = 0; l < k; ++l) {
      const MelSpectrogram mel =
          log_mel(viewpoint_audio_channels(window, vs.directions[l], cfg.audio), mp);
      float* adst = batch.audio.value().data() +
                    static_cast<size_t>(l) * mel.channels * mel.bins * mel.frames;
      std::copy(mel.values.begin(), mel.values.end(), adst);
    }
  }

  const Tensor<float> vfeat = model.venc.forward(batch.video, false);
  const Tensor<float> afeat = model.aenc.forward(batch.audio, false);
  const Tensor<float> va = normalize_rows(model.proj_a2.forward(model.g_v2a.forward(vfeat)));
  const Tensor<float> aa = normalize_rows(model.proj_a2.forward(afeat));
  const Tensor<float> av = normalize_rows(model.proj_v2.forward(model.g_a2v.forward(afeat)));
  const Tensor<float> vv = normalize_rows(model.proj_v2.forward(vfeat));
  const int d = model.feature_dim();
  const int p = kProjectionDim;
  LabeledFeatures out;
  out.label = pair.label;
  out.views.resize(k);
  for (int l = 0; l < k; ++l) {
    out.views[l].resize(2 * static_cast<size_t>(d) + 2 * static_cast<size_t>(p));
    for (int e = 0; e < d; ++e) {
      out.views[l][e] = vfeat.value()[static_cast<size_t>(l) * d + e];
      out.views[l][d + e] = afeat.value()[static_cast<size_t>(l) * d + e];
    }
    for (int e = 0; e < p; ++e) {
      const size_t i = static_cast<size_t>(l) * p + e;
      out.views[l][2 * d + e] = va.value()[i] * aa.value()[i];
      out.views[l][2 * d + p + e] = av.value()[i] * vv.value()[i];
    }
  }
  return out;
}

// Logistic head on averaged per-view logits: Adam-trained on the train
// split, accuracy reported on the test split. Features are plain arrays,
// so the pretext parameters cannot move here by construction.
inline double binary_head_accuracy(const std::vector<LabeledFeatures>& train,
                                   const std::vector<LabeledFeatures>& test,
                                   int epochs, double lr, uint64_t seed) {
  if (train.empty() || test.empty())
    throw DataError("binary_head_accuracy: empty split");
  const size_t d = train[0].views.at(0).size();
  std::vector<double> w(d, 0.0), mw(d, 0.0), vw(d, 0.0);
  double b = 0.0, mb = 0.0, vb = 0.0;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::mix(seed ^ 0x6865616400ULL));

  auto mean_logit = [&](const LabeledFeatures& f) {
    double acc = 0.0;
    for (const auto& view : f.views) {
      if (view.size() != d) throw ShapeError("binary_head_accuracy: feature dim drift");
      double z = b;
      for (size_t i = 0; i < d; ++i) z += w[i] * view[i];
      acc += z;
    }
    return acc / static_cast<double>(f.views.size());
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (size_t idx : order) {
      const LabeledFeatures& f = train[idx];
      const double z = mean_logit(f);
      if (!std::isfinite(z)) throw NumericError("binary_head_accuracy: non-finite logit");
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double g = p - static_cast<double>(f.label);  // d(loss)/d(logit)
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      const double gk = g / static_cast<double>(f.views.size());
      for (size_t i = 0; i < d; ++i) {
        double gi = 0.0;
        for (const auto& view : f.views) gi += gk * view[i];
        mw[i] = beta1 * mw[i] + (1.0 - beta1) * gi;
        vw[i] = beta2 * vw[i] + (1.0 - beta2) * gi * gi;
        w[i] -= lr * (mw[i] / bc1) / (std::sqrt(vw[i] / bc2) + eps);
      }
      mb = beta1 * mb + (1.0 - beta1) * g;
      vb = beta2 * vb + (1.0 - beta2) * g * g;
      b -= lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
    }
  }

  size_t correct = 0;
  for (const LabeledFeatures& f : test)
    if ((mean_logit(f) > 0.0) == (f.label == 1)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct EvalResult {
  double accuracy = 0.0;
  size_t n_train_pairs = 0, n_test_pairs = 0;
  uint64_t pretext_hash_before = 0, pretext_hash_after = 0;
};

// Full protocol: scene-level 80/20 split (pairs never straddle it), pair
// construction per task, frozen feature extraction, head training, held
// out accuracy. The parameter hashes let callers audit frozenness.
inline EvalResult evaluate_binary(PretextModel& model, const DatasetManifest& manifest,
                                  const BinaryEvalConfig& ecfg,
                                  const std::string& split_name = "test") {
  const auto scenes = manifest.split(split_name);
  if (scenes.size() < 5) throw DataError("evaluate_binary: too few scenes in split");
  EvalResult result;
  result.pretext_hash_before = param_hash(model.store);

  const size_t n_head_train = std::max<size_t>(
      2, static_cast<size_t>(std::llround(ecfg.train_fraction * scenes.size())));
  std::vector<const SceneRecord*> head_train(scenes.begin(),
                                             scenes.begin() + n_head_train);
  std::vector<const SceneRecord*> head_test(scenes.begin() + n_head_train, scenes.end());
  if (head_test.size() < 2) throw DataError("evaluate_binary: test split too small");

  Rng rng(Rng::mix(ecfg.seed ^ 0x6576616cULL));
  const double dur = manifest.preset.duration;
  const double clip = std::max(model.cfg.clip_seconds, model.cfg.audio_seconds);
  auto build = [&](const std::vector<const SceneRecord*>& subset) {
    return ecfg.task == BinaryTask::kAvcBin
               ? make_avc_pairs(subset, dur, clip, ecfg.pairs_per_scene, rng)
               : make_avsa_pairs(subset, dur, clip, ecfg.min_yaw, ecfg.pairs_per_scene,
                                 rng);
  };
  const std::vector<EvalPair> train_pairs = build(head_train);
  const std::vector<EvalPair> test_pairs = build(head_test);

  std::vector<LabeledFeatures> train_feats, test_feats;
  for (const EvalPair& p : train_pairs)
    train_feats.push_back(extract_pair_features(model, manifest, p, ecfg));
  for (const EvalPair& p : test_pairs)
    test_feats.push_back(extract_pair_features(model, manifest, p, ecfg));

  result.n_train_pairs = train_feats.size();
  result.n_test_pairs = test_feats.size();
  result.accuracy = binary_head_accuracy(train_feats, test_feats, ecfg.head_epochs,
                                         ecfg.head_lr, ecfg.seed);
  result.pretext_hash_after = param_hash(model.store);
  return result;
}

// ---------------------------------------------------------------------------
// transfer probe: source-class recognition from video features
// ---------------------------------------------------------------------------

// Softmax probe predicting the class of a scene's first source from the
// video feature of a crop centered on it. A crude stand-in for semantic
// transfer: features that only encode geometry do poorly here.
inline double class_probe_accuracy(PretextModel& model, const DatasetManifest& manifest,
                                   int n_classes, int epochs, double lr, uint64_t seed) {
  const TrainConfig& cfg = model.cfg;
  const ScenePreset& preset = manifest.preset;
  TrainConfig eval_cfg = cfg;
  eval_cfg.cj = false;
  eval_cfg.hf = 0.0;
  eval_cfg.hfov_min_deg = eval_cfg.hfov_max_deg = 60.0;

  auto features_for = [&](const std::vector<const SceneRecord*>& recs,
                          std::vector<std::vector<float>>& feats,
                          std::vector<int>& labels) {
    Rng rng(Rng::mix(seed ^ 0x70726f6265ULL));
    for (const SceneRecord* rec : recs) {
      if (rec->sources.empty()) continue;
      const LoadedScene scene = load_scene(manifest, *rec);
      Batch batch;
      batch.n = batch.k = 1;
      const int mel_frames = static_cast<int>(std::llround(cfg.audio_seconds * 100.0));
      batch.video = Tensor<float>::leaf(
          {1, 3, cfg.video_frames, cfg.video_size, cfg.video_size});
      batch.audio =
          Tensor<float>::leaf({1, cfg.audio_channels(), cfg.n_mels, mel_frames});
      batch.metas.resize(1);
      const double span = preset.duration - std::max(cfg.clip_seconds, cfg.audio_seconds);
      fill_scene_rows(batch, 0, eval_cfg, preset, scene, {rec->sources[0].dir},
                      rng.uniform(0.0, span), false, rng);
      const Tensor<float> f = model.venc.forward(batch.video, false);
      feats.push_back(f.value());
      labels.push_back(rec->sources[0].cls);
    }
  };

  std::vector<std::vector<float>> train_x, test_x;
  std::vector<int> train_y, test_y;
  features_for(manifest.split("train"), train_x, train_y);
  features_for(manifest.split("test"), test_x, test_y);
  if (train_x.empty() || test_x.empty())
    throw DataError("class_probe_accuracy: empty split");

  const size_t d = train_x[0].size();
  std::vector<double> w(static_cast<size_t>(n_classes) * d, 0.0), b(n_classes, 0.0);
  std::vector<double> mw(w.size(), 0.0), vw(w.size(), 0.0), mb(b.size(), 0.0),
      vb(b.size(), 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  Rng rng(Rng::mix(seed ^ 0x70726f6265ULL) + 1);
  std::vector<size_t> order(train_x.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> logits(n_classes), probs(n_classes);
  auto forward = [&](const std::vector<float>& x) {
    double mx = -1e300;
    for (int c = 0; c < n_classes; ++c) {
      double z = b[c];
      for (size_t i = 0; i < d; ++i) z += w[static_cast<size_t>(c) * d + i] * x[i];
      logits[c] = z;
      mx = std::max(mx, z);
    }
    double s = 0.0;
    for (int c = 0; c < n_classes; ++c) s += probs[c] = std::exp(logits[c] - mx);
    for (int c = 0; c < n_classes; ++c) probs[c] /= s;
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (size_t idx : order) {
      forward(train_x[idx]);
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (int c = 0; c < n_classes; ++c) {
        const double g = probs[c] - (c == train_y[idx] ? 1.0 : 0.0);
        for (size_t i = 0; i < d; ++i) {
          const size_t j = static_cast<size_t>(c) * d + i;
          const double gi = g * train_x[idx][i];
          mw[j] = beta1 * mw[j] + (1.0 - beta1) * gi;
          vw[j] = beta2 * vw[j] + (1.0 - beta2) * gi * gi;
          w[j] -= lr * (mw[j] / bc1) / (std::sqrt(vw[j] / bc2) + eps);
        }
        mb[c] = beta1 * mb[c] + (1.0 - beta1) * g;
        vb[c] = beta2 * vb[c] + (1.0 - beta2) * g * g;
        b[c] -= lr * (mb[c] / bc1) / (std::sqrt(vb[c] / bc2) + eps);
      }
    }
  }

  size_t correct = 0;
  for (size_t i = 0; i < test_x.size(); ++i) {
    forward(test_x[i]);
    int best = 0;
    for (int c = 1; c < n_classes; ++c)
      if (logits[c] > logits[best]) best = c;
    if (best == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

// ---------------------------------------------------------------------------
// results table
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string task, method;
  int viewpoints = 0;
  double accuracy = 0.0;
};

inline std::string format_results_table(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "task        method      views  accuracy\n";
  for (const ResultRow& r : rows) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-11s %-11s %5d  %8.4f\n", r.task.c_str(),
                  r.method.c_str(), r.viewpoints, r.accuracy);
    os << line;
  }
  return os.str();
}

}  // namespace avsa
