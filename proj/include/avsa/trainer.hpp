#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsa/alignment.hpp"
#include "avsa/ambisonics.hpp"
#include "avsa/config.hpp"
#include "avsa/encoders.hpp"
#include "avsa/error.hpp"
#include "avsa/features.hpp"
#include "avsa/serialize.hpp"
#include "avsa/sphere.hpp"
#include "avsa/synthscene.hpp"

namespace avsa {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;  // m, v
  long long step = 0;
};

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // classic L2 added to the gradient
  double grad_clip = 0.0;     // global-norm clip, 0 = off
};

// One bias-corrected Adam update over the given store entries. Non-finite
// gradients abort the step before touching any parameter.
template <typename T>
void adam_step(std::vector<typename ParamStore<T>::Entry*>& params, AdamState<T>& state,
               const AdamHyper& h) {
  for (auto* e : params) {
    if (!e->trainable) throw ConfigError("adam_step: non-trainable entry " + e->name);
    for (T g : e->tensor.grad())
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("adam_step: non-finite gradient in " + e->name);
  }
  double clip_scale = 1.0;
  if (h.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto* e : params)
      for (T g : e->tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > h.grad_clip) clip_scale = h.grad_clip / norm;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (auto* e : params) {
    auto& [m, v] = state.moments[e->name];
    if (m.empty()) {
      m.assign(e->tensor.numel(), T(0));
      v.assign(e->tensor.numel(), T(0));
    }
    auto& val = e->tensor.value();
    const auto& grad = e->tensor.grad();
    for (size_t i = 0; i < val.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * clip_scale +
                       h.weight_decay * static_cast<double>(val[i]);
      m[i] = static_cast<T>(h.beta1 * m[i] + (1.0 - h.beta1) * g);
      v[i] = static_cast<T>(h.beta2 * v[i] + (1.0 - h.beta2) * g * g);
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      val[i] = static_cast<T>(val[i] - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

template <typename T>
std::vector<typename ParamStore<T>::Entry*> select_params(
    ParamStore<T>& store, const std::vector<std::string>& prefixes) {
  std::vector<typename ParamStore<T>::Entry*> out;
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    for (const std::string& p : prefixes)
      if (e.name.compare(0, p.size(), p) == 0) {
        out.push_back(&e);
        break;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

// Everything the pretext task trains: both encoders, the two feature
// translators, and separate projection heads per modality and phase.
// Construction is the initialization, seeded from the config, so identical
// configs give identical starting weights.
struct PretextModel {
  TrainConfig cfg;
  ParamStore<float> store;
  VideoEncoder<float> venc;
  AudioEncoder<float> aenc;
  Translator<float> g_v2a, g_a2v;
  ProjectionHead<float> proj_v1, proj_a1;  // batch-level phase
  ProjectionHead<float> proj_v2, proj_a2;  // crop-level phase

  explicit PretextModel(const TrainConfig& c) : cfg(c) {
    cfg.validate();
    Rng rng(Rng::mix(cfg.seed ^ 0x6d6f64656cULL));
    const EncoderConfig enc{cfg.width};
    venc = VideoEncoder<float>(store, enc, rng);
    aenc = AudioEncoder<float>(store, enc, cfg.audio_channels(), rng);
    const int d = venc.feature_dim();
    const TranslatorConfig tc{cfg.translator_depth, d, 4, cfg.translator};
    g_v2a = Translator<float>(store, "g_v2a", tc, rng);
    g_a2v = Translator<float>(store, "g_a2v", tc, rng);
    proj_v1 = ProjectionHead<float>(store, "proj_v1.weight", d, kProjectionDim, rng);
    proj_a1 = ProjectionHead<float>(store, "proj_a1.weight", d, kProjectionDim, rng);
    proj_v2 = ProjectionHead<float>(store, "proj_v2.weight", d, kProjectionDim, rng);
    proj_a2 = ProjectionHead<float>(store, "proj_a2.weight", d, kProjectionDim, rng);
  }

  int feature_dim() const { return venc.feature_dim(); }
};

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

struct Batch {
  Tensor<float> video;  // [rows, 3, t, s, s]
  Tensor<float> audio;  // [rows, channels, mels, frames]
  std::vector<ClipMeta> metas;
  int n = 0, k = 0;  // rows = n * k, or 2 * n * k with a temporal slice
};

inline MelParams make_mel_params(const TrainConfig& cfg, double sample_rate) {
  MelParams p;
  p.sample_rate = sample_rate;
  p.n_mels = cfg.n_mels;
  return p;
}

inline AmbisonicClip clip_window(const AmbisonicClip& full, size_t start, size_t len) {
  if (start + len > full.length()) throw DataError("clip_window: window out of range");
  AmbisonicClip out;
  out.sample_rate = full.sample_rate;
  out.w.assign(full.w.begin() + start, full.w.begin() + start + len);
  out.y.assign(full.y.begin() + start, full.y.begin() + start + len);
  out.z.assign(full.z.begin() + start, full.z.begin() + start + len);
  out.x.assign(full.x.begin() + start, full.x.begin() + start + len);
  return out;
}

// Realign to the viewpoint, then decode to the configured channel format.
inline std::vector<std::vector<double>> viewpoint_audio_channels(
    const AmbisonicClip& window, const Direction& d, AudioFormat fmt) {
  const AmbisonicClip aligned = realign_to_viewpoint(window, d);
  switch (fmt) {
    case AudioFormat::kAmbisonics:
      return {aligned.w, aligned.y, aligned.z, aligned.x};
    case AudioFormat::kStereo: {
      auto [l, r] = decode_stereo(aligned);
      return {std::move(l), std::move(r)};
    }
    default:
      return {decode_mono(aligned, Direction(0.0, 0.0))};
  }
}

namespace detail {

struct ClipWindows {
  int frame_start = 0;
  size_t audio_start = 0, audio_len = 0;
};

inline ClipWindows pick_windows(const TrainConfig& cfg, const ScenePreset& preset,
                                double t0) {
  ClipWindows w;
  w.frame_start = static_cast<int>(std::llround(t0 * preset.fps));
  const int total_frames =
      static_cast<int>(std::llround(preset.duration * preset.fps));
  w.frame_start = std::clamp(w.frame_start, 0, total_frames - cfg.video_frames);
  // audio window centered on the video clip
  const double a0 = std::clamp(t0 + cfg.clip_seconds / 2.0 - cfg.audio_seconds / 2.0,
                               0.0, preset.duration - cfg.audio_seconds);
  w.audio_start = static_cast<size_t>(std::llround(a0 * preset.sample_rate));
  w.audio_len = static_cast<size_t>(std::llround(cfg.audio_seconds * preset.sample_rate));
  return w;
}

}  // namespace detail

// Features for one scene at one time offset across a set of viewpoints,
// written into preallocated batch rows starting at `row`.
inline void fill_scene_rows(Batch& batch, int row, const TrainConfig& cfg,
                            const ScenePreset& preset, const LoadedScene& scene,
                            const std::vector<Direction>& viewpoints, double t0,
                            bool augment, Rng& rng) {
  const detail::ClipWindows w = detail::pick_windows(cfg, preset, t0);
  const EquirectVideo frames = scene.video.slice(w.frame_start, cfg.video_frames);
  const AmbisonicClip window = clip_window(scene.audio, w.audio_start, w.audio_len);
  const MelParams mp = make_mel_params(cfg, preset.sample_rate);
  VideoPreprocessParams vp;
  vp.out_size = cfg.video_size;
  vp.flip_prob = cfg.hf;
  if (!cfg.cj) vp.jitter_lo = vp.jitter_hi = 1.0;

  const int s = cfg.video_size;
  const int t = cfg.video_frames;
  for (size_t l = 0; l < viewpoints.size(); ++l) {
    const Direction& dir = viewpoints[l];
    const double hfov = deg2rad(rng.uniform(cfg.hfov_min_deg, cfg.hfov_max_deg));
    const NfovClip crop = gnomonic_project(frames, dir, hfov, s, s, 0, t);
    const VideoTensor vt = preprocess_video(crop, augment, rng, vp, t);
    const MelSpectrogram mel =
        log_mel(viewpoint_audio_channels(window, dir, cfg.audio), mp);
    if (mel.frames * 10 != static_cast<int>(std::llround(cfg.audio_seconds * 1000.0)))
      throw DataError("fill_scene_rows: unexpected mel frame count");

    const int b = row + static_cast<int>(l);
    float* vdst = batch.video.value().data() +
                  static_cast<size_t>(b) * 3 * t * s * s;
    for (int f = 0; f < t; ++f)
      for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
          for (int ch = 0; ch < 3; ++ch)
            vdst[((static_cast<size_t>(ch) * t + f) * s + r) * s + c] =
                vt.at(f, r, c, ch);
    float* adst = batch.audio.value().data() +
                  static_cast<size_t>(b) * mel.channels * mel.bins * mel.frames;
    std::copy(mel.values.begin(), mel.values.end(), adst);
  }
}

// One training batch: `k` viewpoints per scene; with_temporal_slice adds a
// second clip per scene at least one clip length away, appended as rows
// [n*k, 2*n*k) for temporal negatives.
inline Batch make_batch(const DatasetManifest& manifest,
                        const std::vector<const SceneRecord*>& scenes, int k,
                        const TrainConfig& cfg, bool augment, bool with_temporal_slice,
                        Rng& rng) {
  const int n = static_cast<int>(scenes.size());
  if (n < 1) throw DataError("make_batch: empty batch");
  const ScenePreset& preset = manifest.preset;
  const double span = preset.duration - std::max(cfg.clip_seconds, cfg.audio_seconds);
  if (span < 0.0) throw DataError("make_batch: scenes shorter than a clip");
  if (with_temporal_slice && span < cfg.clip_seconds)
    throw DataError("make_batch: scenes too short for temporal negatives");

  const int rows = n * k * (with_temporal_slice ? 2 : 1);
  const int mel_frames = static_cast<int>(std::llround(cfg.audio_seconds * 100.0));
  Batch batch;
  batch.n = n;
  batch.k = k;
  batch.video = Tensor<float>::leaf(
      {rows, 3, cfg.video_frames, cfg.video_size, cfg.video_size});
  batch.audio =
      Tensor<float>::leaf({rows, cfg.audio_channels(), cfg.n_mels, mel_frames});
  batch.metas.resize(rows);

  for (int i = 0; i < n; ++i) {
    Rng item_rng = rng.child(static_cast<uint64_t>(scenes[i]->id) * 2654435761ULL +
                             rng.next_u64() % 1000003ULL);
    const LoadedScene scene = load_scene(manifest, *scenes[i]);
    const ViewpointSet vs = sample_viewpoints(k, deg2rad(cfg.min_sep_deg),
                                              deg2rad(cfg.lat_bound_deg), item_rng);
    const double t0 = item_rng.uniform(0.0, span);
    fill_scene_rows(batch, i * k, cfg, preset, scene, vs.directions, t0, augment,
                    item_rng);
    for (int l = 0; l < k; ++l) batch.metas[i * k + l] = {i, l, 0.0};
    if (with_temporal_slice) {
      double t1 = t0;
      for (int tries = 0; std::abs(t1 - t0) < cfg.clip_seconds; ++tries) {
        if (tries > 1000) throw DataError("make_batch: cannot place a temporal slice");
        t1 = item_rng.uniform(0.0, span);
      }
      fill_scene_rows(batch, n * k + i * k, cfg, preset, scene, vs.directions, t1,
                      augment, item_rng);
      for (int l = 0; l < k; ++l) batch.metas[n * k + i * k + l] = {i, l, t1 - t0};
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// losses over encoded batches
// ---------------------------------------------------------------------------

// Temporal-negative variant of the crop-level loss: each query is scored
// against the matching viewpoint of every scene plus its own scene's clip
// at the other time. Feature banks carry 2*n*k rows (time slice appended).
template <typename T>
Tensor<T> avts_loss(const Tensor<T>& video_feats, const Tensor<T>& audio_feats, int n,
                    int k, const Translator<T>& g_v2a, const Translator<T>& g_a2v,
                    const ProjectionHead<T>& proj_v, const ProjectionHead<T>& proj_a,
                    T tau) {
  if (video_feats.rank() != 2 || video_feats.shape() != audio_feats.shape() ||
      video_feats.dim(0) != 2 * n * k)
    throw ShapeError("avts_loss: feature banks must be matching [2*n*k, d]");
  Tensor<T> loss = Tensor<T>::scalar(T(0));
  for (int i = 0; i < n; ++i) {
    std::vector<int> own(k);
    for (int l = 0; l < k; ++l) own[l] = i * k + l;
    Tensor<T> a_translated = g_v2a.forward(rows(video_feats, own));
    Tensor<T> v_translated = g_a2v.forward(rows(audio_feats, own));
    for (int l = 0; l < k; ++l) {
      std::vector<int> prop;
      int target = -1;
      for (int j = 0; j < n; ++j) {
        if (j == i) target = static_cast<int>(prop.size());
        prop.push_back(j * k + l);
      }
      prop.push_back(n * k + i * k + l);  // temporal negative
      loss = add(loss, info_nce(rows(v_translated, {l}), rows(video_feats, prop),
                                target, proj_v, proj_v, tau));
      loss = add(loss, info_nce(rows(a_translated, {l}), rows(audio_feats, prop),
                                target, proj_a, proj_a, tau));
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// curriculum training
// ---------------------------------------------------------------------------

struct TrainOutcome {
  double final_loss = 0.0;
  std::string final_checkpoint;
  std::string metrics_path;
  uint64_t param_hash = 0;
};

namespace detail {

inline double mean_loss_value(const Tensor<float>& loss, int queries) {
  return static_cast<double>(loss.item()) / queries;
}

}  // namespace detail

// Two-phase curriculum: a batch-level contrastive phase over single random
// viewpoints, then a crop-level phase with K viewpoints, fresh translators
// and fresh projection heads. Variants: off = crop-level only for the
// whole budget; easy-only = batch-level only; hard-only = crop-level phase
// restricted to same-scene negatives.
inline TrainOutcome curriculum_train(PretextModel& model, const DatasetManifest& manifest,
                                     const std::string& out_dir,
                                     bool deterministic = true,
                                     bool per_epoch_checkpoints = true) {
  namespace fs = std::filesystem;
  const TrainConfig& cfg = model.cfg;
  const auto train_scenes = manifest.split("train");
  if (static_cast<int>(train_scenes.size()) < cfg.bs)
    throw DataError("curriculum_train: dataset smaller than one batch");

  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path);
  if (!metrics) throw DataError("curriculum_train: cannot write " + metrics_path);

  int phase1_epochs = cfg.epochs_phase1;
  int phase2_epochs = cfg.epochs_phase2;
  if (cfg.curriculum == Curriculum::kOff) {
    phase2_epochs += phase1_epochs;
    phase1_epochs = 0;
  } else if (cfg.curriculum == Curriculum::kEasyOnly) {
    phase1_epochs += phase2_epochs;
    phase2_epochs = 0;
  }
  const SpatialNegatives negatives = cfg.curriculum == Curriculum::kHardOnly
                                         ? SpatialNegatives::kHardOnly
                                         : SpatialNegatives::kBoth;

  AdamHyper hyper;
  hyper.lr = cfg.lr;
  hyper.beta1 = cfg.beta1;
  hyper.beta2 = cfg.beta2;
  hyper.eps = cfg.adam_eps;
  hyper.weight_decay = cfg.wd;
  hyper.grad_clip = cfg.grad_clip;

  auto phase1_params = select_params(model.store, {"video.", "audio.", "proj_v1", "proj_a1"});
  auto phase2_params =
      select_params(model.store, {"video.", "audio.", "g_v2a", "g_a2v", "proj_v2", "proj_a2"});

  Rng master(Rng::mix(cfg.seed ^ 0x747261696eULL));
  const auto t_start = std::chrono::steady_clock::now();
  double last_loss = 0.0;
  int global_step = 0;

  auto emit = [&](int epoch, int phase, int step, double loss) {
    const double wall =
        deterministic ? 0.0
                      : std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      t_start)
                            .count();
    nlohmann::json j;
    j["epoch"] = epoch;
    j["phase"] = phase;
    j["step"] = step;
    j["loss"] = loss;
    j["lr"] = hyper.lr;
    j["wall_time"] = wall;
    metrics << j.dump() << "\n" << std::flush;
  };

  AdamState<float> adam1, adam2;
  const int total_epochs = phase1_epochs + phase2_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool phase1 = epoch < phase1_epochs;
    const int phase = phase1 ? 1 : 2;
    const int k = phase1 ? 1 : cfg.nv;
    Rng epoch_rng = master.child(0x9000ULL + static_cast<uint64_t>(epoch));

    // seeded shuffle of the scene order
    std::vector<const SceneRecord*> order = train_scenes;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[epoch_rng.uniform_index(i)]);

    const int steps = static_cast<int>(order.size()) / cfg.bs;
    for (int s = 0; s < steps; ++s) {
      std::vector<const SceneRecord*> scenes(order.begin() + s * cfg.bs,
                                             order.begin() + (s + 1) * cfg.bs);
      const bool temporal = !phase1 && cfg.tn_neg;
      Batch batch = make_batch(manifest, scenes, k, cfg, true, temporal, epoch_rng);
      model.store.zero_grad();
      Tensor<float> vfeat = model.venc.forward(batch.video, true);
      Tensor<float> afeat = model.aenc.forward(batch.audio, true);
      Tensor<float> loss;
      int queries = 0;
      if (phase1) {
        loss = avc_loss(vfeat, afeat, model.proj_v1, model.proj_a1,
                        static_cast<float>(cfg.tau));
        queries = 2 * batch.n;
      } else if (temporal) {
        loss = avts_loss(vfeat, afeat, batch.n, k, model.g_v2a, model.g_a2v,
                         model.proj_v2, model.proj_a2, static_cast<float>(cfg.tau));
        queries = 2 * batch.n * k;
      } else {
        loss = avsa_loss(vfeat, afeat, batch.n, k, model.g_v2a, model.g_a2v,
                         model.proj_v2, model.proj_a2, static_cast<float>(cfg.tau),
                         negatives);
        queries = 2 * batch.n * k;
      }
      Tensor<float> mean = scale(loss, 1.0f / static_cast<float>(queries));
      last_loss = static_cast<double>(mean.item());
      if (!std::isfinite(last_loss))
        throw NumericError("curriculum_train: non-finite loss at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(s));
      mean.backward();
      adam_step<float>(phase1 ? phase1_params : phase2_params,
                       phase1 ? adam1 : adam2, hyper);
      emit(epoch, phase, global_step++, last_loss);
    }
    if (per_epoch_checkpoints) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      save_checkpoint((fs::path(out_dir) / name).string(), model.store);
    }
  }

  TrainOutcome out;
  out.final_loss = last_loss;
  out.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  out.metrics_path = metrics_path;
  save_checkpoint(out.final_checkpoint, model.store);
  out.param_hash = param_hash(model.store);
  return out;
}

}  // namespace avsa
