#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsa/ambisonics.hpp"
#include "avsa/equirect_io.hpp"
#include "avsa/error.hpp"
#include "avsa/rng.hpp"
#include "avsa/sphere.hpp"
#include "avsa/wav_io.hpp"

namespace avsa {

// Synthetic 360-degree scenes: colored angular disks paired with
// amplitude-modulated tones, rendered to equirect video plus first-order
// ambisonics. Sound class determines disk color, so the cross-modal
// association is learnable, and every source is localized identically in
// both modalities.

struct SceneClass {
  std::array<float, 3> color{};
  double tone_hz = 0.0;
  double mod_hz = 0.0;
};

// Eight spectrally disjoint tone patterns (factor-1.5 spaced carriers, all
// below an 8 kHz Nyquist so desk-rate audio still separates them), each
// tied to a saturated color.
inline std::vector<SceneClass> default_class_bank() {
  return {
      {{0.95f, 0.15f, 0.15f}, 400.0, 2.0},  {{0.15f, 0.85f, 0.15f}, 600.0, 3.0},
      {{0.20f, 0.35f, 0.95f}, 900.0, 4.0},  {{0.95f, 0.85f, 0.10f}, 1350.0, 5.0},
      {{0.85f, 0.20f, 0.85f}, 2025.0, 6.0}, {{0.10f, 0.85f, 0.85f}, 3040.0, 7.0},
      {{0.95f, 0.55f, 0.10f}, 4560.0, 8.0}, {{0.90f, 0.90f, 0.90f}, 6840.0, 9.0},
  };
}

struct SceneSource {
  Direction dir;
  int cls = 0;
  double phase = 0.0;
};

struct SceneSpec {
  std::vector<SceneSource> sources;
  double duration = 10.0;
  double sample_rate = 24000.0;
  double fps = 8.0;
  int height = 64;
  double disk_radius = deg2rad(15.0);
  uint64_t background_seed = 0;
  double background_yaw = 0.0;  // lets a whole scene rotate rigidly
};

// Rigid yaw rotation of the whole scene, background included.
inline SceneSpec rotate_scene_yaw(const SceneSpec& spec, double yaw) {
  SceneSpec out = spec;
  out.background_yaw += yaw;
  for (SceneSource& s : out.sources) s.dir = Direction(s.dir.theta + yaw, s.dir.phi);
  return out;
}

inline constexpr double kSourceMinSeparation = 30.0 * kPi / 180.0;
inline constexpr double kSourceLatBound = 45.0 * kPi / 180.0;
inline constexpr double kSourceAmplitude = 0.22;
inline constexpr double kHumAmplitude = 0.02;
inline constexpr double kHumHz = 55.0;

inline SceneSpec generate_scene(int n_sources, int n_classes, Rng& rng) {
  if (n_classes < 1 || n_classes > static_cast<int>(default_class_bank().size()))
    throw ConfigError("generate_scene: n_classes out of range");
  if (n_sources < 0 || n_sources > n_classes)
    throw ConfigError("generate_scene: need 0 <= n_sources <= n_classes");
  SceneSpec spec;
  spec.background_seed = rng.next_u64();
  if (n_sources > 0) {
    const ViewpointSet vs =
        sample_viewpoints(n_sources, kSourceMinSeparation, kSourceLatBound, rng);
    // classes without replacement so each source is visually distinct
    std::vector<int> classes(n_classes);
    for (int i = 0; i < n_classes; ++i) classes[i] = i;
    for (int i = 0; i < n_sources; ++i) {
      const int j = i + static_cast<int>(rng.uniform_index(n_classes - i));
      std::swap(classes[i], classes[j]);
      spec.sources.push_back({vs.directions[i], classes[i], rng.uniform(0.0, 2.0 * kPi)});
    }
  }
  return spec;
}

inline std::vector<double> class_signal(const SceneClass& cls, size_t n,
                                        double sample_rate, double phase) {
  std::vector<double> s(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double env = 0.6 + 0.4 * std::sin(2.0 * kPi * cls.mod_hz * t);
    s[i] = kSourceAmplitude * env * std::sin(2.0 * kPi * cls.tone_hz * t + phase);
  }
  return s;
}

namespace detail {

// Smooth low-frequency color field so yaw shifts stay resolvable after
// bilinear resampling.
struct BackgroundField {
  std::array<double, 3> freq_t{}, freq_p{}, phase{};

  explicit BackgroundField(uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0x5cebab5eULL));
    for (int ch = 0; ch < 3; ++ch) {
      // integer longitude frequency keeps the field 2 pi periodic in theta
      freq_t[ch] = 1.0 + static_cast<double>(rng.uniform_index(3));
      freq_p[ch] = rng.uniform(0.5, 2.0);
      phase[ch] = rng.uniform(0.0, 2.0 * kPi);
    }
  }

  float at(double theta, double phi, int ch) const {
    return static_cast<float>(
        0.35 + 0.15 * std::sin(freq_t[ch] * theta + freq_p[ch] * phi + phase[ch]));
  }
};

}  // namespace detail

inline std::pair<EquirectVideo, AmbisonicClip> render_scene(const SceneSpec& spec) {
  const auto bank = default_class_bank();
  for (const SceneSource& s : spec.sources)
    if (s.cls < 0 || s.cls >= static_cast<int>(bank.size()))
      throw ConfigError("render_scene: source class out of range");

  const int frames = std::max(1, static_cast<int>(std::llround(spec.duration * spec.fps)));
  EquirectVideo video = make_equirect(frames, spec.height, spec.fps);
  const detail::BackgroundField bg(spec.background_seed);
  const double edge = spec.disk_radius * 0.25;  // soft rim for smooth resampling

  // scenes are static, so paint frame 0 and replicate
  std::vector<Vec3> source_units;
  for (const SceneSource& s : spec.sources)
    source_units.push_back(direction_to_unit_vector(s.dir));
  for (int r = 0; r < video.height; ++r) {
    const double phi = kPi / 2.0 - kPi * (r + 0.5) / video.height;
    for (int c = 0; c < video.width; ++c) {
      const double theta = -kPi + 2.0 * kPi * (c + 0.5) / video.width;
      const Vec3 u = direction_to_unit_vector(Direction(theta, phi));
      float px[3];
      for (int ch = 0; ch < 3; ++ch) px[ch] = bg.at(theta - spec.background_yaw, phi, ch);
      for (size_t s = 0; s < spec.sources.size(); ++s) {
        const Vec3& v = source_units[s];
        const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        const double dist = std::acos(std::clamp(dot, -1.0, 1.0));
        if (dist >= spec.disk_radius) continue;
        const double w = std::min(1.0, (spec.disk_radius - dist) / edge);
        const auto& col = bank[spec.sources[s].cls].color;
        for (int ch = 0; ch < 3; ++ch)
          px[ch] = static_cast<float>((1.0 - w) * px[ch] + w * col[ch]);
      }
      for (int ch = 0; ch < 3; ++ch) video.at(0, r, c, ch) = px[ch];
    }
  }
  const size_t per_frame = static_cast<size_t>(video.height) * video.width * 3;
  for (int t = 1; t < frames; ++t)
    std::copy_n(video.data.begin(), per_frame, video.data.begin() + per_frame * t);

  const size_t n = static_cast<size_t>(std::llround(spec.duration * spec.sample_rate));
  AmbisonicClip audio = make_silent_clip(n, spec.sample_rate);
  // omnidirectional hum keeps the scene audible even with no sources
  for (size_t i = 0; i < n; ++i)
    audio.w[i] = kHumAmplitude * std::sin(2.0 * kPi * kHumHz * i / spec.sample_rate);
  for (const SceneSource& s : spec.sources)
    accumulate(audio, foa_encode(class_signal(bank[s.cls], n, spec.sample_rate, s.phase),
                                 s.dir, spec.sample_rate));
  return {std::move(video), std::move(audio)};
}

// ---------------------------------------------------------------------------
// dataset on disk
// ---------------------------------------------------------------------------

struct ScenePreset {
  int height = 64;
  double fps = 8.0;
  double duration = 10.0;
  double sample_rate = 24000.0;
  int min_sources = 1;
  int max_sources = 3;
  int n_classes = 8;
  double disk_radius_deg = 15.0;
};

struct SceneRecord {
  int id = 0;
  std::string split;  // "train" | "test"
  std::string video_file, audio_file;
  std::vector<SceneSource> sources;
  uint64_t background_seed = 0;
};

struct DatasetManifest {
  ScenePreset preset;
  std::vector<SceneRecord> records;
  std::string root;

  std::vector<const SceneRecord*> split(const std::string& name) const {
    std::vector<const SceneRecord*> out;
    for (const auto& r : records)
      if (r.split == name) out.push_back(&r);
    return out;
  }
};

inline SceneSpec spec_from_record(const SceneRecord& rec, const ScenePreset& preset) {
  SceneSpec spec;
  spec.sources = rec.sources;
  spec.duration = preset.duration;
  spec.sample_rate = preset.sample_rate;
  spec.fps = preset.fps;
  spec.height = preset.height;
  spec.disk_radius = deg2rad(preset.disk_radius_deg);
  spec.background_seed = rec.background_seed;
  return spec;
}

inline DatasetManifest write_scene_dataset(const std::string& dir, int n_train,
                                           int n_test, const ScenePreset& preset,
                                           uint64_t seed) {
  if (n_train < 1 || n_test < 1)
    throw ConfigError("write_scene_dataset: need at least one scene per split");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.preset = preset;
  manifest.root = dir;
  Rng master(seed);
  nlohmann::json scenes = nlohmann::json::array();
  for (int id = 0; id < n_train + n_test; ++id) {
    Rng rng = master.child(static_cast<uint64_t>(id));
    const int span = preset.max_sources - preset.min_sources + 1;
    const int n_sources =
        preset.min_sources + static_cast<int>(rng.uniform_index(span));
    SceneSpec spec = generate_scene(n_sources, preset.n_classes, rng);
    spec.duration = preset.duration;
    spec.sample_rate = preset.sample_rate;
    spec.fps = preset.fps;
    spec.height = preset.height;
    spec.disk_radius = deg2rad(preset.disk_radius_deg);
    auto [video, audio] = render_scene(spec);

    SceneRecord rec;
    rec.id = id;
    rec.split = id < n_train ? "train" : "test";
    char base[32];
    std::snprintf(base, sizeof(base), "scene_%04d", id);
    rec.video_file = std::string(base) + ".eqrv";
    rec.audio_file = std::string(base) + ".wav";
    rec.sources = spec.sources;
    rec.background_seed = spec.background_seed;
    write_equirect((fs::path(dir) / rec.video_file).string(), quantize_equirect(video));
    write_foa_wav((fs::path(dir) / rec.audio_file).string(), audio);
    manifest.records.push_back(rec);

    nlohmann::json js;
    js["id"] = rec.id;
    js["split"] = rec.split;
    js["video"] = rec.video_file;
    js["audio"] = rec.audio_file;
    js["background_seed"] = rec.background_seed;
    nlohmann::json srcs = nlohmann::json::array();
    for (const SceneSource& s : spec.sources)
      srcs.push_back({{"theta", s.dir.theta},
                      {"phi", s.dir.phi},
                      {"cls", s.cls},
                      {"phase", s.phase}});
    js["sources"] = srcs;
    scenes.push_back(js);
  }
  nlohmann::json root;
  root["preset"] = {{"height", preset.height},
                    {"fps", preset.fps},
                    {"duration", preset.duration},
                    {"sample_rate", preset.sample_rate},
                    {"min_sources", preset.min_sources},
                    {"max_sources", preset.max_sources},
                    {"n_classes", preset.n_classes},
                    {"disk_radius_deg", preset.disk_radius_deg}};
  root["scenes"] = scenes;
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw DataError("write_scene_dataset: cannot write manifest in " + dir);
  os << root.dump(2) << "\n";
  return manifest;
}

inline DatasetManifest load_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw DataError("load_manifest: cannot open manifest in " + dir);
  nlohmann::json root;
  try {
    is >> root;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_manifest: bad JSON in " + dir + ": " + e.what());
  }
  DatasetManifest manifest;
  manifest.root = dir;
  try {
    const auto& p = root.at("preset");
    manifest.preset.height = p.at("height").get<int>();
    manifest.preset.fps = p.at("fps").get<double>();
    manifest.preset.duration = p.at("duration").get<double>();
    manifest.preset.sample_rate = p.at("sample_rate").get<double>();
    manifest.preset.min_sources = p.at("min_sources").get<int>();
    manifest.preset.max_sources = p.at("max_sources").get<int>();
    manifest.preset.n_classes = p.at("n_classes").get<int>();
    manifest.preset.disk_radius_deg = p.value("disk_radius_deg", 15.0);
    for (const auto& js : root.at("scenes")) {
      SceneRecord rec;
      rec.id = js.at("id").get<int>();
      rec.split = js.at("split").get<std::string>();
      rec.video_file = js.at("video").get<std::string>();
      rec.audio_file = js.at("audio").get<std::string>();
      rec.background_seed = js.at("background_seed").get<uint64_t>();
      for (const auto& s : js.at("sources")) {
        SceneSource src;
        src.dir = Direction(s.at("theta").get<double>(), s.at("phi").get<double>());
        src.cls = s.at("cls").get<int>();
        src.phase = s.at("phase").get<double>();
        rec.sources.push_back(src);
      }
      manifest.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_manifest: missing field in " + dir + ": " + e.what());
  }
  return manifest;
}

// In-memory scene pair as used by the training pipeline.
struct LoadedScene {
  EquirectU8 video;
  AmbisonicClip audio;
};

inline LoadedScene load_scene(const DatasetManifest& manifest, const SceneRecord& rec) {
  namespace fs = std::filesystem;
  LoadedScene s;
  s.video = read_equirect((fs::path(manifest.root) / rec.video_file).string());
  s.audio = read_foa_wav((fs::path(manifest.root) / rec.audio_file).string());
  return s;
}

}  // namespace avsa
