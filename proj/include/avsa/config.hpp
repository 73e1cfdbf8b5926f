#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avsa/alignment.hpp"
#include "avsa/error.hpp"

namespace avsa {

// Flat key-value experiment config: one "key value" or "key = value" pair
// per line, '#' starts a comment. Keys mirror the hyperparameter table
// column names (bs, nv, lr, wd, cj, hf, hfov_min, hfov_max, in, sn, tn,
// tau) plus artifact extras.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      for (char& c : line)
        if (c == '=' || c == '\t') c = ' ';
      std::istringstream ls(line);
      std::string key, value, extra;
      if (!(ls >> key)) continue;
      if (!(ls >> value) || (ls >> extra))
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected 'key value', got '" + line + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  int get_int(const std::string& key, int fallback) const {
    const double v = get_double(key, fallback);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("config: key '" + key + "' is not an integer");
    return i;
  }

  uint64_t get_u64(const std::string& key, uint64_t fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' is not an unsigned integer");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
  }

  // Keys present in the file but never consumed; a typo detector.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (used_.count(k) == 0) out.push_back(k);
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

enum class PretrainMode { kAvc, kAvts, kAvsa };
enum class Curriculum { kOn, kOff, kEasyOnly, kHardOnly };
enum class AudioFormat { kAmbisonics, kStereo, kMono };

inline int audio_channel_count(AudioFormat f) {
  switch (f) {
    case AudioFormat::kAmbisonics: return 4;
    case AudioFormat::kStereo: return 2;
    default: return 1;
  }
}

struct TrainConfig {
  PretrainMode mode = PretrainMode::kAvsa;

  // optimization hyperparameters, named after the published table columns
  int bs = 28;
  int nv = 4;
  double lr = 1e-4;
  double wd = 1e-5;
  bool cj = true;
  double hf = 0.5;
  double hfov_min_deg = 25.0;
  double hfov_max_deg = 90.0;
  bool in_neg = true;
  bool sn_neg = true;
  bool tn_neg = false;
  double tau = 0.07;

  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double grad_clip = 0.0;  // off by default
  int epochs_phase1 = 50, epochs_phase2 = 50;
  Curriculum curriculum = Curriculum::kOn;
  AudioFormat audio = AudioFormat::kAmbisonics;
  TranslatorMode translator = TranslatorMode::kTransformer;
  int translator_depth = 2;

  // data geometry
  double width = 1.0;  // encoder width multiplier
  int video_size = 112;
  int video_frames = 8;
  double clip_seconds = 0.5;
  double audio_seconds = 1.0;
  int n_mels = 128;
  double min_sep_deg = 36.0;
  double lat_bound_deg = 60.0;

  uint64_t seed = 0;

  int audio_channels() const { return audio_channel_count(audio); }

  void validate() const {
    if (bs < 2) throw ConfigError("TrainConfig: bs must be >= 2");
    if (nv < 1) throw ConfigError("TrainConfig: nv must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be positive");
    if (wd < 0.0) throw ConfigError("TrainConfig: wd must be >= 0");
    if (!(hf >= 0.0 && hf <= 1.0)) throw ConfigError("TrainConfig: hf must be in [0,1]");
    if (!(hfov_min_deg > 0.0 && hfov_min_deg <= hfov_max_deg && hfov_max_deg < 180.0))
      throw ConfigError("TrainConfig: hfov range must satisfy 0 < min <= max < 180");
    if (!(tau > 0.0)) throw ConfigError("TrainConfig: tau must be positive");
    if (!in_neg) throw ConfigError("TrainConfig: instance negatives cannot be disabled");
    if (epochs_phase1 < 0 || epochs_phase2 < 0 || epochs_phase1 + epochs_phase2 < 1)
      throw ConfigError("TrainConfig: need at least one epoch");
    if (video_size < 8 || video_frames < 1)
      throw ConfigError("TrainConfig: video clip too small");
    if (clip_seconds <= 0.0 || audio_seconds <= 0.0)
      throw ConfigError("TrainConfig: clip durations must be positive");
    if (n_mels < 8) throw ConfigError("TrainConfig: n_mels must be >= 8");
    if (!(width > 0.0)) throw ConfigError("TrainConfig: width must be positive");
    if (translator_depth < 1) throw ConfigError("TrainConfig: translator_depth >= 1");
  }
};

// Per-mode negative flags and batch geometry from the published table:
// AVC bs=112 nv=1 in; AVTS bs=28 nv=4 in+tn; AVSA bs=28 nv=4 in+sn.
inline void apply_mode_defaults(TrainConfig& c) {
  switch (c.mode) {
    case PretrainMode::kAvc:
      c.bs = 112;
      c.nv = 1;
      c.sn_neg = false;
      c.tn_neg = false;
      c.curriculum = Curriculum::kEasyOnly;
      break;
    case PretrainMode::kAvts:
      c.bs = 28;
      c.nv = 4;
      c.sn_neg = false;
      c.tn_neg = true;
      break;
    case PretrainMode::kAvsa:
      c.bs = 28;
      c.nv = 4;
      c.sn_neg = true;
      c.tn_neg = false;
      break;
  }
}

// Scaled-down preset that trains in minutes on one core: 1/8-width
// encoders, 56 px crops at 8 fps, 64 mel bins over half-second audio.
inline void apply_desk_preset(TrainConfig& c) {
  c.width = 0.125;
  c.video_size = 56;
  c.video_frames = 4;
  c.clip_seconds = 0.5;
  c.audio_seconds = 0.5;
  c.n_mels = 64;
  c.bs = 14;
  c.epochs_phase1 = 4;
  c.epochs_phase2 = 4;
}

inline PretrainMode parse_pretrain_mode(const std::string& s) {
  if (s == "avc") return PretrainMode::kAvc;
  if (s == "avts") return PretrainMode::kAvts;
  if (s == "avsa") return PretrainMode::kAvsa;
  throw ConfigError("unknown pretrain mode: " + s);
}

inline Curriculum parse_curriculum(const std::string& s) {
  if (s == "on") return Curriculum::kOn;
  if (s == "off") return Curriculum::kOff;
  if (s == "easy-only") return Curriculum::kEasyOnly;
  if (s == "hard-only") return Curriculum::kHardOnly;
  throw ConfigError("unknown curriculum variant: " + s);
}

inline AudioFormat parse_audio_format(const std::string& s) {
  if (s == "ambisonics") return AudioFormat::kAmbisonics;
  if (s == "stereo") return AudioFormat::kStereo;
  if (s == "mono") return AudioFormat::kMono;
  throw ConfigError("unknown audio format: " + s);
}

inline TranslatorMode parse_translator_mode(const std::string& s) {
  if (s == "transformer") return TranslatorMode::kTransformer;
  if (s == "mlp") return TranslatorMode::kPerClipMlp;
  if (s == "identity") return TranslatorMode::kIdentity;
  throw ConfigError("unknown translator mode: " + s);
}

inline const char* to_string(PretrainMode m) {
  switch (m) {
    case PretrainMode::kAvc: return "avc";
    case PretrainMode::kAvts: return "avts";
    default: return "avsa";
  }
}

inline const char* to_string(Curriculum c) {
  switch (c) {
    case Curriculum::kOn: return "on";
    case Curriculum::kOff: return "off";
    case Curriculum::kEasyOnly: return "easy-only";
    default: return "hard-only";
  }
}

inline const char* to_string(AudioFormat f) {
  switch (f) {
    case AudioFormat::kAmbisonics: return "ambisonics";
    case AudioFormat::kStereo: return "stereo";
    default: return "mono";
  }
}

inline const char* to_string(TranslatorMode m) {
  switch (m) {
    case TranslatorMode::kTransformer: return "transformer";
    case TranslatorMode::kPerClipMlp: return "mlp";
    default: return "identity";
  }
}

// Resolution order: preset, then mode defaults, then explicit keys.
inline TrainConfig parse_train_config(const KeyValueConfig& kv) {
  TrainConfig c;
  c.mode = parse_pretrain_mode(kv.get_string("mode", "avsa"));
  apply_mode_defaults(c);
  const std::string preset = kv.get_string("preset", "desk");
  if (preset == "desk")
    apply_desk_preset(c);
  else if (preset != "paper")
    throw ConfigError("unknown preset: " + preset);

  c.bs = kv.get_int("bs", c.bs);
  c.nv = kv.get_int("nv", c.nv);
  c.lr = kv.get_double("lr", c.lr);
  c.wd = kv.get_double("wd", c.wd);
  c.cj = kv.get_bool("cj", c.cj);
  c.hf = kv.get_double("hf", c.hf);
  c.hfov_min_deg = kv.get_double("hfov_min", c.hfov_min_deg);
  c.hfov_max_deg = kv.get_double("hfov_max", c.hfov_max_deg);
  c.in_neg = kv.get_bool("in", c.in_neg);
  c.sn_neg = kv.get_bool("sn", c.sn_neg);
  c.tn_neg = kv.get_bool("tn", c.tn_neg);
  c.tau = kv.get_double("tau", c.tau);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
  c.epochs_phase1 = kv.get_int("epochs_phase1", c.epochs_phase1);
  c.epochs_phase2 = kv.get_int("epochs_phase2", c.epochs_phase2);
  c.curriculum = parse_curriculum(kv.get_string("curriculum", to_string(c.curriculum)));
  c.audio = parse_audio_format(kv.get_string("audio", to_string(c.audio)));
  c.translator = parse_translator_mode(kv.get_string("translator", to_string(c.translator)));
  c.translator_depth = kv.get_int("translator_depth", c.translator_depth);
  c.width = kv.get_double("width", c.width);
  c.video_size = kv.get_int("video_size", c.video_size);
  c.video_frames = kv.get_int("video_frames", c.video_frames);
  c.clip_seconds = kv.get_double("clip_seconds", c.clip_seconds);
  c.audio_seconds = kv.get_double("audio_seconds", c.audio_seconds);
  c.n_mels = kv.get_int("n_mels", c.n_mels);
  c.min_sep_deg = kv.get_double("min_sep", c.min_sep_deg);
  c.lat_bound_deg = kv.get_double("lat_bound", c.lat_bound_deg);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

// Every field written explicitly, so re-parsing reproduces the exact
// config regardless of mode or preset defaults.
inline KeyValueConfig to_key_values(const TrainConfig& c) {
  KeyValueConfig kv;
  const auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv.set("mode", to_string(c.mode));
  kv.set("preset", "paper");  // inert: all keys below are explicit
  kv.set("bs", std::to_string(c.bs));
  kv.set("nv", std::to_string(c.nv));
  kv.set("lr", num(c.lr));
  kv.set("wd", num(c.wd));
  kv.set("cj", c.cj ? "on" : "off");
  kv.set("hf", num(c.hf));
  kv.set("hfov_min", num(c.hfov_min_deg));
  kv.set("hfov_max", num(c.hfov_max_deg));
  kv.set("in", c.in_neg ? "on" : "off");
  kv.set("sn", c.sn_neg ? "on" : "off");
  kv.set("tn", c.tn_neg ? "on" : "off");
  kv.set("tau", num(c.tau));
  kv.set("beta1", num(c.beta1));
  kv.set("beta2", num(c.beta2));
  kv.set("grad_clip", num(c.grad_clip));
  kv.set("epochs_phase1", std::to_string(c.epochs_phase1));
  kv.set("epochs_phase2", std::to_string(c.epochs_phase2));
  kv.set("curriculum", to_string(c.curriculum));
  kv.set("audio", to_string(c.audio));
  kv.set("translator", to_string(c.translator));
  kv.set("translator_depth", std::to_string(c.translator_depth));
  kv.set("width", num(c.width));
  kv.set("video_size", std::to_string(c.video_size));
  kv.set("video_frames", std::to_string(c.video_frames));
  kv.set("clip_seconds", num(c.clip_seconds));
  kv.set("audio_seconds", num(c.audio_seconds));
  kv.set("n_mels", std::to_string(c.n_mels));
  kv.set("min_sep", num(c.min_sep_deg));
  kv.set("lat_bound", num(c.lat_bound_deg));
  kv.set("seed", std::to_string(c.seed));
  return kv;
}

inline std::string to_config_text(const KeyValueConfig& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv.values()) os << k << " " << v << "\n";
  return os.str();
}

}  // namespace avsa
