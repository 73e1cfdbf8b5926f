// Command-line front end: synthetic data generation, curriculum
// pretraining, binary evaluation, artifact inspection, gradient checks
// and small ablation sweeps over one experiment axis.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "avsa/eval.hpp"
#include "avsa/gradcheck.hpp"
#include "avsa/trainer.hpp"

namespace fs = std::filesystem;
using namespace avsa;

namespace {

constexpr const char* kVersion = "1.0.0";

int64_t unix_now(bool deterministic) {
  if (deterministic) return 0;
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_run_manifest(const std::string& out_dir, const std::string& subcommand,
                        const KeyValueConfig& resolved,
                        const std::vector<std::string>& overrides, uint64_t seed,
                        bool deterministic, int64_t start, int64_t end) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["version"] = kVersion;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["start_time"] = start;
  j["end_time"] = end;
  j["overrides"] = overrides;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : resolved.values()) cfg[k] = v;
  j["config"] = cfg;
  std::ofstream os(fs::path(out_dir) / "run_manifest.json");
  if (!os) throw DataError("cannot write run manifest in " + out_dir);
  os << j.dump(2) << "\n";
}

void apply_overrides(KeyValueConfig& kv, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

void reject_unknown_keys(const KeyValueConfig& kv) {
  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw ConfigError("unknown config key: " + unused.front());
}

void set_worker_count(int workers, bool deterministic) {
  if (deterministic) workers = 1;
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#endif
}

BinaryTask parse_task(const std::string& s) {
  if (s == "avc-bin") return BinaryTask::kAvcBin;
  if (s == "avsa-bin") return BinaryTask::kAvsaBin;
  throw ConfigError("unknown task: " + s);
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int n_train = 8, n_test = 2;
  uint64_t seed = 0;
  ScenePreset preset;
};

int run_gen_data(const GenDataArgs& a, bool dry_run) {
  if (a.n_train < 1 || a.n_test < 1)
    throw ConfigError("gen-data: need at least one scene per split");
  if (a.preset.height < 8 || a.preset.fps <= 0.0 || a.preset.duration <= 0.0 ||
      a.preset.sample_rate <= 0.0)
    throw ConfigError("gen-data: invalid scene preset");
  if (a.preset.min_sources < 0 || a.preset.max_sources < a.preset.min_sources)
    throw ConfigError("gen-data: invalid source count range");

  KeyValueConfig resolved;
  resolved.set("train", std::to_string(a.n_train));
  resolved.set("test", std::to_string(a.n_test));
  resolved.set("height", std::to_string(a.preset.height));
  resolved.set("fps", std::to_string(a.preset.fps));
  resolved.set("duration", std::to_string(a.preset.duration));
  resolved.set("sample_rate", std::to_string(a.preset.sample_rate));
  resolved.set("min_sources", std::to_string(a.preset.min_sources));
  resolved.set("max_sources", std::to_string(a.preset.max_sources));
  resolved.set("classes", std::to_string(a.preset.n_classes));
  resolved.set("disk_radius_deg", std::to_string(a.preset.disk_radius_deg));

  if (dry_run) {
    std::cout << "dry run: would write " << a.n_train << "+" << a.n_test
              << " scenes to " << a.out << "\n";
    return 0;
  }
  const int64_t start = unix_now(false);
  const DatasetManifest manifest =
      write_scene_dataset(a.out, a.n_train, a.n_test, a.preset, a.seed);
  write_run_manifest(a.out, "gen-data", resolved, {}, a.seed, false, start,
                     unix_now(false));
  std::cout << "wrote " << manifest.records.size() << " scenes to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
  std::string data, out, config_path, mode;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false, mode_given = false;
  bool wall_clock = false, no_epoch_checkpoints = false;
  int workers = 0;
};

int run_pretrain(const PretrainArgs& a, bool dry_run) {
  KeyValueConfig kv = a.config_path.empty() ? KeyValueConfig()
                                            : KeyValueConfig::from_file(a.config_path);
  std::vector<std::string> overrides = a.sets;
  if (a.mode_given) {
    kv.set("mode", a.mode);
    overrides.push_back("mode=" + a.mode);
  }
  if (a.seed_given) {
    kv.set("seed", std::to_string(a.seed));
    overrides.push_back("seed=" + std::to_string(a.seed));
  }
  apply_overrides(kv, a.sets);
  const int workers = a.workers > 0 ? a.workers : kv.get_int("workers", 0);
  const TrainConfig cfg = parse_train_config(kv);
  reject_unknown_keys(kv);

  const bool deterministic = !a.wall_clock;
  set_worker_count(workers, deterministic);
  const KeyValueConfig resolved = to_key_values(cfg);
  if (dry_run) {
    std::cout << to_config_text(resolved);
    return 0;
  }

  const DatasetManifest manifest = load_manifest(a.data);
  fs::create_directories(a.out);
  {
    std::ofstream os(fs::path(a.out) / "config.txt");
    if (!os) throw DataError("cannot write config in " + a.out);
    os << to_config_text(resolved);
  }
  const int64_t start = unix_now(deterministic);
  PretextModel model(cfg);
  const TrainOutcome outcome =
      curriculum_train(model, manifest, a.out, deterministic, !a.no_epoch_checkpoints);
  write_run_manifest(a.out, "pretrain", resolved, overrides, cfg.seed, deterministic,
                     start, unix_now(deterministic));
  std::cout << "final loss " << outcome.final_loss << "\n"
            << "checkpoint " << outcome.final_checkpoint << "\n"
            << "metrics " << outcome.metrics_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalBinArgs {
  std::string data, model_dir, checkpoint, out, task = "avsa-bin", split = "test";
  int viewpoints = 4, pairs_per_scene = 4, head_epochs = 10;
  double head_lr = 1e-3, min_yaw_deg = 36.0;
  uint64_t seed = 0;
};

PretextModel load_pretrained(const std::string& model_dir,
                             const std::string& checkpoint) {
  const KeyValueConfig kv =
      KeyValueConfig::from_file((fs::path(model_dir) / "config.txt").string());
  PretextModel model(parse_train_config(kv));
  const std::string ckpt =
      checkpoint.empty() ? (fs::path(model_dir) / "final.ckpt").string() : checkpoint;
  load_checkpoint(ckpt, model.store);
  return model;
}

int run_eval_bin(const EvalBinArgs& a, bool dry_run) {
  BinaryEvalConfig ecfg;
  ecfg.task = parse_task(a.task);
  ecfg.n_viewpoints = a.viewpoints;
  ecfg.pairs_per_scene = a.pairs_per_scene;
  ecfg.head_epochs = a.head_epochs;
  ecfg.head_lr = a.head_lr;
  ecfg.min_yaw = deg2rad(a.min_yaw_deg);
  ecfg.seed = a.seed;
  if (a.viewpoints < 1 || a.pairs_per_scene < 1 || a.head_epochs < 1)
    throw ConfigError("eval-bin: counts must be positive");
  if (!(ecfg.min_yaw > 0.0 && ecfg.min_yaw < kPi))
    throw ConfigError("eval-bin: min yaw must be in (0, 180) degrees");

  KeyValueConfig resolved;
  resolved.set("task", a.task);
  resolved.set("viewpoints", std::to_string(a.viewpoints));
  resolved.set("pairs_per_scene", std::to_string(a.pairs_per_scene));
  resolved.set("head_epochs", std::to_string(a.head_epochs));
  resolved.set("min_yaw_deg", std::to_string(a.min_yaw_deg));
  resolved.set("split", a.split);
  resolved.set("model", a.model_dir);
  resolved.set("data", a.data);

  if (dry_run) {
    std::cout << "dry run: would evaluate " << a.task << "@" << a.viewpoints
              << " with model " << a.model_dir << " on " << a.data << "\n";
    return 0;
  }

  const int64_t start = unix_now(true);
  PretextModel model = load_pretrained(a.model_dir, a.checkpoint);
  const DatasetManifest manifest = load_manifest(a.data);
  const EvalResult r = evaluate_binary(model, manifest, ecfg, a.split);
  if (r.pretext_hash_before != r.pretext_hash_after)
    throw NumericError("eval-bin: pretext parameters moved during evaluation");

  const std::string table = format_results_table(
      {{a.task, to_string(model.cfg.mode), a.viewpoints, r.accuracy}});
  std::cout << table;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream os(fs::path(a.out) / "results.txt");
    if (!os) throw DataError("cannot write results in " + a.out);
    os << table;
    write_run_manifest(a.out, "eval-bin", resolved, {}, a.seed, true, start,
                       unix_now(true));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint, mel_wav, out;
  int n_mels = 128;
};

int run_inspect(const InspectArgs& a, bool dry_run) {
  if (a.checkpoint.empty() == a.mel_wav.empty())
    throw ConfigError("inspect: pass exactly one of --checkpoint or --mel");
  if (!a.mel_wav.empty() && a.out.empty())
    throw ConfigError("inspect: --mel needs --out for the tensor file");
  if (dry_run) {
    std::cout << "dry run: inspect arguments are valid\n";
    return 0;
  }

  if (!a.checkpoint.empty()) {
    // enumerate the archive without needing a matching model
    std::ifstream is(a.checkpoint, std::ios::binary);
    if (!is) throw DataError("inspect: cannot open " + a.checkpoint);
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != std::string(kCheckpointMagic, 4))
      throw DataError("inspect: not a checkpoint file: " + a.checkpoint);
    const uint32_t count = detail::read_u32(is);
    size_t total = 0;
    for (uint32_t i = 0; i < count; ++i) {
      const uint32_t len = detail::read_u32(is);
      if (!is || len > 4096)
        throw DataError("inspect: bad entry name in " + a.checkpoint);
      std::string name(len, '\0');
      is.read(name.data(), len);
      const bool trainable = is.get() != 0;
      const auto [shape, data] = detail::read_tensor_payload(is, a.checkpoint);
      total += data.size();
      std::cout << name << "  [";
      for (size_t d = 0; d < shape.size(); ++d)
        std::cout << (d ? "," : "") << shape[d];
      std::cout << "]" << (trainable ? "" : "  frozen") << "\n";
    }
    std::cout << count << " tensors, " << total << " parameters, file hash "
              << file_hash(a.checkpoint) << "\n";
    return 0;
  }

  const WavData wav = read_wav(a.mel_wav);
  MelParams mp;
  mp.sample_rate = wav.sample_rate;
  mp.n_mels = a.n_mels;
  const MelSpectrogram mel = log_mel(wav.samples, mp);
  write_tensor_file(a.out, {mel.channels, mel.bins, mel.frames}, mel.values);
  std::cout << "wrote [" << mel.channels << "," << mel.bins << "," << mel.frames
            << "] spectrogram to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_grad_check(double tol, bool dry_run) {
  if (dry_run) {
    std::cout << "dry run: would check loss gradients at tolerance " << tol << "\n";
    return 0;
  }
  using T = double;
  Rng rng(17);
  bool ok = true;
  auto report = [&](const char* name, const GradCheckReport& r) {
    const bool pass = r.pass(tol);
    ok = ok && pass;
    std::printf("%-24s max_rel_err %.3e  %s\n", name, r.max_rel_err,
                pass ? "PASS" : "FAIL");
  };

  {
    ParamStore<T> store;
    ProjectionHead<T> pv(store, "pv", 5, 4, rng), pa(store, "pa", 5, 4, rng);
    Tensor<T> v = Tensor<T>::leaf({3, 5}, true), u = Tensor<T>::leaf({3, 5}, true);
    for (double& x : v.value()) x = rng.uniform(-1.0, 1.0);
    for (double& x : u.value()) x = rng.uniform(-1.0, 1.0);
    report("avc_loss",
           grad_check<T>([&] { return avc_loss(v, u, pv, pa, T(0.1)); },
                         {{"v", v}, {"u", u}, {"pv", pv.weight}, {"pa", pa.weight}}));
  }
  {
    const int d = 6, n = 2, k = 2;
    ParamStore<T> store;
    ProjectionHead<T> pv(store, "pv", d, 4, rng), pa(store, "pa", d, 4, rng);
    const TranslatorConfig tc{1, d, 2, TranslatorMode::kTransformer};
    Translator<T> v2a(store, "g_v2a", tc, rng), a2v(store, "g_a2v", tc, rng);
    Tensor<T> v = Tensor<T>::leaf({n * k, d}, true);
    Tensor<T> u = Tensor<T>::leaf({n * k, d}, true);
    for (double& x : v.value()) x = rng.uniform(-1.0, 1.0);
    for (double& x : u.value()) x = rng.uniform(-1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<T>>> params{{"v", v}, {"u", u}};
    for (auto& e : store.entries()) params.emplace_back(e.name, e.tensor);
    report("avsa_loss",
           grad_check<T>(
               [&] { return avsa_loss(v, u, n, k, v2a, a2v, pv, pa, T(0.1)); },
               params, 4));
  }
  {
    const int d = 5;
    ParamStore<T> store;
    const TranslatorConfig tc{2, d, 2, TranslatorMode::kTransformer};
    Translator<T> g(store, "g", tc, rng);
    Tensor<T> x = Tensor<T>::leaf({3, d}, true);
    for (double& v : x.value()) v = rng.uniform(-1.0, 1.0);
    std::vector<std::pair<std::string, Tensor<T>>> params{{"x", x}};
    for (auto& e : store.entries()) params.emplace_back(e.name, e.tensor);
    report("translator",
           grad_check<T>([&] { return sum_all(g.forward(x)); }, params, 4));
  }

  if (!ok) throw NumericError("grad-check: at least one gradient check failed");
  std::cout << "all gradient checks passed\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string data, out, axis, config_path;
  std::vector<std::string> sets;
  int viewpoints = 4;
};

int run_ablate(const AblateArgs& a, bool dry_run) {
  // variants along one published ablation axis, as config deltas
  std::vector<std::pair<std::string, std::vector<std::string>>> variants;
  if (a.axis == "audio") {
    variants = {{"ambisonics", {"audio=ambisonics"}},
                {"stereo", {"audio=stereo"}},
                {"mono", {"audio=mono"}}};
  } else if (a.axis == "viewpoints") {
    variants = {{"nv2", {"nv=2"}}, {"nv4", {"nv=4"}}};
  } else if (a.axis == "negatives") {
    variants = {{"avc", {"mode=avc"}}, {"avts", {"mode=avts"}}, {"avsa", {"mode=avsa"}}};
  } else if (a.axis == "curriculum") {
    variants = {{"on", {"curriculum=on"}},
                {"off", {"curriculum=off"}},
                {"easy-only", {"curriculum=easy-only"}},
                {"hard-only", {"curriculum=hard-only"}}};
  } else if (a.axis == "depth") {
    variants = {{"depth1", {"translator_depth=1"}},
                {"depth2", {"translator_depth=2"}},
                {"depth4", {"translator_depth=4"}}};
  } else {
    throw ConfigError("unknown ablation axis: " + a.axis);
  }

  // resolve every variant config up front so --dry-run validates the sweep
  std::vector<std::pair<std::string, TrainConfig>> resolved;
  for (const auto& [name, deltas] : variants) {
    KeyValueConfig kv = a.config_path.empty()
                            ? KeyValueConfig()
                            : KeyValueConfig::from_file(a.config_path);
    apply_overrides(kv, a.sets);
    apply_overrides(kv, deltas);
    const TrainConfig cfg = parse_train_config(kv);
    reject_unknown_keys(kv);
    resolved.emplace_back(name, cfg);
  }
  if (dry_run) {
    for (const auto& [name, cfg] : resolved)
      std::cout << "dry run: variant " << name << " mode " << to_string(cfg.mode)
                << "\n";
    return 0;
  }

  set_worker_count(1, true);
  const DatasetManifest manifest = load_manifest(a.data);
  const int64_t start = unix_now(true);
  std::vector<ResultRow> rows;
  for (const auto& [name, cfg] : resolved) {
    const std::string vdir = (fs::path(a.out) / name).string();
    fs::create_directories(vdir);
    {
      std::ofstream os(fs::path(vdir) / "config.txt");
      os << to_config_text(to_key_values(cfg));
    }
    PretextModel model(cfg);
    curriculum_train(model, manifest, vdir, true, false);
    BinaryEvalConfig ecfg;
    ecfg.task = BinaryTask::kAvsaBin;
    ecfg.n_viewpoints = a.viewpoints;
    ecfg.seed = cfg.seed;
    const EvalResult r = evaluate_binary(model, manifest, ecfg, "test");
    rows.push_back({"avsa-bin", name, a.viewpoints, r.accuracy});
  }
  const std::string table = format_results_table(rows);
  std::cout << table;
  std::ofstream os(fs::path(a.out) / "results.txt");
  if (!os) throw DataError("cannot write results in " + a.out);
  os << table;
  KeyValueConfig rk;
  rk.set("axis", a.axis);
  rk.set("viewpoints", std::to_string(a.viewpoints));
  write_run_manifest(a.out, "ablate", rk, a.sets, 0, true, start, unix_now(true));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio-visual spatial alignment toolkit"};
  app.require_subcommand(1);
  bool dry_run = false;

  GenDataArgs gd;
  CLI::App* gen = app.add_subcommand("gen-data", "render a synthetic scene dataset");
  gen->add_option("--out", gd.out, "output directory")->required();
  gen->add_option("--train", gd.n_train, "training scenes");
  gen->add_option("--test", gd.n_test, "held-out scenes");
  gen->add_option("--seed", gd.seed, "generator seed");
  gen->add_option("--height", gd.preset.height, "equirect height in pixels");
  gen->add_option("--fps", gd.preset.fps, "frames per second");
  gen->add_option("--duration", gd.preset.duration, "seconds per scene");
  gen->add_option("--sample-rate", gd.preset.sample_rate, "audio sample rate");
  gen->add_option("--min-sources", gd.preset.min_sources, "fewest sources per scene");
  gen->add_option("--max-sources", gd.preset.max_sources, "most sources per scene");
  gen->add_option("--classes", gd.preset.n_classes, "source classes to draw from");
  gen->add_option("--disk-radius", gd.preset.disk_radius_deg,
                  "source disk radius in degrees");
  gen->add_flag("--dry-run", dry_run, "validate without writing");

  PretrainArgs pt;
  CLI::App* pre = app.add_subcommand("pretrain", "run curriculum pretraining");
  pre->add_option("--data", pt.data, "dataset directory")->required();
  pre->add_option("--out", pt.out, "output directory")->required();
  pre->add_option("--config", pt.config_path, "key-value config file");
  pre->add_option("--set", pt.sets, "override a config key (key=value)");
  CLI::Option* mode_opt =
      pre->add_option("--mode", pt.mode, "pretext mode: avc | avts | avsa");
  CLI::Option* seed_opt = pre->add_option("--seed", pt.seed, "training seed");
  pre->add_flag("--wall-clock", pt.wall_clock,
                "record wall time; forfeits byte-identical reruns");
  pre->add_flag("--no-epoch-checkpoints", pt.no_epoch_checkpoints,
                "keep only the final checkpoint");
  pre->add_option("--workers", pt.workers, "worker threads (0 = physical cores)");
  pre->add_flag("--dry-run", dry_run, "print the resolved config and stop");

  EvalBinArgs eb;
  CLI::App* ev = app.add_subcommand("eval-bin", "binary evaluation on frozen features");
  ev->add_option("--data", eb.data, "dataset directory")->required();
  ev->add_option("--model", eb.model_dir, "pretrain output directory")->required();
  ev->add_option("--task", eb.task, "avc-bin | avsa-bin");
  ev->add_option("--viewpoints", eb.viewpoints, "viewpoints averaged per prediction");
  ev->add_option("--pairs-per-scene", eb.pairs_per_scene, "evaluation pairs per scene");
  ev->add_option("--head-epochs", eb.head_epochs, "binary head training epochs");
  ev->add_option("--head-lr", eb.head_lr, "binary head learning rate");
  ev->add_option("--min-yaw-deg", eb.min_yaw_deg, "smallest negative rotation");
  ev->add_option("--split", eb.split, "dataset split to evaluate");
  ev->add_option("--checkpoint", eb.checkpoint, "checkpoint (default final.ckpt)");
  ev->add_option("--seed", eb.seed, "evaluation seed");
  ev->add_option("--out", eb.out, "directory for results.txt");
  ev->add_flag("--dry-run", dry_run, "validate without evaluating");

  InspectArgs in;
  CLI::App* ins = app.add_subcommand("inspect", "examine checkpoints and audio");
  ins->add_option("--checkpoint", in.checkpoint, "list tensors in a checkpoint");
  ins->add_option("--mel", in.mel_wav, "dump a wav's log-mel spectrogram");
  ins->add_option("--out", in.out, "tensor file for --mel");
  ins->add_option("--mels", in.n_mels, "mel bins for --mel");
  ins->add_flag("--dry-run", dry_run, "validate without writing");

  double tol = 1e-3;
  CLI::App* gc = app.add_subcommand("grad-check", "finite-difference gradient audit");
  gc->add_option("--tol", tol, "maximum relative error");
  gc->add_flag("--dry-run", dry_run, "validate without running");

  AblateArgs ab;
  CLI::App* abl = app.add_subcommand("ablate", "sweep one experiment axis");
  abl->add_option("--data", ab.data, "dataset directory")->required();
  abl->add_option("--out", ab.out, "output directory")->required();
  abl->add_option("--axis", ab.axis,
                  "audio | viewpoints | negatives | curriculum | depth")
      ->required();
  abl->add_option("--config", ab.config_path, "base key-value config file");
  abl->add_option("--set", ab.sets, "override a config key (key=value)");
  abl->add_option("--viewpoints", ab.viewpoints, "evaluation viewpoints");
  abl->add_flag("--dry-run", dry_run, "list the sweep without training");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(gd, dry_run);
    if (pre->parsed()) {
      pt.mode_given = mode_opt->count() > 0;
      pt.seed_given = seed_opt->count() > 0;
      return run_pretrain(pt, dry_run);
    }
    if (ev->parsed()) return run_eval_bin(eb, dry_run);
    if (ins->parsed()) return run_inspect(in, dry_run);
    if (gc->parsed()) return run_grad_check(tol, dry_run);
    if (abl->parsed()) return run_ablate(ab, dry_run);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
