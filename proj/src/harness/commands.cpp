// Copyright 2026 The RG-Fusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "rgf/architectures.hpp"
#include "rgf/container.hpp"
#include "rgf/coopsim.hpp"
#include "rgf/harness.hpp"
#include "rgf/payload.hpp"

namespace rgf::harness {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kEvalFrameOffset = 100000;
constexpr std::size_t kPayloadFrameOffset = 200000;
constexpr const char* kDatasetFormat = "rgfusion-dataset";

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Runs fn(i) for i in [0, n) on worker threads; the first failure by index is
// rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Modality> mix_or_config_error(const std::string& mix, std::size_t agents) {
  try {
    return parse_modality_mix(mix, agents);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Architecture architecture_of(const std::string& name) {
  try {
    return parse_architecture(name);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ModelConfig model_config(const std::string& preset, Architecture arch) {
  ModelConfig mc;
  mc.arch = arch;
  if (preset == "paper") {
    mc.bev = BevSpec::from_extent(-51.2, 51.2, -25.6, 25.6, 0.4);  // 128 x 256
    mc.c1 = 64;
    mc.cam_h2 = 144;
    mc.cam_w2 = 256;
  }
  mc.validate();
  return mc;
}

SceneConfig scene_config(const std::string& preset, const ExperimentConfig& cfg, std::uint64_t seed,
                         std::size_t frame_id, std::size_t agents) {
  const ModelConfig mc = model_config(preset, Architecture::ptp);
  SceneConfig sc;
  sc.n_agents = agents;
  sc.modalities = mix_or_config_error(cfg.train_mix, agents);
  sc.n_boxes = cfg.n_boxes;
  sc.n_distractors = cfg.n_distractors;
  sc.bounds = {mc.bev.x_min, mc.bev.x_max, mc.bev.y_min, mc.bev.y_max};
  sc.camera_h2 = mc.cam_h2;
  sc.camera_w2 = mc.cam_w2;
  sc.seed = seed;
  sc.frame_id = frame_id;
  return sc;
}

ObserveConfig observe_config(std::uint64_t data_seed, std::vector<Modality> mods, const PoseNoiseModel& noise) {
  ObserveConfig oc;
  oc.lidar.seed = data_seed;
  oc.noise = noise;
  oc.modalities = std::move(mods);
  return oc;
}

struct Dataset {
  std::uint64_t seed = 0;
  std::string preset;
  std::size_t agents = 0;
  std::vector<Scene> train;
  std::vector<Scene> eval;
};

Dataset load_dataset(const fs::path& dir, bool need_train, bool need_eval) {
  const fs::path manifest = dir / "dataset.json";
  if (!fs::exists(manifest)) throw ConfigError("no dataset at " + dir.string() + " (dataset.json missing)");
  const auto j = read_json(manifest);
  if (j.value("format", "") != kDatasetFormat) throw ConfigError(manifest.string() + " is not a dataset manifest");
  Dataset ds;
  ds.seed = j.at("seed").get<std::uint64_t>();
  ds.preset = j.at("preset").get<std::string>();
  ds.agents = j.at("agents").get<std::size_t>();
  auto load = [&](const char* key, std::vector<Scene>& out) {
    const auto& names = j.at(key);
    out.resize(names.size());
    parallel_for(names.size(), [&](std::size_t i) {
      try {
        out[i] = scene_from_json(read_json(dir / names[i].get<std::string>()));
      } catch (const ContractError& e) {
        throw ConfigError(names[i].get<std::string>() + ": " + e.what());
      }
    });
  };
  if (need_train) load("train", ds.train);
  if (need_eval) load("eval", ds.eval);
  return ds;
}

OptimizerConfig optimizer_config(const ExperimentConfig& cfg) {
  OptimizerConfig oc;
  oc.kind = cfg.optimizer == "sgd" ? OptimizerConfig::Kind::sgd : OptimizerConfig::Kind::adam;
  oc.learning_rate = cfg.learning_rate;
  return oc;
}

DType precision_of(const std::string& name) { return name == "f32" ? DType::f32 : DType::f16; }

struct LoadedModel {
  std::string preset;
  Model model;
};

LoadedModel load_model(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.params();
  const auto meta = read_json(dir / "model.json");
  const std::string arch_name = meta.at("architecture").get<std::string>();
  if (arch_name != cfg.architecture)
    throw ConfigError("parameters in " + dir.string() + " belong to architecture '" + arch_name +
                      "', config asks for '" + cfg.architecture + "'");
  const Architecture arch = architecture_of(arch_name);
  LoadedModel out;
  out.preset = meta.at("preset").get<std::string>();
  out.model = make_model(model_config(out.preset, arch), 0);
  ParameterManifest manifest;
  try {
    manifest = load_parameters(dir / "params", out.model.store);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("cannot load parameters: ") + e.what());
  }
  if (manifest.architecture != arch_name || manifest.config_hash != out.model.cfg.hash())
    throw ConfigError("parameter manifest in " + dir.string() + " does not match the " + arch_name + " model");
  return out;
}

// Feature maps a cooperator would broadcast for fusion at the ego.
std::vector<std::pair<PayloadKind, Tensor>> cooperator_payloads(const Model& m, const AgentObservation& a) {
  NoGradGuard guard;
  std::vector<std::pair<PayloadKind, Tensor>> out;
  const BevSpec& spec = m.cfg.bev;
  auto cameras = [&] {
    std::vector<CameraInput> cams;
    for (std::size_t k = 0; k < a.rigs.size(); ++k)
      cams.push_back({a.agent_id * 64 + k, camera_encode(Var(a.camera_rasters[k]), m.cam_w, m.cam_b),
                      Transform2::identity(), a.rigs[k]});
    return cams;
  };
  const bool lidar = has_lidar(a.modality), camera = has_camera(a.modality);
  switch (m.cfg.arch) {
    case Architecture::lidar:
      if (lidar) out.push_back({PayloadKind::bev_feature, lidar_encode(a.points, spec, m.lidar_w).value()});
      break;
    case Architecture::ptp: {
      Var bev = lidar_encode(a.points, spec, m.lidar_w);
      if (camera) bev = rg_attn_multi(bev, spec, cameras(), m.attn[0], AttnRuntime{});
      out.push_back({PayloadKind::bev_feature, bev.value()});
      break;
    }
    case Architecture::coscoco:
    case Architecture::prgaf:
      if (lidar) out.push_back({PayloadKind::bev_feature, lidar_encode(a.points, spec, m.lidar_w).value()});
      if (camera)
        for (const auto& c : cameras()) out.push_back({PayloadKind::camera_feature, c.features.value()});
      break;
  }
  return out;
}

struct EvalOutcome {
  double ap30 = 0.0, ap50 = 0.0, ap70 = 0.0;
  double payload_raw = 0.0, payload_sent = 0.0;
  double seconds = 0.0;
};

EvalOutcome evaluate(const Model& model, const std::vector<Scene>& scenes, const ObserveConfig& oc, bool payloads,
                     DType precision, bool compress) {
  const auto t0 = Clock::now();
  const std::size_t n = scenes.size();
  std::vector<std::vector<DetectionBox>> dets(n), gts(n);
  std::vector<double> raw(n, 0.0), sent(n, 0.0);
  std::vector<std::size_t> senders(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const Frame f = observe(scenes[i], oc);
    dets[i] = detect(model, f);
    gts[i] = f.gt;
    if (!payloads) return;
    for (const auto& a : f.agents) {
      if (a.agent_id == f.ego_id) continue;
      ++senders[i];
      for (const auto& [kind, t] : cooperator_payloads(model, a)) {
        const auto e = encode_payload(t, kind, precision, compress);
        raw[i] += double(e.stats.raw_bytes);
        sent[i] += double(e.stats.sent_bytes);
      }
    }
  });
  EvalOutcome out;
  out.ap30 = ap_eval(dets, gts, 0.3);
  out.ap50 = ap_eval(dets, gts, 0.5);
  out.ap70 = ap_eval(dets, gts, 0.7);
  double r = 0, s = 0;
  std::size_t agents = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r += raw[i];
    s += sent[i];
    agents += senders[i];
  }
  if (agents) {
    out.payload_raw = r / double(agents);
    out.payload_sent = s / double(agents);
  }
  out.seconds = seconds_since(t0);
  return out;
}

bool mix_supported(Architecture arch, const std::vector<Modality>& mods) {
  std::vector<AgentObservation> probe;
  for (std::size_t i = 0; i < mods.size(); ++i) {
    AgentObservation a;
    a.agent_id = i;
    a.modality = mods[i];
    if (has_camera(mods[i])) {
      a.rigs.push_back(CameraRig{});
      a.camera_rasters.push_back(Tensor({kRawCameraChannels, a.rigs[0].h2, a.rigs[0].w2}));
    }
    probe.push_back(std::move(a));
  }
  try {
    check_capability(arch, probe);
    return true;
  } catch (const CapabilityError&) {
    return false;
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

nlohmann::ordered_json record_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["architecture"] = r.architecture;
  j["modality"] = r.modality;
  j["agents"] = r.agents;
  j["sigma_p"] = r.sigma_p;
  j["sigma_r"] = r.sigma_r;
  j["seed"] = r.seed;
  j["supported"] = r.supported;
  j["ap30"] = r.ap30;
  j["ap50"] = r.ap50;
  j["ap70"] = r.ap70;
  j["frames"] = r.frames;
  j["payload_raw_bytes"] = r.payload_raw_bytes;
  j["payload_sent_bytes"] = r.payload_sent_bytes;
  return j;
}

}  // namespace

GenerateSummary cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  mix_or_config_error(cfg.train_mix, cfg.agents);
  for (const auto& m : cfg.eval_mixes) mix_or_config_error(m, cfg.agents);
  mix_or_config_error(cfg.noise_mix, cfg.agents);
  const fs::path dir = cfg.data_dir;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!cfg.force) throw ConfigError(dir.string() + " is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "eval");
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<std::string> train_names(cfg.train_frames), eval_names(cfg.eval_frames);
  auto write_scene = [&](std::size_t frame_id, const std::string& name) {
    Scene s;
    try {
      s = generate_scene(scene_config(cfg.preset, cfg, seed, frame_id, cfg.agents));
    } catch (const ContractError& e) {
      throw ConfigError(std::string("scene generation failed: ") + e.what());
    }
    write_text(dir / name, scene_to_json(s).dump(1) + "\n");
  };
  auto name_of = [](const char* split, std::size_t id) {
    std::ostringstream s;
    s << split << "/scene_" << std::setw(6) << std::setfill('0') << id << ".json";
    return s.str();
  };
  for (std::size_t i = 0; i < cfg.train_frames; ++i) train_names[i] = name_of("train", i);
  for (std::size_t i = 0; i < cfg.eval_frames; ++i) eval_names[i] = name_of("eval", kEvalFrameOffset + i);
  parallel_for(cfg.train_frames, [&](std::size_t i) { write_scene(i, train_names[i]); });
  parallel_for(cfg.eval_frames, [&](std::size_t i) { write_scene(kEvalFrameOffset + i, eval_names[i]); });

  nlohmann::ordered_json m;
  m["format"] = kDatasetFormat;
  m["version"] = 1;
  m["seed"] = seed;
  m["preset"] = cfg.preset;
  m["agents"] = cfg.agents;
  m["scene_mix"] = cfg.train_mix;
  m["n_boxes"] = cfg.n_boxes;
  m["n_distractors"] = cfg.n_distractors;
  m["train"] = train_names;
  m["eval"] = eval_names;
  write_text(dir / "dataset.json", m.dump(2) + "\n");
  return {cfg.train_frames + cfg.eval_frames, dir};
}

TrainSummary cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  const Architecture arch = architecture_of(cfg.architecture);
  const Dataset ds = load_dataset(cfg.data_dir, true, false);
  if (ds.train.empty()) throw ConfigError("dataset " + cfg.data_dir.string() + " has no training scenes");
  const auto mods = mix_or_config_error(cfg.train_mix, ds.agents);
  const ObserveConfig oc = observe_config(ds.seed, mods, {});
  std::vector<Frame> frames(ds.train.size());
  parallel_for(frames.size(), [&](std::size_t i) { frames[i] = observe(ds.train[i], oc); });
  try {
    check_capability(arch, frames.front().agents);
  } catch (const CapabilityError& e) {
    throw ConfigError(std::string("train_mix: ") + e.what());
  }

  Model model = make_model(model_config(ds.preset, arch), cfg.seeds.front());
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.optimizer = optimizer_config(cfg);
  tc.seed = cfg.seeds.front();
  fs::create_directories(cfg.out_dir);
  const fs::path history = cfg.out_dir / "loss_history.csv";
  write_text(history, "epoch,loss\n");
  tc.on_epoch = [&](std::size_t epoch, double loss) {
    std::ofstream out(history, std::ios::app);
    out << epoch + 1 << ',' << fmt(loss) << '\n';
  };
  const TrainHistory h = train_loop(model, frames, tc);
  TrainSummary out;
  out.epoch_loss = h.epoch_loss;
  out.diverged = h.diverged;
  out.report = h.report;
  if (h.diverged) {
    write_text(cfg.out_dir / "train_report.txt", h.report + "\n");
    out.seconds = seconds_since(t0);
    return out;
  }
  save_parameters(cfg.out_dir / "params", model.store, to_string(arch), model.cfg.hash());
  nlohmann::ordered_json meta;
  meta["architecture"] = to_string(arch);
  meta["preset"] = ds.preset;
  meta["config_hash"] = model.cfg.hash();
  meta["precision"] = precision_name();
  meta["dataset_seed"] = ds.seed;
  meta["train_frames"] = frames.size();
  meta["train_mix"] = cfg.train_mix;
  meta["epochs"] = cfg.epochs;
  meta["optimizer"] = cfg.optimizer;
  meta["learning_rate"] = cfg.learning_rate;
  meta["seed"] = cfg.seeds.front();
  meta["parameters"] = model.store.total_elements();
  write_text(cfg.out_dir / "model.json", meta.dump(2) + "\n");
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<MetricsRecord> cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const LoadedModel lm = load_model(cfg);
  const Dataset ds = load_dataset(cfg.data_dir, false, true);
  if (ds.preset != lm.preset) throw ConfigError("dataset preset '" + ds.preset + "' does not match the model");
  if (ds.eval.empty()) throw ConfigError("dataset " + cfg.data_dir.string() + " has no evaluation scenes");
  for (std::size_t k : cfg.agent_counts)
    if (k > ds.agents) throw ConfigError("agent count " + std::to_string(k) + " exceeds the dataset's agents");
  const Architecture arch = lm.model.cfg.arch;
  std::vector<MetricsRecord> rows;
  std::vector<std::pair<std::string, std::size_t>> seen;
  for (std::size_t k : cfg.agent_counts)
    for (const auto& mix : cfg.eval_mixes) {
      if (std::size_t(std::count(mix.begin(), mix.end(), '+')) + 1 > k) continue;  // needs more agents
      const auto mods = mix_or_config_error(mix, k);
      if (std::find(seen.begin(), seen.end(), std::make_pair(mix, mods.size())) != seen.end()) continue;
      seen.emplace_back(mix, mods.size());
      MetricsRecord r;
      r.architecture = to_string(arch);
      r.modality = mix;
      r.agents = mods.size();
      r.seed = cfg.seeds.front();
      r.frames = ds.eval.size();
      r.supported = mix_supported(arch, mods);
      if (r.supported) {
        const auto e = evaluate(lm.model, ds.eval, observe_config(ds.seed, mods, {}), cfg.eval_payload,
                                precision_of(cfg.payload_precision), cfg.compress);
        r.ap30 = e.ap30;
        r.ap50 = e.ap50;
        r.ap70 = e.ap70;
        r.payload_raw_bytes = e.payload_raw;
        r.payload_sent_bytes = e.payload_sent;
        r.seconds = e.seconds;
        // fused BEV of the first evaluation frame, for heatmap inspection
        NoGradGuard guard;
        const Frame f0 = observe(ds.eval.front(), observe_config(ds.seed, mods, {}));
        std::string tag = mix;
        std::replace(tag.begin(), tag.end(), '+', '_');
        fs::create_directories(cfg.out_dir / "features");
        save_tensor(cfg.out_dir / "features" / ("fused_" + tag + "_" + std::to_string(r.agents) + ".rgt"),
                    fuse_forward(lm.model, f0.agents, f0.ego_id, {}).value(), DType::f32);
      }
      rows.push_back(r);
    }
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "metrics.csv", metrics_csv(rows));
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) j.push_back(record_json(r));
  write_text(cfg.out_dir / "metrics.json", j.dump(2) + "\n");
  std::ostringstream t;
  t << "architecture,modality,agents,seconds\n";
  for (const auto& r : rows) t << r.architecture << ',' << r.modality << ',' << r.agents << ',' << r.seconds << '\n';
  write_text(cfg.out_dir / "timings.csv", t.str());
  return rows;
}

NoiseSweepResult cmd_noise_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.sigma_p.empty()) throw ConfigError("config: the noise sweep needs at least one sigma pair");
  const LoadedModel lm = load_model(cfg);
  const Dataset ds = load_dataset(cfg.data_dir, false, true);
  if (ds.preset != lm.preset) throw ConfigError("dataset preset '" + ds.preset + "' does not match the model");
  const auto mods = mix_or_config_error(cfg.noise_mix, ds.agents);
  if (!mix_supported(lm.model.cfg.arch, mods))
    throw ConfigError(to_string(lm.model.cfg.arch) + " cannot run the noise mix " + cfg.noise_mix);
  NoiseSweepResult out;
  for (std::size_t i = 0; i < cfg.sigma_p.size(); ++i) {
    NoiseSweepRow row;
    row.sigma_p = cfg.sigma_p[i];
    row.sigma_r = cfg.sigma_r[i];
    const bool noiseless = row.sigma_p == 0.0 && row.sigma_r == 0.0;
    std::optional<EvalOutcome> clean;
    double sum50 = 0;
    for (std::uint64_t seed : cfg.seeds) {
      EvalOutcome e;
      // without noise the seed has no effect; evaluate once
      if (noiseless && clean) {
        e = *clean;
      } else {
        e = evaluate(lm.model, ds.eval, observe_config(ds.seed, mods, {row.sigma_p, row.sigma_r, seed}), false,
                     DType::f16, false);
        if (noiseless) clean = e;
      }
      MetricsRecord r;
      r.architecture = to_string(lm.model.cfg.arch);
      r.modality = cfg.noise_mix;
      r.agents = mods.size();
      r.sigma_p = row.sigma_p;
      r.sigma_r = row.sigma_r;
      r.seed = seed;
      r.ap30 = e.ap30;
      r.ap50 = e.ap50;
      r.ap70 = e.ap70;
      r.frames = ds.eval.size();
      r.seconds = e.seconds;
      out.records.push_back(r);
      row.ap30.push_back(e.ap30);
      sum50 += e.ap50;
    }
    const double n = double(row.ap30.size());
    for (double a : row.ap30) row.mean_ap30 += a / n;
    for (double a : row.ap30) row.std_ap30 += (a - row.mean_ap30) * (a - row.mean_ap30) / n;
    row.std_ap30 = std::sqrt(row.std_ap30);
    row.mean_ap50 = sum50 / n;
    out.summary.push_back(row);
  }
  for (std::size_t i = 1; i < out.summary.size(); ++i) {
    const double rise = out.summary[i].mean_ap30 - out.summary[i - 1].mean_ap30;
    if (rise > 0.0) {
      ++out.trend_violations;
      out.worst_increase = std::max(out.worst_increase, rise);
    }
  }
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "noise_sweep.csv", metrics_csv(out.records));
  std::ostringstream s;
  s << "sigma_p,sigma_r,seeds,mean_ap30,std_ap30,mean_ap50\n" << std::setprecision(6) << std::fixed;
  for (const auto& r : out.summary)
    s << r.sigma_p << ',' << r.sigma_r << ',' << r.ap30.size() << ',' << r.mean_ap30 << ',' << r.std_ap30 << ','
      << r.mean_ap50 << '\n';
  write_text(cfg.out_dir / "noise_summary.csv", s.str());
  nlohmann::ordered_json trend;
  trend["non_increasing"] = out.trend_violations == 0;
  trend["violations"] = out.trend_violations;
  trend["worst_increase"] = out.worst_increase;
  write_text(cfg.out_dir / "noise_trend.json", trend.dump(2) + "\n");
  return out;
}

std::uint64_t paper_attention_op_count(std::size_t w2) { return attention_op_count(128, 144, w2, 64, 8, 64, 8); }

double attention_median_ms(std::size_t w2, std::size_t runs) {
  const BevSpec spec = BevSpec::from_extent(-51.2, 51.2, -25.6, 25.6, 0.4);
  RgAttnConfig ac;
  ac.c1 = 64;
  ac.c2 = 8;
  ac.heads = 8;
  ac.radial_bins = spec.h1;
  ac.cam_h2 = 144;
  ParameterStore store;
  std::mt19937_64 rng(1);
  const RgAttnParams params = make_rg_attn_params(ac, store, "bench", rng);
  CameraRig rig;
  rig.w2 = w2;
  rig.h2 = 144;
  rig.c2 = 8;
  const Var bev(Tensor::randn({64, spec.h1, spec.w1}, rng, 1.0));
  const Var cam(Tensor::randn({8, 144, w2}, rng, 1.0));
  NoGradGuard guard;
  rg_attn_apply(bev, spec, cam, Transform2::identity(), rig, params, {});  // warm-up
  std::vector<double> ms;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto t0 = Clock::now();
    const Var out = rg_attn_apply(bev, spec, cam, Transform2::identity(), rig, params, {});
    ms.push_back(seconds_since(t0) * 1e3);
  }
  std::sort(ms.begin(), ms.end());
  return ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
}

CheckResult payload_roundtrip_check() {
  ExperimentConfig cfg;
  const Scene scene = generate_scene(scene_config("desk", cfg, 5, 0, 2));
  const Frame f = observe(scene, observe_config(5, {}, {}));
  std::size_t checked = 0, mismatched = 0;
  for (auto arch : {Architecture::lidar, Architecture::ptp, Architecture::prgaf}) {
    const Model m = make_model(model_config("desk", arch), 3);
    for (const auto& a : f.agents)
      for (const auto& [kind, t] : cooperator_payloads(m, a))
        for (bool compress : {false, true}) {
          const Tensor back = decode_payload(parse_message(serialize_message(
              encode_payload(t, kind, DType::f32, compress, {static_cast<std::uint32_t>(a.agent_id), f.frame_id, a.pose, 0}).message)));
          ++checked;
          if (back.shape() != t.shape() || std::memcmp(back.ptr(), t.ptr(), t.numel() * sizeof(Real)) != 0)
            ++mismatched;
        }
  }
  return {checked > 0 && mismatched == 0,
          std::to_string(checked) + " payloads through the wire, " + std::to_string(mismatched) + " differ"};
}

BenchReport cmd_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  BenchReport rep;
  for (std::size_t w2 : cfg.bench_widths) {
    BenchRow r;
    r.w2 = w2;
    r.op_count = paper_attention_op_count(w2);
    r.median_ms = attention_median_ms(w2, cfg.bench_runs);
    r.ms_per_gop = r.median_ms / (double(r.op_count) * 1e-9);
    rep.attention.push_back(r);
  }
  const Scene scene = generate_scene(scene_config("desk", cfg, cfg.seeds.front(), 0, 2));
  const Frame frame = observe(scene, observe_config(cfg.seeds.front(), {}, {}));
  for (auto arch : {Architecture::lidar, Architecture::ptp, Architecture::coscoco, Architecture::prgaf}) {
    const Model m = make_model(model_config("desk", arch), cfg.seeds.front());
    NoGradGuard guard;
    std::vector<double> ms;
    for (int i = 0; i < 3; ++i) {
      const auto t0 = Clock::now();
      fuse_forward(m, frame.agents, frame.ego_id, {});
      ms.push_back(seconds_since(t0) * 1e3);
    }
    std::sort(ms.begin(), ms.end());
    rep.pipelines.emplace_back(to_string(arch), ms[1]);
  }
  nlohmann::ordered_json j;
  j["runs"] = cfg.bench_runs;
  j["attention"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.attention.size(); ++i) {
    const auto& r = rep.attention[i];
    nlohmann::ordered_json row;
    row["w2"] = r.w2;
    row["op_count"] = r.op_count;
    row["median_ms"] = r.median_ms;
    row["ms_per_gop"] = r.ms_per_gop;
    row["time_ratio_to_previous"] = i ? r.median_ms / rep.attention[i - 1].median_ms : 1.0;
    row["op_ratio_to_previous"] = i ? double(r.op_count) / double(rep.attention[i - 1].op_count) : 1.0;
    j["attention"].push_back(row);
  }
  j["pipeline_forward_ms"] = nlohmann::ordered_json::object();
  for (const auto& [name, ms] : rep.pipelines) j["pipeline_forward_ms"][name] = ms;
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "bench.json", j.dump(2) + "\n");
  return rep;
}

std::vector<PayloadRow> cmd_payload(const ExperimentConfig& cfg) {
  cfg.validate();
  const DType precision = precision_of(cfg.payload_precision);
  std::vector<Scene> scenes(cfg.payload_frames);
  parallel_for(scenes.size(), [&](std::size_t i) {
    scenes[i] = generate_scene(scene_config(cfg.preset, cfg, cfg.seeds.front(), kPayloadFrameOffset + i, cfg.agents));
  });
  std::vector<PayloadRow> rows;
  for (auto arch : {Architecture::lidar, Architecture::ptp, Architecture::coscoco, Architecture::prgaf}) {
    const Model model = make_model(model_config(cfg.preset, arch), cfg.seeds.front());
    for (const auto& mix : cfg.eval_mixes) {
      const auto mods = mix_or_config_error(mix, cfg.agents);
      if (!mix_supported(arch, mods)) {
        PayloadRow r;
        r.architecture = to_string(arch);
        r.modality = mix;
        r.kind = "unsupported";
        rows.push_back(r);
        continue;
      }
      const ObserveConfig oc = observe_config(cfg.seeds.front(), mods, {});
      // per kind: messages, sending agent-frames, raw, body, sent
      struct Acc {
        std::size_t messages = 0, senders = 0;
        double raw = 0, body = 0, sent = 0;
      };
      std::vector<std::map<PayloadKind, Acc>> per_frame(scenes.size());
      parallel_for(scenes.size(), [&](std::size_t i) {
        const Frame f = observe(scenes[i], oc);
        for (const auto& a : f.agents) {
          if (a.agent_id == f.ego_id) continue;
          std::map<PayloadKind, bool> sent_kind;
          for (const auto& [kind, t] : cooperator_payloads(model, a)) {
            const auto e = encode_payload(t, kind, precision, cfg.compress);
            Acc& acc = per_frame[i][kind];
            ++acc.messages;
            acc.raw += double(e.stats.raw_bytes);
            acc.body += double(e.stats.raw_bytes - container_header_size(t.rank()));
            acc.sent += double(e.stats.sent_bytes);
            if (!sent_kind[kind]) ++acc.senders;
            sent_kind[kind] = true;
          }
        }
      });
      std::map<PayloadKind, Acc> total;
      for (const auto& frame : per_frame)
        for (const auto& [kind, acc] : frame) {
          Acc& t = total[kind];
          t.messages += acc.messages;
          t.senders += acc.senders;
          t.raw += acc.raw;
          t.body += acc.body;
          t.sent += acc.sent;
        }
      for (const auto& [kind, acc] : total) {
        PayloadRow r;
        r.architecture = to_string(arch);
        r.modality = mix;
        r.kind = to_string(kind);
        r.messages = acc.messages;
        r.raw_bytes = acc.raw / double(acc.senders);
        r.body_bytes = acc.body / double(acc.senders);
        r.sent_bytes = acc.sent / double(acc.senders);
        r.compression_ratio = 1.0 - acc.sent / acc.raw;
        rows.push_back(r);
      }
    }
  }
  std::ostringstream s;
  s << "architecture,modality,kind,messages,raw_bytes,body_bytes,sent_bytes,compression_ratio\n";
  for (const auto& r : rows)
    s << r.architecture << ',' << r.modality << ',' << r.kind << ',' << r.messages << ',' << fmt(r.raw_bytes) << ','
      << fmt(r.body_bytes) << ',' << fmt(r.sent_bytes) << ',' << fmt(r.compression_ratio) << '\n';
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "payload.csv", s.str());
  return rows;
}

HeatmapInfo cmd_heatmap(const fs::path& tensor_file, std::size_t channel, const fs::path& out_file) {
  if (!fs::is_regular_file(tensor_file)) throw ConfigError("no tensor file " + tensor_file.string());
  Tensor t;
  try {
    t = load_tensor(tensor_file);
  } catch (const ContractError& e) {
    throw ConfigError(tensor_file.string() + ": " + e.what());
  }
  if (t.rank() == 2) t = t.reshaped({1, t.dim(0), t.dim(1)});
  if (t.rank() != 3) throw ConfigError("heatmap needs a [C x H x W] or [H x W] tensor, got " + shape_to_string(t.shape()));
  if (channel >= t.dim(0))
    throw ConfigError("channel " + std::to_string(channel) + " out of range (tensor has " +
                      std::to_string(t.dim(0)) + ")");
  HeatmapInfo info{t.dim(1), t.dim(2), 0.0, 0.0};
  const std::size_t n = info.height * info.width;
  const Real* p = t.ptr() + channel * n;
  const auto [lo, hi] = std::minmax_element(p, p + n);
  info.min = *lo;
  info.max = *hi;
  std::string pixels(n, '\0');
  for (std::size_t i = 0; i < n; ++i) {
    // a constant channel maps to mid gray
    const double v = info.max > info.min ? (p[i] - info.min) / (info.max - info.min) : 0.5;
    pixels[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_text(out_file, "P5\n" + std::to_string(info.width) + " " + std::to_string(info.height) + "\n255\n" + pixels);
  return info;
}

}  // namespace rgf::harness
