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
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "rgf/harness.hpp"

namespace rgf::harness {

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const nlohmann::json& j, const char* key, std::filesystem::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

const char* kKnownKeys[] = {"architecture", "preset",       "train_frames",      "eval_frames",    "agents",
                            "agent_counts", "train_mix",    "eval_mixes",        "noise_mix",      "sigma_p",
                            "sigma_r",      "seeds",        "epochs",            "optimizer",      "learning_rate",
                            "n_boxes",      "n_distractors", "payload_precision", "compress",      "eval_payload",
                            "payload_frames", "bench_runs", "bench_widths",      "data_dir",       "params_dir",
                            "out_dir",      "force"};

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
  const std::vector<std::string> archs{"lidar", "ptp", "coscoco", "prgaf"};
  if (std::find(archs.begin(), archs.end(), architecture) == archs.end())
    fail("architecture must be one of lidar, ptp, coscoco, prgaf (got '" + architecture + "')");
  if (preset != "desk" && preset != "paper") fail("preset must be desk or paper (got '" + preset + "')");
  if (seeds.empty()) fail("seeds must not be empty");
  if (agents == 0) fail("agents must be positive");
  for (std::size_t n : agent_counts)
    if (n == 0 || n > agents) fail("agent_counts entries must lie in [1, agents]");
  if (agent_counts.empty()) fail("agent_counts must not be empty");
  if (eval_mixes.empty()) fail("eval_mixes must not be empty");
  if (sigma_p.size() != sigma_r.size()) fail("sigma_p and sigma_r must have the same length");
  for (std::size_t i = 0; i < sigma_p.size(); ++i)
    if (!(sigma_p[i] >= 0.0) || !(sigma_r[i] >= 0.0)) fail("noise sigmas must be non-negative");
  if (optimizer != "adam" && optimizer != "sgd") fail("optimizer must be adam or sgd");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be non-negative");
  if (payload_precision != "f16" && payload_precision != "f32") fail("payload_precision must be f16 or f32");
  if (bench_runs == 0) fail("bench_runs must be positive");
  if (out_dir.empty()) fail("out_dir must not be empty");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& item : j.items())
    if (std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                     [&](const char* k) { return item.key() == k; }) == std::end(kKnownKeys))
      throw ConfigError("config: unknown key '" + item.key() + "'");
  ExperimentConfig c;
  try {
    read_opt(j, "architecture", c.architecture);
    read_opt(j, "preset", c.preset);
    read_opt(j, "train_frames", c.train_frames);
    read_opt(j, "eval_frames", c.eval_frames);
    read_opt(j, "agents", c.agents);
    read_opt(j, "agent_counts", c.agent_counts);
    read_opt(j, "train_mix", c.train_mix);
    read_opt(j, "eval_mixes", c.eval_mixes);
    read_opt(j, "noise_mix", c.noise_mix);
    read_opt(j, "sigma_p", c.sigma_p);
    read_opt(j, "sigma_r", c.sigma_r);
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "optimizer", c.optimizer);
    read_opt(j, "learning_rate", c.learning_rate);
    read_opt(j, "n_boxes", c.n_boxes);
    read_opt(j, "n_distractors", c.n_distractors);
    read_opt(j, "payload_precision", c.payload_precision);
    read_opt(j, "compress", c.compress);
    read_opt(j, "eval_payload", c.eval_payload);
    read_opt(j, "payload_frames", c.payload_frames);
    read_opt(j, "bench_runs", c.bench_runs);
    read_opt(j, "bench_widths", c.bench_widths);
    read_path(j, "data_dir", c.data_dir);
    read_path(j, "params_dir", c.params_dir);
    read_path(j, "out_dir", c.out_dir);
    read_opt(j, "force", c.force);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["architecture"] = c.architecture;
  j["preset"] = c.preset;
  j["train_frames"] = c.train_frames;
  j["eval_frames"] = c.eval_frames;
  j["agents"] = c.agents;
  j["agent_counts"] = c.agent_counts;
  j["train_mix"] = c.train_mix;
  j["eval_mixes"] = c.eval_mixes;
  j["noise_mix"] = c.noise_mix;
  j["sigma_p"] = c.sigma_p;
  j["sigma_r"] = c.sigma_r;
  j["seeds"] = c.seeds;
  j["epochs"] = c.epochs;
  j["optimizer"] = c.optimizer;
  j["learning_rate"] = c.learning_rate;
  j["n_boxes"] = c.n_boxes;
  j["n_distractors"] = c.n_distractors;
  j["payload_precision"] = c.payload_precision;
  j["compress"] = c.compress;
  j["eval_payload"] = c.eval_payload;
  j["payload_frames"] = c.payload_frames;
  j["bench_runs"] = c.bench_runs;
  j["bench_widths"] = c.bench_widths;
  j["data_dir"] = c.data_dir.string();
  j["params_dir"] = c.params_dir.string();
  j["out_dir"] = c.out_dir.string();
  j["force"] = c.force;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RGF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::ostringstream s;
  s << "architecture,modality,agents,sigma_p,sigma_r,seed,supported,ap30,ap50,ap70,frames,payload_raw_bytes,"
       "payload_sent_bytes\n";
  s << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    s << r.architecture << ',' << r.modality << ',' << r.agents << ',' << r.sigma_p << ',' << r.sigma_r << ','
      << r.seed << ',' << (r.supported ? 1 : 0) << ',' << r.ap30 << ',' << r.ap50 << ',' << r.ap70 << ','
      << r.frames << ',' << r.payload_raw_bytes << ',' << r.payload_sent_bytes << '\n';
  }
  return s.str();
}

void write_gradcheck_csv(const std::filesystem::path& dir, const std::vector<GradcheckRow>& rows) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "gradcheck.csv");
  if (!out) throw ConfigError("cannot write " + (dir / "gradcheck.csv").string());
  out << "name,seed,max_rel_error,tolerance,worst_parameter,expect_failure,pass\n" << std::setprecision(6);
  for (const auto& r : rows)
    out << r.name << ',' << r.seed << ',' << r.max_rel_error << ',' << r.tolerance << ',' << r.worst_parameter << ','
        << (r.expect_failure ? 1 : 0) << ',' << (r.pass ? 1 : 0) << '\n';
}

std::string directory_digest(const std::filesystem::path& dir, const std::vector<std::string>& skip) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() &&
        std::find(skip.begin(), skip.end(), e.path().filename().string()) == skip.end())
      files.push_back(std::filesystem::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  // FNV-1a over (path, size, bytes) of every file
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ull;
    }
  };
  for (const auto& f : files) {
    const std::string name = f.generic_string();
    feed(name.data(), name.size() + 1);
    std::ifstream in(dir / f, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::uint64_t n = bytes.size();
    feed(reinterpret_cast<const char*>(&n), sizeof n);
    feed(bytes.data(), bytes.size());
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h << '-' << std::dec << files.size();
  return hex.str();
}

}  // namespace rgf::harness
