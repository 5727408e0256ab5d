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

#pragma once

// Experiment orchestration behind the rgfusion CLI and the acceptance runner.
// This header is precision-neutral: experiments run on the 32-bit core,
// verification suites on the 64-bit core.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace rgf::harness {

/// Bad configuration or command usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string architecture = "ptp";  // lidar | ptp | coscoco | prgaf
  std::string preset = "desk";       // desk | paper
  std::size_t train_frames = 200;
  std::size_t eval_frames = 100;
  std::size_t agents = 2;  // agents per generated scene
  std::vector<std::size_t> agent_counts{2};
  std::string train_mix = "LC+LC";
  std::vector<std::string> eval_mixes{"LC", "LC+C", "LC+L", "LC+LC"};
  std::string noise_mix = "LC+LC";
  std::vector<double> sigma_p{0.0, 0.2, 0.4, 0.6};
  std::vector<double> sigma_r{0.0, 0.02, 0.04, 0.06};
  std::vector<std::uint64_t> seeds{0};
  std::size_t epochs = 2;
  std::string optimizer = "adam";
  double learning_rate = 2e-3;
  std::size_t n_boxes = 8;
  std::size_t n_distractors = 6;
  std::string payload_precision = "f16";
  bool compress = true;
  bool eval_payload = true;  // per-row payload statistics in eval output
  std::size_t payload_frames = 4;
  std::size_t bench_runs = 20;
  std::vector<std::size_t> bench_widths{64, 128, 256};
  std::filesystem::path data_dir = "data";
  std::filesystem::path params_dir;  // empty selects out_dir
  std::filesystem::path out_dir = "out";
  bool force = false;

  void validate() const;
  std::filesystem::path params() const { return params_dir.empty() ? out_dir : params_dir; }
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Worker count for frame-parallel work: the hardware concurrency, capped
/// by RGF_THREADS when set.
std::size_t worker_count();

struct GenerateSummary {
  std::size_t scenes = 0;
  std::filesystem::path dir;
};
/// Writes seeded scenes to `data_dir`. A non-empty directory needs `force`.
GenerateSummary cmd_generate(const ExperimentConfig& cfg);

struct TrainSummary {
  std::vector<double> epoch_loss;
  bool diverged = false;
  std::string report;
  double seconds = 0.0;
};
/// Trains on the `train_mix` observations of the dataset and writes
/// params.bin, params.json, model.json and loss_history.csv to out_dir.
TrainSummary cmd_train(const ExperimentConfig& cfg);

struct MetricsRecord {
  std::string architecture;
  std::string modality;
  std::size_t agents = 0;
  double sigma_p = 0.0;
  double sigma_r = 0.0;
  std::uint64_t seed = 0;
  bool supported = true;
  double ap30 = 0.0;
  double ap50 = 0.0;
  double ap70 = 0.0;
  std::size_t frames = 0;
  double payload_raw_bytes = 0.0;   // mean per cooperator per frame
  double payload_sent_bytes = 0.0;  // mean per cooperator per frame
  double seconds = 0.0;             // wall time, kept out of the CSV
};

std::string metrics_csv(const std::vector<MetricsRecord>& rows);

/// Evaluates saved parameters on every (agent count, eval mix). Unsupported
/// combinations become rows with supported == false. Writes metrics.csv,
/// metrics.json, timings.csv and the fused BEV of the first frame per row
/// (features/*.rgt) to out_dir.
std::vector<MetricsRecord> cmd_eval(const ExperimentConfig& cfg);

struct NoiseSweepRow {
  double sigma_p = 0.0;
  double sigma_r = 0.0;
  std::vector<double> ap30;  // one per seed
  double mean_ap30 = 0.0;
  double std_ap30 = 0.0;
  double mean_ap50 = 0.0;
};
struct NoiseSweepResult {
  std::vector<MetricsRecord> records;
  std::vector<NoiseSweepRow> summary;
  std::size_t trend_violations = 0;  // adjacent increases of mean AP30
  double worst_increase = 0.0;
};
/// Pose-noise sweep over (sigma_p[i], sigma_r[i]) pairs and seeds. Writes
/// noise_sweep.csv and noise_summary.csv.
NoiseSweepResult cmd_noise_sweep(const ExperimentConfig& cfg);

struct BenchRow {
  std::size_t w2 = 0;
  std::uint64_t op_count = 0;
  double median_ms = 0.0;
  double ms_per_gop = 0.0;
};
struct BenchReport {
  std::vector<BenchRow> attention;  // paper-preset kernel across widths
  std::vector<std::pair<std::string, double>> pipelines;  // desk forward ms
};
/// Times the RG-Attn kernel across camera widths and one forward per
/// pipeline. Writes bench.json.
BenchReport cmd_bench(const ExperimentConfig& cfg);

struct PayloadRow {
  std::string architecture;
  std::string modality;
  std::string kind;  // bev_feature | camera_feature | unsupported
  std::size_t messages = 0;
  double raw_bytes = 0.0;   // mean per agent per frame
  double body_bytes = 0.0;  // raw minus container headers
  double sent_bytes = 0.0;
  double compression_ratio = 0.0;
};
/// Cooperator payload sizes per architecture, mix and payload kind. Writes
/// payload.csv.
std::vector<PayloadRow> cmd_payload(const ExperimentConfig& cfg);

struct GradcheckRow {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::string worst_parameter;
  bool expect_failure = false;  // sanity rows that must be caught
  bool pass = false;
};
/// Finite-difference checks over every differentiable op and the pipelines
/// at 64-bit, three seeds each.
std::vector<GradcheckRow> cmd_gradcheck(double epsilon = 1e-6);
/// gradcheck.csv in `dir`.
void write_gradcheck_csv(const std::filesystem::path& dir, const std::vector<GradcheckRow>& rows);

struct HeatmapInfo {
  std::size_t height = 0;
  std::size_t width = 0;
  double min = 0.0;
  double max = 0.0;
};
/// Min-max normalized 8-bit PGM of one channel of a [C x H x W] container.
HeatmapInfo cmd_heatmap(const std::filesystem::path& tensor_file, std::size_t channel,
                        const std::filesystem::path& out_file);

// Verification checks used by the acceptance runner (64-bit).
struct CheckResult {
  bool pass = false;
  std::string detail;
};
/// column_mha against a dense masked oracle on `shapes` random shapes.
CheckResult attention_oracle_check(std::size_t shapes);
/// Residual identity, constant-field sector round trip, transform round trip.
CheckResult geometric_identity_check();
/// rg_attn_apply wall-time median at paper-preset dims (32-bit).
double attention_median_ms(std::size_t w2, std::size_t runs);
std::uint64_t paper_attention_op_count(std::size_t w2);
/// f32 payload decode(encode(x)) == x bitwise, compressed and uncompressed,
/// on encoder BEVs of a generated scene (32-bit).
CheckResult payload_roundtrip_check();

/// Byte-level digest of every regular file under `dir` (paths and contents).
std::string directory_digest(const std::filesystem::path& dir, const std::vector<std::string>& skip = {});

}  // namespace rgf::harness
