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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "rgf/harness.hpp"
#include "tool_common.hpp"

using namespace rgf::harness;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Work shared by the desk experiments: per seed, a dataset and three trained
// models.
struct DeskRun {
  fs::path root;
  bool ready = false;
  double seconds = 0.0;
  std::map<std::uint64_t, std::map<std::string, double>> ap30;  // seed -> "arch/mix" -> AP30

  fs::path data(std::uint64_t seed) const { return root / ("seed" + std::to_string(seed)) / "data"; }
  fs::path model(std::uint64_t seed, const std::string& arch) const {
    return root / ("seed" + std::to_string(seed)) / arch;
  }
};

Outcome attention_oracle() {
  const auto t0 = Clock::now();
  const CheckResult r = attention_oracle_check(24);
  const double s = seconds_since(t0);
  return {r.pass && s < 10.0, r.detail + ", " + num(s, 3) + " s (limit 10 s)"};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto rows = cmd_gradcheck(1e-6);
  const double s = seconds_since(t0);
  std::map<std::string, double> worst;
  bool sanity = false;
  std::vector<std::string> failed;
  for (const auto& r : rows) {
    if (r.expect_failure) {
      sanity = r.pass;
      continue;
    }
    worst[r.name] = std::max(worst[r.name], r.max_rel_error);
    if (!r.pass) failed.push_back(r.name + "/seed" + std::to_string(r.seed) + "=" + num(r.max_rel_error, 3));
  }
  double overall = 0;
  for (const auto& [name, e] : worst) overall = std::max(overall, e);
  std::ostringstream d;
  d << rows.size() - 1 << " checks at eps 1e-6, worst " << num(overall, 3) << " (limit 1e-5)";
  for (const char* key : {"pipeline.ptp", "pipeline.coscoco", "pipeline.prgaf"})
    d << ", " << key << " " << num(worst[key], 3);
  if (!failed.empty()) {
    d << "; over limit:";
    for (const auto& f : failed) d << ' ' << f;
  }
  d << "; corrupted backward " << (sanity ? "flagged" : "NOT flagged") << "; " << num(s, 3) << " s (limit 120 s)";
  return {failed.empty() && sanity && s < 120.0, d.str()};
}

Outcome geometric_identities() {
  const CheckResult r = geometric_identity_check();
  return {r.pass, r.detail};
}

Outcome linear_complexity() {
  const std::uint64_t o64 = paper_attention_op_count(64), o128 = paper_attention_op_count(128),
                      o256 = paper_attention_op_count(256), o512 = paper_attention_op_count(512);
  const bool linear = o256 - o128 == 2 * (o128 - o64) && o512 - o256 == 2 * (o256 - o128);
  const bool proportional = o128 == 2 * o64 && o256 == 2 * o128;
  const double t128 = attention_median_ms(128, 20), t256 = attention_median_ms(256, 20);
  const double ratio = t256 / t128;
  std::ostringstream d;
  d << "op count " << o64 << "/" << o128 << "/" << o256 << " at W2 64/128/256 (" << (linear ? "linear" : "NOT linear")
    << (proportional ? ", proportional" : "") << "); median of 20: " << num(t128, 4) << " ms at 128, " << num(t256, 4)
    << " ms at 256, ratio " << num(ratio, 3) << " (limit 2.5)";
  return {linear && ratio <= 2.5, d.str()};
}

ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seeds = {seed};
  c.train_frames = 200;
  c.eval_frames = 100;
  c.epochs = 2;
  c.eval_payload = false;
  c.force = true;
  return c;
}

void run_desk(DeskRun& run) {
  if (run.ready) return;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ExperimentConfig c = desk_config(seed);
    c.data_dir = run.data(seed);
    cmd_generate(c);
    const std::vector<std::pair<std::string, std::vector<std::string>>> plan{
        {"ptp", {"LC+LC"}}, {"lidar", {"L+L"}}, {"coscoco", {"LC+C", "LC"}}};
    for (const auto& [arch, mixes] : plan) {
      c.architecture = arch;
      c.out_dir = run.model(seed, arch);
      c.params_dir.clear();
      const auto tr = cmd_train(c);
      if (tr.diverged) throw std::runtime_error(arch + " seed " + std::to_string(seed) + ": " + tr.report);
      c.eval_mixes = mixes;
      for (const auto& r : cmd_eval(c)) run.ap30[seed][arch + "/" + r.modality] = r.ap30;
    }
  }
  run.seconds = seconds_since(t0);
  run.ready = true;
}

Outcome capability_matrix(const fs::path& root) {
  ExperimentConfig c;
  c.train_frames = 8;
  c.eval_frames = 6;
  c.epochs = 1;
  c.force = true;
  c.eval_payload = false;
  c.data_dir = root / "data";
  c.eval_mixes = {"L", "C+L", "LC", "LC+C", "LC+L", "LC+LC"};
  cmd_generate(c);
  const std::set<std::string> camera_cooperator{"LC+C", "C+L"};
  std::vector<std::string> problems;
  std::size_t rows_seen = 0;
  for (const std::string arch : {"ptp", "prgaf", "coscoco"}) {
    c.architecture = arch;
    c.out_dir = root / arch;
    c.params_dir.clear();
    cmd_train(c);
    c.params_dir = c.out_dir;
    c.out_dir = root / (arch + "_eval");
    const std::string before = directory_digest(c.params_dir);
    const auto rows = cmd_eval(c);
    if (directory_digest(c.params_dir) != before) problems.push_back(arch + " parameter files changed");
    if (rows.size() != c.eval_mixes.size()) problems.push_back(arch + " row count " + std::to_string(rows.size()));
    for (const auto& r : rows) {
      ++rows_seen;
      const bool want = arch == "coscoco" || !camera_cooperator.count(r.modality);
      if (r.supported != want)
        problems.push_back(arch + " " + r.modality + (r.supported ? " supported" : " unsupported"));
      if (r.supported && !(r.ap30 >= 0.0 && r.ap30 <= 1.0)) problems.push_back(arch + " " + r.modality + " AP range");
    }
  }
  std::ostringstream d;
  d << rows_seen << " eval rows over ptp/prgaf/coscoco; ptp and prgaf mark LC+C and C+L unsupported, coscoco runs"
    << " all 6; parameter dirs unchanged by eval";
  if (!problems.empty()) {
    d << "; problems:";
    for (const auto& p : problems) d << ' ' << p << ';';
  }
  return {problems.empty(), d.str()};
}

Outcome fusion_benefit(DeskRun& run) {
  run_desk(run);
  double ptp = 0, lidar = 0, cc_lcc = 0, cc_lc = 0;
  for (const auto& [seed, m] : run.ap30) {
    ptp += m.at("ptp/LC+LC") / 3;
    lidar += m.at("lidar/L+L") / 3;
    cc_lcc += m.at("coscoco/LC+C") / 3;
    cc_lc += m.at("coscoco/LC") / 3;
  }
  const double margin = ptp - lidar;
  std::ostringstream d;
  d << "mean AP30 over 3 seeds: PTP LC+LC " << num(ptp) << " vs LiDAR L+L " << num(lidar) << " (margin " << num(margin)
    << ", need >= 0.02); CoS-CoCo LC+C " << num(cc_lcc) << " vs LC " << num(cc_lc) << "; " << num(run.seconds / 60, 3)
    << " min (limit 30)";
  return {margin >= 0.02 && cc_lcc >= cc_lc && run.seconds < 1800.0, d.str()};
}

Outcome noise_direction(DeskRun& run, const fs::path& root) {
  run_desk(run);
  ExperimentConfig c = desk_config(0);
  c.architecture = "ptp";
  c.data_dir = run.data(0);
  c.params_dir = run.model(0, "ptp");
  c.out_dir = root;
  c.seeds = {0, 1, 2, 3, 4};
  c.sigma_p = {0.0, 0.2, 0.4, 0.6};
  c.sigma_r = {0.0, 0.02, 0.04, 0.06};
  const auto r = cmd_noise_sweep(c);
  std::ostringstream d;
  d << "mean AP30 at sigma_p 0/0.2/0.4/0.6:";
  for (const auto& row : r.summary) d << ' ' << num(row.mean_ap30);
  d << "; " << r.trend_violations << " rises, worst " << num(r.worst_increase, 3) << " (one rise within 0.005 allowed)";
  const bool ok = r.trend_violations == 0 || (r.trend_violations == 1 && r.worst_increase <= 0.005);
  return {ok, d.str()};
}

Outcome payload_accounting(const fs::path& root) {
  ExperimentConfig c;
  c.preset = "paper";
  c.eval_mixes = {"LC+LC"};
  c.payload_frames = 2;
  c.payload_precision = "f16";
  c.out_dir = root;
  const auto rows = cmd_payload(c);
  double ptp_body = -1, lidar_ratio = -1, ptp_ratio = -1;
  for (const auto& r : rows) {
    if (r.kind != "bev_feature") continue;
    if (r.architecture == "ptp") {
      ptp_body = r.body_bytes;
      ptp_ratio = r.compression_ratio;
    }
    if (r.architecture == "lidar") lidar_ratio = r.compression_ratio;
  }
  const CheckResult rt = payload_roundtrip_check();
  std::ostringstream d;
  d << "paper-preset PTP BEV body " << num(ptp_body, 10) << " bytes at f16 (want 4194304); " << rt.detail
    << "; toy-encoder LiDAR BEV compression " << num(100 * lidar_ratio, 3) << "% (need > 25%), painted PTP BEV "
    << num(100 * ptp_ratio, 3) << "%";
  return {ptp_body == 4194304.0 && rt.pass && lidar_ratio > 0.25, d.str()};
}

Outcome determinism(const fs::path& root) {
  ExperimentConfig c;
  c.architecture = "coscoco";
  c.train_frames = 6;
  c.eval_frames = 4;
  c.epochs = 1;
  c.force = true;
  c.data_dir = root / "data";
  c.out_dir = root / "out";
  std::string digests[2];
  for (auto& digest : digests) {
    cmd_generate(c);
    cmd_train(c);
    cmd_eval(c);
    // wall-clock timings are the one intentionally non-reproducible output
    digest = directory_digest(c.data_dir) + " " + directory_digest(c.out_dir, {"timings.csv"});
  }
  return {digests[0] == digests[1], "generate/train/eval twice: " + digests[0] +
                                        (digests[0] == digests[1] ? " both runs" : " vs " + digests[1])};
}

}  // namespace

int main(int argc, char** argv) {
  rgf::tools::tune_allocator();
  CLI::App app{"Acceptance criteria runner"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  const fs::path root = work;
  fs::create_directories(root);
  DeskRun desk;
  desk.root = root / "desk";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"attention oracle", attention_oracle},
      {"gradient suite", gradient_suite},
      {"geometric identities", geometric_identities},
      {"linear-in-W complexity", linear_complexity},
      {"capability matrix", [&] { return capability_matrix(root / "capability"); }},
      {"desk fusion benefit", [&] { return fusion_benefit(desk); }},
      {"pose-noise direction", [&] { return noise_direction(desk, root / "noise"); }},
      {"payload accounting", [&] { return payload_accounting(root / "payload"); }},
      {"determinism", [&] { return determinism(root / "determinism"); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
