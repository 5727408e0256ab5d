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

#include <doctest.h>

#include <fstream>
#include <iterator>

#include "rgf/container.hpp"
#include "rgf/harness.hpp"
#include "test_util.hpp"

using namespace rgf::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "rgf_harness_tests" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small(const fs::path& root) {
  ExperimentConfig c;
  c.train_frames = 4;
  c.eval_frames = 3;
  c.epochs = 1;
  c.data_dir = root / "data";
  c.out_dir = root / "run";
  return c;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config parsing") {
    CHECK_NOTHROW(ExperimentConfig{}.validate());
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"preset", "huge"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seeds", nlohmann::json::array()}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"epochs", "two"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sigma_p", {0.1}}, {"sigma_r", {0.1, 0.2}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ConfigError);

    ExperimentConfig c;
    c.architecture = "prgaf";
    c.seeds = {4, 5};
    c.eval_mixes = {"LC+L"};
    c.out_dir = "x/y";
    const ExperimentConfig back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
    CHECK(back.architecture == "prgaf");
    CHECK(back.seeds == c.seeds);
    CHECK(back.eval_mixes == c.eval_mixes);
    CHECK(back.out_dir == c.out_dir);
    CHECK(config_to_json(back) == config_to_json(c));
  }

  TEST_CASE("metrics CSV schema") {
    MetricsRecord r;
    r.architecture = "ptp";
    r.modality = "LC+C";
    r.agents = 2;
    r.supported = false;
    const std::string csv = metrics_csv({r});
    CHECK(csv.substr(0, csv.find('\n')) ==
          "architecture,modality,agents,sigma_p,sigma_r,seed,supported,ap30,ap50,ap70,frames,payload_raw_bytes,"
          "payload_sent_bytes");
    CHECK(csv.find("ptp,LC+C,2,0.000000,0.000000,0,0,") != std::string::npos);
  }

  TEST_CASE("generate") {
    const fs::path root = scratch("generate");
    ExperimentConfig c = small(root);
    c.train_frames = 1;
    c.eval_frames = 0;
    CHECK(cmd_generate(c).scenes == 1);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(c.data_dir))
      if (e.is_regular_file() && e.path().filename() != "dataset.json") ++files;
    CHECK(files == 1);

    CHECK_THROWS_AS(cmd_generate(c), ConfigError);  // non-empty without force
    c.force = true;
    const std::string first = directory_digest(c.data_dir);
    cmd_generate(c);
    CHECK(directory_digest(c.data_dir) == first);
    c.seeds = {9};
    cmd_generate(c);
    CHECK(directory_digest(c.data_dir) != first);

    c.train_mix = "LX+C";
    CHECK_THROWS_AS(cmd_generate(c), ConfigError);
  }

  TEST_CASE("train and eval") {
    const fs::path root = scratch("pipeline");
    ExperimentConfig c = small(root);
    CHECK_THROWS_AS(cmd_train(c), ConfigError);  // no dataset yet
    CHECK_THROWS_AS(cmd_eval(c), ConfigError);   // no parameters yet
    cmd_generate(c);
    const TrainSummary t = cmd_train(c);
    CHECK_FALSE(t.diverged);
    CHECK(t.epoch_loss.size() == 1);
    CHECK(slurp(c.out_dir / "loss_history.csv").rfind("epoch,loss\n1,", 0) == 0);
    for (const char* f : {"params.bin", "params.json", "model.json"}) CHECK(fs::exists(c.out_dir / f));

    c.eval_mixes = {"LC", "LC+C", "LC+LC"};
    const std::string params_before = slurp(c.out_dir / "params.bin");
    const auto rows = cmd_eval(c);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].supported);
    CHECK(rows[0].agents == 1);
    CHECK_FALSE(rows[1].supported);  // camera-only cooperator
    CHECK(rows[2].supported);
    for (const auto& r : rows) {
      CHECK(r.ap30 >= 0.0);
      CHECK(r.ap30 <= 1.0);
    }
    CHECK(rows[2].payload_raw_bytes > rows[2].payload_sent_bytes);
    CHECK(slurp(c.out_dir / "params.bin") == params_before);
    const std::string csv = slurp(c.out_dir / "metrics.csv");
    cmd_eval(c);
    CHECK(slurp(c.out_dir / "metrics.csv") == csv);

    ExperimentConfig wrong = c;
    wrong.architecture = "coscoco";
    CHECK_THROWS_AS(cmd_eval(wrong), ConfigError);

    // the noiseless sweep level reproduces the plain evaluation
    ExperimentConfig sweep = c;
    sweep.seeds = {0, 1};
    sweep.sigma_p = {0.0, 0.5};
    sweep.sigma_r = {0.0, 0.05};
    const auto s = cmd_noise_sweep(sweep);
    REQUIRE(s.summary.size() == 2);
    CHECK(s.summary[0].ap30 == std::vector<double>{rows[2].ap30, rows[2].ap30});
    CHECK(s.records.size() == 4);
    sweep.sigma_p.clear();
    sweep.sigma_r.clear();
    CHECK_THROWS_AS(cmd_noise_sweep(sweep), ConfigError);
  }

  TEST_CASE("heatmap") {
    const fs::path root = scratch("heatmap");
    fs::create_directories(root);
    rgf::Tensor t = rgf::testing::random_tensor({2, 3, 5}, 1);
    for (std::size_t i = 15; i < 30; ++i) t[i] = 4.0;  // channel 1 constant
    rgf::save_tensor(root / "t.rgt", t, rgf::DType::f32);

    const auto info = cmd_heatmap(root / "t.rgt", 1, root / "c1.pgm");
    CHECK(info.height == 3);
    CHECK(info.width == 5);
    const std::string gray = slurp(root / "c1.pgm");
    CHECK(gray == "P5\n5 3\n255\n" + std::string(15, char(128)));

    cmd_heatmap(root / "t.rgt", 0, root / "c0.pgm");
    const std::string img = slurp(root / "c0.pgm");
    const std::string px = img.substr(img.size() - 15);
    CHECK(px.find(char(0)) != std::string::npos);
    CHECK(px.find(char(255)) != std::string::npos);

    CHECK_THROWS_AS(cmd_heatmap(root / "t.rgt", 2, root / "bad.pgm"), ConfigError);
    CHECK_THROWS_AS(cmd_heatmap(root / "missing.rgt", 0, root / "bad.pgm"), ConfigError);
  }

  TEST_CASE("directory digest sees every byte") {
    const fs::path root = scratch("digest");
    fs::create_directories(root / "sub");
    std::ofstream(root / "a.txt") << "alpha";
    std::ofstream(root / "sub" / "b.txt") << "beta";
    const std::string d0 = directory_digest(root);
    CHECK(directory_digest(root) == d0);
    std::ofstream(root / "sub" / "b.txt") << "betA";
    CHECK(directory_digest(root) != d0);
    std::ofstream(root / "skip.csv") << "1";
    const std::string d1 = directory_digest(root, {"skip.csv"});
    std::ofstream(root / "skip.csv") << "2";
    CHECK(directory_digest(root, {"skip.csv"}) == d1);
  }
}
