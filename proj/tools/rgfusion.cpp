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

// rgfusion: dataset generation, training, evaluation and reports for the
// cooperative fusion pipelines.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "rgf/harness.hpp"
#include "tool_common.hpp"

using namespace rgf::harness;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
  bool force = false;
  std::string arch;
  std::string data;
  std::string params;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "experiment JSON file");
  sub->add_option("--seed", f.seed, "replaces the seed list with one seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--preset", f.preset, "dims preset")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_flag("--force", f.force, "overwrite a non-empty dataset directory");
  sub->add_option("--arch", f.arch, "lidar, ptp, coscoco or prgaf");
  sub->add_option("--data", f.data, "dataset directory");
  sub->add_option("--params", f.params, "directory holding trained parameters");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) c.seeds = {*f.seed};
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.preset.empty()) c.preset = f.preset;
  if (f.force) c.force = true;
  if (!f.arch.empty()) c.architecture = f.arch;
  if (!f.data.empty()) c.data_dir = f.data;
  if (!f.params.empty()) c.params_dir = f.params;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  rgf::tools::tune_allocator();
  CLI::App app{"Cooperative LiDAR-camera BEV fusion toolkit"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* gen = app.add_subcommand("generate", "write seeded scenes to the dataset directory");
  auto* train = app.add_subcommand("train", "train one architecture on the training split");
  auto* eval = app.add_subcommand("eval", "evaluate trained parameters on every modality mix");
  auto* sweep = app.add_subcommand("noise-sweep", "AP under pose noise");
  auto* bench = app.add_subcommand("bench", "attention and pipeline timings");
  auto* payload = app.add_subcommand("payload", "cooperator payload sizes");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks at 64-bit");
  auto* heat = app.add_subcommand("heatmap", "dump one tensor channel as PGM");
  for (auto* s : {gen, train, eval, sweep, bench, payload, grad}) add_common(s, flags);

  double eps = 1e-6;
  grad->add_option("--eps", eps, "central-difference step");
  std::string tensor_file, pgm_out;
  std::size_t channel = 0;
  heat->add_option("tensor", tensor_file, "tensor container file")->required();
  heat->add_option("--channel", channel, "channel index");
  heat->add_option("--out", pgm_out, "PGM file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto r = cmd_generate(resolve(flags));
      std::cout << "wrote " << r.scenes << " scenes to " << r.dir.string() << "\n";
    } else if (*train) {
      const ExperimentConfig c = resolve(flags);
      const auto r = cmd_train(c);
      for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
        std::cout << "epoch " << e + 1 << " loss " << r.epoch_loss[e] << "\n";
      if (r.diverged) {
        std::cerr << "training stopped: " << r.report << "\n";
        return 1;
      }
      std::printf("trained %s in %.1f s, parameters in %s\n", c.architecture.c_str(), r.seconds,
                  c.out_dir.string().c_str());
    } else if (*eval) {
      const ExperimentConfig c = resolve(flags);
      const auto rows = cmd_eval(c);
      std::printf("%-8s %-7s %6s %7s %7s %7s %12s\n", "arch", "mix", "agents", "AP30", "AP50", "AP70", "sent bytes");
      for (const auto& r : rows) {
        if (!r.supported) {
          std::printf("%-8s %-7s %6zu %7s\n", r.architecture.c_str(), r.modality.c_str(), r.agents, "/");
          continue;
        }
        std::printf("%-8s %-7s %6zu %7.4f %7.4f %7.4f %12.0f\n", r.architecture.c_str(), r.modality.c_str(),
                    r.agents, r.ap30, r.ap50, r.ap70, r.payload_sent_bytes);
      }
    } else if (*sweep) {
      const auto r = cmd_noise_sweep(resolve(flags));
      std::printf("%8s %8s %10s %9s\n", "sigma_p", "sigma_r", "mean AP30", "std");
      for (const auto& row : r.summary)
        std::printf("%8.3f %8.3f %10.4f %9.4f\n", row.sigma_p, row.sigma_r, row.mean_ap30, row.std_ap30);
      std::printf("non-increasing: %s (%zu violations, worst rise %.4f)\n", r.trend_violations ? "no" : "yes",
                  r.trend_violations, r.worst_increase);
    } else if (*bench) {
      const auto r = cmd_bench(resolve(flags));
      std::printf("%6s %14s %11s %11s\n", "W2", "ops", "median ms", "ms/Gop");
      for (const auto& row : r.attention)
        std::printf("%6zu %14llu %11.2f %11.2f\n", row.w2, static_cast<unsigned long long>(row.op_count),
                    row.median_ms, row.ms_per_gop);
      for (const auto& [name, ms] : r.pipelines) std::printf("%-8s forward %.1f ms\n", name.c_str(), ms);
    } else if (*payload) {
      const auto rows = cmd_payload(resolve(flags));
      std::printf("%-8s %-7s %-15s %14s %14s %7s\n", "arch", "mix", "kind", "raw bytes", "sent bytes", "saved");
      for (const auto& r : rows)
        std::printf("%-8s %-7s %-15s %14.0f %14.0f %6.1f%%\n", r.architecture.c_str(), r.modality.c_str(),
                    r.kind.c_str(), r.raw_bytes, r.sent_bytes, 100.0 * r.compression_ratio);
    } else if (*grad) {
      const auto rows = cmd_gradcheck(eps);
      bool ok = true;
      for (const auto& r : rows) {
        ok &= r.pass;
        std::printf("%-4s %-28s seed %llu  max rel %.3e  tol %.0e  %s%s\n", r.pass ? "ok" : "FAIL", r.name.c_str(),
                    static_cast<unsigned long long>(r.seed), r.max_rel_error, r.tolerance, r.worst_parameter.c_str(),
                    r.expect_failure ? "  (must be flagged)" : "");
      }
      if (!flags.out.empty()) write_gradcheck_csv(flags.out, rows);
      return ok ? 0 : 1;
    } else if (*heat) {
      const auto r = cmd_heatmap(tensor_file, channel, pgm_out);
      std::printf("%zux%zu channel %zu, range [%g, %g] -> %s\n", r.height, r.width, channel, r.min, r.max,
                  pgm_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
