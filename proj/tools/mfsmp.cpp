// Copyright 2026 The mfsmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mfsmp run --scenario <id> --config <path> [--seed N] [--n N] [--dt F]
//           [--out DIR] [--threads N] [--n-list a,b,...]
// mfsmp validate --config <path>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfsmp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive mean-field-type games with L^alpha-norm drift"};
  app.set_version_flag("--version", std::string(MFSMP_VERSION));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  std::string run_config, scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n, threads;
  std::optional<double> dt;
  std::optional<std::string> out;
  std::vector<std::size_t> n_list;
  run->add_option("--config", run_config, "JSON config file")->required()->check(CLI::ExistingFile);
  run->add_option("--scenario", scenario, "Scenario id")
      ->required()
      ->check(CLI::IsMember(mfsmp::cli::scenario_ids()));
  run->add_option("--seed", seed, "Noise seed");
  run->add_option("--n", n, "Particle count")->check(CLI::PositiveNumber);
  run->add_option("--dt", dt, "Time step")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Output directory");
  run->add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  run->add_option("--n-list", n_list, "Particle counts for chaos-study")->delimiter(',');

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  std::string validate_config;
  validate->add_option("--config", validate_config, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mfsmp::cli::kExitConfig;
  }

  if (*validate) return mfsmp::cli::validate(validate_config);

  mfsmp::cli::Overrides o;
  o.scenario = scenario;
  o.seed = seed;
  o.n = n;
  o.dt = dt;
  o.out = out;
  o.threads = threads;
  if (!n_list.empty()) o.n_list = n_list;
  return mfsmp::cli::run(run_config, o);
}
