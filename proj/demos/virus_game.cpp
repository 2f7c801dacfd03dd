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

// Solves the two-player virus game and prints the state quantiles and the
// mean controls over time.

#include <cstdio>

#include "mfsmp/scenario_virus.hpp"

int main() {
  using namespace mfsmp;
  virus::VirusParams p;
  p.x0.kind = "bimodal";
  p.x0.atoms = {1.0, 2.0};
  virus::RunOptions o;
  o.game.tol = 1e-5;
  o.max_check_samples = 500;
  const auto grid = TimeGrid::uniform(p.T, 0.02);
  const auto a = virus::run_game(p, 1000, grid, 7, o);

  std::printf("%6s %8s %8s %8s %8s\n", "t", "q05", "q50", "q95", "mean");
  for (std::size_t k = 0; k < a.series.size(); k += 10) {
    const auto& r = a.series[k];
    std::printf("%6.2f %8.4f %8.4f %8.4f %8.4f\n", r.t, r.q05, r.q50, r.q95, r.mean);
  }
  std::printf("\n%6s %8s %8s\n", "t", "u1", "u2");
  std::size_t per_step = a.controls.size() / grid.n_steps;
  for (std::size_t k = 0; k < grid.n_steps; k += 10) {
    double u1 = 0.0, u2 = 0.0;
    for (std::size_t b = 0; b < per_step; ++b) {
      u1 += a.controls[k * per_step + b].u1;
      u2 += a.controls[k * per_step + b].u2;
    }
    std::printf("%6.2f %8.4f %8.4f\n", grid.t(k), u1 / per_step, u2 / per_step);
  }
  std::printf("\n");
  for (const auto& [key, value] : a.summary) std::printf("%-22s %.6g\n", key.c_str(), value);
  return a.metric("converged") == 1.0 ? 0 : 1;
}
