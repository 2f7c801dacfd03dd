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

// Acceptance battery: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mfsmp/cli.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mfsmp;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

cli::Config shipped(const std::string& name) {
  std::vector<cli::Issue> issues;
  auto c = cli::load_config((fs::path(MFSMP_SOURCE_DIR) / "configs" / name).string(), {}, issues);
  if (!issues.empty()) throw Error(ErrorCode::InvalidParams, name + ": " + issues.front().code);
  return c;
}

Outcome chaos_rate() {
  const auto c = shipped("chaos_study.json");
  const auto grid = TimeGrid::uniform(c.T, c.dt);
  const auto t0 = Clock::now();
  Outcome o{true, ""};
  for (double alpha : {1.0, 1.2, 2.0}) {
    const auto spec = build_cooperative_spec(alpha, 1.0, 0.1);
    const auto r = chaos_study(spec, zero_policy(), {64, 128, 256, 512, 1024, 2048}, grid, *c.seed, c.chaos.options);
    const bool ok = r.slope >= -0.65 && r.slope <= -0.35;
    o.pass = o.pass && ok;
    o.detail += "alpha=" + num(alpha) + " slope=" + num(r.slope) + "; ";
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  o.pass = o.pass && secs <= 300.0;
  o.detail += "runtime " + num(secs, "%.1f") + " s (limit 300)";
  return o;
}

Outcome picard() {
  const auto spec = build_cooperative_spec(1.2, 1.0, 0.1);
  const auto r = picard_check(spec, 2000, TimeGrid::uniform(1.0, 0.02), 31, 10);
  std::string res;
  for (double v : r.residuals) res += num(v, "%.3g") + " ";
  return {r.pass(10), "residuals " + res + "| 3x bootstrap " + num(3.0 * r.bootstrap_error, "%.3g") +
                          " reached at iteration " + std::to_string(r.reached_at) +
                          (r.monotone ? ", contracting" : ", not contracting")};
}

Outcome gateaux() {
  const auto s = gateaux_suite(41, 50, 1e-4);
  return {s.pass(1e-4) && s.rows.size() == 300,
          std::to_string(s.rows.size()) + " instances, max rel error " + num(s.max_rel_error, "%.3g") + " (limit 1e-4)"};
}

Outcome donsker_varadhan_identity() {
  const auto s = dv_suite(22, 100, 1000);
  return {s.pass(1e-10), "100 instances, max |lhs - sup| " + num(s.max_identity_residual, "%.3g") + ", " +
                             std::to_string(s.perturbation_violations) + " of 100000 perturbations beat the tilt"};
}

Outcome small_theta() {
  const auto r = small_theta_check(skewed_cost_sample(5), small_theta_grid());
  return {r.slope >= 1.7 && r.slope <= 2.3, "residual exponent " + num(r.slope) + " (target 2.0 +- 0.3)"};
}

Outcome lq() {
  const auto c = shipped("lq_validate.json");
  LqValidationOptions o = c.lq;
  o.params.T = c.T;
  o.n = c.n;
  o.dt = c.dt;
  o.game = c.solver;
  const auto t0 = Clock::now();
  const auto r = lq_validation(*c.seed, o);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {r.pass(5e-2) && secs <= 120.0 && o.n == 10000 && o.dt == 1e-2,
          "sup feedback error " + num(r.sup_error, "%.3g") + " (limit 5e-2), min drift " + num(r.min_drift) +
              ", iterations " + std::to_string(r.iterations) + ", runtime " + num(secs, "%.1f") + " s (limit 120)"};
}

// Shared by criteria 7 to 9.
virus::RunArtifacts game_run() {
  const auto c = shipped("game.json");
  virus::RunOptions o = c.output;
  o.game = c.solver;
  virus::VirusParams p = c.model;
  p.T = c.T;
  return virus::run_game(p, c.n, TimeGrid::uniform(c.T, c.dt), *c.seed, o);
}

Outcome virus_battery(const virus::RunArtifacts& game, double game_secs) {
  const auto t0 = Clock::now();
  const auto ce = shipped("constant_effort.json");
  virus::VirusParams pe = ce.model;
  const auto a = virus::run_constant_effort(pe, false, ce.n, TimeGrid::uniform(ce.T, ce.dt), *ce.seed);
  const auto fb = shipped("feedback.json");
  const auto b = virus::run_feedback(fb.model, fb.n, TimeGrid::uniform(fb.T, fb.dt), *fb.seed);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count() + game_secs;

  const bool ok_a = a.metric("fraction_below_2") >= 0.9;
  const bool ok_b = b.metric("terminal_mean") < b.metric("open_loop_terminal_mean");
  const bool ok_c = game.metric("converged") == 1.0 && game.metric("terminal_mean") > game.metric("initial_mean") &&
                    game.metric("control_min") >= 0.0 && game.metric("control_max") <= 1.0;
  return {ok_a && ok_b && ok_c && secs <= 300.0,
          "(a) below 2: " + num(a.metric("fraction_below_2")) + "; (b) terminal mean " +
              num(b.metric("terminal_mean")) + " vs open loop " + num(b.metric("open_loop_terminal_mean")) +
              "; (c) mean " + num(game.metric("initial_mean")) + " -> " + num(game.metric("terminal_mean")) +
              ", controls in [" + num(game.metric("control_min")) + ", " + num(game.metric("control_max")) +
              "]; runtime " + num(secs, "%.1f") + " s (limit 300)"};
}

Outcome positivity(const virus::RunArtifacts& game) {
  const double v = game.metric("min_v_positive_theta");
  bool all = v > 0.0;
  for (const auto& r : game.adjoint) all = all && r.v1_min > 0.0 && r.v2_min > 0.0;
  return {all, "min v over nodes and iterations " + num(v, "%.3g")};
}

Outcome max_principle(const virus::RunArtifacts& game) {
  const double f = game.metric("max_check_fraction");
  return {game.metric("converged") == 1.0 && f >= 0.95,
          "passed at " + num(100.0 * f, "%.1f") + "% of 1000 nodes, worst violation " +
              num(game.metric("max_check_worst"), "%.3g")};
}

Outcome transport() {
  const auto s = transport_suite(17, 200, 1000);
  return {s.pass(1e-9), "200 instances, max |quantile - LP| " + num(s.max_abs_error, "%.3g") + ", " +
                            std::to_string(s.kr_violations) + " of " + std::to_string(s.kr_functions) +
                            " Lipschitz functions above the bound"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "mfsmp_acceptance";
  fs::remove_all(root);
  std::size_t files = 0, mismatches = 0, scenarios = 0;
  std::string bad;
  for (const auto& id : cli::scenario_ids()) {
    std::string name = id + ".json";
    for (char& ch : name)
      if (ch == '-') ch = '_';
    cli::Config c = shipped(name);
    // Desk-scale sizes; the property does not depend on them.
    c.n = std::min<std::size_t>(c.n, 300);
    c.dt = std::max(c.dt, 0.02);
    c.chaos.n_list = {16, 32};
    c.chaos.options.reps = 2;
    c.chaos.options.n_ref = 128;
    c.checks.instances = 10;
    c.checks.perturbations = 100;
    std::ostringstream log;
    c.out = (root / (id + "_a")).string();
    const int ca = cli::execute(c, log);
    c.out = (root / (id + "_b")).string();
    c.threads = 2;
    const int cb = cli::execute(c, log);
    ++scenarios;
    if (ca != cb) {
      ++mismatches;
      bad += id + " ";
    }
    for (const auto& e : fs::directory_iterator(root / (id + "_a"))) {
      ++files;
      if (slurp(e.path()) != slurp(root / (id + "_b") / e.path().filename())) {
        ++mismatches;
        bad += id + "/" + e.path().filename().string() + " ";
      }
    }
  }
  fs::remove_all(root);
  return {mismatches == 0, std::to_string(scenarios) + " scenarios, " + std::to_string(files) +
                               " files compared across repeats (1 and 2 threads), " + std::to_string(mismatches) +
                               " differences" + (bad.empty() ? "" : ": " + bad)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "propagation of chaos rate", chaos_rate);
  report(2, "Picard contraction", picard);
  report(3, "Gateaux catalog vs finite differences", gateaux);
  report(4, "Donsker-Varadhan identity", donsker_varadhan_identity);
  report(5, "small-theta expansion", small_theta);
  report(6, "LQ validation", lq);

  virus::RunArtifacts game;
  double game_secs = 0.0;
  std::string game_error;
  try {
    const auto t0 = Clock::now();
    game = game_run();
    game_secs = std::chrono::duration<double>(Clock::now() - t0).count();
  } catch (const std::exception& e) {
    game_error = e.what();
  }
  auto with_game = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!game_error.empty()) return {false, "game run failed: " + game_error};
      return fn();
    };
  };
  report(7, "virus qualitative battery", with_game([&] { return virus_battery(game, game_secs); }));
  report(8, "adjoint positivity", with_game([&] { return positivity(game); }));
  report(9, "maximum principle spot-check", with_game([&] { return max_principle(game); }));
  report(10, "transport correctness", transport);
  report(11, "determinism", determinism);

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
