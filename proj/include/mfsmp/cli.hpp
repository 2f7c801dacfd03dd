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

#pragma once

// Config loading, validation, scenario dispatch and artifact writing behind
// the `mfsmp` executable. Configs are JSON; unknown keys are rejected and the
// seed is mandatory. Every run writes manifest.json first (status
// "running") and rewrites it when done.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfsmp/diagnostics.hpp"
#include "mfsmp/errors.hpp"
#include "mfsmp/particle_engine.hpp"
#include "mfsmp/scenario_virus.hpp"
#include "mfsmp/smp_fbsdes.hpp"

#ifndef MFSMP_VERSION
#define MFSMP_VERSION "v0.1.0"
#endif

namespace mfsmp::cli {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

inline const std::vector<std::string>& scenario_ids() {
  static const std::vector<std::string> ids = {"uncontrolled", "constant-effort", "feedback",  "game",
                                               "chaos-study",  "gateaux-check",   "dv-check", "lq-validate"};
  return ids;
}

struct Issue {
  std::string code;
  std::string path;
  std::string message;
};

struct ChaosConfig {
  std::vector<std::size_t> n_list{64, 128, 256, 512, 1024, 2048};
  std::vector<double> alphas{1.0, 1.2, 2.0};
  double mu = 1.0;
  double sigma = 0.1;
  ChaosOptions options{};
};

struct ChecksConfig {
  std::size_t instances = 0;  // 0: 50 for gateaux-check, 100 for dv-check
  std::size_t perturbations = 1000;
  double eps = 1e-4;
};

struct Config {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::size_t n = 1000;
  double T = 1.0;
  double dt = 1e-3;
  std::size_t threads = 1;
  std::string out = "out";
  virus::VirusParams model{};
  bool mean_field = false;
  GameOptions solver{0.5, 1e-5, 50, 32, 1};
  virus::RunOptions output{};
  ChaosConfig chaos{};
  ChecksConfig checks{};
  LqValidationOptions lq{};
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

/// Walks one JSON object, recording issues instead of throwing.
class Reader {
 public:
  Reader(const Json& j, std::string path, std::vector<Issue>& issues) : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) issue("ConfigError", "", "expected an object");
  }

  bool ok() const { return j_.is_object(); }
  bool has(const std::string& key) const { return ok() && j_.contains(key); }
  const Json& at(const std::string& key) const { return j_.at(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void issue(const std::string& code, const std::string& key, const std::string& message) {
    issues_.push_back({code, key.empty() ? path_ : sub(key), message});
  }

  void reject_unknown(std::initializer_list<const char*> allowed) {
    if (!ok()) return;
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j_.items()) {
      if (!known.count(key)) issue("UnknownKey", key, "unknown key");
    }
  }

  void real(const std::string& key, double& dst) {
    if (!has(key)) return;
    if (!at(key).is_number()) return issue("TypeMismatch", key, "expected a number");
    dst = at(key).get<double>();
    if (!std::isfinite(dst)) issue("OutOfRange", key, "must be finite");
  }

  void count(const std::string& key, std::size_t& dst) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      return issue("TypeMismatch", key, "expected a nonnegative integer");
    }
    dst = v.get<std::size_t>();
  }

  void text(const std::string& key, std::string& dst) {
    if (!has(key)) return;
    if (!at(key).is_string()) return issue("TypeMismatch", key, "expected a string");
    dst = at(key).get<std::string>();
  }

  void flag(const std::string& key, bool& dst) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) return issue("TypeMismatch", key, "expected a boolean");
    dst = at(key).get<bool>();
  }

  template <typename T>
  void list(const std::string& key, std::vector<T>& dst) {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) return issue("TypeMismatch", key, "expected an array");
    std::vector<T> out;
    for (const auto& e : v) {
      if constexpr (std::is_same_v<T, double>) {
        if (!e.is_number()) return issue("TypeMismatch", key, "expected numbers");
      } else {
        if (!e.is_number_unsigned()) return issue("TypeMismatch", key, "expected nonnegative integers");
      }
      out.push_back(e.get<T>());
    }
    dst = std::move(out);
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<Issue>& issues_;
};

inline void read_x0(const Json& j, const std::string& path, virus::InitialLawSpec& x0, std::vector<Issue>& issues) {
  Reader r(j, path, issues);
  r.reject_unknown({"kind", "value", "sd", "atoms", "jitter"});
  r.text("kind", x0.kind);
  r.real("value", x0.value);
  r.real("sd", x0.sd);
  r.list("atoms", x0.atoms);
  r.real("jitter", x0.jitter);
}

inline void read_model(const Json& j, Config& c, std::vector<Issue>& issues) {
  Reader r(j, "model", issues);
  r.reject_unknown({"kappa", "K", "sigma", "alpha", "theta1", "theta2", "c1", "c1_bar", "effort", "gamma_floor",
                    "mean_field", "x0"});
  auto& m = c.model;
  r.real("kappa", m.kappa);
  r.real("K", m.K);
  r.real("sigma", m.sigma);
  r.real("alpha", m.alpha);
  r.real("theta1", m.theta1);
  r.real("theta2", m.theta2);
  r.real("c1", m.c1);
  r.real("c1_bar", m.c1_bar);
  r.real("effort", m.effort);
  r.real("gamma_floor", m.gamma_floor);
  r.flag("mean_field", c.mean_field);
  if (r.has("x0")) read_x0(r.at("x0"), "model.x0", m.x0, issues);
}

inline void read_solver(const Json& j, GameOptions& g, std::vector<Issue>& issues) {
  Reader r(j, "solver", issues);
  r.reject_unknown({"damping", "tol", "max_iter", "bins"});
  r.real("damping", g.damping);
  r.real("tol", g.tol);
  r.count("max_iter", g.max_iter);
  r.count("bins", g.bins);
}

inline void read_output(const Json& j, virus::RunOptions& o, std::vector<Issue>& issues) {
  Reader r(j, "output", issues);
  r.reject_unknown({"snapshots", "sample_paths", "max_check_samples"});
  r.list("snapshots", o.snapshots);
  r.count("sample_paths", o.sample_paths);
  r.count("max_check_samples", o.max_check_samples);
}

inline void read_chaos(const Json& j, ChaosConfig& c, std::vector<Issue>& issues) {
  Reader r(j, "chaos", issues);
  r.reject_unknown({"n_list", "alphas", "mu", "sigma", "reps", "n_ref", "ref_tol", "ref_max_iter", "ref_atoms"});
  r.list("n_list", c.n_list);
  r.list("alphas", c.alphas);
  r.real("mu", c.mu);
  r.real("sigma", c.sigma);
  r.count("reps", c.options.reps);
  r.count("n_ref", c.options.n_ref);
  r.real("ref_tol", c.options.ref_tol);
  r.count("ref_max_iter", c.options.ref_max_iter);
  r.count("ref_atoms", c.options.ref_atoms);
}

inline void read_checks(const Json& j, ChecksConfig& c, std::vector<Issue>& issues) {
  Reader r(j, "checks", issues);
  r.reject_unknown({"instances", "perturbations", "eps"});
  r.count("instances", c.instances);
  r.count("perturbations", c.perturbations);
  r.real("eps", c.eps);
}

inline void read_lq(const Json& j, LqValidationOptions& o, std::vector<Issue>& issues) {
  Reader r(j, "lq", issues);
  r.reject_unknown({"a", "c", "q", "r", "g", "sigma", "x0_mean", "x0_sd"});
  r.real("a", o.params.a);
  r.real("c", o.params.c);
  r.real("q", o.params.q);
  r.real("r", o.params.r);
  r.real("g", o.params.g);
  r.real("sigma", o.params.sigma);
  r.real("x0_mean", o.x0_mean);
  r.real("x0_sd", o.x0_sd);
}

}  // namespace detail

/// Fills a Config from parsed JSON. Structural problems land in `issues`;
/// range checks are done separately by check_ranges.
inline Config parse_config(const Json& j, std::vector<Issue>& issues) {
  Config c;
  detail::Reader r(j, "", issues);
  if (!r.ok()) return c;
  r.reject_unknown({"scenario", "seed", "n", "T", "dt", "threads", "out", "model", "solver", "output", "chaos",
                    "checks", "lq"});
  r.text("scenario", c.scenario);
  if (r.has("seed")) {
    if (!j.at("seed").is_number_unsigned()) {
      r.issue("TypeMismatch", "seed", "expected a nonnegative integer");
    } else {
      c.seed = j.at("seed").get<std::uint64_t>();
    }
  }
  r.count("n", c.n);
  r.real("T", c.T);
  r.real("dt", c.dt);
  r.count("threads", c.threads);
  r.text("out", c.out);
  if (r.has("model")) detail::read_model(j.at("model"), c, issues);
  if (r.has("solver")) detail::read_solver(j.at("solver"), c.solver, issues);
  if (r.has("output")) detail::read_output(j.at("output"), c.output, issues);
  if (r.has("chaos")) detail::read_chaos(j.at("chaos"), c.chaos, issues);
  if (r.has("checks")) detail::read_checks(j.at("checks"), c.checks, issues);
  if (r.has("lq")) detail::read_lq(j.at("lq"), c.lq, issues);
  return c;
}

/// Range and consistency checks on a fully assembled config.
inline void check_ranges(const Config& c, std::vector<Issue>& issues) {
  auto add = [&](const char* code, const char* path, const std::string& msg) { issues.push_back({code, path, msg}); };
  const auto& ids = scenario_ids();
  if (c.scenario.empty()) {
    add("MissingScenario", "scenario", "scenario is required");
  } else if (std::find(ids.begin(), ids.end(), c.scenario) == ids.end()) {
    add("UnknownScenario", "scenario", "unknown scenario '" + c.scenario + "'");
  }
  if (!c.seed) add("MissingSeed", "seed", "an explicit seed is required for reproducibility");
  if (c.n == 0) add("OutOfRange", "n", "n must be >= 1");
  if (!(c.T > 0.0)) add("OutOfRange", "T", "T must be positive");
  if (!(c.dt > 0.0)) {
    add("OutOfRange", "dt", "dt must be positive");
  } else if (c.T > 0.0) {
    try {
      (void)TimeGrid::uniform(c.T, c.dt);
    } catch (const Error& e) {
      add("InvalidGrid", "dt", e.what());
    }
  }
  if (c.threads == 0) add("OutOfRange", "threads", "threads must be >= 1");
  if (c.out.empty()) add("OutOfRange", "out", "output directory must be nonempty");

  const auto& m = c.model;
  if (!(m.alpha >= 1.0)) add("AlphaOutOfRange", "model.alpha", "alpha must be >= 1 (quasi-norms are out of scope)");
  if (!(m.kappa > 0.0)) add("OutOfRange", "model.kappa", "kappa must be positive");
  if (!(m.K > 0.0)) add("OutOfRange", "model.K", "K must be positive");
  if (!(m.sigma >= 0.0)) add("OutOfRange", "model.sigma", "sigma must be >= 0");
  if (!(m.c1 >= 0.0)) add("OutOfRange", "model.c1", "c1 must be >= 0");
  if (!(m.c1_bar >= 0.0)) add("OutOfRange", "model.c1_bar", "c1_bar must be >= 0");
  if (!(m.effort >= -1.0 && m.effort <= 1.0)) add("OutOfRange", "model.effort", "effort must lie in [-1, 1]");
  try {
    m.x0.validate();
  } catch (const Error& e) {
    add("OutOfRange", "model.x0", e.what());
  }

  const auto& s = c.solver;
  if (!(s.damping > 0.0 && s.damping <= 1.0)) add("OutOfRange", "solver.damping", "damping must lie in (0, 1]");
  if (!(s.tol > 0.0)) add("OutOfRange", "solver.tol", "tol must be positive");
  if (s.max_iter == 0) add("OutOfRange", "solver.max_iter", "max_iter must be >= 1");
  if (s.bins == 0) add("OutOfRange", "solver.bins", "bins must be >= 1");

  const auto& ch = c.chaos;
  if (ch.n_list.empty()) add("OutOfRange", "chaos.n_list", "n_list must be nonempty");
  if (!std::is_sorted(ch.n_list.begin(), ch.n_list.end()) ||
      std::adjacent_find(ch.n_list.begin(), ch.n_list.end()) != ch.n_list.end()) {
    add("OutOfRange", "chaos.n_list", "n_list must be strictly ascending");
  }
  for (std::size_t v : ch.n_list)
    if (v == 0) add("OutOfRange", "chaos.n_list", "particle counts must be >= 1");
  if (ch.alphas.empty()) add("OutOfRange", "chaos.alphas", "alphas must be nonempty");
  for (double a : ch.alphas)
    if (!(a >= 1.0)) add("AlphaOutOfRange", "chaos.alphas", "alpha must be >= 1");
  if (ch.options.reps == 0) add("OutOfRange", "chaos.reps", "reps must be >= 1");
  if (!(ch.options.ref_tol > 0.0)) add("OutOfRange", "chaos.ref_tol", "ref_tol must be positive");
  if (ch.options.ref_max_iter == 0) add("OutOfRange", "chaos.ref_max_iter", "ref_max_iter must be >= 1");
  if (!(ch.sigma >= 0.0)) add("OutOfRange", "chaos.sigma", "sigma must be >= 0");

  if (!(c.checks.eps > 0.0 && c.checks.eps < 1.0)) add("OutOfRange", "checks.eps", "eps must lie in (0, 1)");

  const auto& lq = c.lq.params;
  if (!(lq.r > 0.0)) add("OutOfRange", "lq.r", "r must be positive");
  if (!(lq.q >= 0.0)) add("OutOfRange", "lq.q", "q must be >= 0");
  if (!(lq.g >= 0.0)) add("OutOfRange", "lq.g", "g must be >= 0");
  if (!(lq.sigma >= 0.0)) add("OutOfRange", "lq.sigma", "sigma must be >= 0");
  if (!(c.lq.x0_sd >= 0.0)) add("OutOfRange", "lq.x0_sd", "x0_sd must be >= 0");
}

inline Json read_json_file(const std::string& path, std::vector<Issue>& issues) {
  std::ifstream in(path);
  if (!in) {
    issues.push_back({"IOFailure", "", "cannot read '" + path + "'"});
    return Json();
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    issues.push_back({"ParseError", "", e.what()});
    return Json();
  }
}

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::optional<double> dt;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::vector<std::size_t>> n_list;
};

inline void apply(const Overrides& o, Config& c) {
  if (o.scenario) c.scenario = *o.scenario;
  if (o.seed) c.seed = *o.seed;
  if (o.n) c.n = *o.n;
  if (o.dt) c.dt = *o.dt;
  if (o.out) c.out = *o.out;
  if (o.threads) c.threads = *o.threads;
  if (o.n_list) c.chaos.n_list = *o.n_list;
}

inline Config load_config(const std::string& path, const Overrides& o, std::vector<Issue>& issues) {
  const Json j = read_json_file(path, issues);
  if (!issues.empty()) return {};
  Config c = parse_config(j, issues);
  apply(o, c);
  check_ranges(c, issues);
  return c;
}

inline OrderedJson issues_json(const std::vector<Issue>& issues) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& i : issues) arr.push_back({{"code", i.code}, {"path", i.path}, {"message", i.message}});
  return arr;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Resolved parameters as they entered the run (threads and the output path
/// are excluded because they do not affect results).
inline OrderedJson config_json(const Config& c) {
  const auto& m = c.model;
  OrderedJson j;
  j["scenario"] = c.scenario;
  j["seed"] = c.seed.value_or(0);
  j["n"] = c.n;
  j["T"] = c.T;
  j["dt"] = c.dt;
  j["model"] = {{"kappa", m.kappa},
                {"K", m.K},
                {"sigma", m.sigma},
                {"alpha", m.alpha},
                {"theta1", m.theta1},
                {"theta2", m.theta2},
                {"c1", m.c1},
                {"c1_bar", m.c1_bar},
                {"effort", m.effort},
                {"gamma_floor", m.gamma_floor},
                {"mean_field", c.mean_field},
                {"x0",
                 {{"kind", m.x0.kind},
                  {"value", m.x0.value},
                  {"sd", m.x0.sd},
                  {"atoms", m.x0.atoms},
                  {"jitter", m.x0.jitter}}}};
  j["solver"] = {{"damping", c.solver.damping},
                 {"tol", c.solver.tol},
                 {"max_iter", c.solver.max_iter},
                 {"bins", c.solver.bins}};
  j["output"] = {{"snapshots", c.output.snapshots},
                 {"sample_paths", c.output.sample_paths},
                 {"max_check_samples", c.output.max_check_samples}};
  j["chaos"] = {{"n_list", c.chaos.n_list},     {"alphas", c.chaos.alphas},
                {"mu", c.chaos.mu},             {"sigma", c.chaos.sigma},
                {"reps", c.chaos.options.reps}, {"n_ref", c.chaos.options.n_ref},
                {"ref_tol", c.chaos.options.ref_tol}, {"ref_max_iter", c.chaos.options.ref_max_iter},
                {"ref_atoms", c.chaos.options.ref_atoms}};
  j["checks"] = {{"instances", c.checks.instances}, {"perturbations", c.checks.perturbations}, {"eps", c.checks.eps}};
  const auto& lq = c.lq.params;
  j["lq"] = {{"a", lq.a},         {"c", lq.c},         {"q", lq.q},
             {"r", lq.r},         {"g", lq.g},         {"sigma", lq.sigma},
             {"x0_mean", c.lq.x0_mean}, {"x0_sd", c.lq.x0_sd}};
  return j;
}

/// Numerical constants fixed in code that a reproduction needs to know.
inline OrderedJson scheme_json() {
  return {{"integrator", "euler-maruyama, left point"},
          {"rng", "splitmix64 counter streams keyed by (seed, domain, particle, step)"},
          {"blowup_level", 1e6},
          {"regression_basis", "1, x, x^2, x^3, z, xz (standardized)"},
          {"regression_condition_limit", StepRegressor::kConditionLimit},
          {"regression_ridge", StepRegressor::kRidge},
          {"v_floor", kVFloor},
          {"histogram_bins", 40},
          {"control_bins", 32},
          {"max_check_grid", 201},
          {"max_check_tol", 1e-3}};
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with %.17g numbers.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
    for (std::size_t j = 0; j < header.size(); ++j) out_ << (j ? "," : "") << header[j];
    out_ << '\n';
  }

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }
  void row(const std::vector<double>& values) {
    for (std::size_t j = 0; j < values.size(); ++j) out_ << (j ? "," : "") << fmt(values[j]);
    out_ << '\n';
  }

  ~CsvWriter() = default;
  void close() {
    out_.close();
    if (!out_) throw Error(ErrorCode::IOFailure, "failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Scenario outputs
// ---------------------------------------------------------------------------

struct RunOutcome {
  std::string status = "ok";  // ok | not_converged | check_failed
  std::vector<std::string> files;
  OrderedJson summary = OrderedJson::object();
  std::vector<double> residuals;
};

namespace detail {

inline void write_series(const std::filesystem::path& path, const std::vector<virus::SeriesRow>& rows) {
  CsvWriter w(path, {"t", "mean", "var", "alpha_moment", "q05", "q25", "q50", "q75", "q95"});
  for (const auto& r : rows) w.row({r.t, r.mean, r.var, r.alpha_moment, r.q05, r.q25, r.q50, r.q75, r.q95});
  w.close();
}

inline void write_artifacts(const std::filesystem::path& dir, const virus::RunArtifacts& a, RunOutcome& out) {
  write_series(dir / "series.csv", a.series);
  out.files.push_back("series.csv");
  if (!a.comparison_name.empty()) {
    const std::string name = "series_" + a.comparison_name + ".csv";
    write_series(dir / name, a.comparison);
    out.files.push_back(name);
  }
  for (const auto& h : a.histograms) {
    const std::string name = "hist_" + std::to_string(h.step) + ".csv";
    CsvWriter w(dir / name, {"bin_left", "bin_right", "mass"});
    for (std::size_t b = 0; b < h.mass.size(); ++b) w.row({h.left[b], h.right[b], h.mass[b]});
    w.close();
    out.files.push_back(name);
  }
  {
    CsvWriter w(dir / "controls.csv", {"t", "bin_center", "u1", "u2"});
    for (const auto& r : a.controls) w.row({r.t, r.center, r.u1, r.u2});
    w.close();
    out.files.push_back("controls.csv");
  }
  if (!a.paths.empty()) {
    std::vector<std::string> header{"t"};
    for (std::size_t i = 0; i < a.paths.size(); ++i) header.push_back("path_" + std::to_string(i));
    CsvWriter w(dir / "paths.csv", header);
    for (std::size_t k = 0; k < a.path_times.size(); ++k) {
      std::vector<double> row{a.path_times[k]};
      for (const auto& p : a.paths) row.push_back(p[k]);
      w.row(row);
    }
    w.close();
    out.files.push_back("paths.csv");
  }
  if (!a.adjoint.empty()) {
    CsvWriter w(dir / "adjoint.csv", {"t", "p1_star_mean", "p2_star_mean", "v1_min", "v2_min", "ell1_mean", "ell2_mean"});
    for (const auto& r : a.adjoint) w.row({r.t, r.p1, r.p2, r.v1_min, r.v2_min, r.ell1, r.ell2});
    w.close();
    out.files.push_back("adjoint.csv");
  }
  for (const auto& [k, v] : a.summary) out.summary[k] = v;
  out.residuals = a.residuals;
}

inline RunOutcome run_virus(const Config& c, const std::filesystem::path& dir) {
  virus::VirusParams p = c.model;
  p.T = c.T;
  const auto grid = TimeGrid::uniform(c.T, c.dt);
  virus::RunOptions o = c.output;
  o.threads = c.threads;
  o.game = c.solver;
  o.game.threads = c.threads;
  const std::uint64_t seed = *c.seed;
  virus::RunArtifacts a;
  if (c.scenario == "uncontrolled") a = virus::run_uncontrolled(p, c.n, grid, seed, o);
  if (c.scenario == "constant-effort") a = virus::run_constant_effort(p, c.mean_field, c.n, grid, seed, o);
  if (c.scenario == "feedback") a = virus::run_feedback(p, c.n, grid, seed, o);
  if (c.scenario == "game") a = virus::run_game(p, c.n, grid, seed, o);
  RunOutcome out;
  write_artifacts(dir, a, out);
  if (c.scenario == "game" && a.metric("converged") != 1.0) out.status = "not_converged";
  return out;
}

inline RunOutcome run_chaos(const Config& c, const std::filesystem::path& dir) {
  const auto grid = TimeGrid::uniform(c.T, c.dt);
  ChaosOptions opt = c.chaos.options;
  opt.threads = c.threads;
  RunOutcome out;
  CsvWriter rows(dir / "chaos.csv", {"alpha", "n", "error"});
  CsvWriter slopes(dir / "chaos_slope.csv", {"alpha", "slope", "intercept", "n_ref", "reference_iterations"});
  for (double alpha : c.chaos.alphas) {
    auto spec = build_cooperative_spec(alpha, c.chaos.mu, c.chaos.sigma);
    spec.horizon = c.T;
    const auto r = chaos_study(spec, zero_policy(), c.chaos.n_list, grid, *c.seed, opt);
    for (const auto& row : r.rows) rows.row({alpha, static_cast<double>(row.n), row.error});
    slopes.row({alpha, r.slope, r.intercept, static_cast<double>(r.n_ref),
                static_cast<double>(r.reference_residuals.size())});
    out.summary["slope_alpha_" + fmt(alpha)] = r.slope;
    if (!(r.slope >= -0.65 && r.slope <= -0.35)) out.status = "check_failed";
  }
  rows.close();
  slopes.close();
  out.files = {"chaos.csv", "chaos_slope.csv"};
  return out;
}

inline RunOutcome run_gateaux(const Config& c, const std::filesystem::path& dir) {
  const auto s = gateaux_suite(*c.seed, c.checks.instances ? c.checks.instances : 50, c.checks.eps);
  // The first column is text, so this table bypasses CsvWriter.
  std::ostringstream text;
  text << "functional,instance,alpha,closed_form,finite_difference,rel_error\n";
  for (const auto& r : s.rows) {
    text << functional_name(r.functional) << ',' << r.instance << ',' << fmt(r.alpha) << ',' << fmt(r.closed) << ','
         << fmt(r.finite_difference) << ',' << fmt(r.rel_error) << '\n';
  }
  write_text(dir / "gateaux.csv", text.str());
  RunOutcome out;
  out.files = {"gateaux.csv"};
  out.summary["instances"] = s.rows.size();
  out.summary["max_rel_error"] = s.max_rel_error;
  if (!s.pass()) out.status = "check_failed";
  return out;
}

inline RunOutcome run_dv(const Config& c, const std::filesystem::path& dir) {
  const auto s = dv_suite(*c.seed, c.checks.instances ? c.checks.instances : 100, c.checks.perturbations);
  CsvWriter w(dir / "dv.csv",
              {"instance", "support", "theta", "lhs", "sup_value", "identity_residual", "worst_perturbation"});
  for (const auto& r : s.rows) {
    w.row({static_cast<double>(r.instance), static_cast<double>(r.support), r.theta, r.lhs, r.sup_value,
           r.identity_residual, r.worst_perturbation});
  }
  w.close();
  RunOutcome out;
  out.files = {"dv.csv"};
  out.summary["instances"] = s.rows.size();
  out.summary["max_identity_residual"] = s.max_identity_residual;
  out.summary["perturbation_violations"] = s.perturbation_violations;
  if (!s.pass()) out.status = "check_failed";
  return out;
}

inline RunOutcome run_lq(const Config& c, const std::filesystem::path& dir) {
  LqValidationOptions o = c.lq;
  o.params.T = c.T;
  o.n = c.n;
  o.dt = c.dt;
  o.game = c.solver;
  o.game.threads = c.threads;
  const auto r = lq_validation(*c.seed, o);
  CsvWriter w(dir / "lq.csv", {"t", "bin_center", "solver", "oracle", "abs_error"});
  for (const auto& row : r.rows) w.row({row.t, row.center, row.solver, row.oracle, std::abs(row.solver - row.oracle)});
  w.close();
  RunOutcome out;
  out.files = {"lq.csv"};
  out.summary["sup_error"] = r.sup_error;
  out.summary["min_drift"] = r.min_drift;
  out.summary["iterations"] = r.iterations;
  out.summary["converged"] = r.converged;
  if (!r.converged) {
    out.status = "not_converged";
  } else if (!r.pass()) {
    out.status = "check_failed";
  }
  return out;
}

}  // namespace detail

inline OrderedJson manifest_json(const Config& c, const std::string& status, const RunOutcome* outcome,
                                 const std::string& error = "") {
  OrderedJson m;
  m["tool"] = "mfsmp";
  m["version"] = MFSMP_VERSION;
  m["status"] = status;
  m["config"] = config_json(c);
  m["scheme"] = scheme_json();
  if (outcome) {
    m["residuals"] = outcome->residuals;
    m["summary"] = outcome->summary;
    m["files"] = outcome->files;
  }
  if (!error.empty()) m["error"] = error;
  return m;
}

/// Executes a validated config. Returns the process exit code.
inline int execute(const Config& c, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  const fs::path dir(c.out);
  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IOFailure, "cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "manifest.json", manifest_json(c, "running", nullptr).dump(2) + "\n");
  } catch (const Error& e) {
    log << "mfsmp: " << e.what() << '\n';
    return kExitConfig;
  }

  RunOutcome outcome;
  try {
    if (c.scenario == "chaos-study") {
      outcome = detail::run_chaos(c, dir);
    } else if (c.scenario == "gateaux-check") {
      outcome = detail::run_gateaux(c, dir);
    } else if (c.scenario == "dv-check") {
      outcome = detail::run_dv(c, dir);
    } else if (c.scenario == "lq-validate") {
      outcome = detail::run_lq(c, dir);
    } else {
      outcome = detail::run_virus(c, dir);
    }
  } catch (const Error& e) {
    const int code = is_numerical(e.code()) ? kExitNumerical : kExitConfig;
    log << "mfsmp: " << e.what() << '\n';
    try {
      write_text(dir / "manifest.json", manifest_json(c, "failed", nullptr, e.what()).dump(2) + "\n");
    } catch (const Error&) {
    }
    return code;
  }

  try {
    write_text(dir / "manifest.json", manifest_json(c, outcome.status, &outcome).dump(2) + "\n");
  } catch (const Error& e) {
    log << "mfsmp: " << e.what() << '\n';
    return kExitConfig;
  }
  if (outcome.status != "ok") {
    log << "mfsmp: run finished with status " << outcome.status << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

/// `mfsmp run`: load, override, validate, execute.
inline int run(const std::string& config_path, const Overrides& o, std::ostream& log = std::cerr) {
  std::vector<Issue> issues;
  const Config c = load_config(config_path, o, issues);
  if (!issues.empty()) {
    for (const auto& i : issues) log << "mfsmp: " << i.code << " at '" << i.path << "': " << i.message << '\n';
    return kExitConfig;
  }
  return execute(c, log);
}

/// `mfsmp validate`: structured report on stdout, nothing written to disk.
inline int validate(const std::string& config_path, std::ostream& out = std::cout) {
  std::vector<Issue> issues;
  (void)load_config(config_path, Overrides{}, issues);
  OrderedJson report;
  report["config"] = config_path;
  report["valid"] = issues.empty();
  report["diagnostics"] = issues_json(issues);
  out << report.dump(2) << '\n';
  return issues.empty() ? kExitOk : kExitConfig;
}

}  // namespace mfsmp::cli
