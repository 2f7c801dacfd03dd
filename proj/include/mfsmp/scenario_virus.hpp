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

// Attacker/defender control of information spreading on a network. The
// infected-state proportion follows a logistic law gamma(x) = kappa x (1 - x/K);
// the attacker pushes it up with u1, the defender down with u2, both in [0, 1].
// In the mean-field model the drift is |gamma + u1 - u2| ||m||_alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfsmp/errors.hpp"
#include "mfsmp/measure_kit.hpp"
#include "mfsmp/model_kernel.hpp"
#include "mfsmp/particle_engine.hpp"
#include "mfsmp/risk_functional.hpp"
#include "mfsmp/smp_fbsdes.hpp"

namespace mfsmp::virus {

/// Initial-law descriptor: "point" (value), "normal" (value, sd) or
/// "bimodal" (equal mixture of atoms, each with Gaussian jitter).
struct InitialLawSpec {
  std::string kind = "point";
  double value = 0.3;
  double sd = 0.0;
  std::vector<double> atoms{1.0, 2.0};
  double jitter = 0.05;

  InitialLaw make() const {
    if (kind == "point") return initial_point(value);
    if (kind == "normal") return initial_normal(value, sd);
    if (kind == "bimodal") return initial_mixture(atoms, jitter);
    throw Error(ErrorCode::InvalidParams, "unknown initial law kind '" + kind + "'");
  }

  void validate() const {
    if (kind != "point" && kind != "normal" && kind != "bimodal") {
      throw Error(ErrorCode::InvalidParams, "unknown initial law kind '" + kind + "'");
    }
    if (!std::isfinite(value) || !(sd >= 0.0) || !(jitter >= 0.0)) {
      throw Error(ErrorCode::InvalidParams, "initial law parameters must be finite, sd and jitter >= 0");
    }
    if (kind == "bimodal" && atoms.empty()) throw Error(ErrorCode::InvalidParams, "bimodal law needs atoms");
  }
};

struct VirusParams {
  double kappa = 10.0;
  double K = 2.0;
  double sigma = 0.02;
  double alpha = 1.2;
  double theta1 = 0.1;
  double theta2 = 0.3;
  double c1 = 0.8;
  double c1_bar = 0.8;
  /// Defender-minus-attacker effort u2 - u1 for constant-effort runs.
  double effort = 0.3;
  /// Lower bound on the logistic rate inside the mean-field drift.
  double gamma_floor = 1.0;
  double T = 1.0;
  InitialLawSpec x0;

  double gamma(double x) const { return kappa * x * (1.0 - x / K); }
  double gamma_x(double x) const { return kappa * (1.0 - 2.0 * x / K); }

  void validate() const {
    if (!(kappa > 0.0) || !(K > 0.0)) throw Error(ErrorCode::InvalidParams, "kappa and K must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidParams, "sigma must be >= 0");
    require_alpha(alpha);
    if (!(c1 >= 0.0) || !(c1_bar >= 0.0)) throw Error(ErrorCode::InvalidParams, "c1 and c1_bar must be >= 0");
    if (!std::isfinite(theta1) || !std::isfinite(theta2)) throw Error(ErrorCode::InvalidParams, "theta must be finite");
    if (!(effort >= -1.0 && effort <= 1.0)) throw Error(ErrorCode::InvalidParams, "effort must lie in [-1, 1]");
    if (!std::isfinite(gamma_floor)) throw Error(ErrorCode::InvalidParams, "gamma_floor must be finite");
    if (!(T > 0.0)) throw Error(ErrorCode::InvalidParams, "T must be positive");
    x0.validate();
  }
};

/// The two-player mean-field spec. Player 0 is the attacker, player 1 the defender.
inline ModelSpec build_virus_spec(const VirusParams& p) {
  p.validate();
  ModelSpec spec;
  spec.alpha = p.alpha;
  spec.horizon = p.T;
  const double floor = p.gamma_floor;
  auto g = [p, floor](double, double x, Controls u) { return std::max(p.gamma(x), floor) + u[0] - u[1]; };
  auto g_x = [p, floor](double, double x, Controls) { return p.gamma(x) > floor ? p.gamma_x(x) : 0.0; };
  spec.kernel = std::make_shared<MultiplicativeKernel>(g, g_x);
  const double sigma = p.sigma;
  spec.diffusion = [sigma](double, double) { return sigma; };
  spec.diffusion_x = [](double, double) { return 0.0; };
  spec.initial_law = p.x0.make();

  const double a = p.alpha, c1 = p.c1, cb = p.c1_bar;
  // h = s [(c1/alpha)|x|^alpha + (cb/alpha) m_alpha], s = -1 attacker, +1 defender.
  auto terminal = [a, c1, cb](double s) {
    return [a, c1, cb, s](double x, const EmpiricalMeasure& m) {
      return s * (c1 / a * abs_pow(x, a) + cb / a * alpha_moment(m, a));
    };
  };
  auto terminal_x = [a, c1](double s) {
    return [a, c1, s](double x, const EmpiricalMeasure&) { return s * c1 * abs_pow(x, a - 1.0) * sign(x); };
  };
  // d/dx of the measure derivative (cb/alpha)|x|^alpha: independent of the source point.
  auto terminal_mf = [a, cb](double s) {
    return [a, cb, s](std::span<const double> xs, std::span<const double> w, const EmpiricalMeasure&,
                      std::span<double> out) {
      double wbar = 0.0;
      for (double v : w) wbar += v;
      wbar /= static_cast<double>(w.size());
      for (std::size_t j = 0; j < xs.size(); ++j) out[j] = s * wbar * cb * abs_pow(xs[j], a - 1.0) * sign(xs[j]);
    };
  };
  // With gamma_floor >= 1 and u in [0,1] the kernel factor is nonnegative,
  // so the Hamiltonian is a concave quadratic in each control.
  const bool closed_form = floor >= 1.0;

  PlayerSpec attacker;
  attacker.name = "attacker";
  attacker.theta = p.theta1;
  attacker.box = {0.0, 1.0};
  attacker.running_cost = [](double, double, const EmpiricalMeasure&, Controls u) { return 0.5 * u[0] * u[0]; };
  attacker.running_cost_x = [](double, double, const EmpiricalMeasure&, Controls) { return 0.0; };
  attacker.terminal_cost = terminal(-1.0);
  attacker.terminal_cost_x = terminal_x(-1.0);
  attacker.terminal_mean_field = terminal_mf(-1.0);
  if (closed_form) {
    attacker.best_response = [a](const ArgmaxInput& in, std::span<double> out) {
      const double norm = alpha_norm(*in.measure, a);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::clamp(-norm * in.p_star[j], 0.0, 1.0);
    };
  }

  PlayerSpec defender;
  defender.name = "defender";
  defender.theta = p.theta2;
  defender.box = {0.0, 1.0};
  defender.running_cost = [](double, double x, const EmpiricalMeasure&, Controls u) {
    return 0.5 * x * x + 0.5 * u[1] * u[1];
  };
  defender.running_cost_x = [](double, double x, const EmpiricalMeasure&, Controls) { return x; };
  defender.terminal_cost = terminal(1.0);
  defender.terminal_cost_x = terminal_x(1.0);
  defender.terminal_mean_field = terminal_mf(1.0);
  if (closed_form) {
    defender.best_response = [a](const ArgmaxInput& in, std::span<double> out) {
      const double norm = alpha_norm(*in.measure, a);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::clamp(norm * in.p_star[j], 0.0, 1.0);
    };
  }

  spec.players.push_back(std::move(attacker));
  spec.players.push_back(std::move(defender));
  return spec;
}

/// Same players, but the plain signed dynamics dx = (gamma + u1 - u2) dt + sigma dB.
inline ModelSpec build_local_spec(const VirusParams& p) {
  ModelSpec spec = build_virus_spec(p);
  spec.kernel = std::make_shared<LocalDrift>([p](double, double x, Controls u) { return p.gamma(x) + u[0] - u[1]; },
                                             [p](double, double x, Controls) { return p.gamma_x(x); });
  return spec;
}

/// Constant profile (u1, u2) with u2 - u1 = e, the smaller control at 0.
inline std::vector<double> effort_profile(double e) {
  return e >= 0.0 ? std::vector<double>{0.0, e} : std::vector<double>{-e, 0.0};
}

/// Defender feedback u2 = clamp(||m||_alpha x), attacker idle.
inline Policy feedback_policy(double alpha) {
  return [alpha](const PolicyInput& in, std::span<double> u) {
    const double norm = alpha_norm(*in.measure, alpha);
    for (std::size_t i = 0; i < in.states.size(); ++i) {
      u[2 * i] = 0.0;
      u[2 * i + 1] = std::clamp(norm * in.states[i], 0.0, 1.0);
    }
  };
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

struct SeriesRow {
  double t = 0, mean = 0, var = 0, alpha_moment = 0, q05 = 0, q25 = 0, q50 = 0, q75 = 0, q95 = 0;
};

struct Histogram {
  std::size_t step = 0;
  std::vector<double> left, right, mass;
};

struct ControlRow {
  double t = 0, center = 0, u1 = 0, u2 = 0;
};

struct AdjointRow {
  double t = 0, p1 = 0, p2 = 0, v1_min = 0, v2_min = 0, ell1 = 0, ell2 = 0;
};

struct RunArtifacts {
  std::string scenario;
  std::vector<SeriesRow> series;
  std::string comparison_name;  // e.g. "open_loop"; empty when absent
  std::vector<SeriesRow> comparison;
  std::vector<Histogram> histograms;
  std::vector<ControlRow> controls;
  std::vector<AdjointRow> adjoint;
  std::vector<double> path_times;
  std::vector<std::vector<double>> paths;  // one vector per sampled particle
  std::vector<double> residuals;
  std::vector<std::pair<std::string, double>> summary;

  double metric(const std::string& key) const {
    for (const auto& [k, v] : summary)
      if (k == key) return v;
    throw Error(ErrorCode::InvalidParams, "no metric '" + key + "'");
  }
};

/// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(std::span<const double> s, double u) {
  if (s.size() == 1) return s[0];
  const double pos = u * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline std::vector<SeriesRow> compute_series(const ParticleEnsemble& e, double alpha) {
  std::vector<SeriesRow> rows;
  rows.reserve(e.grid.n_steps + 1);
  for (std::size_t k = 0; k <= e.grid.n_steps; ++k) {
    auto xs = e.live_states(k);
    if (xs.empty()) throw Error(ErrorCode::BlowUp, "every path hit the blow-up guard");
    std::sort(xs.begin(), xs.end());
    const auto n = static_cast<double>(xs.size());
    SeriesRow r;
    r.t = e.grid.t(k);
    double mom = 0.0;
    for (double x : xs) {
      r.mean += x;
      mom += abs_pow(x, alpha);
    }
    r.mean /= n;
    for (double x : xs) r.var += (x - r.mean) * (x - r.mean);
    r.var /= n;
    r.alpha_moment = mom / n;
    r.q05 = sorted_quantile(xs, 0.05);
    r.q25 = sorted_quantile(xs, 0.25);
    r.q50 = sorted_quantile(xs, 0.50);
    r.q75 = sorted_quantile(xs, 0.75);
    r.q95 = sorted_quantile(xs, 0.95);
    rows.push_back(r);
  }
  return rows;
}

/// Histograms on a common range at the requested steps (out-of-range steps skipped).
inline std::vector<Histogram> compute_histograms(const ParticleEnsemble& e, std::span<const std::size_t> steps,
                                                 std::size_t bins = 40) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<std::size_t> valid;
  for (std::size_t k : steps) {
    if (k > e.grid.n_steps) continue;
    valid.push_back(k);
    for (double x : e.live_states(k)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  std::vector<Histogram> out;
  if (valid.empty()) return out;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k : valid) {
    Histogram h;
    h.step = k;
    h.mass.assign(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
      h.left.push_back(lo + w * static_cast<double>(b));
      h.right.push_back(b + 1 == bins ? hi : lo + w * static_cast<double>(b + 1));
    }
    const auto xs = e.live_states(k);
    for (double x : xs) {
      const auto b = std::min(bins - 1, static_cast<std::size_t>((x - lo) / w));
      h.mass[b] += 1.0 / static_cast<double>(xs.size());
    }
    out.push_back(std::move(h));
  }
  return out;
}

/// Bin-averaged applied controls on equal-count bins of the state per step.
inline std::vector<ControlRow> binned_controls(const ParticleEnsemble& e, std::size_t bins = 32) {
  std::vector<ControlRow> rows;
  std::vector<std::size_t> order(e.n);
  for (std::size_t k = 0; k < e.grid.n_steps; ++k) {
    const auto xs = e.step_states(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    const std::size_t B = std::min(bins, e.n);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t lo = b * e.n / B, hi = (b + 1) * e.n / B;
      if (lo == hi) continue;
      ControlRow r;
      r.t = e.grid.t(k);
      for (std::size_t q = lo; q < hi; ++q) {
        r.center += xs[order[q]];
        r.u1 += e.u(k, order[q], 0);
        r.u2 += e.u(k, order[q], 1);
      }
      const auto c = static_cast<double>(hi - lo);
      r.center /= c;
      r.u1 /= c;
      r.u2 /= c;
      rows.push_back(r);
    }
  }
  return rows;
}

inline void sample_paths(const ParticleEnsemble& e, std::size_t count, RunArtifacts& out) {
  out.path_times.clear();
  out.paths.clear();
  for (std::size_t k = 0; k <= e.grid.n_steps; ++k) out.path_times.push_back(e.grid.t(k));
  for (std::size_t i = 0; i < e.n && out.paths.size() < count; ++i) {
    if (e.absorbed[i]) continue;
    std::vector<double> path(e.grid.n_steps + 1);
    for (std::size_t k = 0; k <= e.grid.n_steps; ++k) path[k] = e.x(k, i);
    out.paths.push_back(std::move(path));
  }
}

/// Fraction of live paths staying strictly below `level` over the whole horizon.
inline double fraction_below(const ParticleEnsemble& e, double level) {
  std::size_t live = 0, below = 0;
  for (std::size_t i = 0; i < e.n; ++i) {
    if (e.absorbed[i]) continue;
    ++live;
    bool ok = true;
    for (std::size_t k = 0; k <= e.grid.n_steps && ok; ++k) ok = e.x(k, i) < level;
    if (ok) ++below;
  }
  return live ? static_cast<double>(below) / static_cast<double>(live) : 0.0;
}

struct RunOptions {
  std::size_t threads = 1;
  std::vector<std::size_t> snapshots;  // empty: 0, N/4, N/2, 3N/4, N
  std::size_t sample_paths = 16;
  GameOptions game;
  std::size_t max_check_samples = 1000;
};

namespace detail {

inline std::vector<std::size_t> snapshot_steps(const RunOptions& o, const TimeGrid& g) {
  if (!o.snapshots.empty()) return o.snapshots;
  const std::size_t N = g.n_steps;
  return {0, N / 4, N / 2, 3 * N / 4, N};
}

inline void fill_common(const ParticleEnsemble& e, double alpha, const RunOptions& o, RunArtifacts& a) {
  a.series = compute_series(e, alpha);
  const auto steps = snapshot_steps(o, e.grid);
  a.histograms = compute_histograms(e, steps);
  a.controls = binned_controls(e);
  sample_paths(e, o.sample_paths, a);
  a.summary.emplace_back("absorbed_paths", static_cast<double>(e.absorbed_count));
  a.summary.emplace_back("initial_mean", a.series.front().mean);
  a.summary.emplace_back("terminal_mean", a.series.back().mean);
}

}  // namespace detail

/// dx = gamma(x) dt + sigma dB without controls or mean field.
inline RunArtifacts run_uncontrolled(const VirusParams& p, std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                     const RunOptions& o = {}) {
  const auto spec = build_local_spec(p);
  const auto e = simulate_particles(spec, zero_policy(), n, grid, seed, SimOptions{o.threads, true, 1e6});
  RunArtifacts a;
  a.scenario = "uncontrolled";
  detail::fill_common(e, p.alpha, o, a);
  return a;
}

/// Constant effort u2 - u1 = e, with or without the mean-field multiplier.
inline RunArtifacts run_constant_effort(const VirusParams& p, bool mean_field, std::size_t n, const TimeGrid& grid,
                                        std::uint64_t seed, const RunOptions& o = {}) {
  const auto spec = mean_field ? build_virus_spec(p) : build_local_spec(p);
  const auto e =
      simulate_particles(spec, constant_policy(effort_profile(p.effort)), n, grid, seed, SimOptions{o.threads, true, 1e6});
  RunArtifacts a;
  a.scenario = "constant-effort";
  detail::fill_common(e, p.alpha, o, a);
  a.summary.emplace_back("mean_field", mean_field ? 1.0 : 0.0);
  a.summary.emplace_back("fraction_below_2", fraction_below(e, 2.0));
  return a;
}

/// Defender feedback u2 = clamp(||m||_alpha x) against the constant-effort
/// open loop, both mean-field, common noise.
inline RunArtifacts run_feedback(const VirusParams& p, std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                 const RunOptions& o = {}) {
  const auto spec = build_virus_spec(p);
  const SimOptions sim{o.threads, false, 1e6};
  const auto fb = simulate_particles(spec, feedback_policy(p.alpha), n, grid, seed, sim);
  const auto ol = simulate_particles(spec, constant_policy(effort_profile(p.effort)), n, grid, seed, sim);
  RunArtifacts a;
  a.scenario = "feedback";
  detail::fill_common(fb, p.alpha, o, a);
  a.comparison_name = "open_loop";
  a.comparison = compute_series(ol, p.alpha);
  a.summary.emplace_back("open_loop_terminal_mean", a.comparison.back().mean);
  a.summary.emplace_back("fraction_below_2", fraction_below(fb, 2.0));
  a.summary.emplace_back("open_loop_fraction_below_2", fraction_below(ol, 2.0));
  return a;
}

/// Full risk-sensitive game solved by damped Picard on feedback tables. The
/// initial law is always the jittered mixture over p.x0.atoms.
inline RunArtifacts run_game(const VirusParams& params, std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                             const RunOptions& o = {}) {
  VirusParams p = params;
  p.x0.kind = "bimodal";
  const auto spec = build_virus_spec(p);
  GameOptions go = o.game;
  go.threads = o.threads;
  const auto g = solve_game_fixed_point(spec, n, grid, seed, go);
  const auto& e = g.ensemble;
  RunArtifacts a;
  a.scenario = "game";
  detail::fill_common(e, p.alpha, o, a);
  a.residuals = g.residuals;

  // Control tables as solved (centers of player 0; both share the binning).
  a.controls.clear();
  for (std::size_t k = 0; k < g.table.steps(); ++k) {
    const auto c = g.table.centers(0, k);
    for (std::size_t b = 0; b < c.size(); ++b) {
      a.controls.push_back({grid.t(k), c[b], spec.players[0].box.clamp(g.table.eval(0, k, c[b])),
                            spec.players[1].box.clamp(g.table.eval(1, k, c[b]))});
    }
  }
  double umin = 1.0, umax = 0.0;
  for (double u : e.controls) {
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  for (std::size_t k = 0; k <= grid.n_steps; ++k) {
    AdjointRow r;
    r.t = grid.t(k);
    double vmin[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double pm[2] = {0, 0}, lm[2] = {0, 0};
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t i = 0; i < e.n; ++i) {
        pm[j] += g.adjoints[j].ps(k, i);
        lm[j] += g.adjoints[j].v.ell_at(k, i);
        vmin[j] = std::min(vmin[j], g.adjoints[j].v.at(k, i));
      }
      pm[j] /= static_cast<double>(e.n);
      lm[j] /= static_cast<double>(e.n);
    }
    r.p1 = pm[0];
    r.p2 = pm[1];
    r.v1_min = vmin[0];
    r.v2_min = vmin[1];
    r.ell1 = lm[0];
    r.ell2 = lm[1];
    a.adjoint.push_back(r);
  }
  const auto mc = sample_max_check(spec, g, o.max_check_samples, rng::derive_seed(seed, 0x6d6178ULL));
  a.summary.emplace_back("converged", g.converged ? 1.0 : 0.0);
  a.summary.emplace_back("iterations", static_cast<double>(g.residuals.size()));
  a.summary.emplace_back("final_residual", g.residuals.empty() ? 0.0 : g.residuals.back());
  a.summary.emplace_back("min_v_positive_theta", g.min_v_positive_theta);
  a.summary.emplace_back("control_min", umin);
  a.summary.emplace_back("control_max", umax);
  a.summary.emplace_back("max_check_fraction", mc.fraction());
  a.summary.emplace_back("max_check_worst", mc.worst);
  a.summary.emplace_back("attacker_cost", log_risk_cost(spec, 0, e));
  a.summary.emplace_back("defender_cost", log_risk_cost(spec, 1, e));
  return a;
}

}  // namespace mfsmp::virus
