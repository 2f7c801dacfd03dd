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

// Risk-sensitive adjoint system along simulated paths, by least-squares
// Monte Carlo. Internally everything is in the "starred" convention
//
//   dp* = -(F + theta l q*) dt + q* dB,
//   p*(T) = h_x + (1/phi) E[phi d_x h_m],
//   F = bbar_x p* + f_x + (q* + theta l p*) sigma_x + (1/v) E[v (p* d_x bbar_m + d_x f_m)],
//
// with v the exponential martingale E[phi | F_t], phi = exp(theta Psi), and
// l its volatility: dv = theta l v dB. The Hamiltonian adjoint pair is
// (p, q) = (-p*, -q*).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
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
#include "mfsmp/regression.hpp"
#include "mfsmp/risk_functional.hpp"
#include "mfsmp/rng.hpp"

namespace mfsmp {

/// Floor for v where it underflows but is still nonnegative.
inline constexpr double kVFloor = 1e-300;

/// Exponential martingale and its volatility, step-major (n_steps + 1) * n.
struct VThetaPath {
  std::size_t n = 0;
  std::size_t n_steps = 0;
  double theta = 0.0;
  std::vector<double> v;
  std::vector<double> ell;  // last row is zero
  double min_v = 0.0;

  double at(std::size_t k, std::size_t i) const { return v[k * n + i]; }
  double ell_at(std::size_t k, std::size_t i) const { return ell[k * n + i]; }
};

/// v(t_k) = E[exp(theta Psi) | x(t_k), z(t_k)] by backward regression,
/// l(t_k) = E[(dv / v) dB | x, z] / (theta dt).
inline VThetaPath compute_v_theta(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e) {
  require_aux(e, i);
  const std::size_t n = e.n, N = e.grid.n_steps;
  const double theta = spec.players.at(i).theta;
  VThetaPath out;
  out.n = n;
  out.n_steps = N;
  out.theta = theta;
  out.v.assign((N + 1) * n, 1.0);
  out.ell.assign((N + 1) * n, 0.0);
  out.min_v = 1.0;
  if (theta == 0.0) return out;

  // Terminal value computed directly; the regression runs in units of
  // exp(shift) and is rescaled at the end.
  const auto mT = e.measure(N);
  std::vector<double> log_phi(n);
  for (std::size_t j = 0; j < n; ++j) log_phi[j] = theta * path_psi(spec, i, e, j, mT).psi;
  const double shift = *std::max_element(log_phi.begin(), log_phi.end());
  const double lo = *std::min_element(log_phi.begin(), log_phi.end());
  if (std::abs(shift) > kMaxLogValue || std::abs(lo) > kMaxLogValue) {
    throw Error(ErrorCode::Overflow, "theta*Psi outside the exponent range");
  }
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = std::exp(log_phi[j] - shift);
  std::copy(w.begin(), w.end(), out.v.begin() + static_cast<std::ptrdiff_t>(N * n));

  std::vector<double> ratio(n);
  for (std::size_t k = N; k-- > 0;) {
    const StepRegressor reg(e.step_states(k), e.step_z(i, k));
    const std::span<const double> next(out.v.data() + (k + 1) * n, n);
    auto cur = reg.project(next);
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cur[j])) throw Error(ErrorCode::RegressionFailure, "v regression not finite");
      if (cur[j] < 0.0) {
        throw Error(ErrorCode::NegativeV, "v^theta = " + std::to_string(cur[j]) + " at step " + std::to_string(k) +
                                              ", particle " + std::to_string(j));
      }
      cur[j] = std::max(cur[j], kVFloor);
    }
    std::copy(cur.begin(), cur.end(), out.v.begin() + static_cast<std::ptrdiff_t>(k * n));
    for (std::size_t j = 0; j < n; ++j) ratio[j] = (next[j] - cur[j]) / cur[j] * e.noise(k, j);
    const auto l = reg.project(ratio);
    for (std::size_t j = 0; j < n; ++j) out.ell[k * n + j] = l[j] / (theta * e.grid.dt);
  }
  const double scale = std::exp(shift);
  out.min_v = std::numeric_limits<double>::infinity();
  for (double& x : out.v) {
    x = std::max(x * scale, kVFloor);
    out.min_v = std::min(out.min_v, x);
  }
  return out;
}

/// Largest per-step |mean| / SE of r = dv - theta l v dB; near zero for a
/// martingale. The regression intercept pins the sample mean of dv to zero,
/// so the mean of r carries the sampling error of theta l v dB and the SE
/// includes both terms.
inline double martingale_z_score(const ParticleEnsemble& e, const VThetaPath& v) {
  double worst = 0.0;
  const std::size_t n = e.n;
  if (n < 2) return 0.0;
  const auto nn = static_cast<double>(n);
  for (std::size_t k = 0; k < e.grid.n_steps; ++k) {
    double s = 0.0, s2 = 0.0, g = 0.0, g2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double mart = v.theta * v.ell_at(k, j) * v.at(k, j) * e.noise(k, j);
      const double r = v.at(k + 1, j) - v.at(k, j) - mart;
      s += r;
      s2 += r * r;
      g += mart;
      g2 += mart * mart;
    }
    const double mean = s / nn, gm = g / nn;
    const double var_r = std::max(0.0, (s2 - nn * mean * mean) / (nn - 1.0));
    const double var_g = std::max(0.0, (g2 - nn * gm * gm) / (nn - 1.0));
    const double se = std::sqrt((var_r + var_g) / nn);
    if (se > 0.0) worst = std::max(worst, std::abs(mean) / se);
  }
  return worst;
}

struct AdjointPath {
  TimeGrid grid;
  std::size_t n = 0;
  std::size_t player = 0;
  std::vector<double> p_star;  // (n_steps + 1) * n
  std::vector<double> q_star;  // (n_steps + 1) * n, last row zero
  VThetaPath v;
  std::vector<RegressionDiagnostics> diagnostics;  // per step

  double ps(std::size_t k, std::size_t i) const { return p_star[k * n + i]; }
  double qs(std::size_t k, std::size_t i) const { return q_star[k * n + i]; }
  /// Hamiltonian-convention adjoint pair.
  double p(std::size_t k, std::size_t i) const { return -ps(k, i); }
  double q(std::size_t k, std::size_t i) const { return -qs(k, i); }
  std::span<const double> step_p_star(std::size_t k) const { return std::span<const double>(p_star).subspan(k * n, n); }
  std::span<const double> step_q_star(std::size_t k) const { return std::span<const double>(q_star).subspan(k * n, n); }
  std::span<const double> step_ell(std::size_t k) const { return std::span<const double>(v.ell).subspan(k * n, n); }
};

/// Terminal adjoint h_x(x_j) + (1/phi_j) (1/n) sum_k phi_k d_x h_m(x_k)(x_j).
inline std::vector<double> terminal_adjoint(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e,
                                            const VThetaPath& v) {
  const std::size_t n = e.n, N = e.grid.n_steps;
  const auto& pl = spec.players.at(i);
  const auto xs = e.step_states(N);
  const auto mT = e.measure(N);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = pl.h_x(xs[j], mT);
  if (pl.terminal_mean_field) {
    std::vector<double> w(n), mf(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = v.at(N, j);
    pl.terminal_mean_field(xs, w, mT, mf);
    for (std::size_t j = 0; j < n; ++j) out[j] += mf[j] / v.at(N, j);
  }
  return out;
}

/// (1/v_j)(1/n) sum_k v_k [p*_k d_x bbar_m(x_k)(x_j) + d_x f_m(x_k)(x_j)] at step k.
/// Identically zero for a mean-field-free model.
inline std::vector<double> mean_field_driver(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e,
                                             std::size_t k, std::span<const double> p_hat, std::span<const double> v,
                                             std::size_t threads = 1) {
  const std::size_t n = e.n, P = e.players;
  std::vector<double> out(n, 0.0);
  if (spec.mean_field_free()) return out;
  const auto xs = e.step_states(k);
  const auto u = e.step_controls(k);
  const auto m = e.measure(k);
  const double t = e.grid.t(k);
  if (spec.kernel->depends_on_measure()) {
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) w[j] = v[j] * p_hat[j];
    parallel_for(n, threads, [&](std::size_t b, std::size_t end) {
      spec.kernel->mean_field_adjoint_batch(t, xs, u, P, w, m, spec.alpha, xs.subspan(b, end - b),
                                            std::span<double>(out).subspan(b, end - b));
    });
  }
  const auto& pl = spec.players.at(i);
  if (pl.running_mean_field) {
    std::vector<double> mf(n);
    pl.running_mean_field(t, xs, u, P, v, m, mf);
    for (std::size_t j = 0; j < n; ++j) out[j] += mf[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= v[j];
  return out;
}

/// Backward Euler regression scheme for (p*, q*):
///   p^_k = E_k[p_{k+1}],  q*_k = E_k[p_{k+1} dB] / dt,
///   p*_k = p^_k + (F_k + theta l_k q*_k) dt,  F_k evaluated with p^_k.
inline AdjointPath solve_adjoint_bsde(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e,
                                      const VThetaPath& v, std::size_t threads = 1) {
  require_aux(e, i);
  const std::size_t n = e.n, N = e.grid.n_steps, P = e.players;
  const double dt = e.grid.dt;
  const double theta = spec.players.at(i).theta;
  const auto& pl = spec.players[i];
  if (!(v.min_v > 0.0)) throw Error(ErrorCode::NegativeV, "v^theta must be strictly positive");

  AdjointPath a;
  a.grid = e.grid;
  a.n = n;
  a.player = i;
  a.p_star.assign((N + 1) * n, 0.0);
  a.q_star.assign((N + 1) * n, 0.0);
  a.v = v;
  a.diagnostics.resize(N);

  const auto terminal = terminal_adjoint(spec, i, e, v);
  std::copy(terminal.begin(), terminal.end(), a.p_star.begin() + static_cast<std::ptrdiff_t>(N * n));

  std::vector<double> pdb(n), bx(n), vk(n);
  for (std::size_t k = N; k-- > 0;) {
    const double t = e.grid.t(k);
    const auto xs = e.step_states(k);
    const auto u = e.step_controls(k);
    const auto m = e.measure(k);
    const StepRegressor reg(xs, e.step_z(i, k));
    a.diagnostics[k] = reg.diagnostics();

    const std::span<const double> next(a.p_star.data() + (k + 1) * n, n);
    const auto p_hat = reg.project(next);
    for (std::size_t j = 0; j < n; ++j) pdb[j] = next[j] * e.noise(k, j);
    auto qk = reg.project(pdb);
    for (double& q : qk) q /= dt;

    spec.kernel->barred_x_batch(t, xs, u, P, m, spec.alpha, bx);
    for (std::size_t j = 0; j < n; ++j) vk[j] = v.at(k, j);
    const auto mf = mean_field_driver(spec, i, e, k, p_hat, vk, threads);

    for (std::size_t j = 0; j < n; ++j) {
      const auto uj = u.subspan(j * P, P);
      const double ell = v.ell_at(k, j);
      double F = p_hat[j] * bx[j] + pl.f_x(t, xs[j], m, uj) + mf[j];
      const double sx = spec.sigma_x(t, xs[j]);
      if (sx != 0.0) F += (qk[j] + theta * ell * p_hat[j]) * sx;
      const double pk = p_hat[j] + (F + theta * ell * qk[j]) * dt;
      if (!std::isfinite(pk) || !std::isfinite(qk[j])) {
        throw Error(ErrorCode::NonFiniteDriver, "adjoint driver not finite at step " + std::to_string(k));
      }
      a.p_star[k * n + j] = pk;
      a.q_star[k * n + j] = qk[j];
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Hamiltonian maximization
// ---------------------------------------------------------------------------

struct MaxCheck {
  bool ok = true;
  double violation = 0.0;  // max over grid minus value at u_star, clipped at 0
};

/// Does u_star[i] maximize H^theta_i over the grid, others' controls fixed?
/// p, q are the Hamiltonian-convention adjoints.
inline MaxCheck pointwise_max_check(const ModelSpec& spec, std::size_t i, double t, double x, const EmpiricalMeasure& m,
                                    double p, double q, double ell, std::span<const double> u_star,
                                    std::span<const double> grid_of_controls, double tol = 1e-3) {
  std::vector<double> u(u_star.begin(), u_star.end());
  const double h_star = rs_hamiltonian(spec, i, t, x, m, u, p, q, ell);
  double best = h_star;
  for (double c : grid_of_controls) {
    u[i] = c;
    best = std::max(best, rs_hamiltonian(spec, i, t, x, m, u, p, q, ell));
  }
  MaxCheck r;
  r.violation = std::max(0.0, best - h_star);
  r.ok = r.violation <= tol;
  return r;
}

inline std::vector<double> control_grid(const ControlBox& box, std::size_t points = 201) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = points == 1 ? box.lo : box.lo + (box.hi - box.lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return g;
}

/// Grid search plus golden-section refinement of H^theta in one player's control.
inline void generic_best_response(const ModelSpec& spec, const ArgmaxInput& in, std::span<double> out) {
  const auto& box = spec.players.at(in.player).box;
  const std::size_t P = in.n_players;
  const auto grid = control_grid(box, 65);
  std::vector<double> u(P);
  for (std::size_t j = 0; j < in.states.size(); ++j) {
    std::copy_n(in.controls.begin() + static_cast<std::ptrdiff_t>(j * P), P, u.begin());
    const double p = -in.p_star[j], q = -in.q[j], ell = in.ell[j];
    auto H = [&](double c) {
      u[in.player] = c;
      return rs_hamiltonian(spec, in.player, in.t, in.states[j], *in.measure, u, p, q, ell);
    };
    std::size_t arg = 0;
    double hb = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double h = H(grid[g]);
      if (h > hb) {
        hb = h;
        arg = g;
      }
    }
    double lo = grid[arg > 0 ? arg - 1 : 0], hi = grid[std::min(arg + 1, grid.size() - 1)];
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = hi - r * (hi - lo), c2 = lo + r * (hi - lo);
    double h1 = H(c1), h2 = H(c2);
    for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
      if (h1 >= h2) {
        hi = c2;
        c2 = c1;
        h2 = h1;
        c1 = hi - r * (hi - lo);
        h1 = H(c1);
      } else {
        lo = c1;
        c1 = c2;
        h1 = h2;
        c2 = lo + r * (hi - lo);
        h2 = H(c2);
      }
    }
    const double c = 0.5 * (lo + hi);
    out[j] = H(c) >= hb ? c : grid[arg];
  }
}

// ---------------------------------------------------------------------------
// Game fixed point
// ---------------------------------------------------------------------------

/// Piecewise-linear feedback per (player, step) through bin centers.
class FeedbackTable {
 public:
  FeedbackTable() = default;
  FeedbackTable(std::size_t players, std::size_t steps, std::vector<double> initial)
      : players_(players), steps_(steps), centers_(players * steps), values_(players * steps) {
    for (std::size_t j = 0; j < players; ++j)
      for (std::size_t k = 0; k < steps; ++k) {
        centers_[j * steps + k] = {0.0};
        values_[j * steps + k] = {initial[j]};
      }
  }

  std::size_t players() const { return players_; }
  std::size_t steps() const { return steps_; }

  void set(std::size_t j, std::size_t k, std::vector<double> centers, std::vector<double> values) {
    centers_[j * steps_ + k] = std::move(centers);
    values_[j * steps_ + k] = std::move(values);
  }
  std::span<const double> centers(std::size_t j, std::size_t k) const { return centers_[j * steps_ + k]; }
  std::span<const double> values(std::size_t j, std::size_t k) const { return values_[j * steps_ + k]; }

  double eval(std::size_t j, std::size_t k, double x) const {
    const auto& c = centers_[j * steps_ + k];
    const auto& v = values_[j * steps_ + k];
    if (c.size() == 1 || x <= c.front()) return v.front();
    if (x >= c.back()) return v.back();
    const auto it = std::upper_bound(c.begin(), c.end(), x);
    const auto hi = static_cast<std::size_t>(it - c.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - c[lo]) / (c[hi] - c[lo]);
    return v[lo] + w * (v[hi] - v[lo]);
  }

 private:
  std::size_t players_ = 0, steps_ = 0;
  std::vector<std::vector<double>> centers_, values_;
};

inline Policy table_policy(const ModelSpec& spec, const FeedbackTable& table) {
  return [&spec, &table](const PolicyInput& in, std::span<double> u) {
    const std::size_t P = table.players();
    for (std::size_t i = 0; i < in.states.size(); ++i)
      for (std::size_t j = 0; j < P; ++j) u[i * P + j] = spec.players[j].box.clamp(table.eval(j, in.step, in.states[i]));
  };
}

struct GameOptions {
  double damping = 0.5;
  double tol = 1e-3;
  std::size_t max_iter = 50;
  std::size_t bins = 32;
  std::size_t threads = 1;
};

struct GameResult {
  FeedbackTable table;
  ParticleEnsemble ensemble;
  std::vector<AdjointPath> adjoints;
  std::vector<double> residuals;
  bool converged = false;
  /// Smallest v^theta over all players with theta > 0 and all iterations.
  double min_v_positive_theta = std::numeric_limits<double>::infinity();
};

/// Candidate controls from the Hamiltonian argmax at every particle of step k.
inline std::vector<double> best_response_step(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e,
                                              const AdjointPath& a, std::size_t k) {
  const auto m = e.measure(k);
  ArgmaxInput in;
  in.t = e.grid.t(k);
  in.player = i;
  in.n_players = e.players;
  in.states = e.step_states(k);
  in.controls = e.step_controls(k);
  in.measure = &m;
  in.p_star = a.step_p_star(k);
  in.q = a.step_q_star(k);
  in.ell = a.step_ell(k);
  in.theta = spec.players[i].theta;
  std::vector<double> out(e.n);
  if (spec.players[i].best_response) {
    spec.players[i].best_response(in, out);
  } else {
    generic_best_response(spec, in, out);
  }
  for (double& u : out) u = spec.players[i].box.clamp(u);
  return out;
}

/// Damped Picard iteration on feedback controls: simulate forward with the
/// current tables, solve the adjoints backward, take the Hamiltonian argmax,
/// and blend bin averages u <- (1 - rho) u + rho u^. Common random numbers
/// across iterations.
inline GameResult solve_game_fixed_point(const ModelSpec& spec, std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                         const GameOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw Error(ErrorCode::InvalidParams, "damping must lie in (0, 1]");
  if (!(opt.tol > 0.0) || opt.max_iter == 0 || opt.bins == 0) {
    throw Error(ErrorCode::InvalidParams, "tol > 0, max_iter >= 1, bins >= 1 required");
  }
  spec.validate();
  const std::size_t P = spec.n_players(), N = grid.n_steps;
  std::vector<double> init(P);
  for (std::size_t j = 0; j < P; ++j) init[j] = spec.players[j].box.clamp(0.0);

  GameResult res;
  res.table = FeedbackTable(P, N, init);
  const SimOptions sim{opt.threads, false, 1e6};
  std::vector<std::size_t> order(n);

  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    res.ensemble = simulate_particles(spec, table_policy(spec, res.table), n, grid, seed, sim);
    const auto& e = res.ensemble;
    res.adjoints.clear();
    for (std::size_t i = 0; i < P; ++i) {
      auto v = compute_v_theta(spec, i, e);
      if (spec.players[i].theta > 0.0) res.min_v_positive_theta = std::min(res.min_v_positive_theta, v.min_v);
      res.adjoints.push_back(solve_adjoint_bsde(spec, i, e, v, opt.threads));
    }

    FeedbackTable next = res.table;
    double change = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const auto xs = e.step_states(k);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
      const std::size_t B = std::min(opt.bins, n);
      for (std::size_t i = 0; i < P; ++i) {
        const auto cand = best_response_step(spec, i, e, res.adjoints[i], k);
        std::vector<double> centers, values;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t lo = b * n / B, hi = (b + 1) * n / B;
          if (lo == hi) continue;
          double cx = 0.0, cu = 0.0, cc = 0.0;
          for (std::size_t r = lo; r < hi; ++r) {
            cx += xs[order[r]];
            cu += e.u(k, order[r], i);
            cc += cand[order[r]];
          }
          const auto cnt = static_cast<double>(hi - lo);
          cx /= cnt;
          const double val = (1.0 - opt.damping) * cu / cnt + opt.damping * cc / cnt;
          if (!centers.empty() && cx <= centers.back()) {
            // Tied centers (atomic states): merge into one node.
            values.back() = 0.5 * (values.back() + val);
            continue;
          }
          centers.push_back(cx);
          values.push_back(val);
        }
        next.set(i, k, std::move(centers), std::move(values));
        for (std::size_t r = 0; r < n; ++r) {
          const double d = spec.players[i].box.clamp(next.eval(i, k, xs[r])) - e.u(k, r, i);
          change += d * d;
        }
      }
    }
    const double residual = std::sqrt(change / static_cast<double>(N * n));
    res.residuals.push_back(residual);
    res.table = std::move(next);
    if (residual < opt.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

struct GameMaxCheck {
  std::size_t nodes = 0;
  std::size_t passed = 0;
  double worst = 0.0;
  double fraction() const { return nodes ? static_cast<double>(passed) / static_cast<double>(nodes) : 0.0; }
};

/// Samples (t_k, particle) nodes of a solved game and checks every player's
/// control against a grid maximization of its Hamiltonian.
inline GameMaxCheck sample_max_check(const ModelSpec& spec, const GameResult& g, std::size_t samples,
                                     std::uint64_t seed, double tol = 1e-3) {
  const auto& e = g.ensemble;
  GameMaxCheck out;
  std::vector<std::vector<double>> grids;
  for (const auto& p : spec.players) grids.push_back(control_grid(p.box));
  for (std::size_t s = 0; s < samples; ++s) {
    const auto k = std::min(e.grid.n_steps - 1,
                            static_cast<std::size_t>(rng::uniform(seed, rng::Domain::Bootstrap, s, 0) *
                                                     static_cast<double>(e.grid.n_steps)));
    const auto i = std::min(e.n - 1, static_cast<std::size_t>(rng::uniform(seed, rng::Domain::Bootstrap, s, 1) *
                                                               static_cast<double>(e.n)));
    const auto m = e.measure(k);
    const auto u = e.step_controls(k).subspan(i * e.players, e.players);
    bool ok = true;
    for (std::size_t j = 0; j < e.players; ++j) {
      const auto& a = g.adjoints[j];
      const auto r = pointwise_max_check(spec, j, e.grid.t(k), e.x(k, i), m, a.p(k, i), a.q(k, i), a.v.ell_at(k, i), u,
                                         grids[j], tol);
      out.worst = std::max(out.worst, r.violation);
      ok = ok && r.ok;
    }
    ++out.nodes;
    if (ok) ++out.passed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear-quadratic oracle
// ---------------------------------------------------------------------------

/// dx = (c + a x + u) dt + sigma dB, cost E[ int (q x^2 + r u^2)/2 dt + g x(T)^2 / 2 ].
struct LqParams {
  double a = 0.0;
  double c = 0.0;
  double q = 1.0;
  double r = 1.0;
  double g = 0.0;
  double sigma = 0.0;
  double T = 1.0;
};

/// Value function k(t) x^2 / 2 + s(t) x + const; optimal u = -(k x + s) / r.
struct RiccatiSolution {
  std::vector<double> t, k, s;
  double r = 1.0;

  double gain(std::size_t idx) const { return k[idx] / r; }
  double feedback(std::size_t idx, double x) const { return -(k[idx] * x + s[idx]) / r; }
};

/// Backward RK4 on -k' = 2 a k - k^2 / r + q, k(T) = g and
/// -s' = (a - k / r) s + c k, s(T) = 0.
inline RiccatiSolution lq_riccati_oracle(const LqParams& p, const TimeGrid& grid, std::size_t substeps = 64) {
  if (!(p.r > 0.0) || p.q < 0.0 || p.g < 0.0) throw Error(ErrorCode::InvalidParams, "need r > 0, q >= 0, g >= 0");
  RiccatiSolution sol;
  sol.r = p.r;
  const std::size_t N = grid.n_steps;
  sol.t.resize(N + 1);
  sol.k.resize(N + 1);
  sol.s.resize(N + 1);
  auto rhs = [&](double k, double s) {
    // d/d(tau) with tau = T - t.
    return std::pair<double, double>{2.0 * p.a * k - k * k / p.r + p.q, (p.a - k / p.r) * s + p.c * k};
  };
  double k = p.g, s = 0.0;
  sol.k[N] = k;
  sol.s[N] = s;
  const double h = grid.dt / static_cast<double>(substeps);
  for (std::size_t idx = N; idx-- > 0;) {
    for (std::size_t sub = 0; sub < substeps; ++sub) {
      const auto [k1, s1] = rhs(k, s);
      const auto [k2, s2] = rhs(k + 0.5 * h * k1, s + 0.5 * h * s1);
      const auto [k3, s3] = rhs(k + 0.5 * h * k2, s + 0.5 * h * s2);
      const auto [k4, s4] = rhs(k + h * k3, s + h * s3);
      k += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      s += h / 6.0 * (s1 + 2 * s2 + 2 * s3 + s4);
    }
    if (!std::isfinite(k) || !std::isfinite(s) || std::abs(k) > 1e12) {
      throw Error(ErrorCode::RiccatiBlowup, "Riccati solution left the finite range");
    }
    sol.k[idx] = k;
    sol.s[idx] = s;
  }
  for (std::size_t idx = 0; idx <= N; ++idx) sol.t[idx] = grid.t(idx);
  return sol;
}

/// Single-player, mean-field-free, risk-neutral LQ model. The drift must stay
/// positive along paths for |b| = b; choose c accordingly.
inline ModelSpec build_lq_spec(const LqParams& p, InitialLaw initial, double control_bound = 20.0) {
  ModelSpec spec;
  spec.alpha = 1.0;
  spec.horizon = p.T;
  spec.kernel = std::make_shared<AffineKernel>(p.c, p.a, std::vector<double>{1.0});
  const double sigma = p.sigma;
  spec.diffusion = [sigma](double, double) { return sigma; };
  spec.diffusion_x = [](double, double) { return 0.0; };
  spec.initial_law = std::move(initial);
  PlayerSpec pl;
  pl.name = "controller";
  pl.box = {-control_bound, control_bound};
  const double q = p.q, r = p.r, g = p.g;
  pl.running_cost = [q, r](double, double x, const EmpiricalMeasure&, Controls u) {
    return 0.5 * (q * x * x + r * u[0] * u[0]);
  };
  pl.running_cost_x = [q](double, double x, const EmpiricalMeasure&, Controls) { return q * x; };
  pl.terminal_cost = [g](double x, const EmpiricalMeasure&) { return 0.5 * g * x * x; };
  pl.terminal_cost_x = [g](double x, const EmpiricalMeasure&) { return g * x; };
  pl.best_response = [r](const ArgmaxInput& in, std::span<double> out) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = -in.p_star[j] / r;
  };
  spec.players.push_back(std::move(pl));
  return spec;
}

}  // namespace mfsmp
