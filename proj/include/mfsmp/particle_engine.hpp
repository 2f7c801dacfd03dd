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

// Euler-Maruyama integration of the interacting particle system
//
//   dx_i = bbar(t, x_i, m^n_t, u_i) dt + sigma(t, x_i) dB_i,
//
// its frozen-flow counterpart (independent particles driven by a given flow
// of measures), the McKean-Vlasov Picard iteration, and the
// propagation-of-chaos experiment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mfsmp/errors.hpp"
#include "mfsmp/measure_kit.hpp"
#include "mfsmp/model_kernel.hpp"
#include "mfsmp/parallel.hpp"
#include "mfsmp/rng.hpp"

namespace mfsmp {

struct TimeGrid {
  double T = 1.0;
  double dt = 1e-3;
  std::size_t n_steps = 1000;

  static TimeGrid uniform(double T, double dt) {
    if (!(dt > 0.0) || !(T > 0.0) || !std::isfinite(T) || !std::isfinite(dt)) {
      throw Error(ErrorCode::InvalidGrid, "T and dt must be positive and finite");
    }
    const double steps = std::round(T / dt);
    if (steps < 1.0 || std::abs(steps * dt - T) > 1e-12) {
      throw Error(ErrorCode::InvalidGrid, "T must be an integer multiple of dt");
    }
    return TimeGrid{T, dt, static_cast<std::size_t>(steps)};
  }

  double t(std::size_t k) const { return static_cast<double>(k) * dt; }

  bool same_as(const TimeGrid& o) const { return n_steps == o.n_steps && dt == o.dt; }
};

inline double em_step(double x, double drift, double diff, double dt, double dW) {
  const double next = x + drift * dt + diff * dW;
  if (!std::isfinite(next)) throw Error(ErrorCode::NonFiniteResult, "Euler-Maruyama step produced a non-finite state");
  return next;
}

/// What a control law sees at one time step: the whole cloud, so feedback
/// may use the current measure and the particle index.
struct PolicyInput {
  std::size_t step = 0;
  double t = 0.0;
  std::span<const double> states;
  const EmpiricalMeasure* measure = nullptr;
};

/// Fills controls[i * players + j] for every particle i and player j.
using Policy = std::function<void(const PolicyInput&, std::span<double> controls)>;

inline Policy zero_policy() {
  return [](const PolicyInput&, std::span<double> u) { std::fill(u.begin(), u.end(), 0.0); };
}

inline Policy constant_policy(std::vector<double> profile) {
  return [profile = std::move(profile)](const PolicyInput& in, std::span<double> u) {
    const std::size_t P = profile.size();
    for (std::size_t i = 0; i < in.states.size(); ++i) {
      std::copy(profile.begin(), profile.end(), u.begin() + static_cast<std::ptrdiff_t>(i * P));
    }
  };
}

/// Step-major storage of a simulated cloud. Index (k, i) is time step k,
/// particle i.
struct ParticleEnsemble {
  TimeGrid grid;
  std::size_t n = 0;
  std::size_t players = 0;
  std::uint64_t seed = 0;

  std::vector<double> states;    // (n_steps + 1) * n
  std::vector<double> aux_z;     // players * (n_steps + 1) * n
  std::vector<double> dW;        // n_steps * n
  std::vector<double> controls;  // n_steps * n * players, applied on [t_k, t_k+1)
  std::vector<std::uint8_t> absorbed;  // paths stopped by the blow-up guard
  std::size_t absorbed_count = 0;

  double x(std::size_t k, std::size_t i) const { return states[k * n + i]; }
  double z(std::size_t j, std::size_t k, std::size_t i) const { return aux_z[(j * (grid.n_steps + 1) + k) * n + i]; }
  double u(std::size_t k, std::size_t i, std::size_t j) const { return controls[(k * n + i) * players + j]; }
  double noise(std::size_t k, std::size_t i) const { return dW[k * n + i]; }

  std::span<const double> step_states(std::size_t k) const {
    return std::span<const double>(states).subspan(k * n, n);
  }
  std::span<const double> step_z(std::size_t j, std::size_t k) const {
    return std::span<const double>(aux_z).subspan((j * (grid.n_steps + 1) + k) * n, n);
  }
  std::span<const double> step_controls(std::size_t k) const {
    return std::span<const double>(controls).subspan(k * n * players, n * players);
  }

  bool has_aux() const { return aux_z.size() == players * (grid.n_steps + 1) * n && players > 0; }

  /// States at step k of paths that never hit the blow-up guard.
  std::vector<double> live_states(std::size_t k) const {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (absorbed.empty() || !absorbed[i]) out.push_back(x(k, i));
    }
    return out;
  }

  EmpiricalMeasure measure(std::size_t k) const { return EmpiricalMeasure::from_samples(step_states(k)); }
};

/// One empirical measure per grid node.
struct MeasureFlow {
  TimeGrid grid;
  std::vector<EmpiricalMeasure> measures;

  const EmpiricalMeasure& at(std::size_t k) const { return measures.at(k); }

  static MeasureFlow from_ensemble(const ParticleEnsemble& e, std::size_t atoms = 0) {
    MeasureFlow f{e.grid, {}};
    f.measures.reserve(e.grid.n_steps + 1);
    for (std::size_t k = 0; k <= e.grid.n_steps; ++k) f.measures.push_back(quantile_compress(e.measure(k), atoms));
    return f;
  }

  static MeasureFlow constant(const TimeGrid& grid, const EmpiricalMeasure& m) {
    return MeasureFlow{grid, std::vector<EmpiricalMeasure>(grid.n_steps + 1, m)};
  }
};

/// Sup over grid nodes of W1 between two flows.
inline double flow_distance(const MeasureFlow& a, const MeasureFlow& b) {
  if (!a.grid.same_as(b.grid)) throw Error(ErrorCode::GridMismatch, "flows live on different grids");
  double sup = 0.0;
  for (std::size_t k = 0; k < a.measures.size(); ++k) sup = std::max(sup, wasserstein(a.at(k), b.at(k), 1.0));
  return sup;
}

struct SimOptions {
  std::size_t threads = 1;
  /// Stop (rather than abort on) paths crossing the guard. Only meaningful
  /// without interaction; such paths are flagged and frozen.
  bool absorb_blowup = false;
  double blowup_level = 1e6;
};

namespace detail {

/// Shared forward loop. `frozen` null means interacting: the measure at each
/// step is the ensemble's own empirical measure.
inline ParticleEnsemble simulate(const ModelSpec& spec, const Policy& policy, std::size_t n, const TimeGrid& grid,
                                 std::uint64_t seed, const MeasureFlow* frozen, const SimOptions& opt) {
  spec.validate();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "particle count must be positive");
  if (frozen && !frozen->grid.same_as(grid)) {
    throw Error(ErrorCode::GridMismatch, "frozen flow grid differs from the simulation grid");
  }
  const std::size_t P = spec.n_players();
  const std::size_t N = grid.n_steps;
  ParticleEnsemble e;
  e.grid = grid;
  e.n = n;
  e.players = P;
  e.seed = seed;
  e.states.assign((N + 1) * n, 0.0);
  e.aux_z.assign(P * (N + 1) * n, 0.0);
  e.dW.resize(N * n);
  e.controls.resize(N * n * P);
  e.absorbed.assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = spec.initial_law(seed, i);
    if (!std::isfinite(x0)) throw Error(ErrorCode::NonFiniteResult, "initial law produced a non-finite state");
    e.states[i] = x0;
  }
  const double sqdt = std::sqrt(grid.dt);
  std::vector<double> drift(n);

  for (std::size_t k = 0; k < N; ++k) {
    const double t = grid.t(k);
    const std::span<const double> xs(e.states.data() + k * n, n);
    const EmpiricalMeasure own = frozen ? EmpiricalMeasure::point_mass(0.0) : EmpiricalMeasure::from_samples(xs);
    const EmpiricalMeasure& m = frozen ? frozen->at(k) : own;

    std::span<double> u(e.controls.data() + k * n * P, n * P);
    policy(PolicyInput{k, t, xs, &m}, u);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < P; ++j) {
        const double v = u[i * P + j];
        if (!std::isfinite(v) || !spec.players[j].box.contains(v)) {
          throw Error(ErrorCode::PolicyOutOfBox, "policy output " + std::to_string(v) + " for player " +
                                                     std::to_string(j) + " at step " + std::to_string(k));
        }
      }
    }

    parallel_for(n, opt.threads, [&](std::size_t b, std::size_t end) {
      spec.kernel->barred_batch(t, xs.subspan(b, end - b), std::span<const double>(u).subspan(b * P, (end - b) * P), P,
                                m, spec.alpha, std::span<double>(drift).subspan(b, end - b));
      for (std::size_t i = b; i < end; ++i) {
        const double dw = sqdt * rng::normal(seed, rng::Domain::BrownianIncrement, i, k);
        e.dW[k * n + i] = dw;
        const auto ui = std::span<const double>(u).subspan(i * P, P);
        for (std::size_t j = 0; j < P; ++j) {
          const std::size_t at = (j * (N + 1) + k) * n + i;
          e.aux_z[at + n] = e.aux_z[at] + spec.players[j].f(t, xs[i], m, ui) * grid.dt;
        }
        if (e.absorbed[i]) {
          e.states[(k + 1) * n + i] = xs[i];
          continue;
        }
        const double next = xs[i] + drift[i] * grid.dt + spec.sigma(t, xs[i]) * dw;
        if (!std::isfinite(next) || std::abs(next) > opt.blowup_level) {
          if (!opt.absorb_blowup) {
            throw Error(ErrorCode::BlowUp, "particle " + std::to_string(i) + " left the guard band at t=" +
                                               std::to_string(grid.t(k + 1)));
          }
          e.absorbed[i] = 1;
          e.states[(k + 1) * n + i] = xs[i];
          continue;
        }
        e.states[(k + 1) * n + i] = next;
      }
    });
  }
  e.absorbed_count = static_cast<std::size_t>(std::count(e.absorbed.begin(), e.absorbed.end(), 1));
  return e;
}

}  // namespace detail

/// Coupled system: each particle sees the empirical measure of the cloud.
inline ParticleEnsemble simulate_particles(const ModelSpec& spec, const Policy& policy, std::size_t n,
                                           const TimeGrid& grid, std::uint64_t seed, SimOptions opt = {}) {
  // Absorption is only sound when particles do not interact.
  opt.absorb_blowup = opt.absorb_blowup && !spec.kernel->depends_on_measure();
  return detail::simulate(spec, policy, n, grid, seed, nullptr, opt);
}

/// Independent particles driven by a given flow of measures.
inline ParticleEnsemble simulate_frozen_flow(const ModelSpec& spec, const Policy& policy, const MeasureFlow& flow,
                                             std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                             SimOptions opt = {}) {
  return detail::simulate(spec, policy, n, grid, seed, &flow, opt);
}

struct PicardOptions {
  double tol = 1e-3;
  std::size_t max_iter = 20;
  /// Quantile-compress iterates to this many atoms (0 keeps all samples).
  std::size_t atoms = 0;
  std::size_t threads = 1;
};

struct PicardResult {
  MeasureFlow flow;
  std::vector<double> residuals;
  bool converged = false;

  const MeasureFlow& require_converged() const {
    if (!converged) {
      throw Error(ErrorCode::NoConvergence,
                  "Picard iteration stopped at residual " + std::to_string(residuals.empty() ? 0.0 : residuals.back()));
    }
    return flow;
  }
};

/// flow^{k+1} = empirical flow of the frozen system driven by flow^k, with the
/// same noise at every iteration. Starts from the initial law held constant.
inline PicardResult mckv_picard(const ModelSpec& spec, const Policy& policy, std::size_t n, const TimeGrid& grid,
                                std::uint64_t seed, const PicardOptions& opt = {}) {
  if (!(opt.tol > 0.0) || opt.max_iter < 1) throw Error(ErrorCode::InvalidParams, "tol > 0 and max_iter >= 1 required");
  spec.validate();
  std::vector<double> x0(n);
  for (std::size_t i = 0; i < n; ++i) x0[i] = spec.initial_law(seed, i);
  PicardResult res{MeasureFlow::constant(grid, quantile_compress(EmpiricalMeasure::from_samples(x0), opt.atoms)), {},
                   false};
  const SimOptions sim{opt.threads, false, 1e6};
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    const auto ens = simulate_frozen_flow(spec, policy, res.flow, n, grid, seed, sim);
    MeasureFlow next = MeasureFlow::from_ensemble(ens, opt.atoms);
    const double r = flow_distance(next, res.flow);
    res.residuals.push_back(r);
    res.flow = std::move(next);
    if (r < opt.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

/// Bootstrap estimate of the Monte Carlo error of an empirical flow: mean
/// over resamples of sup_k W1(resampled m_k, m_k).
inline double bootstrap_flow_error(const ParticleEnsemble& e, std::size_t resamples, std::uint64_t seed) {
  if (resamples == 0) throw Error(ErrorCode::InvalidParams, "resamples must be positive");
  const std::size_t n = e.n;
  double total = 0.0;
  std::vector<double> buf(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    double sup = 0.0;
    for (std::size_t k = 0; k <= e.grid.n_steps; ++k) {
      const auto xs = e.step_states(k);
      for (std::size_t i = 0; i < n; ++i) {
        const double u = rng::uniform(seed, rng::Domain::Bootstrap, b, k * n + i);
        buf[i] = xs[std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)))];
      }
      sup = std::max(sup, wasserstein(EmpiricalMeasure::from_samples(buf), e.measure(k), 1.0));
    }
    total += sup;
  }
  return total / static_cast<double>(resamples);
}

/// Per-particle coupling gap (mean over i of sup_k |x_i - xbar_i|^alpha) between
/// two ensembles built from the same noise.
inline double coupling_gap_moment(const ParticleEnsemble& a, const ParticleEnsemble& b, double alpha) {
  if (a.n != b.n || !a.grid.same_as(b.grid)) throw Error(ErrorCode::GridMismatch, "ensembles are not coupled");
  std::vector<double> sup(a.n, 0.0);
  for (std::size_t k = 0; k <= a.grid.n_steps; ++k) {
    for (std::size_t i = 0; i < a.n; ++i) sup[i] = std::max(sup[i], std::abs(a.x(k, i) - b.x(k, i)));
  }
  double acc = 0.0;
  for (double s : sup) acc += abs_pow(s, alpha);
  return acc / static_cast<double>(a.n);
}

struct ChaosOptions {
  std::size_t reps = 8;
  /// Reference particle count; 0 means 8 * max(n_list).
  std::size_t n_ref = 0;
  double ref_tol = 1e-3;
  std::size_t ref_max_iter = 30;
  std::size_t ref_atoms = 256;
  std::size_t threads = 1;
};

struct ChaosRow {
  std::size_t n = 0;
  double error = 0.0;
};

struct ChaosResult {
  std::vector<ChaosRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> reference_residuals;
  std::size_t n_ref = 0;
};

/// Least-squares line through (x, y); returns {slope, intercept}.
inline std::pair<double, double> fit_line(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw Error(ErrorCode::DegenerateSample, "line fit needs two distinct abscissae");
  const double slope = (n * sxy - sx * sy) / den;
  return {slope, (sy - slope * sx) / n};
}

/// Error E[sup_t |x_{i,n} - xbar_i|^alpha]^(1/alpha) per n, where xbar_i is the
/// same particle driven by a high-accuracy reference flow, and the fitted
/// slope of log error against log n.
inline ChaosResult chaos_study(const ModelSpec& spec, const Policy& policy, std::vector<std::size_t> n_list,
                               const TimeGrid& grid, std::uint64_t seed, const ChaosOptions& opt = {}) {
  if (n_list.empty() || opt.reps == 0) throw Error(ErrorCode::InvalidParams, "n_list nonempty and reps >= 1 required");
  if (!std::is_sorted(n_list.begin(), n_list.end())) throw Error(ErrorCode::InvalidParams, "n_list must be ascending");
  ChaosResult out;
  out.n_ref = opt.n_ref ? opt.n_ref : 8 * n_list.back();

  MeasureFlow reference;
  if (spec.kernel->depends_on_measure()) {
    PicardOptions po{opt.ref_tol, opt.ref_max_iter, opt.ref_atoms, opt.threads};
    auto pic = mckv_picard(spec, policy, out.n_ref, grid, rng::derive_seed(seed, 0x7265664cULL), po);
    out.reference_residuals = pic.residuals;
    if (!pic.converged) {
      throw Error(ErrorCode::ReferenceNotConverged,
                  "reference flow residual " + std::to_string(pic.residuals.back()) + " above tolerance");
    }
    reference = std::move(pic.flow);
  } else {
    reference = MeasureFlow::constant(grid, EmpiricalMeasure::point_mass(0.0));
  }

  const SimOptions sim{opt.threads, false, 1e6};
  std::vector<double> lx, ly;
  for (std::size_t n : n_list) {
    double acc = 0.0;
    for (std::size_t r = 0; r < opt.reps; ++r) {
      const std::uint64_t s = rng::derive_seed(seed, n, r);
      const auto coupled = simulate_particles(spec, policy, n, grid, s, sim);
      const auto frozen = simulate_frozen_flow(spec, policy, reference, n, grid, s, sim);
      acc += coupling_gap_moment(coupled, frozen, spec.alpha);
    }
    const double err = std::pow(acc / static_cast<double>(opt.reps), 1.0 / spec.alpha);
    out.rows.push_back({n, err});
    if (err > 0.0) {
      lx.push_back(std::log(static_cast<double>(n)));
      ly.push_back(std::log(err));
    }
  }
  if (lx.size() >= 2) std::tie(out.slope, out.intercept) = fit_line(lx, ly);
  return out;
}

struct ExchangeabilityResult {
  double max_deviation = 0.0;
  double pooled_se = 0.0;
  std::size_t pairs = 0;

  /// Largest pairwise gap measured in standard errors of a difference.
  double z() const { return pooled_se > 0.0 ? max_deviation / (std::sqrt(2.0) * pooled_se) : 0.0; }
  bool exchangeable(double z_limit = 3.0) const { return z() <= z_limit; }
};

/// Compares a symmetric pair statistic s(x_i(T), x_j(T)) across disjoint index
/// pairs (0,1), (2,3), ... (at most four), averaging over replicate ensembles.
inline ExchangeabilityResult exchangeability_check(std::span<const ParticleEnsemble> replicates,
                                                   const std::function<double(double, double)>& statistic) {
  if (replicates.empty()) throw Error(ErrorCode::EmptyInput, "need at least one replicate");
  const std::size_t n = replicates.front().n;
  if (n < 4) throw Error(ErrorCode::TooFewParticles, "exchangeability needs at least 4 particles");
  const std::size_t pairs = std::min<std::size_t>(4, n / 2);
  const auto R = static_cast<double>(replicates.size());
  std::vector<double> mean(pairs, 0.0), sq(pairs, 0.0);
  for (const auto& e : replicates) {
    const std::size_t N = e.grid.n_steps;
    for (std::size_t p = 0; p < pairs; ++p) {
      const double s = statistic(e.x(N, 2 * p), e.x(N, 2 * p + 1));
      mean[p] += s;
      sq[p] += s * s;
    }
  }
  ExchangeabilityResult res;
  res.pairs = pairs;
  double var_pool = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    mean[p] /= R;
    const double var = R > 1 ? std::max(0.0, (sq[p] - R * mean[p] * mean[p]) / (R - 1)) : 0.0;
    var_pool += var;
  }
  res.pooled_se = std::sqrt(var_pool / static_cast<double>(pairs) / R);
  for (std::size_t a = 0; a < pairs; ++a)
    for (std::size_t b = a + 1; b < pairs; ++b) res.max_deviation = std::max(res.max_deviation, std::abs(mean[a] - mean[b]));
  return res;
}

}  // namespace mfsmp
