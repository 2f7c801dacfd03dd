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

// Randomized self-checks shared by the CLI and the test suites: Gateaux
// closed forms against finite differences, the Donsker-Varadhan identity,
// transport against the LP oracle, the LQ reduction against Riccati, and
// contraction of the McKean-Vlasov Picard map.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mfsmp/errors.hpp"
#include "mfsmp/measure_kit.hpp"
#include "mfsmp/model_kernel.hpp"
#include "mfsmp/particle_engine.hpp"
#include "mfsmp/risk_functional.hpp"
#include "mfsmp/rng.hpp"
#include "mfsmp/smp_fbsdes.hpp"

namespace mfsmp {

/// Sequential draws from one counter-based stream.
class InstanceDraw {
 public:
  InstanceDraw(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * rng::uniform(seed_, rng::Domain::Instance, stream_, k_++); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    return lo + std::min(hi - lo, static_cast<std::size_t>(uniform(0.0, 1.0) * span));
  }

 private:
  std::uint64_t seed_, stream_;
  std::uint64_t k_ = 0;
};

/// dx = (int |mu sin(x - y)|^alpha m(dy))^(1/alpha) dt + sigma dB with one
/// uncontrolled player, x(0) ~ N(0, 1).
inline ModelSpec build_cooperative_spec(double alpha, double mu = 1.0, double sigma = 0.1) {
  ModelSpec spec;
  spec.alpha = alpha;
  spec.horizon = 1.0;
  spec.kernel = std::make_shared<CooperativeKernel>(mu);
  spec.diffusion = [sigma](double, double) { return sigma; };
  spec.diffusion_x = [](double, double) { return 0.0; };
  PlayerSpec p;
  p.name = "agent";
  p.box = {0.0, 0.0};
  spec.players.push_back(std::move(p));
  spec.initial_law = initial_normal(0.0, 1.0);
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Gateaux catalog
// ---------------------------------------------------------------------------

struct GateauxRow {
  Functional functional = Functional::Mean;
  std::size_t instance = 0;
  double alpha = 1.0;
  double closed = 0.0;
  double finite_difference = 0.0;
  double rel_error = 0.0;
};

struct GateauxSuite {
  std::vector<GateauxRow> rows;
  double max_rel_error = 0.0;
  bool pass(double limit = 1e-4) const { return max_rel_error <= limit; }
};

/// Random (m, d) instances per functional: m has 3 to 12 atoms in [0.2, 3],
/// d.plus 1 to 4 atoms in [-1, 4], d.minus drawn from the atoms of m.
inline GateauxSuite gateaux_suite(std::uint64_t seed, std::size_t instances = 50, double eps = 1e-4) {
  static constexpr Functional kAll[] = {Functional::Mean,       Functional::SquareMean, Functional::SecondMoment,
                                        Functional::AlphaMoment, Functional::AlphaNorm, Functional::NormedDrift};
  GateauxSuite out;
  for (Functional f : kAll) {
    for (std::size_t s = 0; s < instances; ++s) {
      InstanceDraw draw(seed, static_cast<std::uint64_t>(f) * 1000003ULL + s);
      ModelSpec spec;
      spec.alpha = draw.uniform(1.0, 3.0);
      spec.kernel = std::make_shared<CooperativeKernel>(draw.uniform(0.5, 2.0), 0);
      const double t = draw.uniform(0.0, 1.0);
      const double x = draw.uniform(-2.0, 2.0);
      const std::vector<double> u{draw.uniform(-1.0, 1.0)};

      std::vector<double> atoms(draw.integer(3, 12));
      for (double& a : atoms) a = draw.uniform(0.2, 3.0);
      std::vector<double> plus(draw.integer(1, 4)), minus(plus.size());
      for (double& a : plus) a = draw.uniform(-1.0, 4.0);
      for (double& a : minus) a = atoms[draw.integer(0, atoms.size() - 1)];
      const auto m = EmpiricalMeasure::from_samples(atoms);
      const auto d = GateauxDirection::make(EmpiricalMeasure::from_samples(plus), EmpiricalMeasure::from_samples(minus));

      GateauxRow row{f, s, spec.alpha, 0.0, 0.0, 0.0};
      row.closed = gateaux_closed_form(f, spec, t, x, m, u).along(d);
      row.finite_difference = gateaux_fd_richardson(catalog_functional(f, spec, t, x, u), m, d, eps);
      row.rel_error = std::abs(row.closed - row.finite_difference) / std::max(std::abs(row.closed), 1e-12);
      out.max_rel_error = std::max(out.max_rel_error, row.rel_error);
      out.rows.push_back(row);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Donsker-Varadhan
// ---------------------------------------------------------------------------

struct DvRow {
  std::size_t instance = 0;
  std::size_t support = 0;
  double theta = 0.0;
  double lhs = 0.0;
  double sup_value = 0.0;
  double identity_residual = 0.0;
  /// Largest margin by which a perturbation beat the Gibbs tilt (<= 0 is good).
  double worst_perturbation = 0.0;
};

struct DvSuite {
  std::vector<DvRow> rows;
  double max_identity_residual = 0.0;
  std::size_t perturbation_violations = 0;
  bool pass(double tol = 1e-10) const { return max_identity_residual <= tol && perturbation_violations == 0; }
};

/// Random (phi, nu, theta) with support 2 to 8 and theta in [-2, 2] \ {0}. Each
/// instance checks the identity and compares the Gibbs tilt with random
/// simplex perturbations (a maximizer for theta > 0, a minimizer for theta < 0).
inline DvSuite dv_suite(std::uint64_t seed, std::size_t instances = 100, std::size_t perturbations = 1000) {
  DvSuite out;
  for (std::size_t s = 0; s < instances; ++s) {
    InstanceDraw draw(seed, s);
    const std::size_t k = draw.integer(2, 8);
    double theta = 0.0;
    while (std::abs(theta) < 1e-3) theta = draw.uniform(-2.0, 2.0);
    std::vector<double> phi(k), q(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      phi[j] = draw.uniform(-3.0, 3.0);
      total += (q[j] = draw.uniform(0.05, 1.0));
    }
    for (double& v : q) v /= total;
    const auto nu = DiscreteDistribution::from_probs(q);
    const auto dv = donsker_varadhan(phi, nu, theta);

    DvRow row{s, k, theta, dv.lhs, dv.sup_value, std::abs(dv.lhs - dv.sup_value), -std::numeric_limits<double>::infinity()};
    const auto g = dv.gibbs.probs();
    std::vector<double> mix(k), r(k);
    for (std::size_t p = 0; p < perturbations; ++p) {
      const double w = draw.uniform(0.0, 1.0);
      double rs = 0.0;
      for (double& v : r) rs += (v = -std::log(draw.uniform(0.0, 1.0)));
      double ms = 0.0;
      for (std::size_t j = 0; j < k; ++j) ms += (mix[j] = (1.0 - w) * g[j] + w * r[j] / rs);
      for (double& v : mix) v /= ms;
      const double value = dv_objective(phi, DiscreteDistribution::from_probs(mix), nu, theta);
      const double margin = theta > 0.0 ? value - dv.sup_value : dv.sup_value - value;
      row.worst_perturbation = std::max(row.worst_perturbation, margin);
      if (margin > 1e-12) ++out.perturbation_violations;
    }
    out.max_identity_residual = std::max(out.max_identity_residual, row.identity_residual);
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

struct TransportRow {
  std::size_t instance = 0;
  double order = 1.0;
  double quantile = 0.0;
  double lp = 0.0;
  double abs_error = 0.0;
  /// max over test functions of |E1 f - E2 f| / (Lip(f) W1); at most 1.
  double worst_kr_ratio = 0.0;
};

struct TransportSuite {
  std::vector<TransportRow> rows;
  double max_abs_error = 0.0;
  std::size_t kr_violations = 0;
  std::size_t kr_functions = 0;
  bool pass(double tol = 1e-9) const { return max_abs_error <= tol && kr_violations == 0; }
};

/// Random pairs with 1 to 8 atoms in [-5, 5] and order in {1, 1.5, 2, 3};
/// Kantorovich-Rubinstein checked with piecewise-linear Lipschitz functions
/// f(x) = a0 x + sum_j a_j |x - c_j|.
inline TransportSuite transport_suite(std::uint64_t seed, std::size_t instances = 200, std::size_t kr_functions = 1000) {
  static constexpr double kOrders[] = {1.0, 1.5, 2.0, 3.0};
  TransportSuite out;
  for (std::size_t s = 0; s < instances; ++s) {
    InstanceDraw draw(seed, s);
    std::vector<double> a(draw.integer(1, 8)), b(draw.integer(1, 8));
    for (double& v : a) v = draw.uniform(-5.0, 5.0);
    for (double& v : b) v = draw.uniform(-5.0, 5.0);
    const auto m1 = EmpiricalMeasure::from_samples(a);
    const auto m2 = EmpiricalMeasure::from_samples(b);
    TransportRow row;
    row.instance = s;
    row.order = kOrders[draw.integer(0, 3)];
    row.quantile = wasserstein(m1, m2, row.order);
    row.lp = wasserstein_lp_oracle(m1, m2, row.order);
    row.abs_error = std::abs(row.quantile - row.lp);

    const double w1 = wasserstein(m1, m2, 1.0);
    for (std::size_t f = 0; f < kr_functions; ++f) {
      double coef[5], knot[5], lip = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        coef[j] = draw.uniform(-1.0, 1.0);
        knot[j] = draw.uniform(-6.0, 6.0);
        lip += std::abs(coef[j]);
      }
      auto fn = [&](double y) {
        double v = coef[0] * y;
        for (std::size_t j = 1; j < 5; ++j) v += coef[j] * std::abs(y - knot[j]);
        return v;
      };
      double e1 = 0.0, e2 = 0.0;
      for (double y : m1.samples()) e1 += fn(y);
      for (double y : m2.samples()) e2 += fn(y);
      const double gap = std::abs(e1 / static_cast<double>(m1.size()) - e2 / static_cast<double>(m2.size()));
      if (gap > lip * w1 + 1e-12 * (1.0 + lip * w1)) ++out.kr_violations;
      if (lip * w1 > 0.0) row.worst_kr_ratio = std::max(row.worst_kr_ratio, gap / (lip * w1));
      ++out.kr_functions;
    }
    out.max_abs_error = std::max(out.max_abs_error, row.abs_error);
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small-theta expansion
// ---------------------------------------------------------------------------

/// Frozen skewed sample (unit exponential draws) for the small-theta check;
/// a symmetric sample has no cubic cumulant and its residual decays faster.
inline std::vector<double> skewed_cost_sample(std::uint64_t seed, std::size_t n = 2000) {
  std::vector<double> psi(n);
  for (std::size_t i = 0; i < n; ++i) psi[i] = -std::log(rng::uniform(seed, rng::Domain::Instance, 0, i));
  return psi;
}

inline std::vector<double> small_theta_grid() {
  std::vector<double> th;
  for (int j = 1; j <= 10; ++j) th.push_back(0.02 * j);
  return th;
}

// ---------------------------------------------------------------------------
// Linear-quadratic reduction
// ---------------------------------------------------------------------------

struct LqValidationOptions {
  LqParams params{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0};
  double x0_mean = 1.0;
  double x0_sd = 0.5;
  std::size_t n = 10000;
  double dt = 1e-2;
  GameOptions game{};
};

struct LqValidationRow {
  double t = 0.0;
  double center = 0.0;
  double solver = 0.0;
  double oracle = 0.0;
};

struct LqValidation {
  std::vector<LqValidationRow> rows;
  double sup_error = 0.0;
  double min_drift = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool pass(double tol = 5e-2) const { return converged && sup_error <= tol && min_drift > 0.0; }
};

/// Solves the mean-field-free, risk-neutral LQ game with the generic solver
/// and compares its feedback table with the Riccati feedback at the bin
/// centers of every step. min_drift reports the smallest c + a x + u seen,
/// which must stay positive for |b| = b.
inline LqValidation lq_validation(std::uint64_t seed, const LqValidationOptions& opt = {}) {
  const auto grid = TimeGrid::uniform(opt.params.T, opt.dt);
  const auto spec = build_lq_spec(opt.params, initial_normal(opt.x0_mean, opt.x0_sd));
  const auto g = solve_game_fixed_point(spec, opt.n, grid, seed, opt.game);
  const auto oracle = lq_riccati_oracle(opt.params, grid);
  LqValidation out;
  out.iterations = g.residuals.size();
  out.converged = g.converged;
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const auto c = g.table.centers(0, k);
    const auto v = g.table.values(0, k);
    for (std::size_t b = 0; b < c.size(); ++b) {
      const LqValidationRow row{grid.t(k), c[b], v[b], oracle.feedback(k, c[b])};
      out.sup_error = std::max(out.sup_error, std::abs(row.solver - row.oracle));
      out.rows.push_back(row);
    }
  }
  out.min_drift = std::numeric_limits<double>::infinity();
  const auto& e = g.ensemble;
  for (std::size_t k = 0; k < grid.n_steps; ++k)
    for (std::size_t i = 0; i < e.n; ++i)
      out.min_drift = std::min(out.min_drift, opt.params.c + opt.params.a * e.x(k, i) + e.u(k, i, 0));
  return out;
}

// ---------------------------------------------------------------------------
// Picard contraction
// ---------------------------------------------------------------------------

struct PicardCheck {
  std::vector<double> residuals;
  double bootstrap_error = 0.0;
  /// First iteration whose residual is within 3x the bootstrap error (0 = never).
  std::size_t reached_at = 0;
  bool monotone = true;
  bool pass(std::size_t max_iter = 10) const { return monotone && reached_at > 0 && reached_at <= max_iter; }
};

/// Runs the Picard map under common random numbers and checks that
/// successive residuals shrink (ratio < 1) until they reach 3x the Monte Carlo
/// error of the flow, estimated by bootstrap on the final frozen ensemble.
inline PicardCheck picard_check(const ModelSpec& spec, std::size_t n, const TimeGrid& grid, std::uint64_t seed,
                                std::size_t max_iter = 10, std::size_t resamples = 20, std::size_t threads = 1) {
  PicardOptions po;
  po.tol = 1e-6;
  po.max_iter = max_iter;
  po.threads = threads;
  const auto pic = mckv_picard(spec, zero_policy(), n, grid, seed, po);
  const auto ens = simulate_frozen_flow(spec, zero_policy(), pic.flow, n, grid, seed, SimOptions{threads, false, 1e6});
  PicardCheck out;
  out.residuals = pic.residuals;
  out.bootstrap_error = bootstrap_flow_error(ens, resamples, seed);
  const double floor = 3.0 * out.bootstrap_error;
  for (std::size_t j = 0; j < out.residuals.size(); ++j) {
    if (out.residuals[j] <= floor) {
      out.reached_at = j + 1;
      break;
    }
    if (j + 1 < out.residuals.size() && !(out.residuals[j + 1] < out.residuals[j])) out.monotone = false;
  }
  return out;
}

}  // namespace mfsmp
