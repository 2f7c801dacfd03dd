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

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mfsmp/smp_fbsdes.hpp"
#include "mfsmp/scenario_virus.hpp"

namespace mfsmp {
namespace {

using CostFn = std::function<double(double, double, const EmpiricalMeasure&, Controls)>;
using TermFn = std::function<double(double, const EmpiricalMeasure&)>;

ModelSpec affine_spec(double c, double a, double sigma, InitialLaw law, CostFn f, TermFn h, TermFn h_x,
                      double theta = 0.0) {
  ModelSpec spec;
  spec.alpha = 1.0;
  spec.kernel = std::make_shared<AffineKernel>(c, a, std::vector<double>{});
  spec.diffusion = [sigma](double, double) { return sigma; };
  spec.diffusion_x = [](double, double) { return 0.0; };
  spec.initial_law = std::move(law);
  PlayerSpec p;
  p.name = "p";
  p.theta = theta;
  p.running_cost = std::move(f);
  p.running_cost_x = [](double, double, const EmpiricalMeasure&, Controls) { return 0.0; };
  p.terminal_cost = std::move(h);
  p.terminal_cost_x = std::move(h_x);
  spec.players.push_back(std::move(p));
  return spec;
}

TEST(VTheta, RiskNeutralIsIdentically1) {
  const auto spec = affine_spec(1.0, 0.0, 0.3, initial_normal(0.0, 1.0), nullptr, nullptr, nullptr);
  const auto e = simulate_particles(spec, zero_policy(), 50, TimeGrid::uniform(1.0, 0.1), 1);
  const auto v = compute_v_theta(spec, 0, e);
  for (double x : v.v) EXPECT_EQ(x, 1.0);
  for (double x : v.ell) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(v.min_v, 1.0);
}

TEST(VTheta, DeterministicCostIsConstantInTime) {
  // Psi = T for every path, so the conditional expectation never changes.
  const double theta = 0.7, T = 1.5;
  const auto spec = affine_spec(1.0, 0.0, 0.0, initial_normal(0.0, 1.0),
                                [](double, double, const EmpiricalMeasure&, Controls) { return 1.0; }, nullptr,
                                nullptr, theta);
  const auto e = simulate_particles(spec, zero_policy(), 40, TimeGrid::uniform(T, 0.1), 2);
  const auto v = compute_v_theta(spec, 0, e);
  for (double x : v.v) EXPECT_NEAR(x, std::exp(theta * T), 1e-12);
  for (double x : v.ell) EXPECT_NEAR(x, 0.0, 1e-10);
}

TEST(VTheta, GaussianTerminalCostMatchesClosedForm) {
  // dx = c dt + sigma dB, Psi = x(T): v(t) = exp(theta x + theta c (T - t) + theta^2 sigma^2 (T - t) / 2).
  const double c = 0.5, sigma = 0.5, theta = 0.5, T = 1.0;
  const auto spec = affine_spec(c, 0.0, sigma, initial_normal(0.0, 0.3), nullptr,
                                [](double x, const EmpiricalMeasure&) { return x; },
                                [](double, const EmpiricalMeasure&) { return 1.0; }, theta);
  const auto grid = TimeGrid::uniform(T, 0.05);
  const auto e = simulate_particles(spec, zero_policy(), 20000, grid, 3);
  const auto v = compute_v_theta(spec, 0, e);
  EXPECT_GT(v.min_v, 0.0);
  // The cubic basis is judged on the bulk; its far tails extrapolate.
  for (std::size_t k : {0u, 5u, 10u, 19u}) {
    const double tau = T - grid.t(k);
    std::vector<double> rel(e.n);
    double ell_err = 0.0;
    for (std::size_t i = 0; i < e.n; ++i) {
      const double exact = std::exp(theta * e.x(k, i) + theta * c * tau + 0.5 * theta * theta * sigma * sigma * tau);
      rel[i] = std::abs(v.at(k, i) / exact - 1.0);
      ell_err += std::abs(v.ell_at(k, i) - sigma);
    }
    std::sort(rel.begin(), rel.end());
    EXPECT_LT(rel[e.n / 2], 5e-3) << "step " << k;
    EXPECT_LT(rel[e.n * 99 / 100], 2e-2) << "step " << k;
    EXPECT_LT(ell_err / static_cast<double>(e.n), 5e-2) << "step " << k;
  }
  EXPECT_LT(martingale_z_score(e, v), 3.0);
}

TEST(VTheta, OverflowDetected) {
  const auto spec = affine_spec(1.0, 0.0, 0.0, initial_point(0.0),
                                [](double, double, const EmpiricalMeasure&, Controls) { return 1000.0; }, nullptr,
                                nullptr, 1.0);
  const auto e = simulate_particles(spec, zero_policy(), 8, TimeGrid::uniform(1.0, 0.5), 1);
  try {
    compute_v_theta(spec, 0, e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::Overflow);
  }
}

TEST(Adjoint, ConstantTerminalGradient) {
  // Measure-free, x-independent drift, h = c x, f = 0: p* = c, and with all
  // states equal the q* regression reduces to the sample mean of c dB / dt.
  const double c = 1.7;
  const auto spec = affine_spec(0.4, 0.0, 0.0, initial_point(0.5), nullptr,
                                [c](double x, const EmpiricalMeasure&) { return c * x; },
                                [c](double, const EmpiricalMeasure&) { return c; });
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  const auto e = simulate_particles(spec, zero_policy(), 64, grid, 4);
  const auto a = solve_adjoint_bsde(spec, 0, e, compute_v_theta(spec, 0, e));
  for (std::size_t k = 0; k <= grid.n_steps; ++k) {
    double mean_db = 0.0;
    if (k < grid.n_steps) {
      for (std::size_t i = 0; i < e.n; ++i) mean_db += e.noise(k, i);
      mean_db /= static_cast<double>(e.n);
    }
    for (std::size_t i = 0; i < e.n; ++i) {
      EXPECT_NEAR(a.ps(k, i), c, 1e-12);
      EXPECT_EQ(a.p(k, i), -a.ps(k, i));
      EXPECT_NEAR(a.qs(k, i), c * mean_db / grid.dt, 1e-12);
      EXPECT_EQ(a.q(k, i), -a.qs(k, i));
    }
  }
}

TEST(Adjoint, LinearDriverExpectation) {
  // h = g x^2 / 2 and b = c + a x > 0: E p*(0) = exp(a T) g E x(T).
  const double g = 0.8, c = 2.0, a = 0.5, T = 1.0;
  const auto spec = affine_spec(c, a, 0.2, initial_normal(1.0, 0.1), nullptr,
                                [g](double x, const EmpiricalMeasure&) { return 0.5 * g * x * x; },
                                [g](double x, const EmpiricalMeasure&) { return g * x; });
  const auto grid = TimeGrid::uniform(T, 1e-2);
  const auto e = simulate_particles(spec, zero_policy(), 10000, grid, 5);
  const auto adj = solve_adjoint_bsde(spec, 0, e, compute_v_theta(spec, 0, e));
  double p0 = 0.0, xT = 0.0;
  for (std::size_t i = 0; i < e.n; ++i) {
    p0 += adj.ps(0, i);
    xT += e.x(grid.n_steps, i);
  }
  p0 /= static_cast<double>(e.n);
  xT /= static_cast<double>(e.n);
  const double expected = std::exp(a * T) * g * xT;
  EXPECT_NEAR(p0 / expected, 1.0, 2e-2);
}

TEST(Adjoint, TerminalConditionIncludesMeasureTerm) {
  virus::VirusParams vp;
  vp.x0.kind = "normal";
  vp.x0.value = 1.0;
  vp.x0.sd = 0.2;
  const auto spec = build_virus_spec(vp);
  const auto grid = TimeGrid::uniform(1.0, 0.05);
  const auto e = simulate_particles(spec, constant_policy({0.2, 0.4}), 300, grid, 6);
  for (std::size_t pl = 0; pl < 2; ++pl) {
    const auto v = compute_v_theta(spec, pl, e);
    const auto term = terminal_adjoint(spec, pl, e, v);
    const std::size_t N = grid.n_steps;
    double wbar = 0.0;
    for (std::size_t i = 0; i < e.n; ++i) wbar += v.at(N, i);
    wbar /= static_cast<double>(e.n);
    const double s = pl == 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < e.n; ++i) {
      const double x = e.x(N, i);
      const double dpow = std::pow(std::abs(x), vp.alpha - 1.0) * (x < 0 ? -1.0 : 1.0);
      const double expected = s * vp.c1 * dpow + s * vp.c1_bar * dpow * wbar / v.at(N, i);
      EXPECT_NEAR(term[i], expected, 1e-12 * (1.0 + std::abs(expected)));
    }
    const auto adj = solve_adjoint_bsde(spec, pl, e, v);
    for (std::size_t i = 0; i < e.n; ++i) EXPECT_EQ(adj.ps(N, i), term[i]);
  }
}

TEST(Adjoint, MeanFieldDriverVanishesWithoutMeasure) {
  const auto spec = build_lq_spec(LqParams{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0}, initial_normal(1.0, 0.5));
  const auto e = simulate_particles(spec, constant_policy({0.1}), 100, TimeGrid::uniform(1.0, 0.1), 7);
  const std::vector<double> p(100, 2.0), v(100, 1.0);
  for (std::size_t k = 0; k < 10; ++k)
    for (double d : mean_field_driver(spec, 0, e, k, p, v)) EXPECT_EQ(d, 0.0);

  const auto vs = build_virus_spec(virus::VirusParams{});
  const auto ve = simulate_particles(vs, zero_policy(), 100, TimeGrid::uniform(1.0, 0.1), 7);
  double total = 0.0;
  for (double d : mean_field_driver(vs, 1, ve, 3, p, v)) total += std::abs(d);
  EXPECT_GT(total, 0.0);
}

TEST(Adjoint, LqAdjointMatchesRiccatiGradient) {
  const LqParams lp{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0};
  const auto spec = build_lq_spec(lp, initial_normal(1.0, 0.5));
  const auto grid = TimeGrid::uniform(lp.T, 0.02);
  GameOptions go;
  go.tol = 1e-4;
  const auto g = solve_game_fixed_point(spec, 4000, grid, 8, go);
  ASSERT_TRUE(g.converged);
  const auto oracle = lq_riccati_oracle(lp, grid);
  const auto& a = g.adjoints[0];
  double worst_mean = 0.0;
  for (std::size_t k = 0; k <= grid.n_steps; k += 5) {
    double err = 0.0;
    for (std::size_t i = 0; i < g.ensemble.n; ++i) {
      err += std::abs(a.p(k, i) + oracle.k[k] * g.ensemble.x(k, i) + oracle.s[k]);
    }
    worst_mean = std::max(worst_mean, err / static_cast<double>(g.ensemble.n));
  }
  EXPECT_LT(worst_mean, 5e-2);
}

TEST(MaxCheck, QuadraticControlCost) {
  ModelSpec spec;
  spec.alpha = 1.0;
  spec.kernel = std::make_shared<AffineKernel>(0.0, 0.0, std::vector<double>{1.0});
  spec.diffusion = [](double, double) { return 0.0; };
  PlayerSpec pl;
  pl.name = "p";
  pl.box = {0.0, 2.0};
  pl.running_cost = [](double, double, const EmpiricalMeasure&, Controls u) { return 0.5 * u[0] * u[0]; };
  spec.players.push_back(std::move(pl));
  const auto m = EmpiricalMeasure::point_mass(0.0);
  const auto grid = control_grid(spec.players[0].box);
  EXPECT_EQ(grid.size(), 201u);
  auto H = [](double u, double p) { return u * p - 0.5 * u * u; };
  for (double p : {-1.0, 0.3, 1.0, 1.55, 3.0}) {
    const double star = std::clamp(p, 0.0, 2.0);
    EXPECT_TRUE(pointwise_max_check(spec, 0, 0.0, 0.0, m, p, 0.0, 0.0, std::vector<double>{star}, grid).ok) << p;
    const double off = star <= 1.0 ? star + 0.5 : star - 0.5;
    const auto r = pointwise_max_check(spec, 0, 0.0, 0.0, m, p, 0.0, 0.0, std::vector<double>{off}, grid);
    EXPECT_FALSE(r.ok) << p;
    EXPECT_NEAR(r.violation, H(star, p) - H(off, p), 1e-12) << p;
  }
}

TEST(MaxCheck, ControlFreeHamiltonianAlwaysPasses) {
  const auto spec = affine_spec(1.0, 0.0, 0.1, initial_point(0.0), nullptr, nullptr, nullptr);
  const auto m = EmpiricalMeasure::point_mass(0.0);
  const std::vector<double> u{0.0};
  const auto r = pointwise_max_check(spec, 0, 0.0, 0.3, m, 2.0, -1.0, 0.4, u, std::vector<double>{0.0});
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.violation, 0.0);
}

TEST(MaxCheck, VirusClosedFormMatchesGridSearch) {
  const auto spec = build_virus_spec(virus::VirusParams{});
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> ux(0.1, 3.0), up(-3.0, 3.0), uu(0.0, 1.0);
  std::vector<double> atoms(20);
  for (double& a : atoms) a = ux(gen);
  const auto m = EmpiricalMeasure::from_samples(atoms);
  const std::size_t n = 200;
  std::vector<double> xs(n), ctrl(2 * n), ps(n), qs(n), ell(n);
  for (std::size_t j = 0; j < n; ++j) {
    xs[j] = ux(gen);
    ctrl[2 * j] = uu(gen);
    ctrl[2 * j + 1] = uu(gen);
    ps[j] = up(gen);
    qs[j] = up(gen);
    ell[j] = up(gen);
  }
  for (std::size_t pl = 0; pl < 2; ++pl) {
    ArgmaxInput in;
    in.t = 0.4;
    in.player = pl;
    in.n_players = 2;
    in.states = xs;
    in.controls = ctrl;
    in.measure = &m;
    in.p_star = ps;
    in.q = qs;
    in.ell = ell;
    in.theta = spec.players[pl].theta;
    std::vector<double> closed(n), generic(n);
    spec.players[pl].best_response(in, closed);
    generic_best_response(spec, in, generic);
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_NEAR(closed[j], generic[j], 1e-6) << pl << " " << j;
      std::vector<double> u{ctrl[2 * j], ctrl[2 * j + 1]};
      u[pl] = closed[j];
      EXPECT_TRUE(pointwise_max_check(spec, pl, 0.4, xs[j], m, -ps[j], -qs[j], ell[j], u,
                                      control_grid(spec.players[pl].box), 1e-12)
                      .ok);
    }
  }
}

TEST(Riccati, ClosedForms) {
  const auto grid = TimeGrid::uniform(1.0, 0.05);
  // Terminal weight only: k = g / (1 + g tau / r).
  const auto a = lq_riccati_oracle(LqParams{0.0, 0.0, 0.0, 0.5, 2.0, 0.0, 1.0}, grid);
  EXPECT_NEAR(a.k[8], 0.588235294117647, 1e-12);
  // Running weight only: k = tanh(tau).
  const auto b = lq_riccati_oracle(LqParams{0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0}, grid);
  EXPECT_NEAR(b.k[6], 0.604367777117163, 1e-12);
  // Stationary point of the Riccati flow.
  const auto c = lq_riccati_oracle(LqParams{0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0}, grid);
  for (double k : c.k) EXPECT_NEAR(k, 1.0, 1e-14);
  for (double s : c.s) EXPECT_EQ(s, 0.0);
  EXPECT_NEAR(c.feedback(3, 2.0), -2.0, 1e-14);
}

TEST(Riccati, GeneralCaseWithAffineTerm) {
  const auto grid = TimeGrid::uniform(1.0, 0.05);
  const auto sol = lq_riccati_oracle(LqParams{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0}, grid);
  const double k_exp[] = {0.45061539, 0.41996068, 0.38830962};
  const double s_exp[] = {0.4196732, 0.71912626, 1.10391576};
  const std::size_t idx[] = {15, 10, 0};
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(sol.k[idx[j]], k_exp[j], 1e-8);
    EXPECT_NEAR(sol.s[idx[j]], s_exp[j], 1e-8);
    EXPECT_NEAR(sol.gain(idx[j]), k_exp[j], 1e-8);
  }
  EXPECT_EQ(sol.t.front(), 0.0);
}

TEST(Riccati, BlowupAndInvalidParams) {
  const auto grid = TimeGrid::uniform(2.0, 0.05);
  try {
    lq_riccati_oracle(LqParams{0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 2.0}, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParams);
  }
  // Large positive a with q > 0 and tiny r still stays finite; a huge q / r
  // ratio forces the solution out of range.
  try {
    lq_riccati_oracle(LqParams{400.0, 0.0, 1e6, 1e12, 0.0, 0.0, 2.0}, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RiccatiBlowup);
  }
}

TEST(GameSolver, ControlFreeProblemStopsAfterOneSweep) {
  ModelSpec spec = affine_spec(1.0, 0.0, 0.1, initial_normal(0.0, 1.0),
                               [](double, double x, const EmpiricalMeasure&, Controls) { return x * x; }, nullptr,
                               nullptr);
  spec.players[0].box = {0.0, 1.0};
  const auto g = solve_game_fixed_point(spec, 200, TimeGrid::uniform(1.0, 0.1), 10);
  EXPECT_TRUE(g.converged);
  EXPECT_EQ(g.residuals.size(), 1u);
}

TEST(GameSolver, RejectsBadOptions) {
  const auto spec = build_lq_spec(LqParams{}, initial_point(0.0));
  GameOptions o;
  o.damping = 0.0;
  EXPECT_THROW(solve_game_fixed_point(spec, 10, TimeGrid::uniform(1.0, 0.5), 1, o), Error);
  o = GameOptions{};
  o.bins = 0;
  EXPECT_THROW(solve_game_fixed_point(spec, 10, TimeGrid::uniform(1.0, 0.5), 1, o), Error);
}

TEST(GameSolver, SmallThetaIsCloseToRiskNeutral) {
  LqParams lp{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0};
  const auto grid = TimeGrid::uniform(1.0, 0.05);
  GameOptions go;
  go.tol = 1e-5;
  auto solve = [&](double theta) {
    auto spec = build_lq_spec(lp, initial_normal(1.0, 0.5));
    spec.players[0].theta = theta;
    return solve_game_fixed_point(spec, 2000, grid, 11, go);
  };
  const auto g0 = solve(0.0), gp = solve(1e-3), gm = solve(-1e-3);
  ASSERT_TRUE(g0.converged && gp.converged && gm.converged);
  EXPECT_EQ(g0.min_v_positive_theta, std::numeric_limits<double>::infinity());
  EXPECT_GT(gp.min_v_positive_theta, 0.0);
  double worst = 0.0, bracketed = 0.0, nodes = 0.0;
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    for (double x : {0.5, 1.0, 1.5, 2.0}) {
      const double u0 = g0.table.eval(0, k, x), up = gp.table.eval(0, k, x), um = gm.table.eval(0, k, x);
      worst = std::max({worst, std::abs(up - u0), std::abs(um - u0)});
      if ((um - u0) * (up - u0) <= 0.0) bracketed += 1.0;
      nodes += 1.0;
    }
  }
  EXPECT_LT(worst, 1e-2);
  EXPECT_GE(bracketed / nodes, 0.9);
}

TEST(GameSolver, DeterministicAcrossThreadCounts) {
  const auto spec = build_lq_spec(LqParams{-0.5, 4.0, 0.5, 1.0, 0.5, 0.3, 1.0}, initial_normal(1.0, 0.5));
  const auto grid = TimeGrid::uniform(1.0, 0.1);
  GameOptions o1, o3;
  o3.threads = 3;
  const auto a = solve_game_fixed_point(spec, 500, grid, 12, o1);
  const auto b = solve_game_fixed_point(spec, 500, grid, 12, o3);
  ASSERT_EQ(a.residuals, b.residuals);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const auto ca = a.table.centers(0, k), cb = b.table.centers(0, k);
    const auto va = a.table.values(0, k), vb = b.table.values(0, k);
    ASSERT_EQ(std::vector<double>(ca.begin(), ca.end()), std::vector<double>(cb.begin(), cb.end()));
    ASSERT_EQ(std::vector<double>(va.begin(), va.end()), std::vector<double>(vb.begin(), vb.end()));
  }
}

TEST(GameSolver, VirusGameMaximizationHolds) {
  virus::VirusParams vp;
  vp.x0.kind = "bimodal";
  vp.x0.atoms = {0.5, 2.5};
  vp.x0.jitter = 0.05;
  const auto spec = build_virus_spec(vp);
  GameOptions go;
  go.tol = 1e-5;
  const auto g = solve_game_fixed_point(spec, 500, TimeGrid::uniform(1.0, 0.05), 13, go);
  EXPECT_TRUE(g.converged);
  EXPECT_GT(g.min_v_positive_theta, 0.0);
  const auto mc = sample_max_check(spec, g, 300, 14);
  EXPECT_EQ(mc.nodes, 300u);
  EXPECT_GE(mc.fraction(), 0.95);
}

TEST(FeedbackTable, PiecewiseLinearWithFlatTails) {
  FeedbackTable t(1, 2, {0.25});
  EXPECT_EQ(t.eval(0, 1, 10.0), 0.25);
  t.set(0, 0, {0.0, 1.0, 3.0}, {1.0, 2.0, 0.0});
  EXPECT_EQ(t.eval(0, 0, -1.0), 1.0);
  EXPECT_EQ(t.eval(0, 0, 0.5), 1.5);
  EXPECT_EQ(t.eval(0, 0, 2.0), 1.0);
  EXPECT_EQ(t.eval(0, 0, 5.0), 0.0);
}

}  // namespace
}  // namespace mfsmp
