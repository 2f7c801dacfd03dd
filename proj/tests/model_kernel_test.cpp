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

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mfsmp/diagnostics.hpp"
#include "mfsmp/model_kernel.hpp"
#include "mfsmp/scenario_virus.hpp"

namespace mfsmp {
namespace {

EmpiricalMeasure M(std::vector<double> v) { return EmpiricalMeasure::from_samples(std::move(v)); }

ModelSpec one_player(std::shared_ptr<const DriftKernel> kernel, double alpha, double sigma = 0.0,
                     ControlBox box = {-10.0, 10.0}) {
  ModelSpec spec;
  spec.alpha = alpha;
  spec.kernel = std::move(kernel);
  spec.diffusion = [sigma](double, double) { return sigma; };
  PlayerSpec p;
  p.name = "p";
  p.box = box;
  spec.players.push_back(std::move(p));
  spec.initial_law = initial_point(0.0);
  return spec;
}

std::shared_ptr<const DriftKernel> scaled_y_kernel(double c) {
  return std::make_shared<MultiplicativeKernel>([c](double, double, Controls) { return c; },
                                                [](double, double, Controls) { return 0.0; });
}

TEST(BarredDrift, PointMassOfMultiplicativeKernel) {
  const std::vector<double> u{0.0};
  for (double c : {-2.5, 0.0, 1.75}) {
    const auto spec = one_player(scaled_y_kernel(c), 1.7);
    EXPECT_NEAR(barred_drift(spec, 0.0, 0.4, M({1.0}), u), std::abs(c), 1e-15);
  }
}

TEST(BarredDrift, VirusKernelAtReferencePoint) {
  const auto spec = virus::build_virus_spec(virus::VirusParams{});
  const std::vector<double> u{0.0, 0.3};
  EXPECT_NEAR(barred_drift(spec, 0.0, 0.2, M({1.0}), u), 1.5, 1e-14);
  EXPECT_NEAR(barred_drift_x(spec, 0.0, 0.2, M({1.0}), u), 8.0, 1e-14);
  EXPECT_NEAR(barred_drift(spec, 0.0, 0.3, M({1.0}), std::vector<double>{0.0, 0.0}), 2.55, 1e-14);
}

TEST(BarredDrift, ZeroKernelGivesZero) {
  const auto zero = std::make_shared<FunctionKernel>([](double, double, double, Controls) { return 0.0; });
  for (double alpha : {1.0, 1.2, 2.0}) {
    const auto spec = one_player(zero, alpha);
    EXPECT_EQ(barred_drift(spec, 0.0, 1.0, M({-1.0, 2.0, 5.0}), std::vector<double>{0.0}), 0.0);
    EXPECT_EQ(barred_drift_x(spec, 0.0, 1.0, M({-1.0, 2.0, 5.0}), std::vector<double>{0.0}), 0.0);
  }
}

TEST(BarredDrift, RejectsControlOutsideBox) {
  const auto spec = one_player(scaled_y_kernel(1.0), 1.0, 0.0, {0.0, 1.0});
  try {
    barred_drift(spec, 0.0, 0.0, M({1.0}), std::vector<double>{1.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ControlOutOfBox);
  }
}

TEST(BarredDrift, AlphaOneIsMeanAbsoluteKernel) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int r = 0; r < 100; ++r) {
    const double mu = 0.5 + std::abs(u(gen)), c = u(gen) / 3.0, x = u(gen);
    const auto spec = one_player(std::make_shared<CooperativeKernel>(mu, 0), 1.0);
    std::vector<double> ys(1 + r % 13);
    for (double& y : ys) y = u(gen);
    double direct = 0.0;
    for (double y : ys) direct += std::abs(c - mu * std::sin(x - y));
    direct /= static_cast<double>(ys.size());
    EXPECT_NEAR(barred_drift(spec, 0.0, x, M(ys), std::vector<double>{c}), direct, 1e-15 * (1.0 + direct));
  }
}

TEST(BarredDrift, HomogeneousInKernel) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0), lam(0.1, 5.0), al(1.0, 3.0);
  for (int r = 0; r < 100; ++r) {
    const double l = lam(gen), alpha = al(gen), x = u(gen);
    auto b = [](double, double x, double y, Controls) { return std::cos(x) * y + 0.3 * x * x - y * y; };
    const auto base = one_player(std::make_shared<FunctionKernel>(b), alpha);
    const auto scaled = one_player(
        std::make_shared<FunctionKernel>([b, l](double t, double x, double y, Controls v) { return l * b(t, x, y, v); }),
        alpha);
    std::vector<double> ys(1 + r % 9);
    for (double& y : ys) y = u(gen);
    const auto m = M(ys);
    const std::vector<double> u0{0.0};
    const double lhs = barred_drift(scaled, 0.0, x, m, u0);
    const double rhs = l * barred_drift(base, 0.0, x, m, u0);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + rhs));
  }
}

TEST(BarredDriftX, IndependentOfStateGivesZero) {
  const auto k = std::make_shared<FunctionKernel>([](double, double, double y, Controls) { return 2.0 + y; });
  const auto spec = one_player(k, 1.5);
  EXPECT_EQ(barred_drift_x(spec, 0.0, 0.7, M({1.0, 2.0}), std::vector<double>{0.0}), 0.0);
}

TEST(BarredDriftX, AlphaOneWithPositiveKernelIsMeanDerivative) {
  auto b = [](double, double x, double y, Controls) { return 5.0 + std::sin(x) * y; };
  auto bx = [](double, double x, double y, Controls) { return std::cos(x) * y; };
  const auto spec = one_player(std::make_shared<FunctionKernel>(b, true, bx), 1.0);
  const auto m = M({-1.0, 0.5, 2.0});
  const double x = 0.3;
  const double expected = std::cos(x) * (-1.0 + 0.5 + 2.0) / 3.0;
  EXPECT_NEAR(barred_drift_x(spec, 0.0, x, m, std::vector<double>{0.0}), expected, 1e-15);
}

TEST(BarredDriftX, SubgradientZeroWhereDriftVanishes) {
  const auto spec = one_player(scaled_y_kernel(1.0), 2.0);
  EXPECT_EQ(barred_drift_x(spec, 0.0, 0.5, M({0.0, 0.0}), std::vector<double>{0.0}), 0.0);
}

TEST(BarredDriftX, MatchesFiniteDifferences) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0), al(1.0, 3.0);
  int checked = 0;
  for (int r = 0; r < 300; ++r) {
    const double alpha = al(gen), mu = 0.5 + std::abs(u(gen)), c = u(gen) / 2.0, x = u(gen);
    const auto spec = one_player(std::make_shared<CooperativeKernel>(mu, 0), alpha);
    std::vector<double> ys(2 + r % 10);
    for (double& y : ys) y = u(gen);
    const auto m = M(ys);
    const std::vector<double> uc{c};
    if (barred_drift(spec, 0.0, x, m, uc) <= 1e-6) continue;
    const double h = 1e-5;
    const double fd = (barred_drift(spec, 0.0, x + h, m, uc) - barred_drift(spec, 0.0, x - h, m, uc)) / (2.0 * h);
    const double an = barred_drift_x(spec, 0.0, x, m, uc);
    EXPECT_LE(std::abs(an - fd), 1e-5 * std::max(std::abs(an), 1e-3)) << "alpha=" << alpha << " x=" << x;
    ++checked;
  }
  EXPECT_GT(checked, 250);
}

TEST(Kernels, SpecializedBatchesMatchPairLoop) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double mu = 1.3;
  const auto coop = std::make_shared<CooperativeKernel>(mu, 0);
  const FunctionKernel generic([mu](double, double x, double y, Controls v) { return v[0] - mu * std::sin(x - y); },
                               true, {}, [mu](double, double x, double y, Controls) { return mu * std::cos(x - y); });
  std::vector<double> xs(40), controls(40), ys(25), out(40), ref(40);
  for (double& v : xs) v = u(gen);
  for (double& v : controls) v = u(gen) / 2;
  for (double& v : ys) v = u(gen);
  const auto m = M(ys);
  for (double alpha : {1.0, 1.2, 2.0, 2.7}) {
    coop->barred_batch(0.0, xs, controls, 1, m, alpha, out);
    generic.DriftKernel::barred_batch(0.0, xs, controls, 1, m, alpha, ref);
    for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12 * (1.0 + ref[i]));
  }

  // Multiplicative kernel's O(n) adjoint batch against the generic pair loop.
  auto g = [](double, double x, Controls v) { return 1.5 + 0.5 * x * x + v[0]; };
  auto gx = [](double, double x, Controls) { return x; };
  const MultiplicativeKernel mult(g, gx);
  const FunctionKernel pair([g](double t, double x, double y, Controls v) { return y * g(t, x, v); }, true, {},
                            [g](double t, double x, double, Controls v) { return g(t, x, v); });
  std::vector<double> pos(30), w(30), ctl(30), a(30), b(30);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    pos[i] = 0.2 + std::abs(u(gen));
    w[i] = u(gen);
    ctl[i] = std::abs(u(gen)) / 4;
  }
  const auto mp = M(pos);
  for (double alpha : {1.0, 1.2, 2.0}) {
    mult.mean_field_adjoint_batch(0.0, pos, ctl, 1, w, mp, alpha, pos, a);
    pair.DriftKernel::mean_field_adjoint_batch(0.0, pos, ctl, 1, w, mp, alpha, pos, b);
    for (std::size_t i = 0; i < pos.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10 * (1.0 + std::abs(b[i])));
  }
}

TEST(Gateaux, CatalogExamples) {
  ModelSpec spec = one_player(scaled_y_kernel(1.0), 2.0);
  const auto m = M({1.0, 3.0});
  const auto mean = gateaux_closed_form("mean", spec, 0.0, 0.0, m);
  EXPECT_EQ(mean.density(2.5), 2.5);
  EXPECT_EQ(mean.density_x(7.0), 1.0);
  const auto second = gateaux_closed_form("second_moment", spec, 0.0, 0.0, m);
  EXPECT_EQ(second.density(3.0), 4.5);
  EXPECT_EQ(second.density_x(3.0), 3.0);
  // alpha_moment is linear in m: its density is |xi|^alpha itself.
  const auto am = gateaux_closed_form("alpha_moment", spec, 0.0, 0.0, m);
  EXPECT_EQ(am.density(3.0), 9.0);
  const auto sq = gateaux_closed_form("square_mean", spec, 0.0, 0.0, m);
  EXPECT_EQ(sq.density_x(-4.0), 2.0);
  EXPECT_EQ(sq.density(3.0), 6.0);
}

TEST(Gateaux, AlphaNormAndNormedDriftClosedForms) {
  ModelSpec spec = one_player(std::make_shared<CooperativeKernel>(1.0, 0), 1.5);
  const auto m = M({0.5, 1.0, 2.0});
  const double norm = alpha_norm(m, 1.5);
  const auto an = gateaux_closed_form(Functional::AlphaNorm, spec, 0.0, 0.0, m);
  EXPECT_NEAR(an.density(-2.0), std::pow(2.0, 1.5) / (1.5 * std::sqrt(norm)), 1e-14);
  EXPECT_NEAR(an.density_x(-2.0), -std::sqrt(2.0) / std::sqrt(norm), 1e-14);

  const std::vector<double> u{0.2};
  const double x = 0.4;
  const double bbar = barred_drift(spec, 0.0, x, m, u);
  const auto nd = gateaux_closed_form(Functional::NormedDrift, spec, 0.0, x, m, u);
  const double b = 0.2 - std::sin(x - 1.7);
  EXPECT_NEAR(nd.density(1.7), std::pow(std::abs(b), 1.5) / (1.5 * std::sqrt(bbar)), 1e-14);
}

TEST(Gateaux, VanishingNormSelectsZeroSubgradient) {
  ModelSpec spec = one_player(scaled_y_kernel(1.0), 1.5);
  const auto f = gateaux_closed_form(Functional::AlphaNorm, spec, 0.0, 0.0, M({0.0, 0.0}));
  EXPECT_TRUE(f.subgradient);
  EXPECT_EQ(f.density(3.0), 0.0);
  EXPECT_EQ(f.density_x(3.0), 0.0);
}

TEST(Gateaux, UnknownFunctionalRejected) {
  ModelSpec spec = one_player(scaled_y_kernel(1.0), 1.0);
  try {
    gateaux_closed_form("median", spec, 0.0, 0.0, M({1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownFunctional);
  }
}

TEST(GateauxOracle, LinearAndMassFunctionals) {
  const auto m = M({1.0, 3.0});
  const auto d = GateauxDirection::make(M({3.0}), M({1.0}));
  const MeasureFunctional mass = [](const WeightedMeasure& w) { return w.integrate([](double) { return 1.0; }); };
  ModelSpec spec = one_player(scaled_y_kernel(1.0), 1.0);
  const auto mean = catalog_functional(Functional::Mean, spec, 0.0, 0.0);
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    EXPECT_NEAR(gateaux_fd_oracle(mass, m, d, eps), 0.0, 1e-11);
    EXPECT_NEAR(gateaux_fd_oracle(mean, m, d, eps), 2.0, 1e-10);
  }
}

TEST(GateauxOracle, SquareMeanConvergesToFour) {
  const auto m = M({1.0, 3.0});
  const auto d = GateauxDirection::make(M({3.0}), M({1.0}));
  ModelSpec spec = one_player(scaled_y_kernel(1.0), 1.0);
  const auto F = catalog_functional(Functional::SquareMean, spec, 0.0, 0.0);
  double prev = 1e300;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const double one_sided = gateaux_fd_oracle(F, m, d, eps);
    EXPECT_NEAR(one_sided, 4.0 + 2.0 * eps, 1e-9);
    EXPECT_LT(std::abs(one_sided - 4.0), prev);
    prev = std::abs(one_sided - 4.0);
    EXPECT_NEAR(gateaux_fd_richardson(F, m, d, eps), 4.0, 1e-9);
  }
  EXPECT_NEAR(gateaux_closed_form(Functional::SquareMean, spec, 0.0, 0.0, m).along(d), 4.0, 1e-15);
}

TEST(GateauxOracle, RejectsInvalidDirections) {
  EXPECT_THROW(GateauxDirection::make(M({1.0, 2.0}), M({1.0})), Error);
  const auto m = M({1.0, 3.0});
  const MeasureFunctional F = [](const WeightedMeasure&) { return 0.0; };
  // Removing mass at 2 where m has none would leave a negative atom.
  try {
    gateaux_fd_oracle(F, m, GateauxDirection::make(M({3.0}), M({2.0})), 1e-3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidDirection);
  }
  EXPECT_THROW(gateaux_fd_oracle(F, m, GateauxDirection::make(M({3.0}), M({1.0})), 0.0), Error);
}

TEST(GateauxOracle, RandomizedCatalogWithinTolerance) {
  const auto suite = gateaux_suite(101, 50, 1e-4);
  EXPECT_EQ(suite.rows.size(), 300u);
  EXPECT_TRUE(suite.pass(1e-4)) << suite.max_rel_error;
}

TEST(Hamiltonian, ReducesToDriftAndCost) {
  auto spec = one_player(scaled_y_kernel(2.0), 1.0, 0.0);
  spec.players[0].running_cost = [](double, double x, const EmpiricalMeasure&, Controls u) { return x + u[0] * u[0]; };
  const auto m = M({1.5});
  const std::vector<double> u{0.5};
  EXPECT_DOUBLE_EQ(hamiltonian(spec, 0, 0.0, 1.0, m, u, 0.0, 0.0), -1.25);
  spec.players[0].running_cost = nullptr;
  EXPECT_DOUBLE_EQ(hamiltonian(spec, 0, 0.0, 1.0, m, u, 0.7, 5.0), 3.0 * 0.7);
}

TEST(Hamiltonian, VirusAttackerExample) {
  const auto spec = virus::build_virus_spec(virus::VirusParams{});
  const auto m = M({1.0});  // unit alpha-norm
  const double x = 0.3;
  const std::vector<double> u{0.4, 0.0};
  EXPECT_NEAR(hamiltonian(spec, 0, 0.0, x, m, u, 1.0, 0.0), (2.55 + 0.4) - 0.08, 1e-14);
}

TEST(RsHamiltonian, ReducesToRiskNeutral) {
  auto spec = virus::build_virus_spec(virus::VirusParams{});
  const auto m = M({0.5, 1.5});
  const std::vector<double> u{0.2, 0.7};
  const double h0 = hamiltonian(spec, 1, 0.1, 1.2, m, u, 0.8, -0.4);
  EXPECT_EQ(rs_hamiltonian(spec, 1, 0.1, 1.2, m, u, 0.8, -0.4, 0.0), h0);
  spec.players[1].theta = 0.0;
  EXPECT_EQ(rs_hamiltonian(spec, 1, 0.1, 1.2, m, u, 0.8, -0.4, 3.0), h0);
  spec.diffusion = nullptr;
  const double a = rs_hamiltonian(spec, 1, 0.1, 1.2, m, u, 0.8, -0.4, 3.0);
  spec.players[1].theta = 2.0;
  EXPECT_EQ(rs_hamiltonian(spec, 1, 0.1, 1.2, m, u, 0.8, -0.4, 3.0), a);
}

TEST(RsHamiltonian, AffineInAdjointVariables) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto spec = virus::build_virus_spec(virus::VirusParams{});
  spec.diffusion = [](double, double x) { return 0.1 + 0.05 * x * x; };
  for (int r = 0; r < 100; ++r) {
    const double x = std::abs(u(gen)), t = std::abs(u(gen)) / 2;
    const auto m = M({std::abs(u(gen)), std::abs(u(gen)), std::abs(u(gen))});
    const std::vector<double> ctl{std::abs(u(gen)) / 2, std::abs(u(gen)) / 2};
    const std::size_t i = r % 2;
    auto H = [&](double p, double q, double l) { return rs_hamiltonian(spec, i, t, x, m, ctl, p, q, l); };
    const double h0 = H(0, 0, 0);
    const double A = H(1, 0, 0) - h0, B = H(0, 1, 0) - h0, C = H(1, 0, 1) - H(1, 0, 0);
    const double p = u(gen), q = u(gen), l = u(gen);
    EXPECT_NEAR(H(p, q, l) - h0, A * p + B * q + C * l * p, 1e-12 * (1.0 + std::abs(h0)));
  }
}

}  // namespace
}  // namespace mfsmp
