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

// Path costs Psi = int f dt + h and the exponential-utility functionals
//
//   J^theta    = E exp(theta Psi),
//   Jbar^theta = (1/theta) log J^theta,
//
// evaluated with a shifted log-sum-exp so large theta*Psi stays finite.
// Also the Donsker-Varadhan variational identity on finite supports.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mfsmp/errors.hpp"
#include "mfsmp/measure_kit.hpp"
#include "mfsmp/model_kernel.hpp"
#include "mfsmp/particle_engine.hpp"

namespace mfsmp {

struct PathCost {
  double running = 0.0;
  double terminal = 0.0;
  double psi = 0.0;
};

inline void require_aux(const ParticleEnsemble& e, std::size_t i) {
  if (!e.has_aux() || i >= e.players) throw Error(ErrorCode::MissingAux, "ensemble carries no running cost for player");
}

inline PathCost path_psi(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e, std::size_t particle,
                         const EmpiricalMeasure& terminal_measure) {
  require_aux(e, i);
  const std::size_t N = e.grid.n_steps;
  PathCost c;
  c.running = e.z(i, N, particle);
  c.terminal = spec.players.at(i).h(e.x(N, particle), terminal_measure);
  c.psi = c.running + c.terminal;
  return c;
}

inline PathCost path_psi(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e, std::size_t particle) {
  return path_psi(spec, i, e, particle, e.measure(e.grid.n_steps));
}

/// Psi for every particle of the ensemble (paths stopped by the guard skipped).
inline std::vector<double> path_costs(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e) {
  require_aux(e, i);
  const auto mT = e.measure(e.grid.n_steps);
  std::vector<double> out;
  out.reserve(e.n);
  for (std::size_t k = 0; k < e.n; ++k) {
    if (!e.absorbed.empty() && e.absorbed[k]) continue;
    out.push_back(path_psi(spec, i, e, k, mT).psi);
  }
  return out;
}

struct RiskEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Largest exponent we accept for the returned J^theta.
inline constexpr double kMaxLogValue = 700.0;

namespace detail {

/// log((1/n) sum exp(a_i)) with the shift max a_i.
inline double log_mean_exp(std::span<const double> a) {
  if (a.empty()) throw Error(ErrorCode::EmptyInput, "empty cost sample");
  const double shift = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(shift)) throw Error(ErrorCode::NonFiniteValue, "cost sample is not finite");
  double acc = 0.0;
  for (double v : a) acc += std::exp(v - shift);
  return shift + std::log(acc / static_cast<double>(a.size()));
}

}  // namespace detail

/// Sample estimate of E exp(theta Psi) with its Monte Carlo standard error.
inline RiskEstimate risk_cost(std::span<const double> psi, double theta) {
  if (psi.empty()) throw Error(ErrorCode::EmptyInput, "empty cost sample");
  const auto n = static_cast<double>(psi.size());
  if (theta == 0.0) return {1.0, 0.0};
  std::vector<double> a(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) a[k] = theta * psi[k];
  const double lme = detail::log_mean_exp(a);
  if (lme > kMaxLogValue) throw Error(ErrorCode::Overflow, "theta*Psi exceeds the exponent range");
  const double value = std::exp(lme);
  double var = 0.0;
  if (psi.size() > 1) {
    // Second moment in the same shifted units, then rescaled.
    const double shift = *std::max_element(a.begin(), a.end());
    const double mean_s = std::exp(lme - shift);
    double acc = 0.0;
    for (double v : a) {
      const double d = std::exp(v - shift) - mean_s;
      acc += d * d;
    }
    var = acc / (n - 1.0) * std::exp(2.0 * shift);
  }
  return {value, std::sqrt(var / n)};
}

/// (1/theta) log E exp(theta Psi); the sample mean at theta = 0.
inline double log_risk_cost(std::span<const double> psi, double theta) {
  if (psi.empty()) throw Error(ErrorCode::EmptyInput, "empty cost sample");
  if (theta == 0.0) {
    double acc = 0.0;
    for (double v : psi) acc += v;
    return acc / static_cast<double>(psi.size());
  }
  // Shift by c = max or min of Psi so that theta*(Psi - c) <= 0; this makes
  // Jbar(Psi + const) = Jbar(Psi) + const hold to rounding.
  const auto [lo, hi] = std::minmax_element(psi.begin(), psi.end());
  const double c = theta > 0.0 ? *hi : *lo;
  if (!std::isfinite(c)) throw Error(ErrorCode::NonFiniteValue, "cost sample is not finite");
  double acc = 0.0;
  for (double v : psi) acc += std::exp(theta * (v - c));
  return c + std::log(acc / static_cast<double>(psi.size())) / theta;
}

inline RiskEstimate risk_cost(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e) {
  return risk_cost(path_costs(spec, i, e), spec.players.at(i).theta);
}

inline double log_risk_cost(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e) {
  return log_risk_cost(path_costs(spec, i, e), spec.players.at(i).theta);
}

struct SmallThetaResult {
  std::vector<double> thetas;
  std::vector<double> residuals;
  double slope = 0.0;
};

/// |Jbar^theta - (mean + theta/2 var)| on one fixed sample (population variance).
inline std::vector<double> small_theta_residuals(std::span<const double> psi, std::span<const double> thetas) {
  if (psi.empty()) throw Error(ErrorCode::EmptyInput, "empty cost sample");
  const auto n = static_cast<double>(psi.size());
  double mean = 0.0;
  for (double v : psi) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : psi) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out;
  out.reserve(thetas.size());
  for (double th : thetas) out.push_back(std::abs(log_risk_cost(psi, th) - (mean + 0.5 * th * var)));
  return out;
}

/// Fitted exponent of the expansion residual in theta.
inline SmallThetaResult small_theta_check(std::span<const double> psi, std::span<const double> thetas) {
  if (thetas.size() < 4) throw Error(ErrorCode::InvalidParams, "need at least four theta values");
  for (double th : thetas) {
    if (!(th > 0.0)) throw Error(ErrorCode::InvalidParams, "theta values must be positive");
  }
  const auto [lo, hi] = std::minmax_element(psi.begin(), psi.end());
  if (psi.empty() || *lo == *hi) throw Error(ErrorCode::DegenerateSample, "cost sample has zero variance");
  SmallThetaResult r;
  r.thetas.assign(thetas.begin(), thetas.end());
  r.residuals = small_theta_residuals(psi, thetas);
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    if (r.residuals[k] <= 0.0) throw Error(ErrorCode::DegenerateSample, "residual vanished; exponent undefined");
    lx.push_back(std::log(thetas[k]));
    ly.push_back(std::log(r.residuals[k]));
  }
  r.slope = fit_line(lx, ly).first;
  return r;
}

inline SmallThetaResult small_theta_check(const ModelSpec& spec, std::size_t i, const ParticleEnsemble& e,
                                          std::span<const double> thetas) {
  return small_theta_check(path_costs(spec, i, e), thetas);
}

struct DonskerVaradhan {
  double lhs = 0.0;
  double sup_value = 0.0;
  DiscreteDistribution gibbs;
};

/// E_mu phi - (1/theta) H(mu | nu). For theta > 0 its supremum over mu is
/// (1/theta) log E_nu exp(theta phi); for theta < 0 that value is the infimum.
inline double dv_objective(std::span<const double> phi, const DiscreteDistribution& mu, const DiscreteDistribution& nu,
                           double theta) {
  if (theta == 0.0) throw Error(ErrorCode::InvalidParams, "theta must be nonzero");
  double e = 0.0;
  const auto p = mu.probs();
  for (std::size_t k = 0; k < phi.size(); ++k) e += p[k] * phi[k];
  return e - relative_entropy(mu, nu) / theta;
}

inline DonskerVaradhan donsker_varadhan(std::span<const double> phi, const DiscreteDistribution& nu, double theta) {
  if (theta == 0.0 || !std::isfinite(theta)) throw Error(ErrorCode::InvalidParams, "theta must be finite and nonzero");
  if (phi.size() != nu.size()) throw Error(ErrorCode::MismatchedSupport, "phi and nu differ in length");
  const auto q = nu.probs();
  for (double v : q) {
    if (v <= 0.0) throw Error(ErrorCode::ZeroMassPoint, "reference distribution has a zero-mass point");
  }
  std::vector<double> a(phi.size());
  for (std::size_t k = 0; k < phi.size(); ++k) a[k] = std::log(q[k]) + theta * phi[k];
  const double shift = *std::max_element(a.begin(), a.end());
  double total = 0.0;
  for (double v : a) total += std::exp(v - shift);
  const double log_z = shift + std::log(total);

  std::vector<double> g(phi.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) sum += (g[k] = std::exp(a[k] - log_z));
  for (double& v : g) v /= sum;  // absorb rounding so the simplex check holds
  auto labels = std::vector<std::string>(nu.support().begin(), nu.support().end());
  DonskerVaradhan out{log_z / theta, 0.0, DiscreteDistribution::make(std::move(labels), std::move(g))};
  out.sup_value = dv_objective(phi, out.gibbs, nu, theta);
  return out;
}

}  // namespace mfsmp
