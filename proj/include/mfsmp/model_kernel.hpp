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

// Game data and the L^alpha-norm drift
//
//   bbar(t, x, m, u) = ( int |b(t, x, y, u)|^alpha m(dy) )^(1/alpha),
//
// its x-subgradient, the Gateaux-derivative catalog of common measure
// functionals (with a finite-difference oracle), and the Hamiltonians
//
//   H       = bbar p + sigma q - f
//   H^theta = bbar p + sigma (q + theta l p) - f.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfsmp/errors.hpp"
#include "mfsmp/measure_kit.hpp"
#include "mfsmp/rng.hpp"

namespace mfsmp {

/// Control profile of one particle: one entry per player.
using Controls = std::span<const double>;

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

/// Central-difference step for black-box kernel derivatives.
inline double fd_step(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

// ---------------------------------------------------------------------------
// Drift kernels
// ---------------------------------------------------------------------------

/// Pair-interaction kernel b(t, x, y, u). The batch methods evaluate one
/// measure against many particles; subclasses override them when the kernel
/// structure allows something cheaper than the O(n^2) pair loop.
class DriftKernel {
 public:
  virtual ~DriftKernel() = default;

  virtual double value(double t, double x, double y, Controls u) const = 0;

  virtual double dx(double t, double x, double y, Controls u) const {
    const double h = fd_step(x);
    return (value(t, x + h, y, u) - value(t, x - h, y, u)) / (2.0 * h);
  }

  virtual double dy(double t, double x, double y, Controls u) const {
    const double h = fd_step(y);
    return (value(t, x, y + h, u) - value(t, x, y - h, u)) / (2.0 * h);
  }

  /// False when b does not depend on y; the drift then reduces to |b|.
  virtual bool depends_on_measure() const { return true; }

  /// bbar at one point.
  virtual double barred(double t, double x, const EmpiricalMeasure& m, Controls u, double alpha) const {
    if (!depends_on_measure()) return std::abs(value(t, x, x, u));
    double acc = 0.0;
    for (double y : m.samples()) acc += abs_pow(value(t, x, y, u), alpha);
    acc /= static_cast<double>(m.size());
    return alpha == 1.0 ? acc : std::pow(acc, 1.0 / alpha);
  }

  /// x-derivative of bbar; the subgradient selection 0 where bbar vanishes.
  virtual double barred_x(double t, double x, const EmpiricalMeasure& m, Controls u, double alpha) const {
    if (!depends_on_measure()) {
      const double b = value(t, x, x, u);
      return sign(b) * dx(t, x, x, u);
    }
    const double bbar = barred(t, x, m, u, alpha);
    if (bbar == 0.0) return 0.0;
    double acc = 0.0;
    for (double y : m.samples()) {
      const double b = value(t, x, y, u);
      if (b == 0.0) continue;
      acc += dx(t, x, y, u) * abs_pow(b, alpha - 1.0) * sign(b);
    }
    acc /= static_cast<double>(m.size());
    return alpha == 1.0 ? acc : acc / std::pow(bbar, alpha - 1.0);
  }

  /// d/dx of the Gateaux derivative bbar_m(source, m)(x):
  ///   |b(source, x)|^(alpha-1) sign(b) b_y(source, x) / bbar(source)^(alpha-1).
  double barred_m_x(double t, double source, double x, const EmpiricalMeasure& m, Controls u,
                    double alpha) const {
    if (!depends_on_measure()) return 0.0;
    const double bbar = barred(t, source, m, u, alpha);
    if (bbar == 0.0) return 0.0;
    const double b = value(t, source, x, u);
    if (b == 0.0) return 0.0;
    const double num = abs_pow(b, alpha - 1.0) * sign(b) * dy(t, source, x, u);
    return alpha == 1.0 ? num : num / std::pow(bbar, alpha - 1.0);
  }

  /// out[i] = bbar(t, xs[i], m, u_i), u_i = controls[i*players ...].
  virtual void barred_batch(double t, std::span<const double> xs, std::span<const double> controls,
                            std::size_t players, const EmpiricalMeasure& m, double alpha,
                            std::span<double> out) const {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out[i] = barred(t, xs[i], m, controls.subspan(i * players, players), alpha);
    }
  }

  virtual void barred_x_batch(double t, std::span<const double> xs, std::span<const double> controls,
                              std::size_t players, const EmpiricalMeasure& m, double alpha,
                              std::span<double> out) const {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out[i] = barred_x(t, xs[i], m, controls.subspan(i * players, players), alpha);
    }
  }

  /// Mean-field adjoint term against the particle cloud itself:
  ///   out[j] = (1/n) sum_k weights[k] * d/dx bbar_m(xs[k], m)(x) at x = targets[j],
  /// where m is the empirical measure of xs.
  virtual void mean_field_adjoint_batch(double t, std::span<const double> xs,
                                        std::span<const double> controls, std::size_t players,
                                        std::span<const double> weights, const EmpiricalMeasure& m,
                                        double alpha, std::span<const double> targets,
                                        std::span<double> out) const {
    const std::size_t n = xs.size();
    std::vector<double> bbar(n);
    barred_batch(t, xs, controls, players, m, alpha, bbar);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (bbar[k] == 0.0 || weights[k] == 0.0) continue;
        const auto u = controls.subspan(k * players, players);
        const double b = value(t, xs[k], targets[j], u);
        if (b == 0.0) continue;
        double term = abs_pow(b, alpha - 1.0) * sign(b) * dy(t, xs[k], targets[j], u);
        if (alpha != 1.0) term /= std::pow(bbar[k], alpha - 1.0);
        acc += weights[k] * term;
      }
      out[j] = acc / static_cast<double>(n);
    }
  }
};

/// Black-box kernel from callables; derivatives fall back to finite differences.
class FunctionKernel final : public DriftKernel {
 public:
  using Fn = std::function<double(double, double, double, Controls)>;

  explicit FunctionKernel(Fn fn, bool depends_on_measure = true, Fn dx = {}, Fn dy = {})
      : fn_(std::move(fn)), dx_(std::move(dx)), dy_(std::move(dy)), depends_(depends_on_measure) {}

  double value(double t, double x, double y, Controls u) const override { return fn_(t, x, y, u); }
  double dx(double t, double x, double y, Controls u) const override {
    return dx_ ? dx_(t, x, y, u) : DriftKernel::dx(t, x, y, u);
  }
  double dy(double t, double x, double y, Controls u) const override {
    return dy_ ? dy_(t, x, y, u) : DriftKernel::dy(t, x, y, u);
  }
  bool depends_on_measure() const override { return depends_; }

 private:
  Fn fn_, dx_, dy_;
  bool depends_;
};

/// b(t, x, y, u) = y * g(t, x, u). Then bbar = |g| * ||m||_alpha and every
/// batch evaluation is O(n).
class MultiplicativeKernel final : public DriftKernel {
 public:
  using Fn = std::function<double(double, double, Controls)>;

  MultiplicativeKernel(Fn g, Fn g_x) : g_(std::move(g)), g_x_(std::move(g_x)) {}

  double g(double t, double x, Controls u) const { return g_(t, x, u); }
  double g_x(double t, double x, Controls u) const { return g_x_(t, x, u); }

  double value(double t, double x, double y, Controls u) const override { return y * g_(t, x, u); }
  double dx(double t, double x, double y, Controls u) const override { return y * g_x_(t, x, u); }
  double dy(double t, double x, double, Controls u) const override { return g_(t, x, u); }

  double barred(double t, double x, const EmpiricalMeasure& m, Controls u, double alpha) const override {
    return std::abs(g_(t, x, u)) * alpha_norm(m, alpha);
  }
  double barred_x(double t, double x, const EmpiricalMeasure& m, Controls u, double alpha) const override {
    return sign(g_(t, x, u)) * g_x_(t, x, u) * alpha_norm(m, alpha);
  }

  void barred_batch(double t, std::span<const double> xs, std::span<const double> controls,
                    std::size_t players, const EmpiricalMeasure& m, double alpha,
                    std::span<double> out) const override {
    const double norm = alpha_norm(m, alpha);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out[i] = std::abs(g_(t, xs[i], controls.subspan(i * players, players))) * norm;
    }
  }

  void barred_x_batch(double t, std::span<const double> xs, std::span<const double> controls,
                      std::size_t players, const EmpiricalMeasure& m, double alpha,
                      std::span<double> out) const override {
    const double norm = alpha_norm(m, alpha);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto u = controls.subspan(i * players, players);
      out[i] = sign(g_(t, xs[i], u)) * g_x_(t, xs[i], u) * norm;
    }
  }

  // d/dx bbar_m(source)(x) = |g(source)| |x|^(alpha-1) sign(x) / ||m||^(alpha-1).
  void mean_field_adjoint_batch(double t, std::span<const double> xs, std::span<const double> controls,
                                std::size_t players, std::span<const double> weights,
                                const EmpiricalMeasure& m, double alpha, std::span<const double> targets,
                                std::span<double> out) const override {
    const double norm = alpha_norm(m, alpha);
    if (norm == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    double source = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      source += weights[k] * std::abs(g_(t, xs[k], controls.subspan(k * players, players)));
    }
    source /= static_cast<double>(xs.size());
    const double scale = alpha == 1.0 ? 1.0 : std::pow(norm, alpha - 1.0);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      out[j] = source * abs_pow(targets[j], alpha - 1.0) * sign(targets[j]) / scale;
    }
  }

 private:
  Fn g_, g_x_;
};

/// Cooperative interaction b(t, x, y, u) = u_c - mu sin(x - y), with u_c the
/// control of one player (or zero when control_player < 0).
class CooperativeKernel final : public DriftKernel {
 public:
  explicit CooperativeKernel(double mu, int control_player = -1) : mu_(mu), player_(control_player) {}

  double value(double, double x, double y, Controls u) const override {
    return control(u) - mu_ * std::sin(x - y);
  }
  double dx(double, double x, double y, Controls) const override { return -mu_ * std::cos(x - y); }
  double dy(double, double x, double y, Controls) const override { return mu_ * std::cos(x - y); }

  void barred_batch(double, std::span<const double> xs, std::span<const double> controls,
                    std::size_t players, const EmpiricalMeasure& m, double alpha,
                    std::span<double> out) const override {
    // sin(x - y) = sin x cos y - cos x sin y, so the pair loop needs no trig.
    const auto ys = m.samples();
    const std::size_t n = ys.size();
    std::vector<double> sy(n), cy(n);
    for (std::size_t j = 0; j < n; ++j) {
      sy[j] = std::sin(ys[j]);
      cy[j] = std::cos(ys[j]);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double sx = std::sin(xs[i]);
      const double cx = std::cos(xs[i]);
      const double c = player_ >= 0 ? controls[i * players + static_cast<std::size_t>(player_)] : 0.0;
      const double a = mu_ * sx;
      const double b = mu_ * cx;
      double acc = 0.0;
      if (alpha == 1.0) {
        for (std::size_t j = 0; j < n; ++j) acc += std::abs(c - (a * cy[j] - b * sy[j]));
        out[i] = acc * inv_n;
      } else if (alpha == 2.0) {
        for (std::size_t j = 0; j < n; ++j) {
          const double v = c - (a * cy[j] - b * sy[j]);
          acc += v * v;
        }
        out[i] = std::sqrt(acc * inv_n);
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          const double v = std::abs(c - (a * cy[j] - b * sy[j]));
          if (v > 0.0) acc += std::exp(alpha * std::log(v));
        }
        out[i] = std::pow(acc * inv_n, 1.0 / alpha);
      }
    }
  }

 private:
  double control(Controls u) const { return player_ >= 0 ? u[static_cast<std::size_t>(player_)] : 0.0; }

  double mu_;
  int player_;
};

/// b(t, x, u) = c + a x + sum_j k_j u_j; no interaction with the measure.
class AffineKernel final : public DriftKernel {
 public:
  AffineKernel(double offset, double slope, std::vector<double> control_coefs)
      : c_(offset), a_(slope), k_(std::move(control_coefs)) {}

  double value(double, double x, double, Controls u) const override {
    double v = c_ + a_ * x;
    for (std::size_t j = 0; j < k_.size() && j < u.size(); ++j) v += k_[j] * u[j];
    return v;
  }
  double dx(double, double, double, Controls) const override { return a_; }
  double dy(double, double, double, Controls) const override { return 0.0; }
  bool depends_on_measure() const override { return false; }

 private:
  double c_, a_;
  std::vector<double> k_;
};

/// Plain signed drift b(t, x, u) with no measure and no norm: the particles
/// solve dx = b dt + sigma dB. Used for the reference dynamics that the
/// mean-field model is compared against.
class LocalDrift final : public DriftKernel {
 public:
  using Fn = std::function<double(double, double, Controls)>;

  LocalDrift(Fn b, Fn b_x) : b_(std::move(b)), b_x_(std::move(b_x)) {}

  double value(double t, double x, double, Controls u) const override { return b_(t, x, u); }
  double dx(double t, double x, double, Controls u) const override { return b_x_(t, x, u); }
  double dy(double, double, double, Controls) const override { return 0.0; }
  bool depends_on_measure() const override { return false; }

  double barred(double t, double x, const EmpiricalMeasure&, Controls u, double) const override { return b_(t, x, u); }
  double barred_x(double t, double x, const EmpiricalMeasure&, Controls u, double) const override {
    return b_x_(t, x, u);
  }

 private:
  Fn b_, b_x_;
};

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

struct ControlBox {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double u) const { return u >= lo && u <= hi; }
  double clamp(double u) const { return std::min(hi, std::max(lo, u)); }
};

/// Draws the initial state of one particle; a pure function of (seed, particle).
using InitialLaw = std::function<double(std::uint64_t seed, std::size_t particle)>;

inline InitialLaw initial_point(double x0) {
  return [x0](std::uint64_t, std::size_t) { return x0; };
}

inline InitialLaw initial_normal(double mean, double sd) {
  return [mean, sd](std::uint64_t seed, std::size_t i) {
    return mean + sd * rng::normal(seed, rng::Domain::InitialState, i, 0);
  };
}

/// Equal-weight mixture of atoms, each convolved with N(0, jitter^2).
inline InitialLaw initial_mixture(std::vector<double> atoms, double jitter) {
  return [atoms = std::move(atoms), jitter](std::uint64_t seed, std::size_t i) {
    const double u = rng::uniform(seed, rng::Domain::InitialState, i, 7);
    const auto k = std::min(atoms.size() - 1, static_cast<std::size_t>(u * static_cast<double>(atoms.size())));
    return atoms[k] + jitter * rng::normal(seed, rng::Domain::InitialState, i, 0);
  };
}

inline InitialLaw initial_resample(EmpiricalMeasure m) {
  return [m = std::move(m)](std::uint64_t seed, std::size_t i) {
    const double u = rng::uniform(seed, rng::Domain::InitialState, i, 7);
    return m.quantile(u);
  };
}

/// Inputs to a batched Hamiltonian maximization for one player.
struct ArgmaxInput {
  double t = 0.0;
  std::size_t player = 0;
  std::size_t n_players = 1;
  std::span<const double> states;
  std::span<const double> controls;  // particle-major, n_players per particle
  const EmpiricalMeasure* measure = nullptr;
  std::span<const double> p_star;  // starred adjoint of `player`
  std::span<const double> q;
  std::span<const double> ell;
  double theta = 0.0;
};

using BestResponseFn = std::function<void(const ArgmaxInput&, std::span<double> out)>;

struct PlayerSpec {
  std::string name;
  double theta = 0.0;
  ControlBox box;
  std::function<double(double t, double x, const EmpiricalMeasure& m, Controls u)> running_cost;
  std::function<double(double x, const EmpiricalMeasure& m)> terminal_cost;

  // Optional analytic derivatives; finite differences otherwise.
  std::function<double(double t, double x, const EmpiricalMeasure& m, Controls u)> running_cost_x;
  std::function<double(double x, const EmpiricalMeasure& m)> terminal_cost_x;

  /// out[j] = (1/n) sum_k w[k] d/dx h_m(xs[k], m)(xs[j]); absent means h has no
  /// measure dependence.
  std::function<void(std::span<const double> xs, std::span<const double> w, const EmpiricalMeasure& m,
                     std::span<double> out)>
      terminal_mean_field;
  /// Same for the running cost f.
  std::function<void(double t, std::span<const double> xs, std::span<const double> controls,
                     std::size_t players, std::span<const double> w, const EmpiricalMeasure& m,
                     std::span<double> out)>
      running_mean_field;

  /// Closed-form Hamiltonian argmax; a grid search is used when absent.
  BestResponseFn best_response;

  double f(double t, double x, const EmpiricalMeasure& m, Controls u) const {
    return running_cost ? running_cost(t, x, m, u) : 0.0;
  }
  double h(double x, const EmpiricalMeasure& m) const { return terminal_cost ? terminal_cost(x, m) : 0.0; }

  double f_x(double t, double x, const EmpiricalMeasure& m, Controls u) const {
    if (running_cost_x) return running_cost_x(t, x, m, u);
    if (!running_cost) return 0.0;
    const double e = fd_step(x);
    return (running_cost(t, x + e, m, u) - running_cost(t, x - e, m, u)) / (2.0 * e);
  }
  double h_x(double x, const EmpiricalMeasure& m) const {
    if (terminal_cost_x) return terminal_cost_x(x, m);
    if (!terminal_cost) return 0.0;
    const double e = fd_step(x);
    return (terminal_cost(x + e, m) - terminal_cost(x - e, m)) / (2.0 * e);
  }
};

struct ModelSpec {
  double alpha = 1.0;
  double horizon = 1.0;
  std::shared_ptr<const DriftKernel> kernel;
  /// sigma(t, x); never receives a control.
  std::function<double(double t, double x)> diffusion;
  std::function<double(double t, double x)> diffusion_x;
  std::vector<PlayerSpec> players;
  InitialLaw initial_law;

  std::size_t n_players() const { return players.size(); }

  double sigma(double t, double x) const { return diffusion ? diffusion(t, x) : 0.0; }
  double sigma_x(double t, double x) const {
    if (diffusion_x) return diffusion_x(t, x);
    if (!diffusion) return 0.0;
    const double e = fd_step(x);
    return (diffusion(t, x + e) - diffusion(t, x - e)) / (2.0 * e);
  }

  /// True when neither the drift nor any cost depends on the measure.
  bool mean_field_free() const {
    if (kernel && kernel->depends_on_measure()) return false;
    for (const auto& p : players) {
      if (p.terminal_mean_field || p.running_mean_field) return false;
    }
    return true;
  }

  void validate() const {
    require_alpha(alpha);
    if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidModel, "horizon must be positive");
    if (!kernel) throw Error(ErrorCode::InvalidModel, "drift kernel missing");
    if (players.empty()) throw Error(ErrorCode::InvalidModel, "at least one player required");
    for (const auto& p : players) {
      if (!(p.box.lo <= p.box.hi)) throw Error(ErrorCode::InvalidModel, "control box must be nonempty");
    }
    if (!initial_law) throw Error(ErrorCode::InvalidModel, "initial law missing");
  }

  void require_in_box(Controls u) const {
    for (std::size_t j = 0; j < players.size(); ++j) {
      if (!players[j].box.contains(u[j])) {
        throw Error(ErrorCode::ControlOutOfBox, "control of player " + std::to_string(j) + " outside its box");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Drift, Hamiltonians
// ---------------------------------------------------------------------------

inline double barred_drift(const ModelSpec& spec, double t, double x, const EmpiricalMeasure& m, Controls u) {
  spec.require_in_box(u);
  return spec.kernel->barred(t, x, m, u, spec.alpha);
}

inline double barred_drift_x(const ModelSpec& spec, double t, double x, const EmpiricalMeasure& m, Controls u) {
  spec.require_in_box(u);
  return spec.kernel->barred_x(t, x, m, u, spec.alpha);
}

/// Risk-neutral Hamiltonian bbar p + sigma q - f_i.
inline double hamiltonian(const ModelSpec& spec, std::size_t i, double t, double x, const EmpiricalMeasure& m,
                          Controls u, double p, double q) {
  return barred_drift(spec, t, x, m, u) * p + spec.sigma(t, x) * q - spec.players.at(i).f(t, x, m, u);
}

/// Risk-sensitive Hamiltonian bbar p + sigma (q + theta_i l p) - f_i.
inline double rs_hamiltonian(const ModelSpec& spec, std::size_t i, double t, double x, const EmpiricalMeasure& m,
                             Controls u, double p, double q, double ell) {
  const double theta = spec.players.at(i).theta;
  double tilt = q;
  if (theta != 0.0) tilt += theta * ell * p;
  return barred_drift(spec, t, x, m, u) * p + spec.sigma(t, x) * tilt - spec.players[i].f(t, x, m, u);
}

// ---------------------------------------------------------------------------
// Gateaux derivatives in the measure
// ---------------------------------------------------------------------------

enum class Functional { Mean, SquareMean, SecondMoment, AlphaMoment, AlphaNorm, NormedDrift };

inline Functional parse_functional(std::string_view id) {
  static const std::map<std::string_view, Functional> table = {
      {"mean", Functional::Mean},
      {"square_mean", Functional::SquareMean},
      {"second_moment", Functional::SecondMoment},
      {"alpha_moment", Functional::AlphaMoment},
      {"alpha_norm", Functional::AlphaNorm},
      {"normed_drift", Functional::NormedDrift},
  };
  auto it = table.find(id);
  if (it == table.end()) throw Error(ErrorCode::UnknownFunctional, std::string(id));
  return it->second;
}

inline constexpr std::string_view functional_name(Functional f) {
  switch (f) {
    case Functional::Mean: return "mean";
    case Functional::SquareMean: return "square_mean";
    case Functional::SecondMoment: return "second_moment";
    case Functional::AlphaMoment: return "alpha_moment";
    case Functional::AlphaNorm: return "alpha_norm";
    case Functional::NormedDrift: return "normed_drift";
  }
  return "";
}

/// Signed zero-mass direction d = plus - minus.
struct GateauxDirection {
  EmpiricalMeasure plus;
  EmpiricalMeasure minus;

  static GateauxDirection make(EmpiricalMeasure plus, EmpiricalMeasure minus) {
    if (plus.size() != minus.size()) {
      throw Error(ErrorCode::InvalidDirection, "plus and minus parts need equal sample counts");
    }
    return GateauxDirection{std::move(plus), std::move(minus)};
  }
};

/// Derivative density xi -> g_m(xi) and its xi-derivative.
struct GateauxForm {
  std::function<double(double)> density;
  std::function<double(double)> density_x;
  /// Set when the denominator vanished and the subgradient selection 0 was used.
  bool subgradient = false;

  /// int g_m(xi) d(xi) along a direction.
  double along(const GateauxDirection& d) const {
    double acc = 0.0;
    for (double v : d.plus.samples()) acc += density(v);
    for (double v : d.minus.samples()) acc -= density(v);
    return acc / static_cast<double>(d.plus.size());
  }
};

/// Closed-form Gateaux derivatives of the catalog functionals at m. The
/// `normed_drift` entry is bbar(t, x, .) as a functional of the measure.
inline GateauxForm gateaux_closed_form(Functional id, const ModelSpec& spec, double t, double x,
                                       const EmpiricalMeasure& m, std::vector<double> u = {}) {
  const double alpha = spec.alpha;
  GateauxForm form;
  switch (id) {
    case Functional::Mean:
      form.density = [](double xi) { return xi; };
      form.density_x = [](double) { return 1.0; };
      break;
    case Functional::SquareMean: {
      const double mbar = m.mean();
      form.density = [mbar](double xi) { return xi * mbar; };
      form.density_x = [mbar](double) { return mbar; };
      break;
    }
    case Functional::SecondMoment:
      form.density = [](double xi) { return 0.5 * xi * xi; };
      form.density_x = [](double xi) { return xi; };
      break;
    case Functional::AlphaMoment:
      require_alpha(alpha);
      form.density = [alpha](double xi) { return abs_pow(xi, alpha); };
      form.density_x = [alpha](double xi) { return alpha * abs_pow(xi, alpha - 1.0) * sign(xi); };
      break;
    case Functional::AlphaNorm: {
      // Denominator is the alpha-norm raised to alpha - 1.
      const double norm = alpha_norm(m, alpha);
      const double denom = alpha == 1.0 ? 1.0 : std::pow(norm, alpha - 1.0);
      if (denom == 0.0) {
        form.subgradient = true;
        form.density = [](double) { return 0.0; };
        form.density_x = [](double) { return 0.0; };
        break;
      }
      form.density = [alpha, denom](double xi) { return abs_pow(xi, alpha) / (alpha * denom); };
      form.density_x = [alpha, denom](double xi) { return abs_pow(xi, alpha - 1.0) * sign(xi) / denom; };
      break;
    }
    case Functional::NormedDrift: {
      if (!spec.kernel) throw Error(ErrorCode::InvalidModel, "normed_drift needs a kernel");
      const auto kernel = spec.kernel;
      const double bbar = kernel->barred(t, x, m, u, alpha);
      const double denom = alpha == 1.0 ? 1.0 : std::pow(bbar, alpha - 1.0);
      if (denom == 0.0) {
        form.subgradient = true;
        form.density = [](double) { return 0.0; };
        form.density_x = [](double) { return 0.0; };
        break;
      }
      form.density = [kernel, t, x, u, alpha, denom](double xi) {
        return abs_pow(kernel->value(t, x, xi, u), alpha) / (alpha * denom);
      };
      form.density_x = [kernel, t, x, u, alpha, denom](double xi) {
        const double b = kernel->value(t, x, xi, u);
        return abs_pow(b, alpha - 1.0) * sign(b) * kernel->dy(t, x, xi, u) / denom;
      };
      break;
    }
  }
  return form;
}

inline GateauxForm gateaux_closed_form(std::string_view id, const ModelSpec& spec, double t, double x,
                                       const EmpiricalMeasure& m, std::vector<double> u = {}) {
  return gateaux_closed_form(parse_functional(id), spec, t, x, m, std::move(u));
}

using MeasureFunctional = std::function<double(const WeightedMeasure&)>;

/// The catalog functional itself, evaluated on a (possibly signed) weighted measure.
inline MeasureFunctional catalog_functional(Functional id, const ModelSpec& spec, double t, double x,
                                            std::vector<double> u = {}) {
  const double alpha = spec.alpha;
  switch (id) {
    case Functional::Mean:
      return [](const WeightedMeasure& w) { return w.integrate([](double y) { return y; }); };
    case Functional::SquareMean:
      return [](const WeightedMeasure& w) {
        const double mean = w.integrate([](double y) { return y; });
        return 0.5 * mean * mean;
      };
    case Functional::SecondMoment:
      return [](const WeightedMeasure& w) { return 0.5 * w.integrate([](double y) { return y * y; }); };
    case Functional::AlphaMoment:
      return [alpha](const WeightedMeasure& w) {
        return w.integrate([alpha](double y) { return abs_pow(y, alpha); });
      };
    case Functional::AlphaNorm:
      return [alpha](const WeightedMeasure& w) {
        return std::pow(w.integrate([alpha](double y) { return abs_pow(y, alpha); }), 1.0 / alpha);
      };
    case Functional::NormedDrift: {
      const auto kernel = spec.kernel;
      return [kernel, alpha, t, x, u](const WeightedMeasure& w) {
        return std::pow(w.integrate([&](double y) { return abs_pow(kernel->value(t, x, y, u), alpha); }),
                        1.0 / alpha);
      };
    }
  }
  throw Error(ErrorCode::UnknownFunctional, "unhandled functional");
}

/// One-sided difference (F(m + eps d) - F(m)) / eps, with m + eps d realized
/// as a reweighted union of the samples of m, d.plus and d.minus.
inline double gateaux_fd_oracle(const MeasureFunctional& F, const EmpiricalMeasure& m, const GateauxDirection& d,
                                double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidDirection, "eps must be positive");
  if (d.plus.size() != d.minus.size()) throw Error(ErrorCode::InvalidDirection, "direction must have zero mass");
  const double k = static_cast<double>(d.plus.size());

  WeightedMeasure base = WeightedMeasure::from(m);
  WeightedMeasure mix = base;
  std::map<double, double> net;
  for (double v : m.samples()) net[v] += m.weight();
  for (double v : d.plus.samples()) {
    mix.values.push_back(v);
    mix.weights.push_back(eps / k);
    net[v] += eps / k;
  }
  for (double v : d.minus.samples()) {
    mix.values.push_back(v);
    mix.weights.push_back(-eps / k);
    net[v] -= eps / k;
  }
  for (const auto& [value, weight] : net) {
    if (weight < -1e-15) {
      throw Error(ErrorCode::InvalidDirection, "m + eps d has negative mass at " + std::to_string(value));
    }
  }
  return (F(mix) - F(base)) / eps;
}

/// Richardson combination 2 D(eps/2) - D(eps) of the one-sided oracle;
/// second-order accurate in eps.
inline double gateaux_fd_richardson(const MeasureFunctional& F, const EmpiricalMeasure& m,
                                    const GateauxDirection& d, double eps) {
  return 2.0 * gateaux_fd_oracle(F, m, d, 0.5 * eps) - gateaux_fd_oracle(F, m, d, eps);
}

}  // namespace mfsmp
