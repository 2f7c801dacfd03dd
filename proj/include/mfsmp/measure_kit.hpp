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

// Empirical measures on the real line: alpha-moments, one-dimensional
// optimal transport, and relative entropy of discrete distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfsmp/errors.hpp"

namespace mfsmp {

/// |y|^alpha with exact shortcuts for the common integer exponents.
inline double abs_pow(double y, double alpha) {
  const double a = std::abs(y);
  if (alpha == 1.0) return a;
  if (alpha == 2.0) return a * a;
  if (a == 0.0) return 0.0;
  return std::pow(a, alpha);
}

/// Uniform-weight atomic measure. Samples are kept sorted ascending.
class EmpiricalMeasure {
 public:
  static EmpiricalMeasure from_samples(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "empirical measure needs at least one sample");
    for (double v : values) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "sample is not finite");
    }
    std::sort(values.begin(), values.end());
    return EmpiricalMeasure(std::move(values));
  }

  static EmpiricalMeasure from_samples(std::span<const double> values) {
    return from_samples(std::vector<double>(values.begin(), values.end()));
  }

  static EmpiricalMeasure point_mass(double c) { return from_samples(std::vector<double>{c}); }

  std::span<const double> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double weight() const { return 1.0 / static_cast<double>(samples_.size()); }

  double mean() const {
    return std::accumulate(samples_.begin(), samples_.end(), 0.0) / static_cast<double>(size());
  }

  /// Right-continuous quantile function Q(u) = inf{y : F(y) > u}, u in [0,1).
  double quantile(double u) const {
    const auto n = static_cast<double>(size());
    auto idx = static_cast<std::size_t>(std::floor(u * n));
    return samples_[std::min(idx, size() - 1)];
  }

  EmpiricalMeasure scaled(double lambda) const {
    std::vector<double> out(samples_);
    for (double& v : out) v *= lambda;
    return from_samples(std::move(out));
  }

  /// Memoizes one scalar summary keyed by a double (the last key wins).
  /// Samples never change after construction, so copies may share it.
  template <typename Fn>
  double memo(double key, Fn&& compute) const {
    std::lock_guard<std::mutex> lock(memo_->mu);
    if (memo_->valid && memo_->key == key) return memo_->value;
    memo_->value = compute();
    memo_->key = key;
    memo_->valid = true;
    return memo_->value;
  }

 private:
  struct Memo {
    std::mutex mu;
    bool valid = false;
    double key = 0.0;
    double value = 0.0;
  };

  explicit EmpiricalMeasure(std::vector<double> sorted)
      : samples_(std::move(sorted)), memo_(std::make_shared<Memo>()) {}

  std::vector<double> samples_;
  std::shared_ptr<Memo> memo_;
};

/// Finite-support probability vector with named outcomes.
class DiscreteDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  static DiscreteDistribution make(std::vector<std::string> support, std::vector<double> probs) {
    if (support.size() != probs.size() || support.empty()) {
      throw Error(ErrorCode::InvalidDistribution, "support and probabilities must be nonempty and aligned");
    }
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw Error(ErrorCode::InvalidDistribution, "probabilities must be finite and nonnegative");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw Error(ErrorCode::InvalidDistribution, "probabilities must sum to 1");
    }
    return DiscreteDistribution(std::move(support), std::move(probs));
  }

  /// Labels "0", "1", ... for index-addressed outcomes.
  static DiscreteDistribution from_probs(std::vector<double> probs) {
    std::vector<std::string> labels(probs.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = std::to_string(i);
    return make(std::move(labels), std::move(probs));
  }

  std::span<const std::string> support() const { return support_; }
  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

 private:
  DiscreteDistribution(std::vector<std::string> s, std::vector<double> p)
      : support_(std::move(s)), probs_(std::move(p)) {}

  std::vector<std::string> support_;
  std::vector<double> probs_;
};

inline void require_alpha(double alpha) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::AlphaOutOfRange, "alpha must be >= 1, got " + std::to_string(alpha));
  }
}

/// (1/n) sum |y_i|^alpha.
inline double alpha_moment(const EmpiricalMeasure& m, double alpha) {
  require_alpha(alpha);
  return m.memo(alpha, [&] {
    double acc = 0.0;
    for (double y : m.samples()) acc += abs_pow(y, alpha);
    return acc / static_cast<double>(m.size());
  });
}

inline double alpha_norm(const EmpiricalMeasure& m, double alpha) {
  const double moment = alpha_moment(m, alpha);
  return alpha == 1.0 ? moment : std::pow(moment, 1.0 / alpha);
}

/// Order-p Wasserstein distance via the quantile coupling. Breakpoints of the
/// two step quantile functions are merged in integer arithmetic, so unequal
/// sample counts are handled exactly.
inline double wasserstein(const EmpiricalMeasure& m1, const EmpiricalMeasure& m2, double order) {
  if (!(order >= 1.0) || !std::isfinite(order)) {
    throw Error(ErrorCode::OrderOutOfRange, "order must be >= 1");
  }
  const auto a = m1.samples();
  const auto b = m2.samples();
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  double acc = 0.0;
  if (n1 == n2) {
    for (std::size_t i = 0; i < n1; ++i) acc += abs_pow(a[i] - b[i], order);
    acc /= static_cast<double>(n1);
  } else {
    // Positions measured in units of 1/(n1*n2).
    std::size_t i = 0, j = 0, prev = 0;
    while (i < n1 && j < n2) {
      const std::size_t next_a = (i + 1) * n2;
      const std::size_t next_b = (j + 1) * n1;
      const std::size_t next = std::min(next_a, next_b);
      acc += static_cast<double>(next - prev) * abs_pow(a[i] - b[j], order);
      prev = next;
      if (next_a == next) ++i;
      if (next_b == next) ++j;
    }
    acc /= static_cast<double>(n1) * static_cast<double>(n2);
  }
  return order == 1.0 ? acc : std::pow(acc, 1.0 / order);
}

namespace detail {

/// Two-phase dense simplex with Bland's rule for min c.x, A x = b, x >= 0, b >= 0.
/// Small problems only; used as a verification oracle.
inline double simplex_min(const std::vector<double>& c, std::vector<std::vector<double>> A,
                          std::vector<double> b) {
  constexpr double eps = 1e-12;
  const std::size_t m = A.size();
  const std::size_t nv = c.size();
  const std::size_t cols = nv + m;  // originals + artificials
  // Tableau rows 0..m-1 constraints, column `cols` holds the rhs.
  std::vector<std::vector<double>> T(m, std::vector<double>(cols + 1, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < nv; ++j) T[r][j] = A[r][j];
    T[r][nv + r] = 1.0;
    T[r][cols] = b[r];
    basis[r] = nv + r;
  }

  auto pivot = [&](std::size_t row, std::size_t col) {
    const double piv = T[row][col];
    for (double& v : T[row]) v /= piv;
    for (std::size_t r = 0; r < T.size(); ++r) {
      if (r == row) continue;
      const double f = T[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols; ++j) T[r][j] -= f * T[row][j];
    }
    basis[row] = col;
  };

  // Minimizes cost over allowed columns; reduced costs recomputed each pass.
  auto run = [&](const std::vector<double>& cost, std::size_t allowed_cols) {
    for (int guard = 0; guard < 100000; ++guard) {
      std::size_t enter = allowed_cols;
      for (std::size_t j = 0; j < allowed_cols; ++j) {
        double rc = cost[j];
        for (std::size_t r = 0; r < T.size(); ++r) rc -= cost[basis[r]] * T[r][j];
        if (rc < -eps) {
          enter = j;
          break;
        }
      }
      if (enter == allowed_cols) return;
      std::size_t leave = T.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < T.size(); ++r) {
        if (T[r][enter] > eps) {
          const double ratio = T[r][cols] / T[r][enter];
          if (ratio < best - eps || (std::abs(ratio - best) <= eps && basis[r] < basis[leave])) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave == T.size()) throw Error(ErrorCode::NonFiniteResult, "transport LP unbounded");
      pivot(leave, enter);
    }
    throw Error(ErrorCode::NoConvergence, "simplex iteration limit");
  };

  std::vector<double> phase1(cols, 0.0);
  for (std::size_t j = nv; j < cols; ++j) phase1[j] = 1.0;
  run(phase1, cols);
  // Drive zero-level artificials out of the basis; drop redundant rows.
  for (std::size_t r = 0; r < T.size();) {
    if (basis[r] >= nv) {
      std::size_t col = nv;
      for (std::size_t j = 0; j < nv; ++j) {
        if (std::abs(T[r][j]) > 1e-9) {
          col = j;
          break;
        }
      }
      if (col == nv) {
        T.erase(T.begin() + static_cast<std::ptrdiff_t>(r));
        basis.erase(basis.begin() + static_cast<std::ptrdiff_t>(r));
        continue;
      }
      pivot(r, col);
    }
    ++r;
  }
  std::vector<double> phase2(cols, 0.0);
  std::copy(c.begin(), c.end(), phase2.begin());
  run(phase2, nv);
  double value = 0.0;
  for (std::size_t r = 0; r < T.size(); ++r) value += phase2[basis[r]] * T[r][cols];
  return value;
}

}  // namespace detail

/// Ground-truth transport distance from the full coupling LP. Supports of at
/// most eight atoms each.
inline double wasserstein_lp_oracle(const EmpiricalMeasure& m1, const EmpiricalMeasure& m2,
                                    double order) {
  if (!(order >= 1.0) || !std::isfinite(order)) {
    throw Error(ErrorCode::OrderOutOfRange, "order must be >= 1");
  }
  constexpr std::size_t kMaxSupport = 8;
  if (m1.size() > kMaxSupport || m2.size() > kMaxSupport) {
    throw Error(ErrorCode::SupportTooLarge, "LP oracle accepts at most 8 atoms per measure");
  }
  const auto a = m1.samples();
  const auto b = m2.samples();
  const std::size_t n1 = a.size(), n2 = b.size();
  std::vector<double> cost(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) cost[i * n2 + j] = abs_pow(a[i] - b[j], order);

  // Row sums for every source atom, column sums for all but the last target.
  std::vector<std::vector<double>> A;
  std::vector<double> rhs;
  for (std::size_t i = 0; i < n1; ++i) {
    std::vector<double> row(n1 * n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j) row[i * n2 + j] = 1.0;
    A.push_back(std::move(row));
    rhs.push_back(1.0 / static_cast<double>(n1));
  }
  for (std::size_t j = 0; j + 1 < n2; ++j) {
    std::vector<double> row(n1 * n2, 0.0);
    for (std::size_t i = 0; i < n1; ++i) row[i * n2 + j] = 1.0;
    A.push_back(std::move(row));
    rhs.push_back(1.0 / static_cast<double>(n2));
  }
  const double value = std::max(0.0, detail::simplex_min(cost, std::move(A), std::move(rhs)));
  return order == 1.0 ? value : std::pow(value, 1.0 / order);
}

/// Relative entropy sum mu_i log(mu_i / nu_i); +infinity when mu is not
/// absolutely continuous with respect to nu.
inline double relative_entropy(const DiscreteDistribution& mu, const DiscreteDistribution& nu) {
  if (mu.size() != nu.size() || !std::equal(mu.support().begin(), mu.support().end(), nu.support().begin())) {
    throw Error(ErrorCode::MismatchedSupport, "distributions must share support labels");
  }
  double acc = 0.0;
  const auto p = mu.probs();
  const auto q = nu.probs();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

/// K-atom summary of m at the midpoint quantiles (j + 1/2)/K.
inline EmpiricalMeasure quantile_compress(const EmpiricalMeasure& m, std::size_t atoms) {
  if (atoms == 0 || atoms >= m.size()) return m;
  std::vector<double> out(atoms);
  for (std::size_t j = 0; j < atoms; ++j) {
    out[j] = m.quantile((static_cast<double>(j) + 0.5) / static_cast<double>(atoms));
  }
  return EmpiricalMeasure::from_samples(std::move(out));
}

/// Finite signed-weight measure; only the Gateaux oracle evaluates on these.
struct WeightedMeasure {
  std::vector<double> values;
  std::vector<double> weights;

  static WeightedMeasure from(const EmpiricalMeasure& m) {
    WeightedMeasure w;
    w.values.assign(m.samples().begin(), m.samples().end());
    w.weights.assign(m.size(), m.weight());
    return w;
  }

  template <typename Fn>
  double integrate(Fn&& fn) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) acc += weights[i] * fn(values[i]);
    return acc;
  }
};

}  // namespace mfsmp
