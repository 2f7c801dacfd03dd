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

// Least-squares projection onto a small polynomial basis in (x, z), the
// conditional-expectation estimator of the backward passes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfsmp/errors.hpp"

namespace mfsmp {

struct RegressionDiagnostics {
  std::size_t basis_size = 0;
  double condition = 1.0;
  bool ridge = false;
};

/// Projection onto span{1, x, x^2, x^3, z, xz} at one time step. Inputs are
/// standardized first; features that are constant across the sample (e.g.
/// z at t = 0) are dropped. Above condition number 1e8 the solve switches to
/// ridge with a penalty of 1e-8 relative to the Gram trace.
class StepRegressor {
 public:
  static constexpr double kConditionLimit = 1e8;
  static constexpr double kRidge = 1e-8;

  StepRegressor(std::span<const double> x, std::span<const double> z) : n_(x.size()) {
    if (n_ == 0) throw Error(ErrorCode::RegressionFailure, "empty regression sample");
    const auto sx = standardize(x);
    const auto sz = z.empty() ? std::vector<double>{} : standardize(z);
    const bool vary_x = !sx.empty();
    const bool vary_z = !sz.empty();

    std::vector<std::vector<double>> cols;
    cols.emplace_back(n_, 1.0);
    if (vary_x) {
      std::vector<double> c1(n_), c2(n_), c3(n_);
      for (std::size_t i = 0; i < n_; ++i) {
        c1[i] = sx[i];
        c2[i] = sx[i] * sx[i];
        c3[i] = c2[i] * sx[i];
      }
      cols.push_back(std::move(c1));
      cols.push_back(std::move(c2));
      cols.push_back(std::move(c3));
    }
    if (vary_z) {
      cols.push_back(sz);
      if (vary_x) {
        std::vector<double> c(n_);
        for (std::size_t i = 0; i < n_; ++i) c[i] = sx[i] * sz[i];
        cols.push_back(std::move(c));
      }
    }
    const auto p = static_cast<Eigen::Index>(std::min(cols.size(), n_));
    X_.resize(static_cast<Eigen::Index>(n_), p);
    for (Eigen::Index j = 0; j < p; ++j)
      for (std::size_t i = 0; i < n_; ++i) X_(static_cast<Eigen::Index>(i), j) = cols[j][i];

    diag_.basis_size = static_cast<std::size_t>(p);
    const Eigen::MatrixXd gram = X_.transpose() * X_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = std::max(0.0, eig.eigenvalues().minCoeff());
    diag_.condition = lmin > 0.0 ? std::sqrt(lmax / lmin) : std::numeric_limits<double>::infinity();
    if (!(diag_.condition <= kConditionLimit)) {
      diag_.ridge = true;
      const double lambda = kRidge * gram.trace() / static_cast<double>(p);
      ridge_ = (gram + lambda * Eigen::MatrixXd::Identity(p, p)).ldlt();
    } else {
      qr_ = X_.colPivHouseholderQr();
    }
  }

  const RegressionDiagnostics& diagnostics() const { return diag_; }

  /// Fitted values of the projection of y.
  std::vector<double> project(std::span<const double> y) const {
    if (y.size() != n_) throw Error(ErrorCode::RegressionFailure, "response length differs from design");
    const Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(n_));
    const Eigen::VectorXd beta = diag_.ridge ? Eigen::VectorXd(ridge_.solve(X_.transpose() * Y)) : Eigen::VectorXd(qr_.solve(Y));
    if (!beta.allFinite()) throw Error(ErrorCode::RegressionFailure, "regression coefficients are not finite");
    const Eigen::VectorXd fit = X_ * beta;
    return std::vector<double>(fit.data(), fit.data() + fit.size());
  }

 private:
  /// Standardized copy, or empty when the sample is constant.
  static std::vector<double> standardize(std::span<const double> v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= n;
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) return {};
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
  }

  std::size_t n_;
  Eigen::MatrixXd X_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::LDLT<Eigen::MatrixXd> ridge_;
  RegressionDiagnostics diag_;
};

}  // namespace mfsmp
