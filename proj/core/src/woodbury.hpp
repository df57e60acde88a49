#pragma once

// Shared low-rank-plus-diagonal algebra for a subset of coordinates.

#include <vector>

#include <Eigen/Cholesky>

#include "misconv/mfa.hpp"

namespace misconv::detail {

/// Cholesky of core = I + A_S^T diag(d_S)^{-1} A_S for rows S of (A, d).
/// Symmetrized before factoring; one retry with 1e-10 I jitter.
class WoodburyCore {
 public:
  WoodburyCore(const Matrix& loadings, const Vector& noise, const std::vector<Index>& rows);

  struct Solve {
    Vector factor_mean;  ///< core^{-1} A_S^T D_S^{-1} r
    double quadratic;    ///< r^T Sigma_SS^{-1} r
    double log_density;  ///< log N(r; 0, Sigma_SS)
  };

  Solve solve(const Vector& residual) const;

  /// Upper-triangular B with B B^T = core^{-1}.
  Matrix inverse_core_factor() const;

  double log_det_core() const;
  double log_det_noise() const { return log_det_noise_; }

 private:
  std::vector<Index> rows_;
  Matrix scaled_;  // D_S^{-1} A_S
  Vector inv_noise_;
  double log_det_noise_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

}  // namespace misconv::detail
