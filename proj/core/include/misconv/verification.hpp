#pragma once

// Randomized verification suites shared by `misconv verify` and the
// acceptance tests. Every suite is deterministic in its seed.

#include <cstdint>
#include <string>

#include "misconv/layer.hpp"
#include "misconv/oracle.hpp"

namespace misconv {

struct SuiteOutcome {
  bool passed = false;
  std::string detail;  ///< one-line summary of the worst case
};

struct IdentitySuiteConfig {
  int configs = 50;
  std::size_t samples = 200000;
  std::uint64_t seed = 1;
  LayerOptions layer;           ///< analytic variant under test
  bool conditioned_share = true;  ///< condition every other model on a random mask
};

/// Random small models (n <= 64, k <= 3, l <= 4) and kernels; misconv_forward
/// with ReLU against the Monte-Carlo mean of classic conv + ReLU. All
/// coordinates of all configurations are pooled into one report.
OracleReport identity_suite(const IdentitySuiteConfig& cfg);

/// `cases` random 1-D mixtures (k <= 3, some with vanishing sigma):
/// expected_relu_scalar(moment) against quadrature at 1e-11, pass at `tol`.
SuiteOutcome relu_quadrature_suite(int cases = 200, std::uint64_t seed = 2,
                                   ReluMoment moment = ReluMoment::kRectifiedGaussian,
                                   double tol = 1e-8);

/// Quadrature against Monte-Carlo (`samples` draws) on `cases` shared 1-D
/// mixtures; every z must stay within 4.
SuiteOutcome quadrature_mc_suite(int cases = 20, std::size_t samples = 100000,
                                 std::uint64_t seed = 3);

/// `condition` against dense Schur complements on `cases` random models
/// (n <= 32, l <= 4, k <= 3): means and covariances within `tol`, posterior
/// weights within `weight_tol`.
SuiteOutcome conditioning_suite(int cases = 100, std::uint64_t seed = 4, double tol = 1e-8,
                                double weight_tol = 1e-10);

/// EM log-likelihood monotonicity over several fits, and recovery of a known
/// FA covariance (n = 16, l = 2, 5000 samples) within 10% relative Frobenius.
SuiteOutcome em_suite(std::uint64_t seed = 5);

}  // namespace misconv
