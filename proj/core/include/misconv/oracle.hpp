#pragma once

// Independent checks for the analytic layer: Monte-Carlo estimates of
// E[f(M Z)] and adaptive quadrature of the rectified mixture mean.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>

#include "misconv/conv.hpp"
#include "misconv/layer.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

struct OracleReport {
  Vector analytic;
  Vector empirical;
  Vector std_error;  ///< standard error used for z
  Vector z;  ///< |analytic - empirical| / SE; with SE == 0, 0 when the values agree and +inf otherwise
  double max_z = 0.0;
  double mean_z = 0.0;
  double fraction_above_z4 = 0.0;
  std::size_t samples = 0;
};

struct OracleThresholds {
  double flag_z = 4.0;              ///< a coordinate "breaches" above this
  double max_flag_fraction = 0.01;  ///< allowed share of breaching coordinates
  double max_z = 5.0;               ///< hard ceiling on any coordinate
};

bool passes(const OracleReport& report, const OracleThresholds& thresholds = {});

/// Draws `n_samples` (>= 1000) images from `model`, applies classic_forward to
/// each, and compares the per-coordinate sample mean with misconv_forward
/// under `analytic_options`. Batches use seeds derived from `seed` by batch
/// index and are reduced in batch order, so the report does not depend on
/// the worker count. The standard error uses the larger of the sample
/// variance and the variance of the activation under the analytic output
/// mixture, which keeps rare-event coordinates (a handful of positive draws)
/// from producing spurious z-scores.
OracleReport mc_expected_forward(const MFAModel& model, const ImageShape& input,
                                 const KernelStack& kernels, Activation activation,
                                 std::size_t n_samples, std::uint64_t seed,
                                 const LayerOptions& analytic_options = {});

/// Builds the report fields from analytic values and per-coordinate sample
/// statistics.
OracleReport compare(Vector analytic, Vector empirical, Vector std_error, std::size_t samples);

/// Integral of x * sum_i p_i N(x; m_i, s_i^2) over x > 0 by adaptive
/// Gauss-Kronrod (7/15) quadrature, each component integrated in standardized
/// coordinates over its window [max(-12, -m/s), 12] (widened until the
/// Gaussian tail bound is below tolerance). Zero-width components contribute
/// p_i * max(m_i, 0). Throws ConvergenceError carrying the best estimate when
/// a component needs more than `max_subintervals` pieces.
double quadrature_expected_relu(std::span<const double> weights, std::span<const double> means,
                                std::span<const double> stds, double abs_tol,
                                int max_subintervals = 2000);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean of ReLU(X), X drawn from the 1-D mixture.
McEstimate mc_expected_relu(std::span<const double> weights, std::span<const double> means,
                            std::span<const double> stds, std::size_t n_samples, std::uint64_t seed);

/// CSV with header `coord,analytic,empirical,se,z`.
void write_oracle_csv(std::ostream& out, const OracleReport& report);

/// One line, e.g. "PASS max_z=2.91 mean_z=0.80 frac_z>4=0.0000 coords=128 samples=200000".
std::string summary_line(const OracleReport& report, const OracleThresholds& thresholds = {});

}  // namespace misconv
