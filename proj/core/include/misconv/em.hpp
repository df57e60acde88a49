#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "misconv/mfa.hpp"

namespace misconv {

enum class EMInit { kKMeans, kRandomSubset };

struct EMConfig {
  int k = 8;
  int l = 4;
  int max_iters = 200;
  double ll_tol = 1e-6;   ///< stop when relative mean log-likelihood gain falls below this
  double d_floor = 1e-6;  ///< lower bound on every noise variance
  std::uint64_t seed = 0;
  EMInit init = EMInit::kKMeans;
  std::size_t init_subset = 5000;  ///< samples used by the k-means initializer

  void validate() const;
};

struct EMReport {
  std::vector<double> mean_loglik;  ///< one entry per E-step, model at the start of that iteration
  int iterations_run = 0;           ///< completed M-steps
  bool converged = false;
  int reseeds = 0;  ///< collapsed components re-seeded during the run
};

struct EMResult {
  MFAModel model;
  EMReport report;
};

/// Maximum-likelihood MFA by EM on complete samples, one sample per column of
/// `data` (n x N). The E-step uses the l x l Woodbury core for the posterior
/// factor moments; the M-step updates the mean and loadings jointly, then the
/// noise (clamped at d_floor), then the weights.
///
/// A component whose responsibility mass drops below 1e-8 is re-seeded at the
/// worst-explained sample; the third such event raises ConvergenceError.
/// Output is bitwise reproducible for identical (data, cfg) regardless of the
/// worker count.
EMResult fit(const Matrix& data, const EMConfig& cfg);

/// CSV with header `iter,loglik`.
void write_em_report_csv(std::ostream& out, const EMReport& report);

const char* to_string(EMInit init);
EMInit parse_em_init(const std::string& text);

}  // namespace misconv
