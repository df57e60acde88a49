#pragma once

#include <cstddef>
#include <vector>

#include "misconv/mfa.hpp"

namespace misconv {

struct ClassificationMetrics {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  ///< NaN for classes absent from `labels`
};

ClassificationMetrics classification_metrics(const std::vector<int>& predicted,
                                             const std::vector<int>& labels, int classes);

/// Reported instead of +inf when the MSE is exactly zero.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(max^2 / mse), or kPsnrCap when mse == 0.
double psnr_from_mse(double mse, double max_value = 1.0);

/// Errors over missing pixels only, pooled across the whole set.
struct ImputationMetrics {
  double mse = 0.0;
  double psnr = 0.0;
  double nll = 0.0;  ///< mean per image of -log p(true missing | observed); NaN when not modelled
  std::size_t missing_pixels = 0;
};

/// Negative log-density of `truth` restricted to the missing coordinates of
/// a conditioned model (from `condition`). +inf when a missing coordinate has
/// zero noise.
double conditional_nll(const MFAModel& conditioned, const Vector& truth,
                       const std::vector<Index>& missing);

/// MSE/PSNR of conditional-mean imputation against `truth` over missing
/// pixels, and the conditional NLL of the true missing values. Runs across
/// workers; the reduction order is fixed.
ImputationMetrics evaluate_imputation(const MFAModel& model, const std::vector<MaskedImage>& masked,
                                      const std::vector<Vector>& truth,
                                      ImputationMode mode = ImputationMode::kMixtureMean);

/// Same errors for zero imputation; nll is NaN.
ImputationMetrics evaluate_zero_imputation(const std::vector<MaskedImage>& masked,
                                           const std::vector<Vector>& truth);

}  // namespace misconv
