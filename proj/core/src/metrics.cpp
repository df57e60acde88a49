#include "misconv/metrics.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "misconv/error.hpp"
#include "misconv/parallel.hpp"
#include "woodbury.hpp"

namespace misconv {
namespace {

struct ImageError {
  double squared_error = 0.0;
  std::size_t missing = 0;
  double nll = 0.0;
};

ImputationMetrics pool(const std::vector<ImageError>& per_image, bool with_nll) {
  ImputationMetrics m;
  double sse = 0.0;
  double nll = 0.0;
  std::size_t nll_images = 0;
  for (const ImageError& e : per_image) {
    sse += e.squared_error;
    m.missing_pixels += e.missing;
    if (e.missing > 0) {
      nll += e.nll;
      ++nll_images;
    }
  }
  m.mse = m.missing_pixels > 0 ? sse / static_cast<double>(m.missing_pixels) : 0.0;
  m.psnr = psnr_from_mse(m.mse);
  m.nll = with_nll && nll_images > 0 ? nll / static_cast<double>(nll_images)
                                     : std::numeric_limits<double>::quiet_NaN();
  return m;
}

void check_sizes(const std::vector<MaskedImage>& masked, const std::vector<Vector>& truth) {
  if (masked.size() != truth.size()) throw DimensionError("masked and ground-truth counts differ");
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i].size() != truth[i].size()) throw DimensionError("image and ground truth sizes differ");
  }
}

}  // namespace

ClassificationMetrics classification_metrics(const std::vector<int>& predicted,
                                             const std::vector<int>& labels, int classes) {
  if (predicted.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  ClassificationMetrics m;
  std::vector<std::size_t> hit(static_cast<std::size_t>(classes), 0);
  std::vector<std::size_t> seen(static_cast<std::size_t>(classes), 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw InvalidArgument("label outside [0, classes)");
    ++seen[static_cast<std::size_t>(y)];
    if (predicted[i] == y) {
      ++correct;
      ++hit[static_cast<std::size_t>(y)];
    }
  }
  m.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  for (int c = 0; c < classes; ++c) {
    const auto sc = static_cast<std::size_t>(c);
    m.per_class_accuracy.push_back(seen[sc] > 0 ? static_cast<double>(hit[sc]) / static_cast<double>(seen[sc])
                                                : std::numeric_limits<double>::quiet_NaN());
  }
  return m;
}

double psnr_from_mse(double mse, double max_value) {
  if (mse <= 0.0) return kPsnrCap;
  return 10.0 * std::log10(max_value * max_value / mse);
}

double conditional_nll(const MFAModel& conditioned, const Vector& truth,
                       const std::vector<Index>& missing) {
  if (truth.size() != conditioned.dim()) throw DimensionError("ground truth does not match model");
  if (missing.empty()) return 0.0;
  Vector terms(static_cast<Index>(conditioned.size()));
  for (std::size_t i = 0; i < conditioned.size(); ++i) {
    const FactorAnalyzer& fa = conditioned.component(i);
    for (const Index j : missing) {
      if (!(fa.noise()(j) > 0.0)) return std::numeric_limits<double>::infinity();
    }
    const detail::WoodburyCore core(fa.loadings(), fa.noise(), missing);
    Vector residual(static_cast<Index>(missing.size()));
    for (std::size_t r = 0; r < missing.size(); ++r) {
      residual(static_cast<Index>(r)) = truth(missing[r]) - fa.mean()(missing[r]);
    }
    const double w = conditioned.weight(i);
    terms(static_cast<Index>(i)) = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) +
                                   core.solve(residual).log_density;
  }
  const double peak = terms.maxCoeff();
  if (!std::isfinite(peak)) return std::numeric_limits<double>::infinity();
  return -(peak + std::log((terms.array() - peak).exp().sum()));
}

ImputationMetrics evaluate_imputation(const MFAModel& model, const std::vector<MaskedImage>& masked,
                                      const std::vector<Vector>& truth, ImputationMode mode) {
  check_sizes(masked, truth);
  std::vector<ImageError> per_image(masked.size());
  parallel_for(masked.size(), [&](std::size_t i) {
    const MaskedImage& img = masked[i];
    ImageError& e = per_image[i];
    const std::vector<Index> missing = img.missing_indices();
    e.missing = missing.size();
    if (missing.empty()) return;
    const MFAModel posterior = condition(model, img);
    Vector filled = mixture_mean(posterior);
    if (mode == ImputationMode::kMapComponent) {
      Index best = 0;
      posterior.weights().maxCoeff(&best);
      filled = posterior.component(static_cast<std::size_t>(best)).mean();
    }
    for (const Index j : missing) e.squared_error += std::pow(filled(j) - truth[i](j), 2);
    e.nll = conditional_nll(posterior, truth[i], missing);
  });
  ImputationMetrics m = pool(per_image, true);
  if (std::isinf(m.nll)) std::cerr << "warning: degenerate conditional covariance, NLL is +inf\n";
  return m;
}

ImputationMetrics evaluate_zero_imputation(const std::vector<MaskedImage>& masked,
                                           const std::vector<Vector>& truth) {
  check_sizes(masked, truth);
  std::vector<ImageError> per_image(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) {
    for (Index j = 0; j < masked[i].size(); ++j) {
      if (masked[i].is_observed(j)) continue;
      per_image[i].squared_error += truth[i](j) * truth[i](j);
      ++per_image[i].missing;
    }
  }
  return pool(per_image, false);
}

}  // namespace misconv
