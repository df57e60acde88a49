#pragma once

// Mixture of factor analyzers: densities, sampling and exact conditioning on
// observed pixels. Every component keeps the low-rank-plus-diagonal form
//   Sigma = A A^T + diag(d),
// so nothing here ever builds an n x n matrix.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "misconv/random.hpp"

namespace misconv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// One Gaussian component: mean `mu`, loadings `A` (n x l), noise variances `d`.
class FactorAnalyzer {
 public:
  /// Throws InvalidArgument on shape mismatch, n == 0, negative or
  /// non-finite noise.
  FactorAnalyzer(Vector mean, Matrix loadings, Vector noise);

  /// Degenerate component concentrated at `at` with `rank` zero loading columns.
  static FactorAnalyzer point_mass(Vector at, Index rank = 0);

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& loadings() const noexcept { return loadings_; }
  const Vector& noise() const noexcept { return noise_; }

  Index dim() const noexcept { return mean_.size(); }
  Index rank() const noexcept { return loadings_.cols(); }

  /// Dense A A^T + diag(d). Only meant for small n (tests, oracles).
  Matrix covariance() const;

  /// Per-coordinate variance d + rowwise |A|^2.
  Vector marginal_variance() const;

 private:
  Vector mean_;
  Matrix loadings_;
  Vector noise_;
};

/// k weighted factor analyzers sharing n and l.
class MFAModel {
 public:
  /// Weights must be nonnegative and sum to one within 1e-12.
  MFAModel(std::vector<FactorAnalyzer> components, Vector weights);

  std::size_t size() const noexcept { return components_.size(); }
  Index dim() const noexcept { return components_.front().dim(); }
  Index rank() const noexcept { return components_.front().rank(); }

  const FactorAnalyzer& component(std::size_t i) const { return components_.at(i); }
  const std::vector<FactorAnalyzer>& components() const noexcept { return components_; }
  const Vector& weights() const noexcept { return weights_; }
  double weight(std::size_t i) const { return weights_(static_cast<Index>(i)); }

 private:
  std::vector<FactorAnalyzer> components_;
  Vector weights_;
};

/// Pixel buffer plus observedness mask. Unobserved pixels are stored as 0.
class MaskedImage {
 public:
  MaskedImage(Vector pixels, std::vector<bool> observed);

  /// Every pixel observed.
  static MaskedImage complete(Vector pixels);

  const Vector& pixels() const noexcept { return pixels_; }
  const std::vector<bool>& observed() const noexcept { return observed_; }
  bool is_observed(Index i) const { return observed_[static_cast<std::size_t>(i)]; }
  Index size() const noexcept { return pixels_.size(); }

  Index observed_count() const noexcept { return observed_count_; }
  Index missing_count() const noexcept { return size() - observed_count_; }
  std::vector<Index> observed_indices() const;
  std::vector<Index> missing_indices() const;

 private:
  Vector pixels_;
  std::vector<bool> observed_;
  Index observed_count_ = 0;
};

/// log N(x; mu, A A^T + diag(d)) via the Woodbury and matrix-determinant
/// identities. Requires d > 0 everywhere.
double component_log_density(const FactorAnalyzer& fa, const Eigen::Ref<const Vector>& x);

/// log sum_i p_i N(x; mu_i, Sigma_i), evaluated with log-sum-exp.
double log_density(const MFAModel& model, const Eigen::Ref<const Vector>& x);

/// mu + sqrt(d) .* X + A Y with X ~ N(0, I_n) then Y ~ N(0, I_l) drawn from `rng`.
Vector sample(const FactorAnalyzer& fa, Rng& rng);
Vector sample(const FactorAnalyzer& fa, std::uint64_t seed);

/// Categorical draw over `weights`; zero-weight entries are never returned.
std::size_t draw_component(const Vector& weights, Rng& rng);

Vector sample_mixture(const MFAModel& model, Rng& rng);
Vector sample_mixture(const MFAModel& model, std::uint64_t seed);

/// Sum_i p_i mu_i.
Vector mixture_mean(const MFAModel& model);

/// Distribution of the missing pixels given the observed ones, embedded back
/// into the full pixel space: each returned component is a point mass on the
/// observed pixels (mean = observed value, zero loading rows, zero noise) and
/// the conditional Gaussian, still in factor form, on the missing ones.
/// Weights become posterior responsibilities of the observed pixels.
///
/// Observed coordinates whose noise is zero must also have zero loading rows;
/// they are treated as point masses that contribute no density (a component
/// whose mean differs there is ruled out). This makes conditioning idempotent.
///
/// Throws ConditioningError when no pixel is observed or when every component
/// has zero posterior probability.
MFAModel condition(const MFAModel& model, const MaskedImage& img);

enum class ImputationMode {
  kMixtureMean,   ///< responsibility-weighted mean of all components
  kMapComponent,  ///< mean of the most responsible component
};

/// Conditional-mean imputation; observed pixels pass through exactly.
Vector conditional_mean_imputation(const MFAModel& model, const MaskedImage& img,
                                   ImputationMode mode = ImputationMode::kMixtureMean);

}  // namespace misconv
