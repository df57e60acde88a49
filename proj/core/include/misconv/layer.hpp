#pragma once

// Expected-activation convolution layer. Given an MFA representation Z of an
// incomplete image, each component is pushed through the convolution exactly
// (M Z is again a factor analyzer), its output covariance is reduced to the
// diagonal, and E[ReLU] of the resulting 1-D mixture is taken per coordinate.

#include <cstddef>
#include <span>
#include <vector>

#include "misconv/conv.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

/// Distribution of M Z on every output coordinate: k mean maps, k variance
/// maps (each F*H'*W', flattened like classic_forward) and mixture weights.
struct GaussianFeatureMaps {
  ImageShape shape;
  Vector weights;
  std::vector<Vector> means;
  std::vector<Vector> variances;
};

/// Coefficient on the sigma*exp(.) term of the rectified-Gaussian mean.
enum class ReluMoment {
  kRectifiedGaussian,  ///< m Phi(m/s) + s phi(m/s)
  kAsPrinted,          ///< 1/2 (m + s/(2 sqrt(2 pi)) exp(-m^2/2s^2) + m erf(m/(s sqrt 2))); wrong, kept for comparison
};

/// How the diagonal noise d is carried to the output variance.
enum class NoiseTransfer {
  kSquaredKernel,  ///< diag(M diag(d) M^T): d convolved with squared weights
  kLinearKernel,   ///< M d with the plain weights; wrong, kept for comparison
};

struct LayerOptions {
  ReluMoment relu_moment = ReluMoment::kRectifiedGaussian;
  NoiseTransfer noise_transfer = NoiseTransfer::kSquaredKernel;
};

/// Number of input vectors convolved, split by filter bank.
struct ConvStats {
  std::size_t linear_passes = 0;
  std::size_t squared_passes = 0;
};

/// Per component: mean map = conv(mu) + bias; variance map =
/// conv_sq(d) + sum_j conv(a_j)^2 (no bias on either term).
/// Each component costs 1 + l plain convolutions and one squared-weight one.
GaussianFeatureMaps conv_pushforward(const MFAModel& model, const ImageShape& input,
                                     const KernelStack& kernels, const LayerOptions& options = {},
                                     ConvStats* stats = nullptr);

/// E[ReLU(X)] for X ~ sum_i p_i N(m_i, s_i^2). s_i == 0 gives ReLU(m_i)
/// exactly. Throws InvalidArgument on negative or mismatched inputs.
double expected_relu_scalar(std::span<const double> weights, std::span<const double> means,
                            std::span<const double> stds,
                            ReluMoment moment = ReluMoment::kRectifiedGaussian);

/// Single-Gaussian term of `expected_relu_scalar`.
double rectified_gaussian_mean(double mean, double stddev,
                               ReluMoment moment = ReluMoment::kRectifiedGaussian);

/// Applies the activation per coordinate: expected ReLU over the k
/// components (variances are square-rooted here), or the mixture mean.
Vector expected_activation(const GaussianFeatureMaps& maps, Activation activation,
                           ReluMoment moment = ReluMoment::kRectifiedGaussian);

/// `conv_pushforward` for each model in turn.
std::vector<GaussianFeatureMaps> conv_pushforward_batch(std::span<const MFAModel> models,
                                                        const ImageShape& input,
                                                        const KernelStack& kernels,
                                                        const LayerOptions& options = {},
                                                        ConvStats* stats = nullptr);

/// Column b holds `misconv_forward` of models[b].
Matrix misconv_forward_batch(std::span<const MFAModel> models, const ImageShape& input,
                             const KernelStack& kernels, Activation activation,
                             const LayerOptions& options = {}, ConvStats* stats = nullptr);

/// conv_pushforward followed by expected_activation.
Vector misconv_forward(const MFAModel& model, const ImageShape& input, const KernelStack& kernels,
                       Activation activation, const LayerOptions& options = {},
                       ConvStats* stats = nullptr);

}  // namespace misconv
