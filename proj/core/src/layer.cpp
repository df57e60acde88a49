#include "misconv/layer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "im2row.hpp"
#include "misconv/error.hpp"

namespace misconv {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// W. J. Cody's rational approximations to erfc on [0, 0.46875], (0.46875, 4]
// and (4, inf).
constexpr double kErfcA[5] = {3.16112374387056560e00, 1.13864154151050156e02, 3.77485237685302021e02,
                              3.20937758913846947e03, 1.85777706184603153e-1};
constexpr double kErfcB[4] = {2.36012909523441209e01, 2.44024637934444173e02, 1.28261652607737228e03,
                              2.84423683343917062e03};
constexpr double kErfcC[9] = {5.64188496988670089e-1, 8.88314979438837594e00, 6.61191906371416295e01,
                              2.98635138197400131e02, 8.81952221241769090e02, 1.71204761263407058e03,
                              2.05107837782607147e03, 1.23033935479799725e03, 2.15311535474403846e-8};
constexpr double kErfcD[8] = {1.57449261107098347e01, 1.17693950891312499e02, 5.37181101862009858e02,
                              1.62138957456669019e03, 3.29079923573345963e03, 4.36261909014324716e03,
                              3.43936767414372164e03, 1.23033935480374942e03};
constexpr double kErfcP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1, 1.25781726111229246e-1,
                              1.60837851487422766e-2, 6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kErfcQ[5] = {2.56852019228982242e00, 1.87295284992346725e00, 5.27905102951428412e-1,
                              6.05183413124413191e-2, 2.33520497626869185e-3};
constexpr double kInvSqrtPi = 5.6418958354775628695e-1;

// erfc(y) for y >= 0 given ey = exp(-y^2).
inline double erfc_nonneg(double y, double ey) {
  if (y <= 0.46875) {
    const double ysq = y * y;
    double xn = kErfcA[4] * ysq;
    double xd = ysq;
    for (int i = 0; i < 3; ++i) {
      xn = (xn + kErfcA[i]) * ysq;
      xd = (xd + kErfcB[i]) * ysq;
    }
    return 1.0 - y * (xn + kErfcA[3]) / (xd + kErfcB[3]);
  }
  if (y <= 4.0) {
    double xn = kErfcC[8] * y;
    double xd = y;
    for (int i = 0; i < 7; ++i) {
      xn = (xn + kErfcC[i]) * y;
      xd = (xd + kErfcD[i]) * y;
    }
    return ey * (xn + kErfcC[7]) / (xd + kErfcD[7]);
  }
  const double ysq = 1.0 / (y * y);
  double xn = kErfcP[5] * ysq;
  double xd = ysq;
  for (int i = 0; i < 4; ++i) {
    xn = (xn + kErfcP[i]) * ysq;
    xd = (xd + kErfcQ[i]) * ysq;
  }
  return ey * (kInvSqrtPi - ysq * (xn + kErfcP[4]) / (xd + kErfcQ[4])) / y;
}

// m Phi(m/s) + s phi(m/s) for s > 0, one exp shared by Phi and phi.
inline double rectified_mean_positive(double m, double s) {
  const double z = m / s;
  const double e = std::exp(-0.5 * z * z);
  const double tail = 0.5 * erfc_nonneg(std::abs(z) * kInvSqrt2, e);  // Phi(-|z|)
  const double cdf = z >= 0.0 ? 1.0 - tail : tail;
  return std::max(0.0, m * cdf + s * kInvSqrt2Pi * e);
}

}  // namespace

GaussianFeatureMaps conv_pushforward(const MFAModel& model, const ImageShape& input,
                                     const KernelStack& kernels, const LayerOptions& options,
                                     ConvStats* stats) {
  if (model.dim() != input.size()) {
    throw DimensionError("model dimension " + std::to_string(model.dim()) +
                         " does not match input geometry " + std::to_string(input.size()));
  }
  const ImageShape out = kernels.output_shape(input);
  const Index positions = out.height * out.width;
  const Index k = static_cast<Index>(model.size());
  const Index l = model.rank();

  const Index taps = kernels.weights().cols();
  const Index filters = out.channels;
  const bool squared = options.noise_transfer == NoiseTransfer::kSquaredKernel;
  const Matrix& noise_weights = squared ? kernels.squared_weights() : kernels.weights();

  // Per component: patches of [mu, a_1 .. a_l] stacked row-wise, one GEMM;
  // block 0 is the mean map, blocks 1..l are squared and summed.
  Matrix patches(positions * (1 + l), taps);
  Matrix stacked(positions * (1 + l), filters);
  Matrix noise_patches(positions, taps);

  GaussianFeatureMaps maps;
  maps.shape = out;
  maps.weights = model.weights();
  maps.means.reserve(model.size());
  maps.variances.reserve(model.size());
  for (Index i = 0; i < k; ++i) {
    const FactorAnalyzer& fa = model.component(static_cast<std::size_t>(i));
    detail::im2row(fa.mean().data(), input, kernels, out, patches.topRows(positions));
    for (Index j = 0; j < l; ++j) {
      detail::im2row(fa.loadings().col(j).data(), input, kernels, out,
                     patches.middleRows((1 + j) * positions, positions));
    }
    stacked.noalias() = patches * kernels.weights().transpose();
    detail::im2row(fa.noise().data(), input, kernels, out, noise_patches);

    Vector mean(out.size());
    Eigen::Map<Matrix> mean_maps(mean.data(), positions, filters);
    mean_maps = stacked.topRows(positions);
    mean_maps.rowwise() += kernels.bias().transpose();

    Vector variance(out.size());
    Eigen::Map<Matrix> var_maps(variance.data(), positions, filters);
    var_maps.noalias() = noise_patches * noise_weights.transpose();
    for (Index j = 0; j < l; ++j) {
      var_maps.array() += stacked.middleRows((1 + j) * positions, positions).array().square();
    }
    if (!squared) variance = variance.cwiseMax(0.0);
    maps.means.push_back(std::move(mean));
    maps.variances.push_back(std::move(variance));
  }
  if (stats != nullptr) {
    stats->linear_passes += static_cast<std::size_t>(k * (1 + l)) + (squared ? 0 : static_cast<std::size_t>(k));
    stats->squared_passes += squared ? static_cast<std::size_t>(k) : 0;
  }
  return maps;
}

std::vector<GaussianFeatureMaps> conv_pushforward_batch(std::span<const MFAModel> models,
                                                        const ImageShape& input,
                                                        const KernelStack& kernels,
                                                        const LayerOptions& options,
                                                        ConvStats* stats) {
  std::vector<GaussianFeatureMaps> result;
  result.reserve(models.size());
  for (const MFAModel& model : models) result.push_back(conv_pushforward(model, input, kernels, options, stats));
  return result;
}

double rectified_gaussian_mean(double mean, double stddev, ReluMoment moment) {
  if (stddev < 0.0 || std::isnan(stddev)) throw InvalidArgument("standard deviation must be >= 0");
  if (stddev == 0.0) return std::max(mean, 0.0);
  const double z = mean / stddev;
  if (moment == ReluMoment::kAsPrinted) {
    return 0.5 * (mean + stddev / (2.0 * std::sqrt(2.0 * std::numbers::pi)) * std::exp(-0.5 * z * z) +
                  mean * std::erf(z * kInvSqrt2));
  }
  return rectified_mean_positive(mean, stddev);
}

double expected_relu_scalar(std::span<const double> weights, std::span<const double> means,
                            std::span<const double> stds, ReluMoment moment) {
  if (weights.size() != means.size() || weights.size() != stds.size() || weights.empty()) {
    throw InvalidArgument("expected_relu_scalar: weights, means and stds must have equal nonzero length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    total += weights[i] * rectified_gaussian_mean(means[i], stds[i], moment);
  }
  return total;
}

Vector expected_activation(const GaussianFeatureMaps& maps, Activation activation,
                           ReluMoment moment) {
  const Index size = maps.shape.size();
  const std::size_t k = maps.means.size();
  Vector out = Vector::Zero(size);
  if (activation == Activation::kNone) {
    for (std::size_t i = 0; i < k; ++i) out += maps.weights(static_cast<Index>(i)) * maps.means[i];
    return out;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double w = maps.weights(static_cast<Index>(i));
    if (w == 0.0) continue;
    const Vector& m = maps.means[i];
    const Vector& v = maps.variances[i];
    if (moment != ReluMoment::kRectifiedGaussian) {
      for (Index c = 0; c < size; ++c) out(c) += w * rectified_gaussian_mean(m(c), std::sqrt(v(c)), moment);
      continue;
    }
    // Vectorized sqrt/div/exp first; variances are >= 0 by construction.
    const Eigen::ArrayXd sd = v.array().sqrt();
    const Eigen::ArrayXd z = m.array() / sd;
    const Eigen::ArrayXd e = (-0.5 * z.square()).exp();
    for (Index c = 0; c < size; ++c) {
      double r;
      if (sd(c) > 0.0) {
        const double tail = 0.5 * erfc_nonneg(std::abs(z(c)) * kInvSqrt2, e(c));
        r = std::max(0.0, m(c) * (z(c) >= 0.0 ? 1.0 - tail : tail) + sd(c) * kInvSqrt2Pi * e(c));
      } else {
        r = std::max(m(c), 0.0);
      }
      out(c) += w * r;
    }
  }
  return out;
}

Matrix misconv_forward_batch(std::span<const MFAModel> models, const ImageShape& input,
                             const KernelStack& kernels, Activation activation,
                             const LayerOptions& options, ConvStats* stats) {
  Matrix out(kernels.output_shape(input).size(), static_cast<Index>(models.size()));
  for (std::size_t b = 0; b < models.size(); ++b) {
    out.col(static_cast<Index>(b)) =
        expected_activation(conv_pushforward(models[b], input, kernels, options, stats), activation,
                            options.relu_moment);
  }
  return out;
}

Vector misconv_forward(const MFAModel& model, const ImageShape& input, const KernelStack& kernels,
                       Activation activation, const LayerOptions& options, ConvStats* stats) {
  return expected_activation(conv_pushforward(model, input, kernels, options, stats), activation,
                             options.relu_moment);
}

}  // namespace misconv
