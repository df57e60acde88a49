#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "misconv/baselines.hpp"
#include "misconv/conv.hpp"
#include "misconv/layer.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

enum class FeatureArm {
  kMisconv,      ///< condition the MFA on the image, then the expected-activation layer
  kZero,         ///< zero imputation, classic layer
  kMaskChannel,  ///< zero imputation + indicator channels, classic layer
  kMfaMean,      ///< conditional-mean imputation, classic layer
};

struct FeatureSetup {
  ImageShape shape;
  KernelStack kernels;
  /// 2C-channel stack for kMaskChannel; see `with_mask_channels`.
  std::optional<KernelStack> mask_kernels;
  std::shared_ptr<const MFAModel> model;  ///< needed by kMisconv and kMfaMean
  ImputationMode mode = ImputationMode::kMixtureMean;
  Activation activation = Activation::kRelu;
};

/// Extends `base` to 2C input channels: the first C channels are `base`
/// unchanged, the indicator channels get fresh N(0, 2/(C*kh*kw)) taps.
KernelStack with_mask_channels(const KernelStack& base, std::uint64_t seed);

/// One row of F*H'*W' features per image. Images are processed in fixed-size
/// batches across workers; the result does not depend on the worker count.
Matrix extract_features(const FeatureSetup& setup, FeatureArm arm,
                        const std::vector<MaskedImage>& images);

const char* to_string(FeatureArm arm);
FeatureArm parse_feature_arm(const std::string& text);

}  // namespace misconv
