#include "misconv/features.hpp"

#include <algorithm>
#include <cmath>

#include "misconv/error.hpp"
#include "misconv/parallel.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

constexpr std::size_t kImagesPerTask = 32;

}  // namespace

KernelStack with_mask_channels(const KernelStack& base, std::uint64_t seed) {
  const Index c = base.channels();
  const Index taps = c * base.kernel_h() * base.kernel_w();
  const double scale = std::sqrt(2.0 / static_cast<double>(taps));
  Matrix w(base.filters(), 2 * taps);
  w.leftCols(taps) = base.weights();
  Rng rng = make_rng(seed);
  for (Index f = 0; f < w.rows(); ++f)
    for (Index t = taps; t < 2 * taps; ++t) w(f, t) = scale * standard_normal(rng);
  return KernelStack(2 * c, base.kernel_h(), base.kernel_w(), std::move(w), base.bias(),
                     base.stride(), base.padding());
}

Matrix extract_features(const FeatureSetup& setup, FeatureArm arm,
                        const std::vector<MaskedImage>& images) {
  const ImageShape out = setup.kernels.output_shape(setup.shape);
  const Index width = out.size();
  Matrix features(static_cast<Index>(images.size()), width);
  if (images.empty()) return features;

  if ((arm == FeatureArm::kMisconv || arm == FeatureArm::kMfaMean) && !setup.model) {
    throw InvalidArgument(std::string(to_string(arm)) + " features need an MFA model");
  }
  if (setup.model && setup.model->dim() != setup.shape.size()) {
    throw DimensionError("MFA model dimension does not match image geometry");
  }
  if (arm == FeatureArm::kMaskChannel) {
    if (!setup.mask_kernels) throw InvalidArgument("mask_channel features need mask kernels");
    if (setup.mask_kernels->output_shape(ImageShape{2 * setup.shape.channels, setup.shape.height,
                                                    setup.shape.width}) != out) {
      throw DimensionError("mask kernels produce a different output geometry");
    }
  }

  ImputationStrategy strategy;
  strategy.model = setup.model;
  strategy.mode = setup.mode;
  if (arm == FeatureArm::kMaskChannel) strategy.kind = ImputationKind::kMaskChannel;
  if (arm == FeatureArm::kMfaMean) strategy.kind = ImputationKind::kMfaMean;

  const std::size_t tasks = (images.size() + kImagesPerTask - 1) / kImagesPerTask;
  parallel_for(tasks, [&](std::size_t t) {
    const std::size_t begin = t * kImagesPerTask;
    const std::size_t end = std::min(images.size(), begin + kImagesPerTask);
    if (arm == FeatureArm::kMisconv) {
      for (std::size_t i = begin; i < end; ++i) {
        const MFAModel posterior = condition(*setup.model, images[i]);
        features.row(static_cast<Index>(i)) =
            misconv_forward(posterior, setup.shape, setup.kernels, setup.activation).transpose();
      }
      return;
    }
    const bool masked = arm == FeatureArm::kMaskChannel;
    const ImageShape in = masked ? ImageShape{2 * setup.shape.channels, setup.shape.height,
                                              setup.shape.width}
                                 : setup.shape;
    Matrix batch(in.size(), static_cast<Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
      batch.col(static_cast<Index>(i - begin)) = impute(strategy, images[i], setup.shape).pixels;
    }
    const Matrix maps = classic_forward_batch(batch, in, masked ? *setup.mask_kernels : setup.kernels,
                                              setup.activation);
    features.middleRows(static_cast<Index>(begin), static_cast<Index>(end - begin)) = maps.transpose();
  });
  return features;
}

const char* to_string(FeatureArm arm) {
  switch (arm) {
    case FeatureArm::kMisconv: return "misconv";
    case FeatureArm::kZero: return "zero";
    case FeatureArm::kMaskChannel: return "mask_channel";
    case FeatureArm::kMfaMean: return "mfa_mean";
  }
  return "unknown";
}

FeatureArm parse_feature_arm(const std::string& text) {
  if (text == "misconv") return FeatureArm::kMisconv;
  if (text == "zero") return FeatureArm::kZero;
  if (text == "mask_channel") return FeatureArm::kMaskChannel;
  if (text == "mfa_mean") return FeatureArm::kMfaMean;
  throw InvalidArgument("unknown feature arm '" + text + "' (misconv | zero | mask_channel | mfa_mean)");
}

}  // namespace misconv
